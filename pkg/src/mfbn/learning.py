"""Likelihood-gradient learning through the mean-field objectives.

The per-pattern log-likelihood ln Z_c is approximated by minus the
solved objective, and because the means are stationary there, the
parameter gradient can be taken with the means frozen (envelope
property).  Training is plain full-batch gradient ascent; noisy-or
parameters are projected back to the non-negative orthant after every
step.  Includes the bars image generator and an exact-enumeration
likelihood evaluator for monitoring.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .network import BeliefNetwork, MeanVector, validate
from .objectives import Scheme, evaluate
from .oracle import ClampContext, exact_log_partition
from .solver import SolveResult, SolverOptions, solve_fixed_point


@dataclass
class TrainConfig:
    scheme: Scheme = Scheme.G12
    learning_rate: float = 0.05
    epochs: int = 100
    batch: str = "full"  # only full-batch is implemented
    seed: int = 0
    solver: SolverOptions = field(default_factory=SolverOptions)
    eval_every: int = 5

    def __post_init__(self):
        self.scheme = Scheme(self.scheme)
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.batch != "full":
            raise ValueError("only batch='full' is supported")


@dataclass
class TrainRecord:
    epoch: int
    mean_true_loglik: float
    mean_objective: float
    unconverged: int


@dataclass
class TrainHistory:
    records: list = field(default_factory=list)


def loglik_gradient(net, pattern, scheme, opts=None, initial=None):
    """Approximate (d lnZ_c/dw, d lnZ_c/dh) for one visible pattern.

    Solves the mean-field equations for the pattern, then returns minus
    the objective's parameter gradient at the fixed point (means held
    fixed).  Returns (grad_w, grad_h, SolveResult); the gradients are
    None when the solve did not converge.
    """
    res = solve_fixed_point(net, pattern, scheme, opts, initial=initial)
    if not res.converged:
        return None, None, res
    ev = evaluate(net, res.u, Scheme(scheme))
    return -ev.grad_w, -ev.grad_h, res


def true_loglik(net, patterns) -> float:
    """Mean exact log-likelihood over patterns, by hidden-state enumeration."""
    total = 0.0
    for pattern in np.asarray(patterns, dtype=float):
        total += exact_log_partition(ClampContext(net, pattern))
    return total / len(patterns)


def bars_dataset(n_patterns: int, side: int = 4, seed: int = 0) -> np.ndarray:
    """Binary images of horizontal-or-vertical bar unions, flattened row-major.

    Each image picks an orientation with a fair coin, then includes each
    of the `side` bars of that orientation independently with
    probability one half.
    """
    if side < 1:
        raise ValueError("side must be >= 1")
    rng = np.random.default_rng(seed)
    patterns = np.zeros((n_patterns, side * side), dtype=np.int8)
    for k in range(n_patterns):
        horizontal = rng.random() < 0.5
        present = rng.random(side) < 0.5
        img = np.zeros((side, side), dtype=np.int8)
        if horizontal:
            img[present, :] = 1
        else:
            img[:, present] = 1
        patterns[k] = img.reshape(-1)
    return patterns


def train(net: BeliefNetwork, dataset, config: TrainConfig):
    """Full-batch gradient ascent on the mean-field likelihood surrogate.

    Only weights on existing edges (nonzero at entry) and all biases are
    updated, so a layered topology stays layered.  Per-pattern solves
    are warm-started from the previous epoch.  Returns the trained
    network and the evaluation history.
    """
    patterns = np.asarray(dataset, dtype=float)
    if patterns.ndim != 2 or patterns.shape[1] != len(net.visible):
        raise ValueError(
            f"patterns must be (n, {len(net.visible)}), got {patterns.shape}"
        )
    validate(net)
    weights = net.weights.copy()
    biases = net.biases.copy()
    support = weights != 0.0
    nonneg = net.activation.nonnegative_params
    history = TrainHistory()
    warm: list[MeanVector | None] = [None] * len(patterns)

    def current_net():
        return BeliefNetwork(net.n_units, weights, biases, net.activation, net.visible)

    def evaluate_epoch(epoch, mean_obj, unconverged):
        history.records.append(
            TrainRecord(
                epoch=epoch,
                mean_true_loglik=true_loglik(current_net(), patterns),
                mean_objective=mean_obj,
                unconverged=unconverged,
            )
        )

    # Initial evaluation before any update.
    evaluate_epoch(0, float("nan"), 0)

    opts = config.solver
    for epoch in range(1, config.epochs + 1):
        model = current_net()
        grad_w = np.zeros_like(weights)
        grad_h = np.zeros_like(biases)
        obj_sum = 0.0
        used = 0
        unconverged = 0
        for k, pattern in enumerate(patterns):
            warm_opts = opts
            if warm[k] is not None:
                warm_opts = replace(opts, init="given")
            gw, gh, res = loglik_gradient(
                model, pattern, config.scheme, warm_opts, initial=warm[k]
            )
            warm[k] = res.u if res.converged else None
            if gw is None:
                unconverged += 1
                continue
            grad_w += gw
            grad_h += gh
            obj_sum += res.objective
            used += 1
        if used:
            weights += config.learning_rate * np.where(support, grad_w / used, 0.0)
            biases += config.learning_rate * grad_h / used
            if nonneg:
                np.maximum(weights, 0.0, out=weights)
                np.maximum(biases, 0.0, out=biases)
        if epoch % config.eval_every == 0 or epoch == config.epochs:
            evaluate_epoch(epoch, obj_sum / max(used, 1), unconverged)

    return current_net(), history
