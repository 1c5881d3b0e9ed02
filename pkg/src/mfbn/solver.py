"""Fixed-point solver for the mean-field equations.

Stationarity of each objective gives u_i = sigmoid(-R_i), where R_i is
the mean gradient with the entropy part removed.  Units are updated
sequentially in topological order (Gauss-Seidel).  Large weights can
drive the plain iteration into a period-two oscillation; when one is
detected the iteration restarts from the point on the segment between
the two cycle vectors that minimizes the objective.  If the oscillation
re-forms after a restart the solver switches to direct minimization of
the objective in logit coordinates; the fixed points are exactly its
stationary points, so this reaches the same solutions without relying
on the iteration map being a contraction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .network import BeliefNetwork, MeanVector, pinned_means
from .objectives import Scheme, check_scheme, evaluate, objective

# Hidden means are kept away from {0, 1} to protect the entropy term and
# the 1/(u(1-u)) factors.
U_CLIP = 1e-9


@dataclass
class SolverOptions:
    tol: float = 1e-8
    max_iter: int = 10_000
    init: str = "uniform-half"  # uniform-half | forward-pass | given
    damping: float = 0.0
    cycle_window: int = 2
    cycle_tol: float = 1e-6
    line_search_points: int = 101
    max_restarts: int = 2  # further cycles switch to direct minimization

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if not 0.0 <= self.damping < 1.0:
            raise ValueError("damping must lie in [0, 1)")


@dataclass
class SolveResult:
    u: MeanVector
    objective: float
    iterations: int
    converged: bool
    cycles_detected: int = 0
    restarts: int = 0


def _sigmoid(x):
    return np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))


def _initial_means(net, clamp_values, opts, given=None):
    u = pinned_means(net, clamp_values, hidden_u=0.5)
    if opts.init == "given":
        if given is None:
            raise ValueError("init='given' requires an initial MeanVector")
        u.u[~u.pinned] = np.clip(given.u[~u.pinned], U_CLIP, 1.0 - U_CLIP)
    elif opts.init == "forward-pass":
        # Propagate means through the activation in topological order.
        for i in np.flatnonzero(~u.pinned):
            mbar = float(net.weights[i, :i] @ u.u[:i] + net.biases[i])
            u.u[i] = np.clip(net.activation.f_floored(mbar), U_CLIP, 1.0 - U_CLIP)
    elif opts.init != "uniform-half":
        raise ValueError(f"unknown init {opts.init!r}")
    return u


def _sweep(net, u, scheme, damping):
    """One sequential Gauss-Seidel sweep; returns the sup-norm step."""
    step = 0.0
    for i in np.flatnonzero(~u.pinned):
        r = evaluate(net, u, scheme, need_params=False).stationarity[i]
        target = float(np.clip(_sigmoid(-r), U_CLIP, 1.0 - U_CLIP))
        new = damping * u.u[i] + (1.0 - damping) * target
        step = max(step, abs(new - u.u[i]))
        u.u[i] = new
    return step


def _residual(net, u, scheme):
    r = evaluate(net, u, scheme, need_params=False).stationarity
    target = np.clip(_sigmoid(-r), U_CLIP, 1.0 - U_CLIP)
    free = ~u.pinned
    return float(np.max(np.abs(target[free] - u.u[free]), initial=0.0))


def _minimize_objective(net, u, scheme, max_iter=500):
    """Minimize the objective over the free means in logit coordinates.

    Used when the sweep iteration keeps oscillating.  Stationarity of
    the objective at interior u is equivalent to the fixed-point
    condition, so a successful minimization yields the same solution.
    Returns the number of objective evaluations.
    """
    free = np.flatnonzero(~u.pinned)

    def fun(x):
        u.u[free] = np.clip(_sigmoid(x), U_CLIP, 1.0 - U_CLIP)
        ev = evaluate(net, u, scheme, need_params=False)
        jac = ev.grad_u[free] * u.u[free] * (1.0 - u.u[free])
        return ev.value, jac

    x0 = np.log(u.u[free] / (1.0 - u.u[free]))
    res = minimize(
        fun,
        x0,
        jac=True,
        method="L-BFGS-B",
        bounds=[(-40.0, 40.0)] * len(free),
        options={"maxiter": max_iter, "ftol": 1e-18, "gtol": 1e-12},
    )
    u.u[free] = np.clip(_sigmoid(res.x), U_CLIP, 1.0 - U_CLIP)
    return int(res.nfev)


def _newton_polish(net, u, scheme, steps=4):
    """A few Newton steps on the mean gradient in logit coordinates.

    L-BFGS-B can stall within a factor of a few of the residual
    tolerance once objective differences reach machine precision; the
    gradient itself still has headroom, so Newton with a
    finite-difference Jacobian closes the gap.  Returns the number of
    gradient evaluations.
    """
    free = np.flatnonzero(~u.pinned)
    h = 1e-6
    evals = 0

    def grad(x):
        u.u[free] = np.clip(_sigmoid(x), U_CLIP, 1.0 - U_CLIP)
        ev = evaluate(net, u, scheme, need_params=False)
        return ev.grad_u[free] * u.u[free] * (1.0 - u.u[free])

    x = np.log(u.u[free] / (1.0 - u.u[free]))
    for _ in range(steps):
        g0 = grad(x)
        evals += 1
        if np.max(np.abs(g0)) == 0.0:
            break
        jac = np.empty((len(free), len(free)))
        for c in range(len(free)):
            xp = x.copy()
            xp[c] += h
            jac[:, c] = (grad(xp) - g0) / h
            evals += 1
        try:
            step = np.linalg.solve(jac, g0)
        except np.linalg.LinAlgError:
            break
        if not np.all(np.isfinite(step)) or np.max(np.abs(step)) > 1.0:
            break
        x = x - step
    u.u[free] = np.clip(_sigmoid(x), U_CLIP, 1.0 - U_CLIP)
    return evals


def _line_search_restart(net, u_prev, u_curr, pinned, scheme, opts):
    """Pick the objective-minimizing point on the segment between cycle vectors."""
    ts = np.linspace(0.0, 1.0, opts.line_search_points)
    best_u, best_val = None, np.inf
    for t in ts:
        cand = (1.0 - t) * u_prev + t * u_curr
        cand = np.where(pinned, u_curr, np.clip(cand, U_CLIP, 1.0 - U_CLIP))
        val = objective(net, MeanVector(cand, pinned), scheme)
        if val < best_val:
            best_val, best_u = val, cand
    return best_u


def solve_fixed_point(
    net: BeliefNetwork,
    clamp_values,
    scheme: Scheme,
    opts: SolverOptions | None = None,
    initial: MeanVector | None = None,
    allow_restarts: bool = True,
) -> SolveResult:
    """Solve the mean-field equations for the hidden means.

    clamp_values are the observations for net.visible (sorted order).
    Non-convergence after max_iter sweeps yields an unconverged result,
    not an exception.
    """
    opts = opts or SolverOptions()
    scheme = Scheme(scheme)
    check_scheme(net, scheme)
    u = _initial_means(net, clamp_values, opts, given=initial)
    if not np.any(~u.pinned):
        return SolveResult(u, objective(net, u, scheme), 0, True)

    history = [u.u.copy()]
    cycles = restarts = 0
    converged = False
    sweeps = 0
    damping = opts.damping
    while sweeps < opts.max_iter:
        step = _sweep(net, u, scheme, damping)
        sweeps += 1
        history.append(u.u.copy())
        if len(history) > opts.cycle_window + 1:
            history.pop(0)
        if step <= opts.tol:
            # Confirm actual stationarity, not just a tiny sweep.
            if _residual(net, u, scheme) <= opts.tol:
                converged = True
                break
            continue
        if len(history) == opts.cycle_window + 1:
            back = history[-1 - opts.cycle_window]
            prev = history[-2]
            if (
                np.max(np.abs(u.u - back)) <= opts.cycle_tol
                and np.max(np.abs(u.u - prev)) > opts.cycle_tol
            ):
                cycles += 1
                if not allow_restarts:
                    break
                u.u = _line_search_restart(net, prev, u.u, u.pinned, scheme, opts)
                history = [u.u.copy()]
                restarts += 1
                if restarts >= opts.max_restarts:
                    # The oscillation keeps re-forming; stop sweeping
                    # and minimize the objective directly.
                    break

    if not converged and allow_restarts:
        sweeps += _minimize_objective(net, u, scheme)
        resid = _residual(net, u, scheme)
        if resid > opts.tol:
            saved = u.u.copy()
            sweeps += _newton_polish(net, u, scheme)
            polished = _residual(net, u, scheme)
            if polished <= resid:
                resid = polished
            else:
                u.u = saved
        converged = resid <= opts.tol

    return SolveResult(
        u=u,
        objective=objective(net, u, scheme),
        iterations=sweeps,
        converged=converged,
        cycles_detected=cycles,
        restarts=restarts,
    )
