"""Cross-checks of every closed form against the enumeration oracle.

Each property is exercised on seeded random networks and reported with
pass/fail counts plus the seeds of any failures, so a red result is
immediately reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .activations import SIGMOID, get_activation
from .network import (
    BeliefNetwork,
    MeanVector,
    energies,
    pinned_means,
    taylor_energy,
)
from .objectives import Scheme, evaluate, objective
from .oracle import (
    ClampContext,
    covariance_and_hessian_check,
    exact_log_partition,
    exact_Ls,
    factorial_entropy_term,
    factorial_expectation,
    gibbs_free_energy,
    plefka_derivative_oracle,
)
from .solver import SolverOptions, solve_fixed_point

ACTIVATIONS = ("sigmoid", "noisy_or")


def random_dag_net(rng, n, activation, scale=1.0, n_visible=0, density=1.0):
    """Random lower-triangular network; visibles are the last units."""
    act = get_activation(activation)
    weights = np.tril(rng.uniform(-scale, scale, (n, n)), -1)
    if density < 1.0:
        weights *= rng.random((n, n)) < density
    biases = rng.uniform(-scale, scale, n)
    if act.nonnegative_params:
        weights = np.abs(weights)
        biases = np.abs(biases)
    visible = tuple(range(n - n_visible, n))
    return BeliefNetwork(n, weights, biases, act, visible)


def random_clamped(rng, n, activation, scale=1.0, n_visible=2):
    net = random_dag_net(rng, n, activation, scale, n_visible)
    clamp = rng.integers(0, 2, n_visible)
    u = pinned_means(net, clamp)
    u.u[~u.pinned] = rng.uniform(0.05, 0.95, int((~u.pinned).sum()))
    return net, clamp, u


def taylor_energy_fn(net, u, order):
    uv = u.u if isinstance(u, MeanVector) else u
    return lambda states: np.array(
        [taylor_energy(net, uv, s, 1.0, order) for s in states]
    )


@dataclass
class PropertyResult:
    name: str
    passed: int = 0
    failed: int = 0
    failing_seeds: list = field(default_factory=list)

    def record(self, ok, seed):
        if ok:
            self.passed += 1
        else:
            self.failed += 1
            self.failing_seeds.append(int(seed))


def _check_normalization(seed, trials):
    res = PropertyResult("normalization")
    for k in range(trials):
        rng = np.random.default_rng([seed, 1, k])
        act = ACTIVATIONS[k % 2]
        net = random_dag_net(rng, int(rng.integers(2, 13)), act, rng.uniform(0.2, 3.0))
        res.record(abs(exact_log_partition(net)) <= 1e-9, k)
    return res


def _check_clamped_nonpositive(seed, trials):
    res = PropertyResult("clamped-log-partition-nonpositive")
    for k in range(trials):
        rng = np.random.default_rng([seed, 2, k])
        act = ACTIVATIONS[k % 2]
        net, clamp, _ = random_clamped(rng, 8, act, rng.uniform(0.2, 2.0), 3)
        res.record(exact_log_partition(ClampContext(net, clamp)) <= 1e-12, k)
    return res


def _check_first_order_equality(seed, trials):
    res = PropertyResult("first-order-oracle-equality")
    for k in range(trials):
        rng = np.random.default_rng([seed, 3, k])
        act = ACTIVATIONS[k % 2]
        net, clamp, u = random_clamped(rng, 7, act, 0.8, 2)
        ok = True
        for scheme, order in ((Scheme.G11, 1), (Scheme.G12, 2)):
            val = objective(net, u, scheme)
            ref = factorial_entropy_term(u) + factorial_expectation(
                net, u.u, taylor_energy_fn(net, u, order)
            )
            ok = ok and abs(val - ref) <= 1e-9
        res.record(ok, k)
    return res


def _check_second_order_equality(seed, trials):
    res = PropertyResult("second-order-oracle-equality")
    for k in range(trials):
        rng = np.random.default_rng([seed, 4, k])
        act = ACTIVATIONS[k % 2]
        net, clamp, u = random_clamped(rng, 7, act, 0.8, 2)
        val = objective(net, u, Scheme.G22)
        ref = objective(net, u, Scheme.G12) + 0.5 * plefka_derivative_oracle(
            net, u.u, taylor_energy_fn(net, u, 2), 2
        )
        res.record(abs(val - ref) <= 1e-8, k)
    return res


def _check_sjj_equivalence(seed, trials):
    res = PropertyResult("naive-mean-field-equality")
    for k in range(trials):
        rng = np.random.default_rng([seed, 5, k])
        act = ACTIVATIONS[k % 2]
        net, clamp, u = random_clamped(rng, 7, act, 1.0, 2)
        ctx = ClampContext(net, clamp)
        lhs = factorial_entropy_term(u) + factorial_expectation(
            net, u.u, lambda s: energies(net, s)
        )
        res.record(abs(lhs - exact_Ls(ctx, u)) <= 1e-10, k)
    return res


def _check_sandwich(seed, trials):
    res = PropertyResult("variational-sandwich")
    for k in range(trials):
        rng = np.random.default_rng([seed, 6, k])
        act = ACTIVATIONS[k % 2]
        net, clamp, u = random_clamped(rng, 6, act, 1.0, 2)
        ctx = ClampContext(net, clamp)
        ln_z = exact_log_partition(ctx)
        ev = gibbs_free_energy(ctx, u, 1.0)
        upper = exact_Ls(ctx, u)
        ok = ev.converged and (-ln_z - 1e-7 <= ev.value <= upper + 1e-7)
        res.record(ok, k)
    return res


def _check_kl_chain(seed, trials):
    res = PropertyResult("kl-chain-identity")
    for k in range(trials):
        rng = np.random.default_rng([seed, 7, k])
        act = ACTIVATIONS[k % 2]
        net, clamp, u = random_clamped(rng, 6, act, 1.0, 2)
        ctx = ClampContext(net, clamp)
        gamma = (0.25, 0.5, 1.0)[k % 3]
        ev = gibbs_free_energy(ctx, u, gamma)
        if not ev.converged:
            res.record(False, k)
            continue
        ln_zg = exact_log_partition(ctx, gamma)
        d1 = _kl_factorial_vs(net, ctx, u, gamma, theta=None)
        d2 = _kl_factorial_vs(net, ctx, u, gamma, theta=ev.theta)
        res.record(abs((d1 - d2) - (ln_zg + ev.value)) <= 1e-8, k)
    return res


def _kl_factorial_vs(net, ctx, u, gamma, theta):
    """KL(product measure with means u || tilted clamped distribution)."""
    from scipy.special import logsumexp

    from .oracle import _free_and_fixed, state_blocks

    net_, free, template = _free_and_fixed(ctx)
    logits_all, logq_all = [], []
    for states in state_blocks(net_, free, template):
        lp = -gamma * energies(net_, states)
        if theta is not None:
            lp = lp + states[:, free] @ theta[free]
        sf = states[:, free]
        uf = u.u[free]
        lq = (sf * np.log(uf) + (1 - sf) * np.log1p(-uf)).sum(axis=1)
        logits_all.append(lp)
        logq_all.append(lq)
    lp = np.concatenate(logits_all)
    lq = np.concatenate(logq_all)
    lp = lp - logsumexp(lp)
    return float(np.exp(lq) @ (lq - lp))


def _check_legendre_consistency(seed, trials):
    res = PropertyResult("legendre-gradient-consistency")
    delta = 1e-5
    for k in range(trials):
        rng = np.random.default_rng([seed, 8, k])
        act = ACTIVATIONS[k % 2]
        net, clamp, u = random_clamped(rng, 5, act, 1.0, 2)
        ctx = ClampContext(net, clamp)
        ev = gibbs_free_energy(ctx, u, 1.0)
        ok = ev.converged
        free = np.flatnonzero(~u.pinned)
        for i in free[:2]:
            up, um = u.copy(), u.copy()
            up.u[i] += delta
            um.u[i] -= delta
            fd = (
                gibbs_free_energy(ctx, up, 1.0).value
                - gibbs_free_energy(ctx, um, 1.0).value
            ) / (2 * delta)
            ok = ok and abs(fd - ev.theta[i]) <= 1e-5 * max(1.0, abs(ev.theta[i]))
        res.record(ok, k)
    return res


def _check_gradients(seed, trials):
    res = PropertyResult("analytic-gradient-vs-fd")
    eps = 1e-6
    for k in range(trials):
        rng = np.random.default_rng([seed, 9, k])
        act = ACTIVATIONS[k % 2]
        net, clamp, u = random_clamped(rng, 6, act, 0.9, 2)
        ok = True
        for scheme in Scheme:
            ev = evaluate(net, u, scheme)
            for i in np.flatnonzero(~u.pinned):
                up, um = u.copy(), u.copy()
                up.u[i] += eps
                um.u[i] -= eps
                fd = (objective(net, up, scheme) - objective(net, um, scheme)) / (
                    2 * eps
                )
                ok = ok and abs(fd - ev.grad_u[i]) <= 1e-5 * max(1.0, abs(fd))
        res.record(ok, k)
    return res


def _check_hessian(seed, trials):
    res = PropertyResult("covariance-hessian-identity")
    for k in range(trials):
        rng = np.random.default_rng([seed, 10, k])
        act = ACTIVATIONS[k % 2]
        net, clamp, u = random_clamped(rng, 5, act, 0.8, 2)
        rep = covariance_and_hessian_check(ClampContext(net, clamp), u, 1.0)
        res.record(rep.converged and rep.bh_max_err <= 1e-4 and rep.min_eig_h > 0, k)
    return res


def _check_pinned_safety(seed, trials):
    res = PropertyResult("pinned-unit-safety")
    for k in range(trials):
        rng = np.random.default_rng([seed, 11, k])
        act = ACTIVATIONS[k % 2]
        net, clamp, _ = random_clamped(rng, 7, act, 1.5, 3)
        sol = solve_fixed_point(net, clamp, Scheme.G12, SolverOptions(max_iter=500))
        vis = list(net.visible)
        res.record(np.array_equal(sol.u.u[vis], np.asarray(clamp, dtype=float)), k)
    return res


_PROPERTIES = (
    (_check_normalization, 100),
    (_check_clamped_nonpositive, 40),
    (_check_first_order_equality, 30),
    (_check_second_order_equality, 30),
    (_check_sjj_equivalence, 30),
    (_check_sandwich, 20),
    (_check_kl_chain, 15),
    (_check_legendre_consistency, 10),
    (_check_gradients, 15),
    (_check_hessian, 10),
    (_check_pinned_safety, 20),
)


def run_validation_suite(seed: int = 0, scale: float = 1.0):
    """Run every oracle-backed property; returns a list of PropertyResult."""
    return [check(seed, trials) for check, trials in _PROPERTIES]


def report_dict(results):
    return {
        "properties": [
            {
                "name": r.name,
                "passed": r.passed,
                "failed": r.failed,
                "failing_seeds": r.failing_seeds,
            }
            for r in results
        ],
        "ok": all(r.failed == 0 for r in results),
    }
