"""Brute-force enumeration layer used as ground truth for the approximations.

Everything here is exact up to floating point: partition functions and
marginals by summing over all free states, the Gibbs free energy by
numerically inverting the mean-matching equations, and the expansion
derivative terms by factorial-measure expectations.  Intended for small
networks only (at most 24 free units, with a warning above 16).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .activations import EPS
from .network import BeliefNetwork, MeanVector, energies, pinned_means

ENUM_HARD_LIMIT = 24
ENUM_WARN_LIMIT = 16
_BLOCK_BITS = 16


class EnumerationSizeError(ValueError):
    """Too many free units to enumerate."""


@dataclass(frozen=True)
class ClampContext:
    """A network together with observed values for its visible units.

    values : binary observations aligned with sorted(net.visible)
    """

    net: BeliefNetwork
    values: tuple

    def __post_init__(self):
        vals = tuple(int(v) for v in self.values)
        if len(vals) != len(self.net.visible):
            raise ValueError(
                f"clamp must cover exactly the visible set "
                f"({len(self.net.visible)} units, got {len(vals)} values)"
            )
        if any(v not in (0, 1) for v in vals):
            raise ValueError("clamp values must be binary")
        object.__setattr__(self, "values", vals)

    def means(self, hidden_u=0.5) -> MeanVector:
        return pinned_means(self.net, self.values, hidden_u)


def _free_and_fixed(obj):
    """Free (enumerated) unit indices and a template state for an object.

    A bare BeliefNetwork enumerates all units; a ClampContext enumerates
    only the hidden units with the visibles pinned.
    """
    if isinstance(obj, ClampContext):
        net = obj.net
        free = np.array(net.hidden, dtype=int)
        template = np.zeros(net.n_units)
        template[list(net.visible)] = obj.values
        return net, free, template
    net = obj
    return net, np.arange(net.n_units), np.zeros(net.n_units)


def _check_size(n_free):
    if n_free > ENUM_HARD_LIMIT:
        raise EnumerationSizeError(
            f"{n_free} free units exceeds the enumeration bound {ENUM_HARD_LIMIT}"
        )
    if n_free > ENUM_WARN_LIMIT:
        warnings.warn(
            f"enumerating {n_free} free units; this will be slow", stacklevel=3
        )


def state_blocks(net, free, template, block_bits=_BLOCK_BITS):
    """Yield (K, N) blocks of full states covering all 2^F free assignments.

    Enumeration order is fixed (unit free[0] is the least significant
    bit), so chunked reductions are deterministic.
    """
    n_free = len(free)
    _check_size(n_free)
    total = 1 << n_free
    block = min(total, 1 << block_bits)
    bit_cols = np.arange(n_free)
    for start in range(0, total, block):
        idx = np.arange(start, min(start + block, total), dtype=np.int64)
        bits = (idx[:, None] >> bit_cols) & 1
        states = np.tile(template, (len(idx), 1))
        states[:, free] = bits
        yield states


def exact_log_partition(obj, gamma: float = 1.0) -> float:
    """ln Z (unclamped) or ln Z_c (clamped), optionally at inverse coupling gamma.

    Sums exp(-gamma * E) over all free states.  gamma=1 is the true
    partition function; for the unclamped directed model it equals 0.
    """
    net, free, template = _free_and_fixed(obj)
    parts = [
        logsumexp(-gamma * energies(net, s)) for s in state_blocks(net, free, template)
    ]
    return float(logsumexp(parts))


def exact_marginals(obj, gamma: float = 1.0) -> MeanVector:
    """Exact per-unit means under the (clamped) Boltzmann distribution."""
    net, free, template = _free_and_fixed(obj)
    parts = []
    for states in state_blocks(net, free, template):
        logp = -gamma * energies(net, states)
        shift = logp.max()
        w = np.exp(logp - shift)
        parts.append((shift, w.sum(), w @ states))
    top = max(s for s, _, _ in parts)
    z = sum(ws * np.exp(s - top) for s, ws, _ in parts)
    mean = sum(m * np.exp(s - top) for s, _, m in parts) / z
    pinned = np.zeros(net.n_units, dtype=bool)
    if isinstance(obj, ClampContext):
        vis = list(net.visible)
        pinned[vis] = True
        mean[vis] = obj.values  # exact, not accumulated
    return MeanVector(mean, pinned)


def factorial_expectation(net: BeliefNetwork, u, g) -> float:
    """Expectation of g(state) under the product-Bernoulli measure with means u.

    g must accept a (K, N) batch of states and return (K,) values.  Units
    whose mean is exactly 0 or 1 are treated as fixed rather than
    enumerated, so clamped contexts cost only 2^hidden evaluations.
    """
    uv = np.asarray(u.u if isinstance(u, MeanVector) else u, dtype=float)
    free = np.flatnonzero((uv > 0.0) & (uv < 1.0))
    template = np.where(uv >= 1.0, 1.0, 0.0)
    total = 0.0
    for states in state_blocks(net, free, template):
        sf = states[:, free]
        logw = (
            sf * np.log(uv[free]) + (1.0 - sf) * np.log1p(-uv[free])
        ).sum(axis=1)
        total += float(np.exp(logw) @ np.asarray(g(states), dtype=float))
    return total


def factorial_entropy_term(u) -> float:
    """sum_i [u ln u + (1-u) ln(1-u)] over interior entries (binary ones add 0)."""
    uv = np.asarray(u.u if isinstance(u, MeanVector) else u, dtype=float)
    interior = (uv > 0.0) & (uv < 1.0)
    ui = uv[interior]
    return float((ui * np.log(ui) + (1.0 - ui) * np.log1p(-ui)).sum())


def exact_Ls(ctx, u) -> float:
    """Naive mean-field objective: <E>_q plus the factorial entropy term.

    q is the product measure with means u (visible entries pinned to the
    clamp).  Always an upper bound on -ln Z_c.
    """
    net = ctx.net if isinstance(ctx, ClampContext) else ctx
    mean_e = factorial_expectation(net, u, lambda s: energies(net, s))
    return mean_e + factorial_entropy_term(u)


@dataclass
class GibbsEvaluation:
    """Result of evaluating G(u, gamma) by Legendre inversion."""

    u: np.ndarray
    gamma: float
    theta: np.ndarray  # full length; zero at pinned units
    value: float
    converged: bool
    residual: float


def _tilted_stats(net, free, template, gamma, theta_free, want_cov=False):
    """log Ztilde, free-unit means, and optionally their covariance."""
    log_z_parts, m_parts, c_parts = [], [], []
    for states in state_blocks(net, free, template):
        logp = -gamma * energies(net, states) + states[:, free] @ theta_free
        shift = logp.max()
        w = np.exp(logp - shift)
        log_z_parts.append((shift, w.sum()))
        sf = states[:, free]
        m_parts.append((shift, w @ sf))
        if want_cov:
            c_parts.append((shift, (sf * w[:, None]).T @ sf))
    top = max(s for s, _ in log_z_parts)
    z = sum(ws * np.exp(s - top) for s, ws in log_z_parts)
    log_z = top + np.log(z)
    mean = sum(m * np.exp(s - top) for s, m in m_parts) / z
    if not want_cov:
        return log_z, mean, None
    second = sum(c * np.exp(s - top) for s, c in c_parts) / z
    cov = second - np.outer(mean, mean)
    return log_z, mean, cov


def gibbs_free_energy(
    obj, u, gamma: float, tol: float = 1e-10, max_iter: int = 200
) -> GibbsEvaluation:
    """G(u, gamma) = -ln Ztilde + theta . u, with theta solved numerically.

    Damped Newton on the mean-matching residual, using the enumerated
    covariance as Jacobian; falls back to per-coordinate bisection sweeps
    if Newton stalls.  Non-convergence is flagged, never hidden.
    """
    net, free, template = _free_and_fixed(obj)
    uv = np.asarray(u.u if isinstance(u, MeanVector) else u, dtype=float)
    uf = uv[free]
    if np.any(uf <= 0.0) or np.any(uf >= 1.0):
        raise ValueError("free means must be strictly interior for inversion")

    theta = np.log(uf / (1.0 - uf))  # exact at gamma = 0
    log_z, mean, cov = _tilted_stats(net, free, template, gamma, theta, want_cov=True)
    res = mean - uf
    best = np.max(np.abs(res))
    for _ in range(max_iter):
        if best <= tol:
            break
        try:
            step = np.linalg.solve(cov + 1e-14 * np.eye(len(free)), res)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(cov, res, rcond=None)[0]
        # Backtrack until the sup-norm residual improves.
        improved = False
        for damp in (1.0, 0.5, 0.25, 0.1, 0.01):
            cand = theta - damp * step
            lz, m, c = _tilted_stats(net, free, template, gamma, cand, want_cov=True)
            r = m - uf
            if np.max(np.abs(r)) < best:
                theta, log_z, mean, cov, res = cand, lz, m, c, r
                best = np.max(np.abs(r))
                improved = True
                break
        if not improved:
            theta, log_z, best = _bisection_sweeps(
                net, free, template, gamma, theta, uf, tol
            )
            break

    value = float(-log_z + theta @ uf)
    theta_full = np.zeros(net.n_units)
    theta_full[free] = theta
    return GibbsEvaluation(
        u=uv,
        gamma=gamma,
        theta=theta_full,
        value=value,
        converged=bool(best <= tol),
        residual=float(best),
    )


def _bisection_sweeps(net, free, template, gamma, theta, uf, tol, sweeps=200):
    """Coordinate-wise bisection on theta_i; the mean is monotone in theta_i."""
    theta = theta.copy()
    log_z, mean, _ = _tilted_stats(net, free, template, gamma, theta)
    for _ in range(sweeps):
        for i in range(len(free)):
            lo, hi = theta[i] - 40.0, theta[i] + 40.0
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                theta[i] = mid
                _, mean, _ = _tilted_stats(net, free, template, gamma, theta)
                if mean[i] < uf[i]:
                    lo = mid
                else:
                    hi = mid
                if hi - lo < 1e-14 * max(1.0, abs(mid)):
                    break
        log_z, mean, _ = _tilted_stats(net, free, template, gamma, theta)
        best = np.max(np.abs(mean - uf))
        if best <= tol:
            break
    return theta, log_z, float(np.max(np.abs(mean - uf)))


@dataclass
class HessianReport:
    bh_max_err: float
    min_eig_h: float
    converged: bool


def covariance_and_hessian_check(obj, u, gamma: float, fd_step: float = 1e-5):
    """Check B H = I with B the enumerated covariance and H = d theta / d u (FD)."""
    net, free, template = _free_and_fixed(obj)
    uv = np.asarray(u.u if isinstance(u, MeanVector) else u, dtype=float)
    base = gibbs_free_energy(obj, uv, gamma)
    if not base.converged:
        return HessianReport(np.inf, -np.inf, False)
    theta_free = base.theta[free]
    _, _, cov = _tilted_stats(net, free, template, gamma, theta_free, want_cov=True)

    n_free = len(free)
    hess = np.zeros((n_free, n_free))
    ok = True
    for col, j in enumerate(free):
        for sign in (+1.0, -1.0):
            up = uv.copy()
            up[j] += sign * fd_step
            ev = gibbs_free_energy(obj, up, gamma)
            ok = ok and ev.converged
            hess[:, col] += sign * ev.theta[free] / (2.0 * fd_step)
    bh_err = float(np.max(np.abs(cov @ hess - np.eye(n_free))))
    min_eig = float(np.linalg.eigvalsh(0.5 * (hess + hess.T)).min())
    return HessianReport(bh_err, min_eig, ok)


def plefka_derivative_oracle(net: BeliefNetwork, u, energy_fn, order: int) -> float:
    """Expansion derivative terms by enumeration under the factorial measure.

    order 1 returns <E>; order 2 returns
    -Var(E) + sum_i Cov(E, S_i)^2 / (u_i (1 - u_i)) over interior units.
    energy_fn maps a (K, N) batch of states to (K,) energies.
    """
    uv = np.asarray(u.u if isinstance(u, MeanVector) else u, dtype=float)
    mean_e = factorial_expectation(net, uv, energy_fn)
    if order == 1:
        return mean_e
    if order != 2:
        raise ValueError("order must be 1 or 2")
    var = factorial_expectation(net, uv, lambda s: (energy_fn(s) - mean_e) ** 2)
    total = -var
    for i in np.flatnonzero((uv > 0.0) & (uv < 1.0)):
        cov_i = factorial_expectation(
            net, uv, lambda s, i=i: (energy_fn(s) - mean_e) * (s[:, i] - uv[i])
        )
        total += cov_i**2 / (uv[i] * (1.0 - uv[i]))
    return float(total)
