"""Mean-field objectives for belief networks and their exact gradients.

Three objectives are provided.  The first-order one is the naive
mean-field free energy of the truncated-energy model; the second adds a
curvature correction weighted by the centered-field second moment; the
third adds the second-order expansion term.

The second-order term is evaluated in closed form by expanding the
order-2 truncated energy in the orthogonal basis of centered-Bernoulli
monomials: under the product measure the correction reduces to minus the
variance carried by monomials of degree >= 2, which is a short sum over
unit pairs plus a collapsed triple term.  This form is exact (the
truncated energy is a degree-3 multilinear polynomial) and is validated
against brute-force enumeration in the tests.

Gradients with respect to the means, weights and biases are hand-coded
reverse mode through the same intermediates, so they are analytic, not
finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .network import BeliefNetwork, MeanVector, local_fields


class Scheme(str, Enum):
    G11 = "g11"
    G12 = "g12"
    G22 = "g22"


# Fault-injection hook for the validation suite's mutation check: when
# set to "g12-sign" the curvature term enters with the wrong sign, which
# the enumeration-oracle properties must detect.
_MUTATION = None

_G22_ACTIVATIONS = ("sigmoid", "noisy_or")


def check_scheme(net: BeliefNetwork, scheme: Scheme) -> None:
    if scheme == Scheme.G22 and net.activation.name not in _G22_ACTIVATIONS:
        raise ValueError(
            f"scheme g22 is only available for activations {_G22_ACTIVATIONS}"
        )


def central_moment_X(net: BeliefNetwork, u, i: int, k: int) -> float:
    """Central moment of the centered parent field of unit i (k in {1, 2})."""
    uv = np.asarray(u.u if isinstance(u, MeanVector) else u, dtype=float)
    if k == 1:
        return 0.0
    if k == 2:
        w = net.weights[i, :i]
        v = uv[:i] * (1.0 - uv[:i])
        return float(w**2 @ v)
    raise ValueError("k must be 1 or 2")


def g_coefficient(net: BeliefNetwork, u, i: int, k: int) -> float:
    """Mixture of k-th log-score derivatives at the mean field of unit i."""
    if k not in (1, 2):
        raise ValueError("k must be 1 or 2")
    uv = np.asarray(u.u if isinstance(u, MeanVector) else u, dtype=float)
    mbar = float(net.weights[i, :i] @ uv[:i] + net.biases[i])
    act = net.activation
    return float(uv[i] * act.dlog_f(mbar, k) + (1.0 - uv[i]) * act.dlog_1mf(mbar, k))


@dataclass
class ObjectiveEval:
    """Objective value with all first derivatives at fixed means.

    grad_u is the full mean gradient (zero on pinned units);
    stationarity is grad_u minus the entropy part, so the fixed-point
    update reads u_i <- sigmoid(-stationarity_i).
    """

    value: float
    grad_u: np.ndarray
    stationarity: np.ndarray
    grad_w: np.ndarray | None
    grad_h: np.ndarray | None


def evaluate(
    net: BeliefNetwork, u: MeanVector, scheme: Scheme, need_params: bool = True
) -> ObjectiveEval:
    """Value and analytic gradients of the requested objective.

    With need_params=False the weight and bias gradients are skipped
    (returned as None); the solver inner loop only needs the mean
    gradients.
    """
    check_scheme(net, scheme)
    uv = np.asarray(u.u, dtype=float)
    free = ~u.pinned
    act = net.activation
    weights = net.weights
    n = net.n_units

    mbar = local_fields(net, uv)
    act.check_domain(mbar)
    l0f, l0g = act.log_f(mbar), act.log_1mf(mbar)
    lf1, lg1 = act.dlog_f(mbar, 1), act.dlog_1mf(mbar, 1)
    g1 = uv * lf1 + (1.0 - uv) * lg1

    uf = uv[free]
    ent = float((uf * np.log(uf) + (1.0 - uf) * np.log1p(-uf)).sum())
    value = ent - float((uv * l0f + (1.0 - uv) * l0g).sum())

    # Reverse-mode accumulators.
    mbar_bar = -g1
    u_rest = -(l0f - l0g)
    w_bar = np.zeros((n, n)) if need_params else None
    vb = np.zeros(n)
    kapb = np.zeros(n)

    if scheme in (Scheme.G12, Scheme.G22):
        lf2, lg2 = act.dlog_f(mbar, 2), act.dlog_1mf(mbar, 2)
        lf3, lg3 = act.dlog_f(mbar, 3), act.dlog_1mf(mbar, 3)
        g2 = uv * lf2 + (1.0 - uv) * lg2
        g3 = uv * lf3 + (1.0 - uv) * lg3
        d2 = lf2 - lg2
        d3 = lf3 - lg3
        v = uv * (1.0 - uv)
        kap = 1.0 - 2.0 * uv
        w2 = weights * weights
        m2 = w2 @ v

        sign = 1.0 if _MUTATION == "g12-sign" else -1.0
        value += sign * 0.5 * float(g2 @ m2)
        g2b = sign * 0.5 * m2
        m2b = sign * 0.5 * g2

        if scheme == Scheme.G22:
            d1 = lf1 - lg1
            q = weights.T @ (g2[:, None] * weights)
            p = -d1[:, None] * weights - 0.5 * d2[:, None] * w2 * kap[None, :] - q.T
            p = np.tril(p, -1)
            vv = np.outer(v, v)
            value += -0.5 * float((p * p * vv).sum())

            w4 = w2 * w2
            m4 = w4 @ (v * v)
            value += -0.25 * float((d2 * d2 * v * (m2 * m2 - m4)).sum())

            # Backward through the collapsed triple term.
            d2b = -0.5 * d2 * v * (m2 * m2 - m4)
            vb += -0.25 * d2 * d2 * (m2 * m2 - m4)
            m2b = m2b - 0.5 * d2 * d2 * v * m2
            m4b = 0.25 * d2 * d2 * v
            vb += 2.0 * (w4.T @ m4b) * v

            # Backward through the pair term.
            pb = -p * vv
            p2 = p * p
            vb += -0.5 * (p2 @ v + p2.T @ v)
            d1b = -(pb * weights).sum(axis=1)
            d2b += -0.5 * (pb * w2 * kap[None, :]).sum(axis=1)
            kapb += -0.5 * (pb * w2 * d2[:, None]).sum(axis=0)
            qb = -pb.T
            g2b = g2b + ((weights @ qb) * weights).sum(axis=1)
            mbar_bar = mbar_bar + d1b * d2 + d2b * d3
            if need_params:
                w_bar += 4.0 * m4b[:, None] * weights * w2 * (v * v)[None, :]
                w_bar += -d1[:, None] * pb - d2[:, None] * kap[None, :] * weights * pb
                w_bar += g2[:, None] * (weights @ (qb + qb.T))

        # Backward through m2 and g2.
        if need_params:
            w_bar += 2.0 * m2b[:, None] * weights * v[None, :]
        vb += w2.T @ m2b
        u_rest = u_rest + g2b * d2
        mbar_bar = mbar_bar + g2b * g3

        u_rest = u_rest + vb * kap - 2.0 * kapb

    # Backward through the local fields.
    u_rest = u_rest + weights.T @ mbar_bar
    if need_params:
        h_bar = mbar_bar.copy()
        w_bar += mbar_bar[:, None] * uv[None, :]
        w_bar = np.tril(w_bar, -1)
    else:
        h_bar = None

    u_rest = np.where(free, u_rest, 0.0)
    grad_u = u_rest.copy()
    grad_u[free] += np.log(uf / (1.0 - uf))
    return ObjectiveEval(
        value=value,
        grad_u=grad_u,
        stationarity=u_rest,
        grad_w=w_bar,
        grad_h=h_bar,
    )


def objective(net: BeliefNetwork, u: MeanVector, scheme: Scheme) -> float:
    return evaluate(net, u, scheme, need_params=False).value


def objective_gradient(net: BeliefNetwork, u: MeanVector, scheme: Scheme) -> np.ndarray:
    """d objective / d u_i for the unpinned units, in unit order."""
    ev = evaluate(net, u, scheme, need_params=False)
    return ev.grad_u[~u.pinned]


def error_metric(g_hat: float, ln_z: float) -> float:
    """Relative error of an approximation g_hat to -ln_z."""
    if ln_z == 0.0:
        raise ValueError("error metric undefined for ln Z = 0 (degenerate clamp)")
    return -g_hat / ln_z - 1.0
