"""Core belief-network representation: topology, energies, serialization.

Units are indexed 0..N-1 in topological order; a weight w[i, j] is
allowed only for j < i (parents precede children).  The text file format
uses 1-based indices, converted at the parse/serialize boundary.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .activations import EPS, Activation, get_activation


class NetworkValidationError(ValueError):
    """A BeliefNetwork invariant is violated."""


class ParseError(ValueError):
    """A network file could not be parsed."""


@dataclass(frozen=True)
class BeliefNetwork:
    """Directed belief network with lower-triangular weights.

    weights : (N, N) array, w[i, j] nonzero only for j < i
    biases  : (N,) array
    visible : sorted tuple of clamped (observed) unit indices, 0-based
    """

    n_units: int
    weights: np.ndarray
    biases: np.ndarray
    activation: Activation
    visible: tuple = ()

    def __post_init__(self):
        # Copy so freezing never aliases a caller's working array.
        object.__setattr__(self, "weights", np.array(self.weights, dtype=float))
        object.__setattr__(self, "biases", np.array(self.biases, dtype=float))
        object.__setattr__(self, "visible", tuple(sorted(int(i) for i in self.visible)))
        self.weights.setflags(write=False)
        self.biases.setflags(write=False)

    @property
    def hidden(self):
        vis = set(self.visible)
        return tuple(i for i in range(self.n_units) if i not in vis)

    def hidden_mask(self):
        mask = np.ones(self.n_units, dtype=bool)
        mask[list(self.visible)] = False
        return mask

    def __eq__(self, other):
        if not isinstance(other, BeliefNetwork):
            return NotImplemented
        return (
            self.n_units == other.n_units
            and self.activation.name == other.activation.name
            and self.visible == other.visible
            and np.array_equal(self.weights, other.weights)
            and np.array_equal(self.biases, other.biases)
        )


def validate(net: BeliefNetwork) -> None:
    """Check every BeliefNetwork invariant; raise on the first violation."""
    n = net.n_units
    if n <= 0:
        raise NetworkValidationError("n_units must be positive")
    if net.weights.shape != (n, n):
        raise NetworkValidationError(
            f"weights must be ({n}, {n}), got {net.weights.shape}"
        )
    if net.biases.shape != (n,):
        raise NetworkValidationError(f"biases must be ({n},), got {net.biases.shape}")
    if np.any(np.triu(net.weights) != 0.0):
        i, j = np.argwhere(np.triu(net.weights) != 0.0)[0]
        raise NetworkValidationError(
            f"acyclicity violated: weight ({i}, {j}) with j >= i is nonzero"
        )
    if net.activation.nonnegative_params:
        if np.any(net.weights < 0.0):
            i, j = np.argwhere(net.weights < 0.0)[0]
            raise NetworkValidationError(
                f"negative weight ({i}, {j}) not allowed for {net.activation.name}"
            )
        if np.any(net.biases < 0.0):
            i = int(np.flatnonzero(net.biases < 0.0)[0])
            raise NetworkValidationError(
                f"negative bias ({i}) not allowed for {net.activation.name}"
            )
    for i in net.visible:
        if not 0 <= i < n:
            raise NetworkValidationError(f"visible index {i} out of range 0..{n - 1}")
    if not np.all(np.isfinite(net.weights)) or not np.all(np.isfinite(net.biases)):
        raise NetworkValidationError("non-finite parameter")


@dataclass
class MeanVector:
    """Per-unit means u, with clamped (pinned) entries fixed to {0, 1}."""

    u: np.ndarray
    pinned: np.ndarray

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        self.pinned = np.asarray(self.pinned, dtype=bool)

    def check(self):
        free = ~self.pinned
        if np.any(self.u[free] <= EPS) or np.any(self.u[free] >= 1.0 - EPS):
            raise ValueError("unpinned mean outside the open interval (eps, 1-eps)")
        pinned_vals = self.u[self.pinned]
        if pinned_vals.size and not np.all(np.isin(pinned_vals, (0.0, 1.0))):
            raise ValueError("pinned mean not binary")

    def copy(self):
        return MeanVector(self.u.copy(), self.pinned.copy())


def pinned_means(net: BeliefNetwork, clamp_values, hidden_u=0.5) -> MeanVector:
    """Build a MeanVector with the visible units pinned to clamp_values."""
    u = np.full(net.n_units, hidden_u, dtype=float)
    pinned = np.zeros(net.n_units, dtype=bool)
    vis = list(net.visible)
    u[vis] = np.asarray(clamp_values, dtype=float)
    pinned[vis] = True
    return MeanVector(u, pinned)


def local_field(net: BeliefNetwork, state, i: int) -> float:
    """M_i = sum_{j<i} w_ij s_j + h_i for a binary state."""
    s = np.asarray(state, dtype=float)
    return float(net.weights[i, :i] @ s[:i] + net.biases[i])


def local_fields(net: BeliefNetwork, states) -> np.ndarray:
    """All local fields for a (..., N) batch of states or means."""
    s = np.asarray(states, dtype=float)
    return s @ net.weights.T + net.biases


def mean_field_input(net: BeliefNetwork, u, i: int) -> float:
    """Mbar_i = sum_{j<i} w_ij u_j + h_i."""
    uv = u.u if isinstance(u, MeanVector) else np.asarray(u, dtype=float)
    return float(net.weights[i, :i] @ uv[:i] + net.biases[i])


def energy(net: BeliefNetwork, state) -> float:
    """E(s) = -sum_i [s_i ln f(M_i) + (1-s_i) ln(1-f(M_i))]."""
    return float(energies(net, np.asarray(state, dtype=float)[None, :])[0])


def energies(net: BeliefNetwork, states) -> np.ndarray:
    """Vectorized energy over a (K, N) batch of binary states."""
    s = np.asarray(states, dtype=float)
    m = local_fields(net, s)
    net.activation.check_domain(m)
    act = net.activation
    return -(s * act.log_f(m) + (1.0 - s) * act.log_1mf(m)).sum(axis=-1)


def taylor_energy(net: BeliefNetwork, u, state, beta: float, order: int) -> float:
    """Taylor expansion of the reparameterized energy around beta = 0.

    The field of unit i is Mhat_i(beta) = beta * X_i + Mbar_i with
    X_i = sum_{j<i} w_ij (s_j - u_j); order C in {1, 2} keeps terms up to
    beta^C.  At beta = 1 and exact expansion this recovers energy(net, s).
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    uv = u.u if isinstance(u, MeanVector) else np.asarray(u, dtype=float)
    s = np.asarray(state, dtype=float)
    act = net.activation
    mbar = local_fields(net, uv)
    act.check_domain(mbar)
    x = net.weights @ (s - uv)
    e0 = -(s * act.log_f(mbar) + (1.0 - s) * act.log_1mf(mbar)).sum()
    # k-th beta-derivative at 0: -sum_i [s_i (ln f)^(k) + (1-s_i)(ln(1-f))^(k)] X_i^k
    total = e0
    for k in range(1, order + 1):
        coef = s * act.dlog_f(mbar, k) + (1.0 - s) * act.dlog_1mf(mbar, k)
        total += (beta**k / math.factorial(k)) * -(coef * x**k).sum()
    return float(total)


# --- text format -----------------------------------------------------------

_REQUIRED_FIELDS = {"n_units", "activation", "biases", "edges", "visible"}


def serialize(net: BeliefNetwork) -> str:
    """Render a network as the UTF-8 text interchange format (1-based)."""
    edges = [
        {"i": int(i) + 1, "j": int(j) + 1, "w": float(net.weights[i, j])}
        for i, j in np.argwhere(net.weights != 0.0)
    ]
    doc = {
        "n_units": net.n_units,
        "activation": net.activation.name,
        "biases": [float(b) for b in net.biases],
        "edges": edges,
        "visible": [int(i) + 1 for i in net.visible],
    }
    return json.dumps(doc, indent=2)


def parse(text: str) -> BeliefNetwork:
    """Parse the text interchange format; validates the result."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid network file: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseError("network file must contain a single object")
    unknown = set(doc) - _REQUIRED_FIELDS
    if unknown:
        raise ParseError(f"unknown fields: {sorted(unknown)}")
    missing = _REQUIRED_FIELDS - set(doc)
    if missing:
        raise ParseError(f"missing fields: {sorted(missing)}")
    try:
        n = int(doc["n_units"])
        activation = get_activation(doc["activation"])
        biases = np.asarray(doc["biases"], dtype=float)
    except (TypeError, ValueError) as exc:
        raise ParseError(str(exc)) from exc
    if biases.shape != (n,):
        raise ParseError(f"field 'biases': expected {n} entries, got {biases.size}")
    weights = np.zeros((n, n))
    for pos, edge in enumerate(doc["edges"]):
        if not isinstance(edge, dict) or set(edge) != {"i", "j", "w"}:
            raise ParseError(f"edge #{pos}: expected record with fields i, j, w")
        i, j, w = int(edge["i"]) - 1, int(edge["j"]) - 1, float(edge["w"])
        if not (0 <= j < n and 0 <= i < n):
            raise ParseError(f"edge #{pos}: index out of range")
        if j >= i:
            raise ParseError(f"edge #{pos}: requires j < i (got i={i + 1}, j={j + 1})")
        weights[i, j] = w
    try:
        visible = tuple(int(v) - 1 for v in doc["visible"])
    except (TypeError, ValueError) as exc:
        raise ParseError(f"field 'visible': {exc}") from exc
    net = BeliefNetwork(n, weights, biases, activation, visible)
    validate(net)
    return net
