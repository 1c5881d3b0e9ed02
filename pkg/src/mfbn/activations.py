"""Activation functions for the belief-network conditional probabilities.

Each unit i is on with probability f(M_i), where M_i is the local field.
Two activations are supported: sigmoid (any real field) and noisy-or
(non-negative field).  Besides f itself, solvers need the derivatives of
the per-unit log-scores ln f and ln(1-f) up to third order; the third
order enters only through gradients of the second-order objective.

All probabilities are floored into [EPS, 1-EPS] before logs are taken,
so log-scores and their derivatives stay finite even at f = 0 or 1
(noisy-or with a zero field, for instance).
"""

from __future__ import annotations

import numpy as np

# Probability floor applied before logarithms and denominators.
EPS = 1e-12


class DomainError(ValueError):
    """Raised when a field value lies outside the activation's domain."""


class Activation:
    """Interface shared by the sigmoid and noisy-or activations."""

    name: str
    # Noisy-or requires non-negative weights and biases so that fields
    # stay in its domain; sigmoid has no such restriction.
    nonnegative_params: bool

    def f(self, x):
        raise NotImplementedError

    def fp(self, x):
        """First derivative f'(x)."""
        raise NotImplementedError

    def fpp(self, x):
        """Second derivative f''(x)."""
        raise NotImplementedError

    def check_domain(self, x):
        """Raise DomainError if x lies outside the domain of f."""

    def log_f(self, x):
        """ln f(x), with f floored into [EPS, 1-EPS]."""
        return np.log(self.f_floored(x))

    def log_1mf(self, x):
        """ln(1 - f(x)), with f floored into [EPS, 1-EPS]."""
        return np.log1p(-self.f_floored(x))

    def f_floored(self, x):
        return np.clip(self.f(x), EPS, 1.0 - EPS)

    def dlog_f(self, x, k):
        """k-th derivative of ln f at x, k in {1, 2, 3}."""
        raise NotImplementedError

    def dlog_1mf(self, x, k):
        """k-th derivative of ln(1-f) at x, k in {1, 2, 3}."""
        raise NotImplementedError


class Sigmoid(Activation):
    """f(x) = 1 / (1 + exp(-x)) on all reals."""

    name = "sigmoid"
    nonnegative_params = False

    def f(self, x):
        # Stable on both tails.
        x = np.asarray(x, dtype=float)
        out = np.empty_like(x)
        pos = x >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        out[~pos] = ex / (1.0 + ex)
        return out if out.ndim else float(out)

    def fp(self, x):
        s = self.f(x)
        return s * (1.0 - s)

    def fpp(self, x):
        s = self.f(x)
        return s * (1.0 - s) * (1.0 - 2.0 * s)

    def log_f(self, x):
        x = np.asarray(x, dtype=float)
        # ln sigma(x) = -ln(1 + e^-x), computed without overflow.
        out = -np.logaddexp(0.0, -x)
        out = np.clip(out, np.log(EPS), np.log1p(-EPS))
        return out if out.ndim else float(out)

    def log_1mf(self, x):
        return self.log_f(-np.asarray(x, dtype=float))

    def dlog_f(self, x, k):
        s = self.f_floored(x)
        if k == 1:
            return 1.0 - s
        # ln sigma(x) and ln(1-sigma(x)) differ by -x, so all derivatives
        # of order >= 2 coincide.
        if k == 2:
            return -s * (1.0 - s)
        if k == 3:
            return -s * (1.0 - s) * (1.0 - 2.0 * s)
        raise ValueError(f"unsupported derivative order {k}")

    def dlog_1mf(self, x, k):
        if k == 1:
            return -self.f_floored(x)
        return self.dlog_f(x, k)


class NoisyOr(Activation):
    """f(x) = 1 - exp(-x) on x >= 0.  ln(1-f(x)) = -x exactly."""

    name = "noisy_or"
    nonnegative_params = True

    def f(self, x):
        x = np.asarray(x, dtype=float)
        out = -np.expm1(-x)
        return out if out.ndim else float(out)

    def fp(self, x):
        return np.exp(-np.asarray(x, dtype=float))

    def fpp(self, x):
        return -np.exp(-np.asarray(x, dtype=float))

    def check_domain(self, x):
        if np.any(np.asarray(x) < 0):
            raise DomainError("noisy-or field is negative")

    def log_1mf(self, x):
        # Exact identity; no flooring needed on this side.
        x = np.asarray(x, dtype=float)
        out = np.minimum(-x, np.log1p(-EPS))
        return out if out.ndim else float(out)

    def dlog_f(self, x, k):
        fl = self.f_floored(x)
        q = 1.0 - fl
        if k == 1:
            return q / fl
        if k == 2:
            return -q / fl**2
        if k == 3:
            return q * (1.0 + q) / fl**3
        raise ValueError(f"unsupported derivative order {k}")

    def dlog_1mf(self, x, k):
        x = np.asarray(x, dtype=float)
        if k == 1:
            return -np.ones_like(x)
        return np.zeros_like(x)


SIGMOID = Sigmoid()
NOISY_OR = NoisyOr()

_BY_NAME = {a.name: a for a in (SIGMOID, NOISY_OR)}


def get_activation(name: str) -> Activation:
    try:
        return _BY_NAME[name]
    except KeyError:
        raise ValueError(
            f"unknown activation {name!r}; expected one of {sorted(_BY_NAME)}"
        ) from None
