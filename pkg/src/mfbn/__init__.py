"""Mean-field approximations for sigmoid and noisy-or belief networks."""

from .activations import NOISY_OR, SIGMOID, Activation, DomainError, get_activation
from .network import (
    BeliefNetwork,
    MeanVector,
    NetworkValidationError,
    ParseError,
    energies,
    energy,
    parse,
    pinned_means,
    serialize,
    validate,
)
from .objectives import Scheme, error_metric, evaluate, objective, objective_gradient
from .oracle import (
    ClampContext,
    EnumerationSizeError,
    exact_log_partition,
    exact_marginals,
    gibbs_free_energy,
)
from .solver import SolveResult, SolverOptions, solve_fixed_point

__all__ = [
    "Activation",
    "BeliefNetwork",
    "ClampContext",
    "DomainError",
    "EnumerationSizeError",
    "MeanVector",
    "NetworkValidationError",
    "NOISY_OR",
    "ParseError",
    "Scheme",
    "SIGMOID",
    "SolveResult",
    "SolverOptions",
    "energies",
    "energy",
    "error_metric",
    "evaluate",
    "exact_log_partition",
    "exact_marginals",
    "get_activation",
    "gibbs_free_energy",
    "objective",
    "objective_gradient",
    "parse",
    "pinned_means",
    "serialize",
    "solve_fixed_point",
    "validate",
]

__version__ = "0.1.0"
