"""Exception hierarchy shared across the package.

The CLI maps these onto stable exit codes: ValidationError -> 1,
EvaluatorError -> 2, NumericalError -> 3.
"""


class MultiverseError(Exception):
    """Base class for all package errors."""


class ValidationError(MultiverseError):
    """Invalid configuration, search space, or argument."""


class EvaluatorError(MultiverseError):
    """Evaluation function is unusable (unknown builtin, missing command)."""


class NumericalError(MultiverseError):
    """Unrecoverable numerical failure (factorization, degenerate variance)."""
