"""Exception types raised across the package."""


class PreintError(Exception):
    """Base class for all package errors."""


class ParseError(PreintError, ValueError):
    """Malformed direction-number table; carries the offending line number."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class CapacityError(PreintError, ValueError):
    """A request exceeds a hard size limit (dimensions, points, grid size)."""


class DomainError(PreintError, ValueError):
    """An argument lies outside the mathematical domain of the operation."""


class ContractError(PreintError, TypeError):
    """An operation was called on an object it does not support."""


class FactorizationError(PreintError, ValueError):
    """Covariance matrix is not symmetric positive definite."""


class MonotonicityError(PreintError, ValueError):
    """An integrand failed the monotonicity or growth probe."""


class ConvergenceError(PreintError, RuntimeError):
    """Root finding hit its iteration cap."""

    def __init__(self, message, last_iterate=None):
        self.last_iterate = last_iterate
        super().__init__(message)


class FitError(PreintError, ValueError):
    """Not enough data to fit a convergence rate."""
