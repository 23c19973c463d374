"""Exception hierarchy shared by all modules."""


class RisAgingError(Exception):
    """Base class for library errors."""


class SchemaError(RisAgingError, ValueError):
    """Configuration file does not parse or carries an unknown/ill-typed key."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class ValidationError(RisAgingError, ValueError):
    """A parsed configuration violates an invariant."""


class DomainError(RisAgingError, ValueError):
    """An argument lies outside the domain of an operation."""


class ConvergenceError(RisAgingError, RuntimeError):
    """An iterative solver stopped before reaching its tolerance."""

    def __init__(self, message, residual=float("nan"), iterations=0):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class ConditioningError(RisAgingError, RuntimeError):
    """A linear system is singular or its iteration operator is not contractive."""
