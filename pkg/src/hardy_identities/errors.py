"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class UsageError(ValueError):
    """An operation was called with incompatible or unsupported inputs."""


class NumericError(ArithmeticError):
    """An iterative method failed to converge or exceeded its budget."""


class FitRejected(NumericError):
    """The tail-fit window does not look asymptotic (non-monotone or too short)."""
