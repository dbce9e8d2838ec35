"""Exception types raised by gwchart."""


class GwChartError(Exception):
    """Base class for all package errors."""


class DomainError(GwChartError, ValueError):
    """An argument lies outside the domain of the operation."""


class DegenerateSampleError(GwChartError, ValueError):
    """A censored sample carries too few failures to identify (theta, alpha)."""


class ConvergenceError(GwChartError, RuntimeError):
    """An iterative solver failed to converge or diverged."""


class InformationError(GwChartError, RuntimeError):
    """An information matrix is singular or not positive definite."""
