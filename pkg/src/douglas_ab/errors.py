"""Exception hierarchy shared by every layer of the package."""


class DouglasError(Exception):
    """Base class for all errors raised by :mod:`douglas_ab`."""


class DomainError(DouglasError, ValueError):
    """An elementary function or formula was evaluated outside its domain."""


class JetMismatchError(DouglasError, TypeError):
    """Two jets from different truncation spaces were combined."""


class NotPositiveDefiniteError(DouglasError, ArithmeticError):
    """Cholesky factorisation met a non-positive pivot."""

    def __init__(self, message, pivot_index=None, pivot_value=None, eigenvalues=None):
        super().__init__(message)
        self.pivot_index = pivot_index
        self.pivot_value = pivot_value
        self.eigenvalues = eigenvalues


class AdmissibilityError(DouglasError, ValueError):
    """A point violates the positivity conditions of the metric profile."""

    def __init__(self, message, condition=None, margin=None):
        super().__init__(message)
        self.condition = condition
        self.margin = margin


class DegenerateFitError(DouglasError, ArithmeticError):
    """The (lambda, tau) least-squares problem is ill-conditioned."""


class QuadratureError(DouglasError, ArithmeticError):
    """An adaptive quadrature failed to reach its tolerance."""


class PreconditionError(DouglasError, ValueError):
    """A documented precondition does not hold at the evaluation point."""

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals or {}


class SamplingExhaustedError(DouglasError, RuntimeError):
    """Rejection sampling did not find an admissible point."""


class ConfigError(DouglasError, ValueError):
    """A run configuration or selector could not be parsed."""
