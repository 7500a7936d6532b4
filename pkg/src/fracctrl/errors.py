"""Shared exception types."""


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class PrecisionLossError(ArithmeticError):
    """A series or quadrature could not certify the requested tolerance."""


class ConvergenceError(RuntimeError):
    """An iterative solve did not reach its tolerance.

    Carries the residual history so callers can diagnose stalls.
    """

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = list(residuals) if residuals is not None else []
