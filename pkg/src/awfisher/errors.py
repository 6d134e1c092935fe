"""Exception types raised by awfisher."""


class AWFisherError(Exception):
    """Base class for all awfisher errors."""


class PValueDomainError(AWFisherError, ValueError):
    """A p-value lies outside (0, 1]."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class DataValidationError(AWFisherError, ValueError):
    """Input data (matrix file, null table file) failed validation."""


class NumericalError(AWFisherError, ArithmeticError):
    """A numeric procedure could not produce a meaningful result."""
