"""Exception types raised by the package."""


class SeqAllocError(Exception):
    """Base class for all package errors."""


class DomainError(SeqAllocError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ValidationError(SeqAllocError, ValueError):
    """Problem data or configuration failed validation.

    ``field`` names the offending input when known.
    """

    def __init__(self, message, field=None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class FactorizationError(SeqAllocError, ArithmeticError):
    """A covariance matrix could not be factorized even after jitter."""
