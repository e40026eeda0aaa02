"""Exception types raised across the package."""


class KPlaneError(Exception):
    """Base class for all errors raised by kplane."""


class InvalidInputError(KPlaneError, ValueError):
    pass


class DegenerateSystemError(KPlaneError, ArithmeticError):
    """A normal-equation system could not be solved even with a ridge."""


class ParseError(KPlaneError, ValueError):
    def __init__(self, message, row=None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


class ValidationError(InvalidInputError):
    """A model or dataset violates one of its invariants."""


class MonotonicityError(KPlaneError, AssertionError):
    """The hard-assignment objective increased between iterations."""
