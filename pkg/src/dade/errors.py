"""Exception hierarchy shared by every module of the package."""


class DadeError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(DadeError, ValueError):
    """Raised when arguments violate a documented precondition."""


class ConfigurationError(DadeError):
    """Raised when artifacts or parameters are mutually inconsistent."""


class CalibrationError(DadeError):
    """Raised when error bounds cannot be estimated from the sample."""


class ConvergenceError(DadeError, ArithmeticError):
    """Raised when the eigensolver fails to converge."""

    def __init__(self, message, sweeps):
        super().__init__(message)
        self.sweeps = sweeps


class FormatError(DadeError, ValueError):
    """Raised on malformed or truncated binary files."""
