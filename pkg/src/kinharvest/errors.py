"""Exception hierarchy.

Input errors (bad files, malformed rows) are kept apart from domain errors so
the command line can map them to different exit codes.
"""


class KinharvestError(Exception):
    """Base class for all errors raised by this package."""


class InputError(KinharvestError, ValueError):
    """Unreadable or malformed input data."""


class TraceFormatError(InputError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class EmptyInputError(InputError):
    pass


class ConfigurationError(KinharvestError, ValueError):
    """Invalid parameters or configuration."""


class DomainError(KinharvestError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class InsufficientDataError(KinharvestError, ValueError):
    pass


class NoDominantFrequencyError(DomainError):
    pass


class AccuracyError(KinharvestError, ValueError):
    """The requested computation would be numerically unreliable."""


class InfeasibleSpendError(DomainError):
    def __init__(self, message, slot=None):
        self.slot = slot
        if slot is not None:
            message = f"slot {slot}: {message}"
        super().__init__(message)


class ResourceLimitError(KinharvestError):
    """Problem size exceeds a configured memory or enumeration budget."""
