"""Exception hierarchy shared across the package."""


class RomttError(Exception):
    """Base class for all package-specific failures."""


class DataError(RomttError, ValueError):
    """Raised when input data violates a documented precondition
    (non-finite entries, duplicate sample points, too few rows)."""


class ConfigError(RomttError, ValueError):
    """Raised for invalid or inconsistent configuration values."""


class FormatError(RomttError):
    """Raised on serialization problems: version mismatch, payload size
    disagreeing with the declared dimensions, missing files."""


class SolverError(RomttError, RuntimeError):
    """Raised when a linear solve inside a time stepper fails."""


class BlowUpError(SolverError):
    """Raised when time integration produces a non-finite state.

    Carries ``step`` (index of the first bad step) and ``time``.
    """

    def __init__(self, message, step=None, time=None):
        super().__init__(message)
        self.step = step
        self.time = time
