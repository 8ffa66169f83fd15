"""Exception hierarchy shared by all modules."""


class EITMemoryError(Exception):
    """Base class for every error raised by the package."""


class PhysicsError(EITMemoryError):
    """Numerical or physical precondition failure inside a simulation."""


class DegenerateDenominatorError(PhysicsError):
    pass


class StabilityError(PhysicsError):
    pass


class InvariantViolation(PhysicsError):
    pass


class GridResolutionError(PhysicsError):
    pass


class CoverageError(PhysicsError):
    pass


class GridMismatchError(PhysicsError):
    pass


class EmptyWindowError(PhysicsError):
    pass


class StokesNormError(PhysicsError):
    pass


class DegenerateSpanError(PhysicsError):
    pass


class UnsupportedParametersError(PhysicsError):
    pass


class ConfigError(EITMemoryError):
    """Invalid scenario or calibration configuration."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class UnknownKeyError(ConfigError):
    pass


class RangeError(ConfigError):
    pass


class ExportError(EITMemoryError):
    """I/O or validation failure while writing results."""
