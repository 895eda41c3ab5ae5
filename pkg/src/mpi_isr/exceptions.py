"""Exception hierarchy shared across the package."""


class MpiIsrError(Exception):
    """Base class for all package errors."""


class GeometryError(MpiIsrError, ValueError):
    """Raised when a translation or aggregation geometry is invalid."""


class SingularityError(MpiIsrError, ValueError):
    """Raised when a field is requested at (or too close to) a source point."""


class ParameterError(MpiIsrError, ValueError):
    """Raised on out-of-range algorithm parameters."""


class GridMismatchError(MpiIsrError, ValueError):
    """Raised when images that must share a voxel grid do not."""


class MissingComponentError(MpiIsrError, KeyError):
    """Raised when a field component was not recorded in a measurement set."""


class ConfigError(MpiIsrError):
    """Raised when a scenario file cannot be parsed or fails validation.

    ``violations`` holds one human-readable message per offending field.
    """

    def __init__(self, message, violations=None):
        super().__init__(message)
        self.violations = list(violations or [])


class StageInputError(MpiIsrError):
    """Raised when a pipeline stage cannot find the files it consumes."""


class NumericalError(MpiIsrError):
    """Raised when a numerical stage produces non-finite output."""
