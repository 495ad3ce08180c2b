"""
Exception hierarchy for Chhaya.

Domain operations raise these; command entry points catch ChhayaError, log an
actionable message and map it to an exit code. "No observation" and skipped
filter updates are values, not exceptions.
"""


class ChhayaError(Exception):
    """Base class for every error raised by Chhaya."""


class ValidationError(ChhayaError, ValueError):
    """A value object or operation precondition was violated."""


class DimensionMismatchError(ValidationError):
    """Two grids that must share dimensions do not."""


class DuplicateClassError(ChhayaError):
    """A class id was registered twice."""


class UnknownClassError(ChhayaError, KeyError):
    """A class id is not present in the registry."""


class OutOfOrderFrameError(ChhayaError):
    """A frame timestamp did not strictly increase."""


class SequenceFormatError(ChhayaError):
    """A sequence file is missing or cannot be parsed."""

    def __init__(self, path, message: str, line_no: int | None = None):
        self.path = str(path)
        self.line_no = line_no
        location = f"{self.path}:{line_no}" if line_no is not None else self.path
        super().__init__(f"{location}: {message}")


class NoFramesAssociatedError(ChhayaError):
    """Stream association produced no frames (distinct from a parse failure)."""


class DetectionFormatError(SequenceFormatError):
    """A detection record or its run-length mask is malformed."""


class DepthFormatError(ChhayaError):
    """A depth image is not a 16-bit single-channel image."""


class OutputWriteError(ChhayaError):
    """An output file could not be written."""

    def __init__(self, path, cause: Exception):
        self.path = str(path)
        super().__init__(f"Failed to write {self.path}: {cause}")


class ScriptError(ChhayaError):
    """A synthetic scene script is invalid."""

    def __init__(self, location: str, message: str):
        self.location = location
        super().__init__(f"{location}: {message}")


class AlignmentError(ChhayaError):
    """Trajectories cannot be associated or aligned."""


class ConfigError(ChhayaError):
    """A configuration value is missing or cannot be coerced."""
