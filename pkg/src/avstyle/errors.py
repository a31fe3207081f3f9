"""Error types shared across the package.

ValueError is used for bad parameters/shapes; these classes mark conditions
callers are expected to branch on (CLI exit codes, HTTP status mapping).
"""


class DataError(RuntimeError):
    """Problem with input data on disk (unreadable, missing, inconsistent)."""


class AudioDecodeError(DataError):
    """Audio file exists but cannot be decoded."""


class VideoDecodeError(DataError):
    """Video file cannot be opened or read."""


class MissingAudioError(DataError):
    """Video has no usable audio track."""


class EmptyInputError(DataError):
    """An input that must be non-empty is empty."""


class CheckpointError(DataError):
    """Checkpoint file is missing, corrupt, or schema-incompatible."""
