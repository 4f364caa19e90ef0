"""Exception types shared across the package."""


class RcdnError(Exception):
    """Base class for all package-specific errors."""


class DimensionError(RcdnError):
    """Shapes of the operands are incompatible; message names the offending axis."""


class ValidationError(RcdnError):
    """An input value violates a documented precondition."""


class ConfigError(RcdnError):
    """A configuration object is internally inconsistent."""


class DegenerateBatchError(RcdnError):
    """Batch statistics cannot be computed (e.g. batchnorm with batch size 1)."""


class UsageError(RcdnError):
    """An API was called out of protocol (e.g. backward twice on one tape)."""


class NumericsError(RcdnError):
    """A tensor acquired NaN/Inf values."""


class DeterminismError(RcdnError):
    """A function expected to be deterministic returned differing results."""


class NanAbortError(RcdnError):
    """Training aborted on a non-finite loss; carries a diagnostic snapshot."""

    def __init__(self, message, epoch=None, batch_index=None, snapshot=None):
        super().__init__(message)
        self.epoch = epoch
        self.batch_index = batch_index
        self.snapshot = snapshot or {}


class PpmParseError(RcdnError):
    """Malformed PPM stream; carries the byte offset of the failure."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class CheckpointError(RcdnError):
    """A checkpoint file is malformed or from an unknown version."""
