"""Exception types shared across the package."""


class EngineError(Exception):
    """Base class for all errors raised by this package."""


class ShapeMismatchError(EngineError):
    """Operands have incompatible shapes; the message reports both."""


class DataFormatError(EngineError):
    """Malformed input data: manifests, image files, bad labels."""


class CheckpointError(DataFormatError):
    """Unreadable or incompatible checkpoint file."""


class NumericInstabilityError(EngineError):
    """A NaN/Inf surfaced where finite values are required."""
