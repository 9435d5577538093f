"""Exception types shared across the package."""


class VdsrError(Exception):
    """Base class for all package errors."""


class ShapeError(VdsrError, ValueError):
    """Raised when array shapes do not line up."""


class ConfigError(VdsrError, ValueError):
    """Raised for invalid hyperparameters, flags or datasets."""


class RangeError(VdsrError, ValueError):
    """Raised when a size, index or epoch falls outside its valid range."""


class DivergenceError(VdsrError, ArithmeticError):
    """Raised when training produces a non-finite loss."""

    def __init__(self, epoch, batch, loss):
        self.epoch = epoch
        self.batch = batch
        self.loss = loss
        super().__init__(f"non-finite loss {loss!r} at epoch {epoch}, batch {batch}")


class CorruptWeightsError(VdsrError, ValueError):
    """Raised when a weight file fails its structural or checksum checks."""
