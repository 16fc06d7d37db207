"""Exception types shared across the package."""


class TGANetError(Exception):
    """Base class for everything this package raises on purpose."""


class EmptyMask(TGANetError):
    """A binary mask has no foreground pixel."""


class EmptyDataset(TGANetError):
    """An index, split, or mask collection has no usable samples."""


class EmptyList(TGANetError):
    """An aggregation was asked to average zero items."""


class MissingWord(TGANetError):
    """An embedding source cannot produce a vector for an attribute word."""


class DimensionMismatch(TGANetError):
    """A vector or feature dimension disagrees with the configured one."""


class InvalidProbabilities(TGANetError):
    """A probability vector violates its simplex constraints."""


class ShapeMismatch(TGANetError):
    """Array/tensor shapes are incompatible with the operation."""


class NonFiniteFeatures(TGANetError):
    """A feature map contains NaN or infinite entries (debug checks only)."""


class InvalidConfig(TGANetError):
    """A configuration value violates its invariants."""


class MissingDirectory(TGANetError):
    """A required dataset directory does not exist."""


class UnpairedSample(TGANetError):
    """An image/mask stem exists on one side of the dataset only."""


class CorruptImage(TGANetError):
    """An image or mask file could not be decoded."""


class DivergedLoss(TGANetError):
    """Training produced a non-finite loss."""


class CheckpointVersionMismatch(TGANetError):
    """A checkpoint or manifest was written by an incompatible format version."""


class UnknownCommand(TGANetError):
    """The CLI was given a subcommand it does not know."""
