"""Exception types shared across the package."""


class MalformedLine(ValueError):
    """Pose line does not contain exactly 12 numeric fields."""


class NonRigid(ValueError):
    """Parsed rotation block is too far from a proper rotation to repair."""


class TooShort(ValueError):
    """Sequence has fewer elements than the operation requires."""


class LengthMismatch(ValueError):
    """Paired sequences have different lengths."""


class DecodeError(ValueError):
    """Image file exists but cannot be decoded."""


class ZeroDimension(ValueError):
    """Requested or supplied image dimension is zero."""


class UnknownSequence(KeyError):
    """Sequence id not covered by the split assignment."""


class EmptySide(ValueError):
    """A split produced an empty train or test side."""


class EmptySet(ValueError):
    """Operation requires at least one sample."""


class DimensionMismatch(ValueError):
    """Image/mask dimensions disagree."""


class MultiChannelInput(ValueError):
    """Single-channel image required."""


class ImageTooSmall(ValueError):
    """Image too small for the detector's sampling circle."""


class ShapeMismatch(ValueError):
    """Tensor shapes incompatible with the operation."""


class MissingGrad(RuntimeError):
    """Backward pass requires a gradient buffer that was never allocated."""


class InvalidConfig(ValueError):
    """Configuration fields are inconsistent or out of range."""


class ChannelMismatch(ValueError):
    """Input channel count does not match the network variant."""


class EmptySplit(ValueError):
    """Training requires nonempty train and test sides."""


class DivergedLoss(RuntimeError):
    """Training loss became NaN/Inf; aborted with the last good checkpoint."""


class CheckpointMissingStats(ValueError):
    """Checkpoint lacks the normalization statistics needed for inference."""
