"""Exception hierarchy shared by all clonecraft modules."""


class CloneCraftError(Exception):
    """Base class for every error raised by this package."""


class EmptyInput(CloneCraftError):
    """An operation received an empty waveform, token sequence or list."""


class ConfigMismatch(CloneCraftError):
    """Input data does not match the configuration it is paired with."""


class ConfigError(CloneCraftError):
    """A configuration object is internally inconsistent or unknown."""


class TooShort(CloneCraftError):
    """A mel spectrogram has fewer frames than one partial window."""


class ShapeError(CloneCraftError):
    """Two arrays that must share a shape do not."""


class NumericalError(CloneCraftError):
    """Non-finite values or a degenerate quantity appeared mid-computation."""


class BatchTooSmall(CloneCraftError):
    """A speaker batch violates the N >= 2 / M >= 2 structure."""


class FormatError(CloneCraftError):
    """A serialized file is corrupt or not in the expected format."""


class ManifestError(CloneCraftError):
    """A dataset manifest violates its invariants."""


class MissingAsset(CloneCraftError):
    """An audio file referenced by a manifest does not exist."""


class SamplerError(CloneCraftError):
    """The batch sampler cannot satisfy the requested batch structure."""


class ProtocolError(CloneCraftError):
    """An evaluation protocol precondition is not met."""


class DependencyError(CloneCraftError):
    """A required upstream artifact (e.g. a checkpoint) is unavailable."""
