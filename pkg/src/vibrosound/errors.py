"""Exception taxonomy shared across the package."""


class VibroSoundError(Exception):
    """Base class for all library errors."""


class InvalidSignal(VibroSoundError):
    """Signal is empty, non-finite, or otherwise unusable."""


class ShapeMismatch(VibroSoundError):
    """Array dimensions disagree with what the operation requires."""


class InvalidBand(VibroSoundError):
    """Band edges are out of order or outside (0, Nyquist)."""


class InvalidWindow(VibroSoundError):
    """Smoothing window does not fit the sequence."""


class ZeroSignal(VibroSoundError):
    """An all-zero signal where a nonzero one is required."""


class AliasError(VibroSoundError):
    """A mode frequency at or above Nyquist."""


class DegenerateReference(VibroSoundError):
    """Reference channel has no energy where it is needed."""


class DivergenceError(VibroSoundError):
    """Optimization produced a non-finite loss.

    The last finite iterate is attached as ``.result`` when available.
    """

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class UnsupportedFormat(VibroSoundError):
    """Audio file cannot be read (codec, channel count, or bad header)."""


class CorruptFile(VibroSoundError):
    """Binary container fails validation (magic, size, or payload)."""


class ConfigError(VibroSoundError):
    """Experiment config contains unknown keys or unparseable values."""
