"""Exception hierarchy shared by the coders, models and file formats."""


class StegoError(Exception):
    """Base class for all library errors."""


class InvalidTableError(StegoError, ValueError):
    """A frequency table violates its invariants (zero count, total too large)."""


class EntropyExhaustedError(StegoError):
    """The model ran out of symbols before the message could be pinned down."""


class ExtractionError(StegoError):
    """The stego sequence does not decode to a message of the requested length."""


class AmbiguousStegoError(ExtractionError):
    """More than one candidate message remains (typically a truncated stego)."""


class FormatError(StegoError, ValueError):
    """A serialized stego, latent or model stream is malformed."""


class ModelFormatError(FormatError):
    """A serialized model is malformed (bad magic, truncation, count overflow)."""


class StateSpaceError(StegoError):
    """An exhaustive enumeration would exceed its size guard."""
