"""Exception types shared across the toolkit."""


class EmbedAuditError(Exception):
    """Base class for all toolkit errors."""


class UnreadableFileError(EmbedAuditError):
    """File missing or not readable."""


class UnsupportedFormatError(EmbedAuditError):
    """File exists but is not a PCM WAV we can decode."""


class EmptyAudioError(EmbedAuditError):
    """Decoded stream contains zero samples."""


class TooShortError(EmbedAuditError):
    """Clip shorter than the operation's minimum length."""


class SilentAudioError(EmbedAuditError):
    """Operation undefined on digital silence (SNR or loudness target)."""


class MissingNoiseError(EmbedAuditError):
    """EN transform requested but no noise clip registered."""


class CodecUnavailableError(EmbedAuditError):
    """External codec binary not found; the group should be skipped."""


class CodecError(EmbedAuditError):
    """External codec ran but failed."""


class Emb1FormatError(EmbedAuditError):
    """Embedding interchange manifest or data file is malformed."""


class MissingKeysError(Emb1FormatError):
    """Embedding map does not cover the experiment grid."""

    def __init__(self, missing):
        self.missing = list(missing)
        preview = ", ".join(str(k) for k in self.missing[:5])
        suffix = "" if len(self.missing) <= 5 else f" (+{len(self.missing) - 5} more)"
        super().__init__(f"missing embedding rows: {preview}{suffix}")


class ConfigError(EmbedAuditError):
    """Experiment configuration invalid or incomplete."""


class ClippingWarning(UserWarning):
    """Loudness matching pushed samples beyond full scale."""


class SuspectAlignmentWarning(UserWarning):
    """Codec delay alignment correlation below the confidence threshold."""
