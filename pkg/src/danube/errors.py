"""Exception hierarchy shared across the engine."""


class EngineError(Exception):
    """Base class for all engine errors."""


class ShapeError(EngineError):
    """Operand dimensions are inconsistent."""


class FormatError(EngineError):
    """Malformed binary data or an unusable element layout."""


class UnsupportedFormatError(FormatError):
    """Format is recognized but not implemented (e.g. K-quant payloads)."""


class CorruptionError(FormatError):
    """File contents are truncated or internally inconsistent."""


class VersionError(FormatError):
    """Container version is not supported."""


class SchemaError(EngineError):
    """Required metadata key is missing or has the wrong type."""


class ValidationError(EngineError):
    """A structural invariant does not hold."""


class ConfigError(EngineError):
    """Model or generation configuration is invalid."""


class CapacityError(EngineError):
    """Context window or session capacity exceeded."""


class NumericError(EngineError):
    """Non-finite or otherwise unusable numeric input."""


class InputError(EngineError):
    """Caller-supplied data is invalid (bad ids, bad UTF-8, short corpus)."""
