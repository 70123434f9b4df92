"""Exception hierarchy shared by all engine modules."""

from __future__ import annotations


class EngineError(Exception):
    """Base class for every error raised by this package."""


class ArgumentError(EngineError, ValueError):
    """An operation was called with values outside its contract."""


class ConfigError(EngineError, ValueError):
    """A configuration document or bundle violates its schema."""


class ScriptParseError(EngineError):
    """The script document could not be decoded."""

    def __init__(self, message: str, byte_offset: int | None = None) -> None:
        super().__init__(message)
        self.byte_offset = byte_offset


class ScriptValidationError(EngineError):
    """A decoded script violates a structural invariant."""

    def __init__(self, message: str, segment_index: int = 0) -> None:
        super().__init__(message)
        self.segment_index = segment_index


class TransportError(EngineError):
    """A remote backend connection failed or was torn down mid-run."""


class ProtocolError(TransportError):
    """The remote peer violated the wire protocol."""


class GenerationError(EngineError):
    """Story generation aborted; carries the failing segment index."""

    def __init__(self, segment_index: int, cause: BaseException) -> None:
        super().__init__(f"segment {segment_index} failed: {cause}")
        self.segment_index = segment_index
        self.cause = cause
