"""Segmented latent story generation engine.

Turns an ordered list of (scene, action) prompt pairs into a chain of
latent video segments, balancing the two prompts at every denoising step
and smoothing segment boundaries with decayed-history blending modulated
by action similarity.
"""

__version__ = "0.1.0"

from .errors import (
    ArgumentError,
    ConfigError,
    EngineError,
    GenerationError,
    ProtocolError,
    ScriptParseError,
    ScriptValidationError,
    TransportError,
)

__all__ = [
    "__version__",
    "ArgumentError",
    "ConfigError",
    "EngineError",
    "GenerationError",
    "ProtocolError",
    "ScriptParseError",
    "ScriptValidationError",
    "TransportError",
]
