"""Out-of-process adapter for the storyloom engine.

Serves the text-embedding and denoising-backbone contracts over
newline-delimited JSON (stdio or stream sockets) and scores finished run
directories. Mock mode reuses the engine's own deterministic encoder and
toy backbone, so a story driven through the bridge reproduces an
in-process run exactly.
"""

__version__ = "0.1.0"

from .errors import BridgeAssetsError

__all__ = ["__version__", "BridgeAssetsError"]
