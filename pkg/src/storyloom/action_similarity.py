"""Action-similarity modulation of the boundary blend factor.

Similar consecutive actions need little boundary blending (the motion
already continues); dissimilar actions get the full configured blend.
The modulated factor is alpha * (1 - similarity), clamped into
[0, clamp_max] so antipodal embeddings cannot push the boundary update
out of its convex range.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .embedding import TextEmbeddingProvider, cosine
from .errors import ArgumentError, ConfigError

MODE_WITHIN_PAIR = "within_pair"
MODE_CROSS_SEGMENT = "cross_segment"


@dataclass(frozen=True)
class ActionSimilarityConfig:
    """``within_pair`` compares a pair's own scene and action prompts;
    ``cross_segment`` compares the previous segment's action prompt with
    the current one."""

    mode: str = MODE_WITHIN_PAIR
    clamp_max: float = 0.5
    enabled: bool = True

    def __post_init__(self) -> None:
        if self.mode not in (MODE_WITHIN_PAIR, MODE_CROSS_SEGMENT):
            raise ConfigError(f"sar.mode must be 'within_pair' or 'cross_segment', got {self.mode!r}")
        if not 0.0 < self.clamp_max <= 0.5:
            raise ConfigError(f"sar.clamp_max must be in (0, 0.5], got {self.clamp_max}")


@dataclass(frozen=True)
class ActionBlendRecord:
    similarity: float
    alpha_in: float
    alpha_out: float
    prompts_compared: tuple[str, str]
    mode: str


def action_embedding(provider: TextEmbeddingProvider, prompt_text: str) -> np.ndarray:
    """Embed a prompt into the action representation space (unit norm)."""
    return provider.embed_text(prompt_text)


def modulate_blend(
    alpha: float,
    prev_embedding: np.ndarray,
    curr_embedding: np.ndarray,
    cfg: ActionSimilarityConfig,
    prompts_compared: tuple[str, str] = ("prev", "curr"),
) -> ActionBlendRecord:
    """Scale the blend factor by (1 - similarity) and clamp into range."""
    if not 0.0 <= alpha <= 0.5:
        raise ArgumentError(f"blend factor must be in [0, 0.5], got {alpha}")
    similarity = cosine(prev_embedding, curr_embedding)
    alpha_out = min(max(alpha * (1.0 - similarity), 0.0), cfg.clamp_max)
    return ActionBlendRecord(
        similarity=similarity,
        alpha_in=alpha,
        alpha_out=alpha_out,
        prompts_compared=prompts_compared,
        mode=cfg.mode,
    )
