"""Segment-boundary latent blending.

A new segment's first frame is softly pulled toward the previous
segment's history: a geometric-decay blend of the previous segment's
frames plus its final frame, folded in by a convex update with factor
gamma. gamma is capped at 0.5 so the update's own-frame coefficient
(1 - 2*gamma) never goes negative.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, ConfigError


@dataclass(frozen=True)
class BlendConfig:
    gamma: float = 0.25
    decay_base: float = 0.9
    reapply_per_step: bool = False

    def __post_init__(self) -> None:
        if not 0.0 <= self.gamma <= 0.5:
            raise ConfigError(f"blend.gamma must be in [0, 0.5], got {self.gamma}")
        if not 0.0 < self.decay_base < 1.0:
            raise ConfigError(f"blend.decay_base must be in (0, 1), got {self.decay_base}")


@dataclass(frozen=True)
class DecayWeights:
    """Geometric weights over a segment's frames, newest frame heaviest."""

    raw: np.ndarray
    normalized: np.ndarray
    frame_count: int


def decay_weights(frame_count: int, base: float) -> DecayWeights:
    """raw[i] = base**(frame_count - i - 1), normalized to sum 1."""
    if frame_count < 1:
        raise ArgumentError(f"frame_count must be >= 1, got {frame_count}")
    if not 0.0 < base < 1.0:
        raise ArgumentError(f"decay base must be in (0, 1), got {base}")
    exponents = np.arange(frame_count - 1, -1, -1, dtype=np.float64)
    raw = np.power(base, exponents)
    return DecayWeights(raw=raw, normalized=raw / raw.sum(), frame_count=frame_count)


def blended_init(prev_frames: np.ndarray, weights: DecayWeights) -> np.ndarray:
    """Convex blend of the previous segment's frames, one frame out.

    ``prev_frames`` has shape (F, ...); the result keeps the frame shape
    and dtype.
    """
    prev_frames = np.asarray(prev_frames)
    if prev_frames.shape[0] != weights.frame_count:
        raise ArgumentError(
            f"weights cover {weights.frame_count} frames, got {prev_frames.shape[0]}"
        )
    acc = np.tensordot(weights.normalized, prev_frames.astype(np.float64), axes=(0, 0))
    return acc.astype(prev_frames.dtype)


def boundary_update(
    z_first: np.ndarray,
    z_prev_last: np.ndarray,
    z_tilde: np.ndarray,
    gamma: float,
) -> np.ndarray:
    """gamma*z_prev_last + gamma*z_tilde + (1 - 2*gamma)*z_first.

    Exact convex combination: gamma = 0 returns z_first unchanged,
    gamma = 0.5 drops z_first entirely.
    """
    if not 0.0 <= gamma <= 0.5:
        raise ArgumentError(f"gamma must be in [0, 0.5], got {gamma}")
    z_first = np.asarray(z_first)
    if z_first.shape != z_prev_last.shape or z_first.shape != z_tilde.shape:
        raise ArgumentError(
            f"shape mismatch: {z_first.shape} vs {np.shape(z_prev_last)} vs {np.shape(z_tilde)}"
        )
    mixed = (
        gamma * np.asarray(z_prev_last, dtype=np.float64)
        + gamma * np.asarray(z_tilde, dtype=np.float64)
        + (1.0 - 2.0 * gamma) * z_first.astype(np.float64)
    )
    return mixed.astype(z_first.dtype)
