"""Denoising backbone contract and the built-in toy backbone.

The toy backbone is an embedding-targeted contracting stochastic process:
each step moves every frame a fixed fraction of the way toward a latent
"target" derived from the conditioning embedding, then adds scheduled
noise. It is not a learned model; it exists so the whole engine — prompt
weighting, boundary blending, metrics — runs deterministically at desk
scale with closed-form behavior.

The frame probe maps a latent frame back into embedding space (block
mean-pool, then the adjoint of the target basis, renormalized) so the
frame-prompt alignment signal is meaningful: a frame sitting at an
embedding's target probes close to that embedding.
"""

from __future__ import annotations

import hashlib
from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, ConfigError

_MASK64 = (1 << 64) - 1

# Guidance above this cap stops sharpening the toy update; the effective
# gain min(scale, cap)/cap keeps every step a contraction.
GUIDANCE_CAP = 10.0

# Constant stream key for the target/probe basis: fixed model identity,
# independent of run seeds.
_BASIS_STREAM = 0x542D4C4F4F4D


def _u64(*parts: int | str) -> int:
    h = hashlib.blake2b(digest_size=8)
    for part in parts:
        h.update(str(part).encode("utf-8"))
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "little")


def segment_seed(run_seed: int, segment_index: int) -> int:
    """Per-segment stream: run seed XOR a stable hash of the index."""
    return (run_seed ^ _u64("segment", segment_index)) & _MASK64


@dataclass
class SegmentLatents:
    """All latent frames of one segment, shape (F, C, H, W) float32."""

    values: np.ndarray
    segment_index: int

    @property
    def frame_count(self) -> int:
        return int(self.values.shape[0])

    @property
    def frame_shape(self) -> tuple[int, int, int]:
        return tuple(self.values.shape[1:])  # type: ignore[return-value]


def default_noise_schedule(steps: int, start: float = 0.8) -> list[float]:
    """Linear ramp from ``start`` down to 0; single-step runs get [0]."""
    if steps == 1:
        return [0.0]
    return [start * (steps - 1 - i) / (steps - 1) for i in range(steps)]


@dataclass(frozen=True)
class BackboneConfig:
    steps: int = 64
    guidance_scale: float = 4.5
    contraction_rate: float = 0.15
    noise_schedule: tuple[float, ...] | None = None
    channels: int = 4
    height: int = 8
    width: int = 8
    frames: int = 8

    def __post_init__(self) -> None:
        if self.steps < 1:
            raise ConfigError(f"backbone.steps must be >= 1, got {self.steps}")
        if self.guidance_scale < 0:
            raise ConfigError(f"backbone.guidance_scale must be >= 0, got {self.guidance_scale}")
        if not 0.0 < self.contraction_rate <= 1.0:
            raise ConfigError(
                f"backbone.contraction_rate must be in (0, 1], got {self.contraction_rate}"
            )
        if min(self.channels, self.height, self.width, self.frames) < 1:
            raise ConfigError("backbone latent dimensions must be >= 1")
        if self.height % 2 or self.width % 2:
            raise ConfigError("backbone.height and backbone.width must be even")
        if self.noise_schedule is not None:
            sched = tuple(float(s) for s in self.noise_schedule)
            if len(sched) != self.steps:
                raise ConfigError(
                    f"backbone.noise_schedule length {len(sched)} != steps {self.steps}"
                )
            if any(s < 0 for s in sched):
                raise ConfigError("backbone.noise_schedule must be nonnegative")
            if any(a < b for a, b in zip(sched, sched[1:])):
                raise ConfigError("backbone.noise_schedule must be nonincreasing")
            object.__setattr__(self, "noise_schedule", sched)

    @property
    def frame_shape(self) -> tuple[int, int, int]:
        return (self.channels, self.height, self.width)

    def schedule(self) -> tuple[float, ...]:
        if self.noise_schedule is not None:
            return self.noise_schedule
        return tuple(default_noise_schedule(self.steps))

    def effective_gain(self) -> float:
        return min(self.guidance_scale, GUIDANCE_CAP) / GUIDANCE_CAP


def init_noise(
    frame_shape: tuple[int, int, int],
    frame_count: int,
    seed: int,
    segment_index: int = 1,
) -> SegmentLatents:
    """Seeded standard-normal latents; distinct per (seed, segment_index)."""
    if frame_count < 1:
        raise ArgumentError(f"frame_count must be >= 1, got {frame_count}")
    rng = np.random.default_rng([seed & _MASK64, segment_index & _MASK64, 0])
    values = rng.standard_normal((frame_count, *frame_shape)).astype(np.float32)
    return SegmentLatents(values=values, segment_index=segment_index)


class DenoisingBackbone(ABC):
    """Contract the engine drives; toy and remote backbones implement it."""

    @property
    @abstractmethod
    def frame_shape(self) -> tuple[int, int, int]: ...

    @property
    @abstractmethod
    def frame_count(self) -> int: ...

    @property
    @abstractmethod
    def steps(self) -> int: ...

    @abstractmethod
    def init_segment(self, segment_index: int) -> SegmentLatents: ...

    @abstractmethod
    def denoise(
        self,
        latents: SegmentLatents,
        embedding: np.ndarray,
        mask_tokens: int,
        step: int,
    ) -> SegmentLatents:
        """One denoising step; must preserve frame count and shape."""

    @abstractmethod
    def probe(self, frame: np.ndarray) -> np.ndarray:
        """Project one latent frame into embedding space (unit norm)."""


def _pool_block2(frame64: np.ndarray) -> np.ndarray:
    c, h, w = frame64.shape
    return frame64.reshape(c, h // 2, 2, w // 2, 2).mean(axis=(2, 4)).reshape(-1)


class ToyBackbone(DenoisingBackbone):
    """Deterministic contracting process over seeded targets.

    Per frame and step: z <- z + rate * gain * (target(E) - z) + sigma * xi,
    with xi drawn from a stream keyed by (run seed, segment, step). Frames
    are independent; temporal coupling comes only from the engine's
    boundary handling.
    """

    def __init__(self, config: BackboneConfig, seed: int, embed_dim: int) -> None:
        if embed_dim < 2:
            raise ConfigError(f"embedding dimension must be >= 2, got {embed_dim}")
        self.config = config
        self.seed = seed
        self.embed_dim = embed_dim
        c, h, w = config.frame_shape
        pooled_dim = c * (h // 2) * (w // 2)
        basis_rng = np.random.default_rng([_BASIS_STREAM, embed_dim, c, h, w])
        # (pooled_dim, embed_dim); the probe uses its transpose, which is
        # what makes probe(target(E)) line up with E.
        self._basis = basis_rng.standard_normal((pooled_dim, embed_dim))
        self._schedule = config.schedule()
        self._gain = config.contraction_rate * config.effective_gain()

    @property
    def frame_shape(self) -> tuple[int, int, int]:
        return self.config.frame_shape

    @property
    def frame_count(self) -> int:
        return self.config.frames

    @property
    def steps(self) -> int:
        return self.config.steps

    def init_segment(self, segment_index: int) -> SegmentLatents:
        return init_noise(
            self.frame_shape,
            self.config.frames,
            segment_seed(self.seed, segment_index),
            segment_index,
        )

    def target_frame(self, embedding: np.ndarray) -> np.ndarray:
        """Lift an embedding into latent space; block-pooling inverts it."""
        embedding = np.asarray(embedding, dtype=np.float64)
        if embedding.shape != (self.embed_dim,):
            raise ArgumentError(
                f"embedding shape {embedding.shape} != ({self.embed_dim},)"
            )
        pooled = self._basis @ embedding
        c, h, w = self.frame_shape
        tiled = pooled.reshape(c, h // 2, w // 2)
        tiled = np.repeat(np.repeat(tiled, 2, axis=1), 2, axis=2)
        return tiled.astype(np.float32)

    def denoise(
        self,
        latents: SegmentLatents,
        embedding: np.ndarray,
        mask_tokens: int,
        step: int,
    ) -> SegmentLatents:
        if not 1 <= step <= self.config.steps:
            raise ArgumentError(f"step {step} outside [1, {self.config.steps}]")
        if mask_tokens < 0:
            raise ArgumentError(f"mask_tokens must be >= 0, got {mask_tokens}")
        if latents.frame_shape != self.frame_shape:
            raise ArgumentError(
                f"latent frame shape {latents.frame_shape} != backbone {self.frame_shape}"
            )
        target = self.target_frame(embedding)
        sigma = self._schedule[step - 1]
        new = latents.values + np.float32(self._gain) * (target - latents.values)
        if sigma > 0.0:
            rng = np.random.default_rng(
                [segment_seed(self.seed, latents.segment_index), 1, step]
            )
            xi = rng.standard_normal(latents.values.shape).astype(np.float32)
            new = new + np.float32(sigma) * xi
        return SegmentLatents(values=new, segment_index=latents.segment_index)

    def probe(self, frame: np.ndarray) -> np.ndarray:
        frame = np.asarray(frame)
        if frame.shape != self.frame_shape:
            raise ArgumentError(f"frame shape {frame.shape} != {self.frame_shape}")
        if not np.all(np.isfinite(frame)):
            raise ArgumentError("frame contains non-finite values")
        pooled = _pool_block2(frame.astype(np.float64))
        vec = self._basis.T @ pooled
        norm = float(np.linalg.norm(vec))
        if norm < 1e-12:
            fallback = np.zeros(self.embed_dim)
            fallback[0] = 1.0
            return fallback
        return vec / norm
