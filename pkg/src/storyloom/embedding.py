"""Text embedding provider contract and the deterministic hash encoder.

Every provider returns unit-norm float64 vectors of a fixed dimension.
The hash encoder is the engine's built-in stand-in for a real text
encoder: fully deterministic, no model assets, shared-token texts land
close together.
"""

from __future__ import annotations

import hashlib
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class ProviderDescriptor:
    name: str
    dimension: int
    deterministic: bool
    seed: int | None = None


class TextEmbeddingProvider(ABC):
    """Contract every text encoder backend implements.

    Implementations must be safe to call from multiple threads and must
    normalize outputs to unit Euclidean norm.
    """

    @property
    @abstractmethod
    def dimension(self) -> int: ...

    @abstractmethod
    def describe(self) -> ProviderDescriptor: ...

    @abstractmethod
    def embed_text(self, text: str) -> np.ndarray:
        """Embed ``text`` into a unit-norm vector. Raises on empty text."""

    @abstractmethod
    def token_count(self, text: str) -> int:
        """Opaque size descriptor used to route the dominant prompt's mask."""


def _canonical_tokens(text: str) -> list[str]:
    return text.strip().lower().split()


def token_hash(token: str, seed: int) -> int:
    """Stable seeded 64-bit token hash (process-independent)."""
    key = (seed & _MASK64).to_bytes(8, "little")
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8, key=key).digest()
    return int.from_bytes(digest, "little")


class HashTextEncoder(TextEmbeddingProvider):
    """Deterministic mock encoder.

    Construction: lowercase, trim, split on whitespace; each token's hash
    keys a PRNG stream that yields a fixed unit vector; token vectors are
    averaged and renormalized. If the average collapses below 1e-12 the
    first token's vector is returned instead.
    """

    def __init__(self, seed: int = 0, dimension: int = 64) -> None:
        if dimension < 2:
            raise ArgumentError(f"embedding dimension must be >= 2, got {dimension}")
        self._seed = seed
        self._dim = dimension
        self._token_cache: dict[str, np.ndarray] = {}

    @property
    def dimension(self) -> int:
        return self._dim

    def describe(self) -> ProviderDescriptor:
        return ProviderDescriptor(
            name=f"hash-{self._dim}",
            dimension=self._dim,
            deterministic=True,
            seed=self._seed,
        )

    def _token_vector(self, token: str) -> np.ndarray:
        cached = self._token_cache.get(token)
        if cached is not None:
            return cached
        rng = np.random.default_rng(token_hash(token, self._seed))
        vec = rng.standard_normal(self._dim)
        vec /= np.linalg.norm(vec)
        self._token_cache[token] = vec
        return vec

    def embed_text(self, text: str) -> np.ndarray:
        tokens = _canonical_tokens(text)
        if not tokens:
            raise ArgumentError("cannot embed empty text")
        mean = np.mean([self._token_vector(t) for t in tokens], axis=0)
        norm = float(np.linalg.norm(mean))
        if norm < 1e-12:
            return self._token_vector(tokens[0]).copy()
        return mean / norm

    def token_count(self, text: str) -> int:
        return len(_canonical_tokens(text))


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity in [-1, 1]; inputs must share a dimension."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ArgumentError(f"dimension mismatch: {a.shape} vs {b.shape}")
    denom = float(np.linalg.norm(a)) * float(np.linalg.norm(b))
    if denom == 0.0:
        raise ArgumentError("cosine of a zero vector is undefined")
    return float(np.clip(np.dot(a, b) / denom, -1.0, 1.0))


def similarity01(a: np.ndarray, b: np.ndarray) -> float:
    """Affine remap of cosine onto [0, 1]: identical 1, orthogonal 0.5, antipodal 0."""
    return (1.0 + cosine(a, b)) / 2.0
