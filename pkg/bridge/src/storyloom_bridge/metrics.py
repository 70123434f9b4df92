"""Run-directory metric scoring on decoded placeholder frames.

Latents are decoded into small RGB placeholder images (logistic squash,
nearest-neighbor upsample), then scored four ways: text-image agreement
per prompt (clip_add), agreement with the pooled representation of all
prompts (clip_combined), structural frame-to-frame similarity (dino), and
a perceptual-distance chain across segment boundaries (lpips_chain).

Two scorer backends exist: the deterministic mock scorer (no assets), and
a real-model scorer loaded from explicitly configured local assets. The
report always records which model produced it.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from storyloom.artifacts import load_latents
from storyloom.embedding import HashTextEncoder

from .errors import BridgeAssetsError

_IMAGE_STREAM_SEMANTIC = 0x494D4753
_IMAGE_STREAM_STRUCTURE = 0x494D4754
_UPSAMPLE = 4
_POOL = 8


@dataclass(frozen=True)
class MetricReport:
    clip_add: float
    clip_combined: float
    dino: float
    lpips_chain: float
    model_id: str
    frames_scored: int

    def to_dict(self) -> dict:
        return asdict(self)


def decode_frame(latent: np.ndarray) -> np.ndarray:
    """(C, H, W) latent -> (4H, 4W, 3) placeholder image in [0, 1]."""
    c = latent.shape[0]
    channels = [latent[i % c] for i in range(3)]
    img = np.stack(channels, axis=-1).astype(np.float64)
    img = 1.0 / (1.0 + np.exp(-img))
    img = np.repeat(np.repeat(img, _UPSAMPLE, axis=0), _UPSAMPLE, axis=1)
    return img


def _pool_image(img: np.ndarray) -> np.ndarray:
    h, w, c = img.shape
    ph, pw = h // _POOL, w // _POOL
    return img[: ph * _POOL, : pw * _POOL].reshape(ph, _POOL, pw, _POOL, c).mean(
        axis=(1, 3)
    ).reshape(-1)


class MockScorer:
    """Deterministic scorer matching the engine's hash-encoder family."""

    def __init__(self, seed: int, dim: int) -> None:
        self._seed = seed
        self._dim = dim
        self._text = HashTextEncoder(seed=seed, dimension=dim)
        self._projections: dict[tuple[int, int], np.ndarray] = {}

    @property
    def model_id(self) -> str:
        return f"mock-hash-{self._dim}/seed-{self._seed}"

    def embed_text(self, text: str) -> np.ndarray:
        return self._text.embed_text(text)

    def _project(self, stream: int, pooled: np.ndarray) -> np.ndarray:
        key = (stream, pooled.size)
        proj = self._projections.get(key)
        if proj is None:
            rng = np.random.default_rng([stream, self._seed % 2**64, self._dim, pooled.size])
            proj = rng.standard_normal((self._dim, pooled.size))
            self._projections[key] = proj
        vec = proj @ pooled
        norm = float(np.linalg.norm(vec))
        if norm < 1e-12:
            out = np.zeros(self._dim)
            out[0] = 1.0
            return out
        return vec / norm

    def embed_image_semantic(self, img: np.ndarray) -> np.ndarray:
        return self._project(_IMAGE_STREAM_SEMANTIC, _pool_image(img))

    def embed_image_structure(self, img: np.ndarray) -> np.ndarray:
        return self._project(_IMAGE_STREAM_STRUCTURE, _pool_image(img))

    def perceptual_distance(self, img_a: np.ndarray, img_b: np.ndarray) -> float:
        return float(np.mean(np.abs(img_a - img_b)))


class RealScorer:
    """Scores with locally installed CLIP/DINO/LPIPS checkpoints.

    Models are only ever loaded from an explicit assets directory; this
    process never downloads weights. Layout: ``<assets>/clip``,
    ``<assets>/dino`` (transformers save_pretrained format) plus the lpips
    package's bundled net.
    """

    def __init__(self, assets_dir: str | Path | None) -> None:
        if assets_dir is None:
            raise BridgeAssetsError(
                "real-model scoring needs --assets <dir>; use --mock for the deterministic scorer"
            )
        assets = Path(assets_dir)
        clip_dir = assets / "clip"
        dino_dir = assets / "dino"
        if not clip_dir.is_dir() or not dino_dir.is_dir():
            raise BridgeAssetsError(
                f"model assets not found under {assets} (need clip/ and dino/ subdirectories)"
            )
        try:
            import lpips  # type: ignore
            import torch  # type: ignore
            from transformers import (  # type: ignore
                AutoImageProcessor,
                AutoModel,
                CLIPModel,
                CLIPProcessor,
            )
        except ImportError as exc:
            raise BridgeAssetsError(f"real-model scoring needs the 'real' extra: {exc}") from exc
        self._torch = torch
        self._clip = CLIPModel.from_pretrained(clip_dir)
        self._clip_proc = CLIPProcessor.from_pretrained(clip_dir)
        self._dino = AutoModel.from_pretrained(dino_dir)
        self._dino_proc = AutoImageProcessor.from_pretrained(dino_dir)
        self._lpips = lpips.LPIPS(net="alex")
        self.model_id = f"clip:{clip_dir.name}+dino:{dino_dir.name}+lpips:alex"

    def _pil(self, img: np.ndarray):
        from PIL import Image  # type: ignore

        return Image.fromarray((np.clip(img, 0.0, 1.0) * 255).astype(np.uint8))

    def embed_text(self, text: str) -> np.ndarray:
        inputs = self._clip_proc(text=[text], return_tensors="pt", padding=True)
        with self._torch.no_grad():
            features = self._clip.get_text_features(**inputs)[0].numpy()
        return features / np.linalg.norm(features)

    def embed_image_semantic(self, img: np.ndarray) -> np.ndarray:
        inputs = self._clip_proc(images=self._pil(img), return_tensors="pt")
        with self._torch.no_grad():
            features = self._clip.get_image_features(**inputs)[0].numpy()
        return features / np.linalg.norm(features)

    def embed_image_structure(self, img: np.ndarray) -> np.ndarray:
        inputs = self._dino_proc(images=self._pil(img), return_tensors="pt")
        with self._torch.no_grad():
            features = self._dino(**inputs).last_hidden_state[0, 0].numpy()
        return features / np.linalg.norm(features)

    def perceptual_distance(self, img_a: np.ndarray, img_b: np.ndarray) -> float:
        def to_tensor(img):
            arr = np.clip(img, 0.0, 1.0).transpose(2, 0, 1)[None] * 2.0 - 1.0
            return self._torch.from_numpy(arr.astype(np.float32))

        with self._torch.no_grad():
            return float(self._lpips(to_tensor(img_a), to_tensor(img_b)).item())


def load_run(run_dir: str | Path) -> tuple[dict, list]:
    run_dir = Path(run_dir)
    doc = json.loads((run_dir / "run.json").read_text("utf-8"))
    segments = []
    for k in range(1, len(doc["script"]["segments"]) + 1):
        path = run_dir / f"segment_{k}.f32le"
        if not path.exists():
            break
        segments.append(load_latents(path))
    if not segments:
        raise FileNotFoundError(f"no segment latents under {run_dir}")
    return doc, segments


def _cos(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.clip(np.dot(a, b), -1.0, 1.0))


def compute_metric_report(run_dir: str | Path, scorer) -> MetricReport:
    doc, segments = load_run(run_dir)
    prompts = [(s["scene"], s["action"]) for s in doc["script"]["segments"][: len(segments)]]
    decoded = [[decode_frame(frame) for frame in seg.values] for seg in segments]

    text_embs = [(scorer.embed_text(scene), scorer.embed_text(action)) for scene, action in prompts]
    pooled_sum = np.sum([e for pair in text_embs for e in pair], axis=0)
    pooled = pooled_sum / np.linalg.norm(pooled_sum)

    per_prompt = []
    combined = []
    for frames, (scene_emb, action_emb) in zip(decoded, text_embs):
        last = scorer.embed_image_semantic(frames[-1])
        per_prompt.append((_cos(last, scene_emb) + _cos(last, action_emb)) / 2.0)
        combined.append(_cos(last, pooled))

    chain = [frame for frames in decoded for frame in frames]
    structure = [scorer.embed_image_structure(frame) for frame in chain]
    dino_pairs = [_cos(a, b) for a, b in zip(structure, structure[1:])]

    lpips_chain = [
        scorer.perceptual_distance(prev_frames[-1], next_frames[0])
        for prev_frames, next_frames in zip(decoded, decoded[1:])
    ]

    return MetricReport(
        clip_add=float(np.mean(per_prompt)),
        clip_combined=float(np.mean(combined)),
        dino=float(np.mean(dino_pairs)) if dino_pairs else 1.0,
        lpips_chain=float(np.mean(lpips_chain)) if lpips_chain else 0.0,
        model_id=scorer.model_id,
        frames_scored=len(chain),
    )
