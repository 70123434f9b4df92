"""Newline-delimited JSON protocol for out-of-process backends.

One request per line, one response per line, lockstep (a single request
in flight per connection). A ``hello`` exchange negotiates the embedding
dimension and latent shape before any other call. Latent payloads travel
base64-encoded as little-endian float32; embeddings travel as JSON number
arrays, which round-trip doubles exactly.

This module holds the framing helpers and the client side; servers import
the same helpers so both ends agree on the message schema by
construction.
"""

from __future__ import annotations

import base64
import json
import shlex
import socket
import subprocess
from dataclasses import dataclass

import numpy as np

from .backbone import DenoisingBackbone, SegmentLatents, init_noise, segment_seed
from .embedding import ProviderDescriptor, TextEmbeddingProvider
from .errors import ArgumentError, ConfigError, ProtocolError, TransportError
from .orchestrator import EngineConfig

PROTO_VERSION = 1

METHODS = ("hello", "embed_text", "embed_frame", "denoise_step", "metrics", "shutdown")

ERR_UNKNOWN_METHOD = "unknown_method"
ERR_BAD_PARAMS = "bad_params"
ERR_PROTOCOL = "protocol"
ERR_INTERNAL = "internal"


def encode_f32(values: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(values, dtype="<f4").tobytes()).decode("ascii")


def decode_f32(data: str, shape: tuple[int, ...]) -> np.ndarray:
    raw = np.frombuffer(base64.b64decode(data), dtype="<f4")
    expected = int(np.prod(shape))
    if raw.size != expected:
        raise ArgumentError(f"payload holds {raw.size} floats, shape {shape} needs {expected}")
    return raw.reshape(shape).copy()


def dump_message(msg: dict) -> bytes:
    return (json.dumps(msg, separators=(",", ":")) + "\n").encode("utf-8")


class _Stream:
    """Line-oriented transport over a socket or a child process' stdio."""

    def __init__(self, reader, writer, proc: subprocess.Popen | None = None) -> None:
        self._reader = reader
        self._writer = writer
        self._proc = proc

    @classmethod
    def open(cls, endpoint: str) -> "_Stream":
        if endpoint.startswith("stdio:"):
            argv = shlex.split(endpoint[len("stdio:"):])
            if not argv:
                raise ConfigError("stdio endpoint needs a command")
            proc = subprocess.Popen(
                argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE, bufsize=0
            )
            return cls(proc.stdout, proc.stdin, proc)
        if endpoint.startswith("unix:"):
            sock = socket.socket(socket.AF_UNIX, socket.SOCK_STREAM)
            try:
                sock.connect(endpoint[len("unix:"):])
            except OSError as exc:
                raise TransportError(f"cannot connect to {endpoint}: {exc}") from exc
            f = sock.makefile("rwb", buffering=0)
            return cls(f, f)
        host, sep, port = endpoint.rpartition(":")
        if not sep or not port.isdigit():
            raise ConfigError(
                f"endpoint must be host:port, unix:<path> or stdio:<command>, got {endpoint!r}"
            )
        sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        try:
            sock.connect((host or "127.0.0.1", int(port)))
        except OSError as exc:
            raise TransportError(f"cannot connect to {endpoint}: {exc}") from exc
        f = sock.makefile("rwb", buffering=0)
        return cls(f, f)

    def send_line(self, data: bytes) -> None:
        try:
            self._writer.write(data)
            self._writer.flush()
        except (BrokenPipeError, OSError, ValueError) as exc:
            raise TransportError(f"connection lost while sending: {exc}") from exc

    def recv_line(self) -> bytes:
        try:
            line = self._reader.readline()
        except (OSError, ValueError) as exc:
            raise TransportError(f"connection lost while receiving: {exc}") from exc
        if not line:
            raise TransportError("connection closed by peer")
        return line

    def close(self) -> None:
        for h in (self._writer, self._reader):
            try:
                h.close()
            except Exception:
                pass
        if self._proc is not None:
            try:
                self._proc.terminate()
                self._proc.wait(timeout=5)
            except Exception:
                pass


class WireClient:
    """Lockstep request/response client with id checking."""

    def __init__(self, endpoint: str) -> None:
        self._stream = _Stream.open(endpoint)
        self._next_id = 1

    def request(self, method: str, params: dict) -> dict:
        req_id = self._next_id
        self._next_id += 1
        self._stream.send_line(dump_message({"id": req_id, "method": method, "params": params}))
        line = self._stream.recv_line()
        try:
            msg = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"peer sent invalid JSON: {exc.msg}") from exc
        if msg.get("id") != req_id:
            raise ProtocolError(f"response id {msg.get('id')} != request id {req_id}")
        if "error" in msg:
            err = msg["error"] or {}
            raise TransportError(
                f"{method} failed: {err.get('code', 'unknown')}: {err.get('message', '')}"
            )
        if "result" not in msg:
            raise ProtocolError("response carries neither result nor error")
        return msg["result"]

    def close(self, polite: bool = True) -> None:
        if polite:
            try:
                self.request("shutdown", {})
            except (TransportError, ProtocolError):
                pass
        self._stream.close()


@dataclass(frozen=True)
class Handshake:
    dim: int
    latent_shape: tuple[int, int, int]
    deterministic: bool
    model_id: str


def hello(client: WireClient, config: EngineConfig, seed: int) -> Handshake:
    """Negotiate dimensions; raises ConfigError when the peer disagrees."""
    result = client.request(
        "hello",
        {
            "proto": PROTO_VERSION,
            "embed_dim": config.embed_dim,
            "latent_shape": list(config.backbone.frame_shape),
            "frames": config.backbone.frames,
            "seed": seed,
            "backbone": {
                "steps": config.backbone.steps,
                "guidance_scale": config.backbone.guidance_scale,
                "contraction_rate": config.backbone.contraction_rate,
                "noise_schedule": list(config.backbone.schedule()),
            },
        },
    )
    shake = Handshake(
        dim=int(result["dim"]),
        latent_shape=tuple(result["latent_shape"]),
        deterministic=bool(result["deterministic"]),
        model_id=str(result.get("model_id", "")),
    )
    if shake.dim != config.embed_dim:
        raise ConfigError(f"peer embedding dimension {shake.dim} != configured {config.embed_dim}")
    if shake.latent_shape != config.backbone.frame_shape:
        raise ConfigError(
            f"peer latent shape {shake.latent_shape} != configured {config.backbone.frame_shape}"
        )
    return shake


class BridgeProvider(TextEmbeddingProvider):
    """Text embeddings served by the remote peer; responses are cached so
    a text is shipped over the wire once per run."""

    def __init__(self, client: WireClient, handshake: Handshake) -> None:
        self._client = client
        self._handshake = handshake
        self._cache: dict[str, tuple[np.ndarray, int]] = {}

    @property
    def dimension(self) -> int:
        return self._handshake.dim

    def describe(self) -> ProviderDescriptor:
        return ProviderDescriptor(
            name=f"bridge:{self._handshake.model_id}",
            dimension=self._handshake.dim,
            deterministic=self._handshake.deterministic,
        )

    def _fetch(self, text: str) -> tuple[np.ndarray, int]:
        if not text.strip():
            raise ArgumentError("cannot embed empty text")
        hit = self._cache.get(text)
        if hit is None:
            result = self._client.request("embed_text", {"text": text})
            vec = np.asarray(result["values"], dtype=np.float64)
            if vec.shape != (self._handshake.dim,):
                raise ProtocolError(f"peer returned embedding of shape {vec.shape}")
            hit = (vec, int(result["token_count"]))
            self._cache[text] = hit
        return hit

    def embed_text(self, text: str) -> np.ndarray:
        return self._fetch(text)[0].copy()

    def token_count(self, text: str) -> int:
        return self._fetch(text)[1]


class BridgeBackbone(DenoisingBackbone):
    """Remote denoising backend.

    Initial noise stays client-side (it is pure seeded scheduling);
    denoising steps and frame probes go over the wire.
    """

    def __init__(self, client: WireClient, config: EngineConfig, seed: int, handshake: Handshake):
        self._client = client
        self._config = config
        self._seed = seed
        self._handshake = handshake

    @property
    def frame_shape(self) -> tuple[int, int, int]:
        return self._config.backbone.frame_shape

    @property
    def frame_count(self) -> int:
        return self._config.backbone.frames

    @property
    def steps(self) -> int:
        return self._config.backbone.steps

    def init_segment(self, segment_index: int) -> SegmentLatents:
        return init_noise(
            self.frame_shape,
            self._config.backbone.frames,
            segment_seed(self._seed, segment_index),
            segment_index,
        )

    def denoise(
        self, latents: SegmentLatents, embedding: np.ndarray, mask_tokens: int, step: int
    ) -> SegmentLatents:
        result = self._client.request(
            "denoise_step",
            {
                "segment_index": latents.segment_index,
                "step": step,
                "latents": encode_f32(latents.values),
                "shape": list(latents.values.shape),
                "embedding": [float(x) for x in np.asarray(embedding, dtype=np.float64)],
                "mask_tokens": int(mask_tokens),
            },
        )
        values = decode_f32(result["latents"], latents.values.shape)
        return SegmentLatents(values=values, segment_index=latents.segment_index)

    def probe(self, frame: np.ndarray) -> np.ndarray:
        result = self._client.request(
            "embed_frame",
            {"frame": encode_f32(frame), "shape": list(frame.shape)},
        )
        vec = np.asarray(result["values"], dtype=np.float64)
        if vec.shape != (self._handshake.dim,):
            raise ProtocolError(f"peer returned probe of shape {vec.shape}")
        return vec


def open_bridge(
    endpoint: str, config: EngineConfig, seed: int
) -> tuple[WireClient, BridgeProvider, BridgeBackbone, Handshake]:
    client = WireClient(endpoint)
    shake = hello(client, config, seed)
    return client, BridgeProvider(client, shake), BridgeBackbone(client, config, seed, shake), shake
