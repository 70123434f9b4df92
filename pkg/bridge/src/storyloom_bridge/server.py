"""Protocol engine and serve loops.

One JSON message per line, lockstep per connection. ``hello`` must arrive
first: it fixes the embedding dimension, latent geometry and backbone
parameters for the session. Unknown methods and malformed frames get an
error response and the connection stays open; ``shutdown`` answers then
closes.
"""

from __future__ import annotations

import json
import logging
import socket
import sys
import threading
from pathlib import Path

import numpy as np

from storyloom import __version__ as engine_version
from storyloom.backbone import BackboneConfig, SegmentLatents, ToyBackbone
from storyloom.embedding import HashTextEncoder
from storyloom.errors import ArgumentError
from storyloom.wire import (
    ERR_BAD_PARAMS,
    ERR_INTERNAL,
    ERR_PROTOCOL,
    ERR_UNKNOWN_METHOD,
    METHODS,
    decode_f32,
    dump_message,
    encode_f32,
)

from . import __version__
from .errors import BridgeAssetsError
from .metrics import MockScorer, RealScorer, compute_metric_report

log = logging.getLogger("storyloom_bridge")


class MockBackend:
    """Serves the engine's own deterministic constructions.

    ``seed`` keys the text encoder (model identity); the run seed arriving
    in ``hello`` keys the backbone noise streams, mirroring an in-process
    run with the same flag.
    """

    deterministic = True

    def __init__(self, seed: int) -> None:
        self.seed = seed
        self.provider: HashTextEncoder | None = None
        self.backbone: ToyBackbone | None = None

    def model_id(self) -> str:
        dim = self.provider.dimension if self.provider else 0
        return f"mock-hash-{dim}/seed-{self.seed}"

    def hello(self, params: dict) -> dict:
        embed_dim = int(params["embed_dim"])
        shape = tuple(int(x) for x in params["latent_shape"])
        if len(shape) != 3:
            raise ArgumentError(f"latent_shape must have 3 entries, got {params['latent_shape']}")
        backbone = params.get("backbone", {})
        config = BackboneConfig(
            steps=int(backbone.get("steps", 64)),
            guidance_scale=float(backbone.get("guidance_scale", 4.5)),
            contraction_rate=float(backbone.get("contraction_rate", 0.15)),
            noise_schedule=(
                tuple(float(s) for s in backbone["noise_schedule"])
                if backbone.get("noise_schedule") is not None
                else None
            ),
            channels=shape[0],
            height=shape[1],
            width=shape[2],
            frames=int(params.get("frames", 8)),
        )
        self.provider = HashTextEncoder(seed=self.seed, dimension=embed_dim)
        self.backbone = ToyBackbone(config, seed=int(params.get("seed", 0)), embed_dim=embed_dim)
        return {
            "dim": embed_dim,
            "latent_shape": list(shape),
            "frames": config.frames,
            "deterministic": True,
            "model_id": self.model_id(),
            "server": f"storyloom-bridge/{__version__} engine/{engine_version}",
        }

    def embed_text(self, params: dict) -> dict:
        text = str(params["text"])
        values = self.provider.embed_text(text)
        return {
            "values": [float(x) for x in values],
            "token_count": self.provider.token_count(text),
        }

    def embed_frame(self, params: dict) -> dict:
        frame = decode_f32(params["frame"], tuple(params["shape"]))
        return {"values": [float(x) for x in self.backbone.probe(frame)]}

    def denoise_step(self, params: dict) -> dict:
        latents = SegmentLatents(
            values=decode_f32(params["latents"], tuple(params["shape"])),
            segment_index=int(params["segment_index"]),
        )
        embedding = np.asarray(params["embedding"], dtype=np.float64)
        out = self.backbone.denoise(
            latents, embedding, int(params["mask_tokens"]), int(params["step"])
        )
        return {"latents": encode_f32(out.values)}

    def metrics(self, params: dict) -> dict:
        run_dir = str(params["run_dir"])
        doc = json.loads((Path(run_dir) / "run.json").read_text("utf-8"))
        dim = int(doc["config"]["embedding"]["dimension"])
        report = compute_metric_report(run_dir, MockScorer(seed=self.seed, dim=dim))
        return report.to_dict()


class RealBackend:
    """Real text-encoder backend; needs explicitly configured assets.

    Text embeddings come from the local CLIP checkpoint. There is no
    generation model behind ``denoise_step`` unless one is added, so it
    answers with an error rather than pretending.
    """

    deterministic = False

    def __init__(self, assets_dir: str | None) -> None:
        self.scorer = RealScorer(assets_dir)  # raises BridgeAssetsError when absent
        self.dim: int | None = None
        self.shape: tuple[int, ...] | None = None
        self.frames = 8

    def model_id(self) -> str:
        return self.scorer.model_id

    def hello(self, params: dict) -> dict:
        probe = self.scorer.embed_text("hello")
        self.dim = int(probe.shape[0])
        self.shape = tuple(int(x) for x in params["latent_shape"])
        self.frames = int(params.get("frames", 8))
        return {
            "dim": self.dim,
            "latent_shape": list(self.shape),
            "frames": self.frames,
            "deterministic": False,
            "model_id": self.model_id(),
            "server": f"storyloom-bridge/{__version__} engine/{engine_version}",
        }

    def embed_text(self, params: dict) -> dict:
        text = str(params["text"])
        values = self.scorer.embed_text(text)
        return {"values": [float(x) for x in values], "token_count": len(text.split())}

    def embed_frame(self, params: dict) -> dict:
        from .metrics import decode_frame

        frame = decode_f32(params["frame"], tuple(params["shape"]))
        values = self.scorer.embed_image_semantic(decode_frame(frame))
        return {"values": [float(x) for x in values]}

    def denoise_step(self, params: dict) -> dict:
        raise ArgumentError("denoise_step is unavailable: no generation model is configured")

    def metrics(self, params: dict) -> dict:
        return compute_metric_report(str(params["run_dir"]), self.scorer).to_dict()


class ProtocolEngine:
    """Turns one request line into one response line."""

    def __init__(self, backend) -> None:
        self.backend = backend
        self.negotiated = False
        self.closing = False

    def _error(self, req_id, code: str, message: str) -> dict:
        return {"id": req_id, "error": {"code": code, "message": message}}

    def handle_line(self, line: bytes) -> dict:
        try:
            msg = json.loads(line)
            if not isinstance(msg, dict):
                raise ValueError("message must be an object")
        except ValueError as exc:
            return self._error(None, ERR_BAD_PARAMS, f"malformed frame: {exc}")
        req_id = msg.get("id")
        method = msg.get("method")
        params = msg.get("params", {})
        if not isinstance(req_id, int):
            return self._error(None, ERR_BAD_PARAMS, "request id must be an integer")
        if method not in METHODS:
            return self._error(req_id, ERR_UNKNOWN_METHOD, f"unknown method {method!r}")
        if not isinstance(params, dict):
            return self._error(req_id, ERR_BAD_PARAMS, "params must be an object")
        if method == "shutdown":
            self.closing = True
            return {"id": req_id, "result": {"ok": True}}
        if method != "hello" and not self.negotiated:
            return self._error(req_id, ERR_PROTOCOL, "hello must precede other calls")
        try:
            result = getattr(self.backend, method)(params)
            if method == "hello":
                self.negotiated = True
            return {"id": req_id, "result": result}
        except (ArgumentError, KeyError, TypeError, ValueError) as exc:
            return self._error(req_id, ERR_BAD_PARAMS, f"{exc}")
        except FileNotFoundError as exc:
            return self._error(req_id, ERR_BAD_PARAMS, f"{exc}")
        except BridgeAssetsError as exc:
            return self._error(req_id, ERR_INTERNAL, f"{exc}")
        except Exception as exc:  # pragma: no cover - defensive
            log.exception("internal error handling %s", method)
            return self._error(req_id, ERR_INTERNAL, f"{type(exc).__name__}: {exc}")


class _DieCounter:
    """Test aid: hard-exit after N responses to simulate a crash."""

    def __init__(self, limit: int | None) -> None:
        self.limit = limit
        self.count = 0

    def tick(self) -> None:
        if self.limit is None:
            return
        self.count += 1
        if self.count >= self.limit:
            log.warning("die-after limit %d reached, crashing", self.limit)
            import os

            os._exit(1)


def serve_stream(backend_factory, reader, writer, die: _DieCounter) -> None:
    engine = ProtocolEngine(backend_factory())
    while True:
        line = reader.readline()
        if not line:
            return
        if not line.strip():
            continue
        response = engine.handle_line(line)
        writer.write(dump_message(response))
        writer.flush()
        die.tick()
        if engine.closing:
            return


def serve_stdio(backend_factory, die_after: int | None = None) -> None:
    serve_stream(
        backend_factory, sys.stdin.buffer, sys.stdout.buffer, _DieCounter(die_after)
    )


def serve_tcp(backend_factory, host: str, port: int, die_after: int | None = None,
              ready_callback=None) -> None:
    die = _DieCounter(die_after)
    sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    sock.bind((host, port))
    sock.listen(8)
    bound = sock.getsockname()
    log.info("listening on %s:%d", bound[0], bound[1])
    print(f"listening {bound[0]}:{bound[1]}", file=sys.stderr, flush=True)
    if ready_callback is not None:
        ready_callback(bound[0], bound[1])

    def _one(conn: socket.socket) -> None:
        with conn, conn.makefile("rwb", buffering=0) as stream:
            serve_stream(backend_factory, stream, stream, die)

    try:
        while True:
            conn, _ = sock.accept()
            threading.Thread(target=_one, args=(conn,), daemon=True).start()
    finally:
        sock.close()
