"""Bridge command line: ``storyloom-bridge serve --mock --seed N --listen <addr|stdio>``."""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .errors import BridgeAssetsError
from .server import MockBackend, RealBackend, serve_stdio, serve_tcp


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="storyloom-bridge")
    sub = parser.add_subparsers(dest="command", required=True)
    p_serve = sub.add_parser("serve", help="answer wire requests")
    p_serve.add_argument("--mock", action="store_true", help="deterministic mock backend")
    p_serve.add_argument("--seed", type=int, default=0, help="mock encoder seed")
    p_serve.add_argument(
        "--listen", default="stdio", help="'stdio' or host:port (port 0 picks a free one)"
    )
    p_serve.add_argument(
        "--assets", default=None, help="local model assets directory (real mode)"
    )
    p_serve.add_argument(
        "--die-after",
        type=int,
        default=None,
        help="testing aid: crash after this many responses",
    )
    return parser


def cmd_serve(args: argparse.Namespace) -> int:
    if args.mock:
        def backend_factory():
            return MockBackend(seed=args.seed)
    else:
        try:
            RealBackend(args.assets)  # fail fast before accepting connections
        except BridgeAssetsError as exc:
            print(f"cannot start real backend: {exc}", file=sys.stderr)
            return 1

        def backend_factory():
            return RealBackend(args.assets)

    if args.listen == "stdio":
        serve_stdio(backend_factory, die_after=args.die_after)
        return 0
    host, sep, port = args.listen.rpartition(":")
    if not sep or not port.isdigit():
        print(f"--listen must be 'stdio' or host:port, got {args.listen!r}", file=sys.stderr)
        return 1
    serve_tcp(backend_factory, host or "127.0.0.1", int(port), die_after=args.die_after)
    return 0


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        level=os.environ.get("NB_LOG", "WARNING").upper(), stream=sys.stderr
    )
    args = _build_parser().parse_args(argv)
    if args.command == "serve":
        return cmd_serve(args)
    raise AssertionError(f"unhandled command {args.command}")


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
