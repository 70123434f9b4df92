"""Command-line surface.

Commands: ``validate`` checks a script document, ``generate`` runs one
story into a run directory, ``sweep`` runs a parameter grid and writes a
summary table. Exit codes are a stable contract: 0 success, 1 validation
or configuration problem, 2 I/O problem, 3 runtime failure mid-run.
All randomness flows from ``--seed``; artifacts carry no wall-clock state.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

from . import __version__
from .artifacts import RunDirWriter
from .config import engine_config_from_dict, load_config_file
from .errors import (
    ConfigError,
    EngineError,
    GenerationError,
    ScriptParseError,
    ScriptValidationError,
    TransportError,
)
from .orchestrator import EngineConfig, StoryRun, generate_story
from .script import SEVERITY_ERROR, parse_script, validate_script
from .wire import open_bridge

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2
EXIT_RUNTIME = 3

log = logging.getLogger("storyloom")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="storyloom", description=__doc__)
    parser.add_argument("--version", action="version", version=f"storyloom {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_validate = sub.add_parser("validate", help="check a script document")
    p_validate.add_argument("--script", required=True, help="path to the script JSON")

    p_generate = sub.add_parser("generate", help="generate a story run directory")
    _add_run_flags(p_generate)
    p_generate.add_argument("--out", required=True, help="run directory to write")

    p_sweep = sub.add_parser("sweep", help="run a parameter grid")
    _add_run_flags(p_sweep)
    p_sweep.add_argument("--out", required=True, help="sweep directory to write")
    p_sweep.add_argument("--gammas", default=None, help="comma list of blend gammas")
    p_sweep.add_argument("--taus", default=None, help="comma list of softmax temperatures")
    p_sweep.add_argument("--decay-bases", default=None, help="comma list of decay bases")
    p_sweep.add_argument("--sar-modes", default=None, help="comma list of sar modes")
    p_sweep.add_argument(
        "--arms",
        default=None,
        help="comma list of ablation arms: full,no-dipw,no-twb,no-sar,bare",
    )
    p_sweep.add_argument("--workers", type=int, default=1, help="parallel grid workers")
    return parser


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--script", required=True, help="path to the script JSON")
    p.add_argument("--config", default=None, help="path to a run-config JSON")
    p.add_argument("--seed", type=int, default=0, help="run seed (sole randomness source)")
    p.add_argument("--no-dipw", action="store_true", help="pin prompt weights to 0.5/0.5")
    p.add_argument("--no-twb", action="store_true", help="disable boundary blending")
    p.add_argument("--no-sar", action="store_true", help="disable action-similarity modulation")
    p.add_argument("--backbone", choices=("toy", "bridge"), default="toy")
    p.add_argument("--bridge-endpoint", default=None, help="host:port, unix:<path> or stdio:<cmd>")


def _load_script(path: str):
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        print(f"cannot read script: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_IO)
    try:
        return parse_script(raw)
    except ScriptParseError as exc:
        print(f"segment=0 msg={exc}", file=sys.stderr)
        raise SystemExit(EXIT_VALIDATION)
    except ScriptValidationError as exc:
        print(f"segment={exc.segment_index} msg={exc}", file=sys.stderr)
        raise SystemExit(EXIT_VALIDATION)


def _load_config(args: argparse.Namespace) -> EngineConfig:
    if args.config is not None:
        try:
            config = load_config_file(args.config)
        except OSError as exc:
            print(f"cannot read config: {exc}", file=sys.stderr)
            raise SystemExit(EXIT_IO)
        except ConfigError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            raise SystemExit(EXIT_VALIDATION)
    else:
        config = engine_config_from_dict({})
    return _apply_flags(config, args)


def _apply_flags(config: EngineConfig, args: argparse.Namespace) -> EngineConfig:
    if args.no_dipw:
        config = replace(config, dipw_enabled=False)
    if args.no_twb:
        config = replace(config, twb_enabled=False)
    if args.no_sar:
        config = replace(config, action=replace(config.action, enabled=False))
    return config


def cmd_validate(args: argparse.Namespace) -> int:
    script = _load_script(args.script)
    diagnostics = validate_script(script)
    errors = 0
    for d in diagnostics:
        if d.severity == SEVERITY_ERROR:
            errors += 1
            print(f"segment={d.segment} msg={d.message}", file=sys.stderr)
        else:
            print(f"segment={d.segment} msg={d.message} severity={d.severity}", file=sys.stderr)
    return EXIT_VALIDATION if errors else EXIT_OK


def _open_backend(args: argparse.Namespace, config: EngineConfig):
    """Returns (provider, backbone, client) — all None for the toy backend."""
    if args.backbone == "toy":
        return None, None, None
    if not args.bridge_endpoint:
        print("config error: --backbone bridge needs --bridge-endpoint", file=sys.stderr)
        raise SystemExit(EXIT_VALIDATION)
    try:
        client, provider, backbone, shake = open_bridge(args.bridge_endpoint, config, args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_VALIDATION)
    except (TransportError, OSError) as exc:
        print(f"bridge error: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_RUNTIME)
    log.info("bridge connected: model_id=%s deterministic=%s", shake.model_id, shake.deterministic)
    return provider, backbone, client


def _run_story(
    script, config: EngineConfig, seed: int, out_dir: Path, provider, backbone
) -> StoryRun:
    writer = RunDirWriter(out_dir, script, config, seed)
    segment_count = 0

    def on_segment(latents, records, plan) -> None:
        nonlocal segment_count
        segment_count += 1
        writer.on_segment(latents, records, plan)

    try:
        run = generate_story(
            script, config, seed, provider=provider, backbone=backbone, on_segment=on_segment
        )
    except GenerationError as exc:
        writer.flush_failure(exc.segment_index)
        print(f"generation failed: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_RUNTIME)
    writer.finalize(run)
    return run


def _print_summary(run: StoryRun) -> None:
    steps = run.config.backbone.steps
    for pos, records in enumerate(run.schedules, start=1):
        alpha_final = records[-1].alpha_action
        if pos >= 2:
            disc = f"{run.metrics.boundary_discontinuity[pos - 2]:.6f}"
        else:
            disc = "na"
        print(f"segment={pos} steps={steps} alpha_final={alpha_final:.6f} boundary_disc={disc}")


def cmd_generate(args: argparse.Namespace) -> int:
    script = _load_script(args.script)
    config = _load_config(args)
    provider, backbone, client = _open_backend(args, config)
    try:
        out_dir = Path(args.out)
        try:
            run = _run_story(script, config, args.seed, out_dir, provider, backbone)
        except OSError as exc:
            print(f"cannot write run directory: {exc}", file=sys.stderr)
            return EXIT_IO
        _print_summary(run)
    finally:
        if client is not None:
            client.close()
    return EXIT_OK


_ARM_FLAGS = {
    "full": (True, True, True),
    "no-dipw": (False, True, True),
    "no-twb": (True, False, True),
    "no-sar": (True, True, False),
    "bare": (False, False, False),
}


def _parse_list(raw: str | None, cast, fallback: list) -> list:
    if raw is None:
        return fallback
    try:
        return [cast(item) for item in raw.split(",") if item != ""]
    except ValueError as exc:
        raise ConfigError(f"bad grid value: {exc}")


def _sweep_grid(args: argparse.Namespace, base: EngineConfig):
    gammas = _parse_list(args.gammas, float, [base.blending.gamma])
    taus = _parse_list(args.taus, float, [base.weighting.tau])
    bases = _parse_list(args.decay_bases, float, [base.blending.decay_base])
    modes = _parse_list(args.sar_modes, str, [base.action.mode])
    arms = _parse_list(args.arms, str, ["full"])
    for arm in arms:
        if arm not in _ARM_FLAGS:
            raise ConfigError(f"unknown ablation arm {arm!r}")
    points = []
    for gamma in gammas:
        for tau in taus:
            for decay_base in bases:
                for mode in modes:
                    for arm in arms:
                        dipw_on, twb_on, sar_on = _ARM_FLAGS[arm]
                        config = replace(
                            base,
                            weighting=replace(base.weighting, tau=tau),
                            blending=replace(base.blending, gamma=gamma, decay_base=decay_base),
                            action=replace(base.action, mode=mode, enabled=sar_on),
                            dipw_enabled=dipw_on,
                            twb_enabled=twb_on,
                        )
                        points.append(
                            {
                                "gamma": gamma,
                                "tau": tau,
                                "decay_base": decay_base,
                                "sar_mode": mode,
                                "arm": arm,
                                "config": config,
                            }
                        )
    return points


def _mean(values) -> float:
    values = list(values)
    return sum(values) / len(values) if values else 0.0


def _sweep_point(index: int, point: dict, script, seed: int, out_root: Path) -> dict:
    out_dir = out_root / f"point_{index:03d}"
    run = _run_story(script, point["config"], seed, out_dir, None, None)
    alpha_dev = _mean(
        abs(r.alpha_action - 0.5) for records in run.schedules for r in records
    )
    return {
        "point": f"point_{index:03d}",
        "gamma": point["gamma"],
        "tau": point["tau"],
        "decay_base": point["decay_base"],
        "sar_mode": point["sar_mode"],
        "arm": point["arm"],
        "mean_boundary_discontinuity": _mean(run.metrics.boundary_discontinuity),
        "mean_intra_segment_smoothness": _mean(run.metrics.intra_segment_smoothness),
        "mean_abs_alpha_dev": alpha_dev,
    }


def cmd_sweep(args: argparse.Namespace) -> int:
    script = _load_script(args.script)
    base = _load_config(args)
    if args.backbone != "toy":
        print("config error: sweep supports only the toy backbone", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        points = _sweep_grid(args, base)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    out_root = Path(args.out)
    try:
        out_root.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"cannot create sweep directory: {exc}", file=sys.stderr)
        return EXIT_IO

    workers = max(1, args.workers)
    if workers == 1:
        rows = [_sweep_point(i, p, script, args.seed, out_root) for i, p in enumerate(points)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(_sweep_point, i, p, script, args.seed, out_root)
                for i, p in enumerate(points)
            ]
            rows = [f.result() for f in futures]

    header = (
        "point,gamma,tau,decay_base,sar_mode,arm,"
        "mean_boundary_discontinuity,mean_intra_segment_smoothness,mean_abs_alpha_dev"
    )
    lines = [header]
    for row in rows:
        lines.append(
            ",".join(
                [
                    row["point"],
                    repr(row["gamma"]),
                    repr(row["tau"]),
                    repr(row["decay_base"]),
                    row["sar_mode"],
                    row["arm"],
                    repr(row["mean_boundary_discontinuity"]),
                    repr(row["mean_intra_segment_smoothness"]),
                    repr(row["mean_abs_alpha_dev"]),
                ]
            )
        )
    (out_root / "sweep_summary.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"sweep complete: {len(rows)} points")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("NB_LOG", "WARNING").upper())
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        if args.command == "validate":
            return cmd_validate(args)
        if args.command == "generate":
            return cmd_generate(args)
        if args.command == "sweep":
            return cmd_sweep(args)
        raise AssertionError(f"unhandled command {args.command}")
    except SystemExit as exc:
        return int(exc.code or 0)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (TransportError, GenerationError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except EngineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
