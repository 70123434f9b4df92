"""Run-directory artifact formats.

Layout: run.json (effective config, seed, script and its hash),
weights.csv (one row per weighting step), blend_plans.json (one entry per
boundary), metrics.json, and segment_<k>.f32le latent dumps with JSON
sidecars. Everything is a pure function of the run, so repeated runs with
the same inputs produce byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .backbone import SegmentLatents, segment_seed
from .orchestrator import BlendPlan, EngineConfig, RunMetrics, StoryRun
from .script import StoryScript, script_to_dict
from .weighting import StepWeightRecord

WEIGHTS_CSV_HEADER = (
    "segment,step,sim_scene,sim_action,prev_sim_scene,prev_sim_action,"
    "prior_scene,prior_action,s_scene,s_action,alpha_scene,alpha_action,dominant"
)


def _fmt(x: float) -> str:
    return repr(float(x))


def weights_csv(schedules: list[list[StepWeightRecord]]) -> str:
    lines = [WEIGHTS_CSV_HEADER]
    for segment_pos, records in enumerate(schedules, start=1):
        for r in records:
            lines.append(
                ",".join(
                    [
                        str(segment_pos),
                        str(r.step),
                        _fmt(r.sim_scene),
                        _fmt(r.sim_action),
                        _fmt(r.prev_sim_scene),
                        _fmt(r.prev_sim_action),
                        _fmt(r.prior_scene),
                        _fmt(r.prior_action),
                        _fmt(r.s_scene),
                        _fmt(r.s_action),
                        _fmt(r.alpha_scene),
                        _fmt(r.alpha_action),
                        r.dominant,
                    ]
                )
            )
    return "\n".join(lines) + "\n"


def blend_plan_dict(plan: BlendPlan) -> dict:
    out = {
        "segment": plan.segment,
        "F": plan.frame_count,
        "decay_base": plan.decay_base,
        "weights_normalized": list(plan.weights_normalized),
        "gamma_effective": plan.gamma_effective,
        "S_A": None,
        "alpha_in": None,
        "alpha_out": None,
        "mode": None,
    }
    if plan.sar is not None:
        out.update(
            {
                "S_A": plan.sar.similarity,
                "alpha_in": plan.sar.alpha_in,
                "alpha_out": plan.sar.alpha_out,
                "mode": plan.sar.mode,
            }
        )
    return out


def blend_plans_json(plans: list[BlendPlan]) -> str:
    return json.dumps([blend_plan_dict(p) for p in plans], indent=2, sort_keys=True) + "\n"


def metrics_json(metrics: RunMetrics) -> str:
    doc = {
        "boundary_discontinuity": list(metrics.boundary_discontinuity),
        "intra_segment_smoothness": list(metrics.intra_segment_smoothness),
        "alignment_trace": [asdict(a) for a in metrics.alignment_trace],
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def script_sha256(script: StoryScript) -> str:
    canonical = json.dumps(script_to_dict(script), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def config_dict(config: EngineConfig) -> dict:
    return {
        "embedding": {"dimension": config.embed_dim},
        "dipw": {
            "lambda1": config.weighting.lambda1,
            "lambda2": config.weighting.lambda2,
            "lambda3": config.weighting.lambda3,
            "tau": config.weighting.tau,
            "sim_mode": config.weighting.sim_mode,
        },
        "blend": {
            "gamma": config.blending.gamma,
            "decay_base": config.blending.decay_base,
            "reapply_per_step": config.blending.reapply_per_step,
        },
        "sar": {
            "mode": config.action.mode,
            "clamp_max": config.action.clamp_max,
            "enabled": config.action.enabled,
        },
        "backbone": {
            "steps": config.backbone.steps,
            "guidance_scale": config.backbone.guidance_scale,
            "contraction_rate": config.backbone.contraction_rate,
            "noise_schedule": (
                list(config.backbone.noise_schedule)
                if config.backbone.noise_schedule is not None
                else None
            ),
            "channels": config.backbone.channels,
            "height": config.backbone.height,
            "width": config.backbone.width,
            "frames": config.backbone.frames,
        },
        "run": {
            "probe": config.probe_mode,
            "carry_dipw_state": config.carry_weight_state,
            "dipw_enabled": config.dipw_enabled,
            "twb_enabled": config.twb_enabled,
        },
    }


def run_json(
    script: StoryScript,
    config: EngineConfig,
    seed: int,
    status: str = "ok",
    failed_segment: int | None = None,
) -> str:
    doc = {
        "seed": seed,
        "script": script_to_dict(script),
        "script_sha256": script_sha256(script),
        "config": config_dict(config),
        "status": status,
    }
    if failed_segment is not None:
        doc["failed_segment"] = failed_segment
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def latents_bytes(latents: SegmentLatents) -> bytes:
    return np.ascontiguousarray(latents.values, dtype="<f4").tobytes()


def latents_sidecar(latents: SegmentLatents, run_seed: int) -> str:
    doc = {
        "segment": latents.segment_index,
        "F": latents.frame_count,
        "shape": list(latents.frame_shape),
        "seed": segment_seed(run_seed, latents.segment_index),
        "dtype": "f32le",
    }
    return json.dumps(doc, sort_keys=True) + "\n"


def load_latents(path: Path) -> SegmentLatents:
    sidecar = json.loads(path.with_suffix(".json").read_text("utf-8"))
    raw = np.frombuffer(path.read_bytes(), dtype="<f4")
    shape = (sidecar["F"], *sidecar["shape"])
    return SegmentLatents(values=raw.reshape(shape).copy(), segment_index=sidecar["segment"])


class RunDirWriter:
    """Streams artifacts to disk as segments complete.

    On a mid-run failure the per-segment files already written stay on
    disk and ``flush_failure`` records the partial schedule plus the
    failing segment's index.
    """

    def __init__(self, out_dir: Path, script: StoryScript, config: EngineConfig, seed: int):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.script = script
        self.config = config
        self.seed = seed
        self.schedules: list[list[StepWeightRecord]] = []
        self.plans: list[BlendPlan] = []

    def on_segment(self, latents: SegmentLatents, records, plan) -> None:
        stem = self.out_dir / f"segment_{latents.segment_index}"
        stem.with_suffix(".f32le").write_bytes(latents_bytes(latents))
        stem.with_suffix(".json").write_text(
            latents_sidecar(latents, self.seed), encoding="utf-8"
        )
        self.schedules.append(list(records))
        if plan is not None:
            self.plans.append(plan)

    def _write_tables(self) -> None:
        (self.out_dir / "weights.csv").write_text(weights_csv(self.schedules), encoding="utf-8")
        (self.out_dir / "blend_plans.json").write_text(
            blend_plans_json(self.plans), encoding="utf-8"
        )

    def finalize(self, run: StoryRun) -> None:
        self._write_tables()
        (self.out_dir / "metrics.json").write_text(metrics_json(run.metrics), encoding="utf-8")
        (self.out_dir / "run.json").write_text(
            run_json(self.script, self.config, self.seed), encoding="utf-8"
        )

    def flush_failure(self, failed_segment: int) -> None:
        self._write_tables()
        (self.out_dir / "run.json").write_text(
            run_json(self.script, self.config, self.seed, status="failed",
                     failed_segment=failed_segment),
            encoding="utf-8",
        )
