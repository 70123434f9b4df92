"""Run-config file loading.

One JSON document configures every module. Unknown keys are rejected with
the offending key named; values are range-checked by the config
dataclasses themselves. The run seed never lives in the file — it comes
from the caller so all randomness flows through one flag.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

from .action_similarity import ActionSimilarityConfig
from .backbone import BackboneConfig
from .blending import BlendConfig
from .errors import ConfigError
from .orchestrator import EngineConfig
from .weighting import PromptWeightConfig

_SCHEMA: dict[str, set[str]] = {
    "embedding": {"dimension"},
    "dipw": {"lambda1", "lambda2", "lambda3", "tau", "sim_mode"},
    "blend": {"gamma", "decay_base", "reapply_per_step"},
    "sar": {"mode", "clamp_max", "enabled"},
    "backbone": {
        "steps",
        "guidance_scale",
        "contraction_rate",
        "noise_schedule",
        "channels",
        "height",
        "width",
        "frames",
    },
    "run": {"probe", "carry_dipw_state", "dipw_enabled", "twb_enabled"},
}


def _check_keys(doc: dict[str, Any]) -> None:
    for section, body in doc.items():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config key {section!r}")
        if not isinstance(body, dict):
            raise ConfigError(f"config section {section!r} must be an object")
        for key in body:
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown config key {section}.{key}")


def engine_config_from_dict(doc: dict[str, Any]) -> EngineConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a JSON object")
    _check_keys(doc)
    embedding = doc.get("embedding", {})
    dipw = doc.get("dipw", {})
    blend = doc.get("blend", {})
    sar = doc.get("sar", {})
    backbone = doc.get("backbone", {})
    run = doc.get("run", {})

    backbone_cfg = BackboneConfig(
        steps=backbone.get("steps", 64),
        guidance_scale=backbone.get("guidance_scale", 4.5),
        contraction_rate=backbone.get("contraction_rate", 0.15),
        noise_schedule=(
            tuple(backbone["noise_schedule"])
            if backbone.get("noise_schedule") is not None
            else None
        ),
        channels=backbone.get("channels", 4),
        height=backbone.get("height", 8),
        width=backbone.get("width", 8),
        frames=backbone.get("frames", 8),
    )
    weighting_cfg = PromptWeightConfig(
        lambda1=dipw.get("lambda1", 1.0),
        lambda2=dipw.get("lambda2", 1.0),
        lambda3=dipw.get("lambda3", 1.0),
        tau=dipw.get("tau", 0.5),
        total_steps=backbone_cfg.steps,
        sim_mode=dipw.get("sim_mode", "sim01"),
    )
    blend_cfg = BlendConfig(
        gamma=blend.get("gamma", 0.25),
        decay_base=blend.get("decay_base", 0.9),
        reapply_per_step=blend.get("reapply_per_step", False),
    )
    action_cfg = ActionSimilarityConfig(
        mode=sar.get("mode", "within_pair"),
        clamp_max=sar.get("clamp_max", 0.5),
        enabled=sar.get("enabled", True),
    )
    return EngineConfig(
        weighting=weighting_cfg,
        blending=blend_cfg,
        action=action_cfg,
        backbone=backbone_cfg,
        embed_dim=embedding.get("dimension", 64),
        probe_mode=run.get("probe", "first"),
        carry_weight_state=run.get("carry_dipw_state", False),
        dipw_enabled=run.get("dipw_enabled", True),
        twb_enabled=run.get("twb_enabled", True),
    )


def load_config_file(path: str | Path) -> EngineConfig:
    text = Path(path).read_text("utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc.msg} (line {exc.lineno})") from exc
    return engine_config_from_dict(doc)
