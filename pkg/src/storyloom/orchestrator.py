"""Full-story generation: per-segment weighted denoising plus boundary handling.

Segments are generated strictly in order because each boundary consumes
the previous segment's finished latents. Within a run, all randomness
derives from the single run seed.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .action_similarity import (
    MODE_CROSS_SEGMENT,
    ActionBlendRecord,
    ActionSimilarityConfig,
    modulate_blend,
)
from .backbone import BackboneConfig, DenoisingBackbone, SegmentLatents, ToyBackbone
from .blending import BlendConfig, blended_init, boundary_update, decay_weights
from .embedding import HashTextEncoder, TextEmbeddingProvider, similarity01
from .errors import ArgumentError, ConfigError, GenerationError
from .script import PromptPair, StoryScript, validate_script
from .weighting import (
    DOMINANT_SCENE,
    PromptWeightConfig,
    StepWeightRecord,
    WeightState,
    initial_state,
    weight_step,
)

PROBE_FIRST = "first"
PROBE_MEAN = "mean"


@dataclass(frozen=True)
class EngineConfig:
    """Bundle of all per-run configuration."""

    weighting: PromptWeightConfig = field(default_factory=PromptWeightConfig)
    blending: BlendConfig = field(default_factory=BlendConfig)
    action: ActionSimilarityConfig = field(default_factory=ActionSimilarityConfig)
    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    embed_dim: int = 64
    probe_mode: str = PROBE_FIRST
    carry_weight_state: bool = False
    dipw_enabled: bool = True
    twb_enabled: bool = True

    def __post_init__(self) -> None:
        if self.probe_mode not in (PROBE_FIRST, PROBE_MEAN):
            raise ConfigError(f"run.probe must be 'first' or 'mean', got {self.probe_mode!r}")
        if self.embed_dim < 2:
            raise ConfigError(f"embedding.dimension must be >= 2, got {self.embed_dim}")
        if self.weighting.total_steps != self.backbone.steps:
            raise ConfigError(
                f"step horizon mismatch: weighting {self.weighting.total_steps} "
                f"vs backbone {self.backbone.steps}"
            )

    def with_steps(self, steps: int) -> "EngineConfig":
        return replace(
            self,
            weighting=replace(self.weighting, total_steps=steps),
            backbone=replace(self.backbone, steps=steps, noise_schedule=None),
        )


@dataclass(frozen=True)
class BlendPlan:
    """Record of one boundary decision (segment >= 2 only)."""

    segment: int
    frame_count: int
    decay_base: float
    weights_normalized: tuple[float, ...]
    gamma_effective: float
    sar: ActionBlendRecord | None


@dataclass(frozen=True)
class AlignmentEntry:
    segment: int
    scene: float
    action: float


@dataclass(frozen=True)
class RunMetrics:
    boundary_discontinuity: tuple[float, ...]
    intra_segment_smoothness: tuple[float, ...]
    alignment_trace: tuple[AlignmentEntry, ...]


@dataclass
class SegmentResult:
    latents: SegmentLatents
    records: list[StepWeightRecord]
    plan: BlendPlan | None
    final_state: WeightState
    scene_embedding: np.ndarray
    action_embedding: np.ndarray


@dataclass
class StoryRun:
    script: StoryScript
    config: EngineConfig
    seed: int
    segments: list[SegmentLatents]
    schedules: list[list[StepWeightRecord]]
    blend_plans: list[BlendPlan]
    metrics: RunMetrics


def _rms_gap(a: np.ndarray, b: np.ndarray) -> float:
    diff = a.astype(np.float64) - b.astype(np.float64)
    return float(np.sqrt(np.mean(diff * diff)))


def compute_metrics(
    segments: list[SegmentLatents],
    scene_embeddings: list[np.ndarray],
    action_embeddings: list[np.ndarray],
    backbone: DenoisingBackbone,
) -> RunMetrics:
    """Boundary gaps, intra-segment smoothness and final prompt alignment.

    Gap values are root-mean-square differences over latent components, so
    they are comparable across latent shapes.
    """
    boundary = tuple(
        _rms_gap(prev.values[-1], curr.values[0])
        for prev, curr in zip(segments, segments[1:])
    )
    intra = tuple(
        float(
            np.mean(
                [_rms_gap(seg.values[i], seg.values[i + 1]) for i in range(seg.frame_count - 1)]
            )
        )
        if seg.frame_count > 1
        else 0.0
        for seg in segments
    )
    alignment = tuple(
        AlignmentEntry(
            segment=seg.segment_index,
            scene=similarity01(backbone.probe(seg.values[-1]), scene_embeddings[k]),
            action=similarity01(backbone.probe(seg.values[-1]), action_embeddings[k]),
        )
        for k, seg in enumerate(segments)
    )
    return RunMetrics(
        boundary_discontinuity=boundary,
        intra_segment_smoothness=intra,
        alignment_trace=alignment,
    )


def _probe_input(latents: SegmentLatents, mode: str) -> np.ndarray:
    if mode == PROBE_MEAN:
        return latents.values.mean(axis=0)
    return latents.values[0]


def generate_segment(
    pair: PromptPair,
    prev_latents: SegmentLatents | None,
    prev_action_embedding: np.ndarray | None,
    provider: TextEmbeddingProvider,
    backbone: DenoisingBackbone,
    config: EngineConfig,
    carried_state: WeightState | None = None,
) -> SegmentResult:
    """Generate one segment.

    Order of operations: init noise; for segments past the first, fold the
    previous segment's decayed history into frame 0 (modulated by action
    similarity when enabled); then run the full step schedule, weighting
    the prompts and denoising each step.
    """
    if (prev_latents is None) != (pair.index == 1):
        raise ArgumentError("previous latents must be given exactly for segments > 1")

    scene_embedding = provider.embed_text(pair.scene_text)
    action_embedding = provider.embed_text(pair.action_text)
    masks = {
        "scene": provider.token_count(pair.scene_text),
        "action": provider.token_count(pair.action_text),
    }

    latents = backbone.init_segment(pair.index)
    plan: BlendPlan | None = None
    blend_anchors: tuple[np.ndarray, np.ndarray, float] | None = None

    if prev_latents is not None and config.twb_enabled:
        if prev_latents.frame_shape != latents.frame_shape:
            raise ConfigError(
                f"segment {pair.index} frame shape {latents.frame_shape} != "
                f"previous {prev_latents.frame_shape}"
            )
        weights = decay_weights(prev_latents.frame_count, config.blending.decay_base)
        z_tilde = blended_init(prev_latents.values, weights)
        gamma_effective = config.blending.gamma
        sar_record: ActionBlendRecord | None = None
        if config.action.enabled:
            if config.action.mode == MODE_CROSS_SEGMENT:
                if prev_action_embedding is None:
                    raise ArgumentError(
                        "cross-segment comparison needs the previous action embedding"
                    )
                sar_record = modulate_blend(
                    gamma_effective, prev_action_embedding, action_embedding,
                    config.action, (f"action[{pair.index - 1}]", f"action[{pair.index}]"),
                )
            else:
                sar_record = modulate_blend(
                    gamma_effective, scene_embedding, action_embedding,
                    config.action, (f"scene[{pair.index}]", f"action[{pair.index}]"),
                )
            gamma_effective = sar_record.alpha_out
        # gamma 0 is the identity update; skipping it keeps the first
        # frame bit-identical to its raw initialization.
        if gamma_effective != 0.0:
            latents.values = latents.values.copy()
            latents.values[0] = boundary_update(
                latents.values[0], prev_latents.values[-1], z_tilde, gamma_effective
            )
            if config.blending.reapply_per_step:
                blend_anchors = (prev_latents.values[-1], z_tilde, gamma_effective)
        plan = BlendPlan(
            segment=pair.index,
            frame_count=weights.frame_count,
            decay_base=config.blending.decay_base,
            weights_normalized=tuple(float(w) for w in weights.normalized),
            gamma_effective=gamma_effective,
            sar=sar_record,
        )

    state = carried_state if carried_state is not None else initial_state(
        scene_embedding, action_embedding
    )
    override = None if config.dipw_enabled else (0.5, 0.5)
    records: list[StepWeightRecord] = []
    for step in range(1, config.backbone.steps + 1):
        probe_embedding = backbone.probe(_probe_input(latents, config.probe_mode))
        record, combined, state = weight_step(
            state, probe_embedding, scene_embedding, action_embedding,
            step, config.weighting, override_alpha=override,
        )
        latents = backbone.denoise(latents, combined, masks[record.dominant], step)
        if blend_anchors is not None:
            prev_last, z_tilde, gamma_effective = blend_anchors
            latents.values = latents.values.copy()
            latents.values[0] = boundary_update(
                latents.values[0], prev_last, z_tilde, gamma_effective
            )
        records.append(record)
    return SegmentResult(
        latents=latents,
        records=records,
        plan=plan,
        final_state=state,
        scene_embedding=scene_embedding,
        action_embedding=action_embedding,
    )


def generate_story(
    script: StoryScript,
    config: EngineConfig,
    seed: int,
    provider: TextEmbeddingProvider | None = None,
    backbone: DenoisingBackbone | None = None,
    on_segment=None,
) -> StoryRun:
    """Generate every segment in order and collect all records.

    ``on_segment(latents, records, plan)`` is called as each segment
    completes, letting callers flush artifacts before a later segment can
    fail. Failures abort with the failing segment's index.
    """
    diagnostics = [d for d in validate_script(script) if d.severity == "error"]
    if diagnostics:
        first = diagnostics[0]
        raise GenerationError(first.segment, ArgumentError(first.message))
    if provider is None:
        provider = HashTextEncoder(seed=seed, dimension=config.embed_dim)
    if provider.dimension != config.embed_dim:
        raise ConfigError(
            f"provider dimension {provider.dimension} != configured {config.embed_dim}"
        )
    if backbone is None:
        backbone = ToyBackbone(config.backbone, seed=seed, embed_dim=config.embed_dim)

    segments: list[SegmentLatents] = []
    schedules: list[list[StepWeightRecord]] = []
    plans: list[BlendPlan] = []
    scene_embeddings: list[np.ndarray] = []
    action_embeddings: list[np.ndarray] = []
    prev_latents: SegmentLatents | None = None
    prev_action: np.ndarray | None = None
    carried: WeightState | None = None

    for pair in script.pairs:
        try:
            result = generate_segment(
                pair, prev_latents, prev_action, provider, backbone, config,
                carried_state=carried,
            )
        except GenerationError:
            raise
        except Exception as exc:
            raise GenerationError(pair.index, exc) from exc
        segments.append(result.latents)
        schedules.append(result.records)
        if result.plan is not None:
            plans.append(result.plan)
        scene_embeddings.append(result.scene_embedding)
        action_embeddings.append(result.action_embedding)
        prev_latents = result.latents
        prev_action = result.action_embedding
        carried = result.final_state if config.carry_weight_state else None
        if on_segment is not None:
            on_segment(result.latents, result.records, result.plan)

    metrics = compute_metrics(segments, scene_embeddings, action_embeddings, backbone)
    return StoryRun(
        script=script,
        config=config,
        seed=seed,
        segments=segments,
        schedules=schedules,
        blend_plans=plans,
        metrics=metrics,
    )


def generate_many(
    jobs: list[tuple[StoryScript, int]],
    config: EngineConfig,
    max_workers: int = 4,
) -> list[StoryRun]:
    """Run independent stories concurrently; results follow job order."""
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        futures = [pool.submit(generate_story, script, config, seed) for script, seed in jobs]
        return [f.result() for f in futures]
