"""Per-step prompt weighting.

At every denoising step the scene and action prompts are scored on three
signals — alignment of the current frame with each prompt, smoothness
against the previously applied conditioning, and a narrative prior that
hands influence from scene to action over the step schedule — and the
scores are turned into blend weights by a temperature softmax. The
conditioning embedding for the step is the weight-blended, renormalized
mix of the two prompt embeddings; the dominant prompt also decides which
attention-mask descriptor is routed to the backbone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .embedding import cosine, similarity01
from .errors import ArgumentError, ConfigError

DOMINANT_SCENE = "scene"
DOMINANT_ACTION = "action"

SIM_MODE_UNIT = "sim01"
SIM_MODE_COSINE = "cosine"


@dataclass(frozen=True)
class PromptWeightConfig:
    """Score mixing weights, softmax temperature and the step horizon."""

    lambda1: float = 1.0  # frame-prompt alignment
    lambda2: float = 1.0  # smoothness vs previous conditioning
    lambda3: float = 1.0  # narrative prior
    tau: float = 0.5
    total_steps: int = 64
    sim_mode: str = SIM_MODE_UNIT

    def __post_init__(self) -> None:
        if self.tau <= 0:
            raise ConfigError(f"dipw.tau must be > 0, got {self.tau}")
        if self.total_steps < 1:
            raise ConfigError(f"backbone.steps must be >= 1, got {self.total_steps}")
        lams = (self.lambda1, self.lambda2, self.lambda3)
        if any(l < 0 for l in lams):
            raise ConfigError(f"dipw lambdas must be >= 0, got {lams}")
        if not any(l > 0 for l in lams):
            raise ConfigError("at least one dipw lambda must be > 0")
        if self.sim_mode not in (SIM_MODE_UNIT, SIM_MODE_COSINE):
            raise ConfigError(f"dipw.sim_mode must be 'sim01' or 'cosine', got {self.sim_mode!r}")


@dataclass(frozen=True)
class StepWeightRecord:
    """Everything observed and decided at one denoising step."""

    step: int
    sim_scene: float
    sim_action: float
    prev_sim_scene: float
    prev_sim_action: float
    prior_scene: float
    prior_action: float
    s_scene: float
    s_action: float
    alpha_scene: float
    alpha_action: float
    dominant: str


@dataclass(frozen=True)
class WeightState:
    """Carries the previously applied conditioning embedding between steps."""

    previous_combined: np.ndarray


def initial_state(scene_embedding: np.ndarray, action_embedding: np.ndarray) -> WeightState:
    """Neutral start: the renormalized midpoint of the two prompt embeddings."""
    mid = np.asarray(scene_embedding, dtype=np.float64) + np.asarray(
        action_embedding, dtype=np.float64
    )
    norm = float(np.linalg.norm(mid))
    if norm < 1e-12:
        raise ArgumentError("prompt embeddings are antipodal; no neutral midpoint")
    return WeightState(previous_combined=mid / norm)


def narrative_prior(step: int, total_steps: int) -> tuple[float, float]:
    """Scene-favoring early, action-favoring late; the pair sums to 1."""
    if total_steps < 1:
        raise ArgumentError(f"total_steps must be >= 1, got {total_steps}")
    if not 1 <= step <= total_steps:
        raise ArgumentError(f"step {step} outside [1, {total_steps}]")
    prior_action = step / total_steps
    return 1.0 - prior_action, prior_action


def prompt_score(sim: float, prev_sim: float, prior: float, cfg: PromptWeightConfig) -> float:
    for name, value in (("sim", sim), ("prev_sim", prev_sim), ("prior", prior)):
        if not math.isfinite(value):
            raise ArgumentError(f"{name} must be finite, got {value}")
    return cfg.lambda1 * sim + cfg.lambda2 * prev_sim + cfg.lambda3 * prior


def softmax_weights(s_scene: float, s_action: float, tau: float) -> tuple[float, float]:
    """Two-way temperature softmax with max subtraction (shift invariant)."""
    if tau <= 0:
        raise ArgumentError(f"tau must be > 0, got {tau}")
    if not (math.isfinite(s_scene) and math.isfinite(s_action)):
        raise ArgumentError("scores must be finite")
    top = max(s_scene, s_action)
    e_scene = math.exp((s_scene - top) / tau)
    e_action = math.exp((s_action - top) / tau)
    alpha_scene = e_scene / (e_scene + e_action)
    return alpha_scene, 1.0 - alpha_scene


def combine_embeddings(
    scene_embedding: np.ndarray,
    action_embedding: np.ndarray,
    alpha_scene: float,
    alpha_action: float,
) -> tuple[np.ndarray, str]:
    """Weighted mix of the prompt embeddings, renormalized to unit norm.

    Also reports which prompt dominates (ties go to the scene prompt) so
    the caller can route that prompt's attention-mask descriptor.
    """
    scene_embedding = np.asarray(scene_embedding, dtype=np.float64)
    action_embedding = np.asarray(action_embedding, dtype=np.float64)
    if scene_embedding.shape != action_embedding.shape:
        raise ArgumentError(
            f"dimension mismatch: {scene_embedding.shape} vs {action_embedding.shape}"
        )
    if abs(alpha_scene + alpha_action - 1.0) > 1e-6:
        raise ArgumentError("weights must sum to 1")
    mixed = alpha_scene * scene_embedding + alpha_action * action_embedding
    norm = float(np.linalg.norm(mixed))
    if norm < 1e-12:
        raise ArgumentError("combined embedding collapsed to zero")
    dominant = DOMINANT_SCENE if alpha_scene >= alpha_action else DOMINANT_ACTION
    return mixed / norm, dominant


def weight_step(
    state: WeightState,
    frame_probe: np.ndarray,
    scene_embedding: np.ndarray,
    action_embedding: np.ndarray,
    step: int,
    cfg: PromptWeightConfig,
    override_alpha: tuple[float, float] | None = None,
) -> tuple[StepWeightRecord, np.ndarray, WeightState]:
    """Run one weighting step and thread the state forward.

    ``override_alpha`` pins the blend weights (used by the ablation arm
    that disables dynamic weighting); the observational fields are still
    recorded.
    """
    if cfg.sim_mode == SIM_MODE_UNIT:
        sim_scene = similarity01(frame_probe, scene_embedding)
        sim_action = similarity01(frame_probe, action_embedding)
    else:
        sim_scene = cosine(frame_probe, scene_embedding)
        sim_action = cosine(frame_probe, action_embedding)
    prev_sim_scene = cosine(scene_embedding, state.previous_combined)
    prev_sim_action = cosine(action_embedding, state.previous_combined)
    prior_scene, prior_action = narrative_prior(step, cfg.total_steps)

    if override_alpha is None:
        s_scene = prompt_score(sim_scene, prev_sim_scene, prior_scene, cfg)
        s_action = prompt_score(sim_action, prev_sim_action, prior_action, cfg)
        alpha_scene, alpha_action = softmax_weights(s_scene, s_action, cfg.tau)
    else:
        s_scene = s_action = 0.0
        alpha_scene, alpha_action = override_alpha

    combined, dominant = combine_embeddings(
        scene_embedding, action_embedding, alpha_scene, alpha_action
    )
    record = StepWeightRecord(
        step=step,
        sim_scene=sim_scene,
        sim_action=sim_action,
        prev_sim_scene=prev_sim_scene,
        prev_sim_action=prev_sim_action,
        prior_scene=prior_scene,
        prior_action=prior_action,
        s_scene=s_scene,
        s_action=s_action,
        alpha_scene=alpha_scene,
        alpha_action=alpha_action,
        dominant=dominant,
    )
    return record, combined, WeightState(previous_combined=combined)
