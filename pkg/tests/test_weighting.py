import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from storyloom.errors import ArgumentError, ConfigError
from storyloom.weighting import (
    PromptWeightConfig,
    WeightState,
    combine_embeddings,
    initial_state,
    narrative_prior,
    prompt_score,
    softmax_weights,
    weight_step,
)


def closed_form_alpha_action(gap: float, tau: float) -> float:
    """Two-way softmax in closed form; gap = s_action - s_scene."""
    return 1.0 / (1.0 + math.exp(-gap / tau))


# --- narrative prior -------------------------------------------------------

def test_prior_endpoint():
    assert narrative_prior(64, 64) == (0.0, 1.0)


def test_prior_midpoint():
    assert narrative_prior(32, 64) == (0.5, 0.5)


def test_prior_quarter():
    # direct evaluation: 1 - 16/64
    assert narrative_prior(16, 64) == (0.75, 0.25)


def test_prior_sums_to_one_exactly():
    for total in (1, 2, 3, 7, 64, 997):
        for step in range(1, total + 1):
            scene, action = narrative_prior(step, total)
            assert scene + action == 1.0


def test_prior_decreasing_in_step():
    values = [narrative_prior(i, 64)[0] for i in range(1, 65)]
    assert all(a > b for a, b in zip(values, values[1:]))


def test_prior_rejects_out_of_range():
    with pytest.raises(ArgumentError):
        narrative_prior(0, 64)
    with pytest.raises(ArgumentError):
        narrative_prior(65, 64)


# --- scores ----------------------------------------------------------------

def test_score_is_plain_sum_with_unit_lambdas():
    cfg = PromptWeightConfig()
    assert prompt_score(0.5, 0.5, 0.5, cfg) == 1.5
    assert prompt_score(0.0, 0.0, 0.0, cfg) == 0.0
    assert prompt_score(0.8, 0.6, 0.25, cfg) == pytest.approx(1.65, abs=1e-12)


def test_score_respects_lambdas():
    cfg = PromptWeightConfig(lambda1=2.0, lambda2=0.5, lambda3=0.0)
    assert prompt_score(0.5, 0.4, 0.9, cfg) == pytest.approx(2 * 0.5 + 0.5 * 0.4, abs=1e-12)


def test_score_rejects_non_finite():
    cfg = PromptWeightConfig()
    with pytest.raises(ArgumentError):
        prompt_score(float("nan"), 0.0, 0.0, cfg)
    with pytest.raises(ArgumentError):
        prompt_score(0.0, float("inf"), 0.0, cfg)


def test_config_validation():
    with pytest.raises(ConfigError):
        PromptWeightConfig(tau=0.0)
    with pytest.raises(ConfigError):
        PromptWeightConfig(lambda1=-0.1)
    with pytest.raises(ConfigError):
        PromptWeightConfig(lambda1=0.0, lambda2=0.0, lambda3=0.0)
    with pytest.raises(ConfigError):
        PromptWeightConfig(total_steps=0)
    with pytest.raises(ConfigError):
        PromptWeightConfig(sim_mode="nope")


# --- softmax weights --------------------------------------------------------

def test_weights_symmetric_on_equal_scores():
    assert softmax_weights(1.3, 1.3, 0.5) == (0.5, 0.5)


def test_weights_unit_gap_closed_form():
    alpha_scene, alpha_action = softmax_weights(0.0, 1.0, 0.5)
    assert alpha_action == pytest.approx(closed_form_alpha_action(1.0, 0.5), abs=1e-12)
    assert alpha_action == pytest.approx(0.880797, abs=1e-6)


def test_weights_saturate_but_stay_finite():
    alpha_scene, alpha_action = softmax_weights(10.0, 0.0, 0.5)
    assert alpha_scene > 0.999999
    assert alpha_scene < 1.0
    assert alpha_action > 0.0


def test_weights_reject_bad_tau_and_scores():
    with pytest.raises(ArgumentError):
        softmax_weights(0.0, 0.0, 0.0)
    with pytest.raises(ArgumentError):
        softmax_weights(float("nan"), 0.0, 0.5)


@given(
    s1=st.floats(-5, 5),
    s2=st.floats(-5, 5),
    tau=st.floats(0.3, 4.0),
    shift=st.floats(-1e6, 1e6),
)
@settings(max_examples=200, deadline=None)
def test_weights_normalized_and_shift_invariant(s1, s2, tau, shift):
    # tau >= 0.3 keeps gap/tau below the float64 saturation threshold
    # (~36.7) so strict openness is meaningful; the extreme regime is
    # covered separately below.
    a1, a2 = softmax_weights(s1, s2, tau)
    assert 0.0 < a1 < 1.0 and 0.0 < a2 < 1.0
    assert abs(a1 + a2 - 1.0) <= 1e-9
    b1, b2 = softmax_weights(s1 + shift, s2 + shift, tau)
    assert abs(a1 - b1) <= 1e-9


def test_weights_extreme_gap_saturates_closed():
    # Past the float64 threshold the loser underflows and the winner
    # rounds to 1.0; normalization still holds exactly.
    a1, a2 = softmax_weights(100.0, 0.0, 0.1)
    assert a1 == 1.0 and a2 == 0.0
    assert a1 + a2 == 1.0


def test_weights_monotone_in_scene_score():
    alphas = [softmax_weights(s, 0.0, 0.5)[0] for s in np.linspace(-2, 2, 41)]
    assert all(a < b for a, b in zip(alphas, alphas[1:]))


def test_temperature_flattens_fixed_gap():
    taus = [0.1, 0.25, 0.5, 1.0, 2.0]
    gaps = [abs(softmax_weights(0.0, 0.3, t)[1] - 0.5) for t in taus]
    assert all(a > b for a, b in zip(gaps, gaps[1:]))


@given(
    sim=st.tuples(st.floats(0, 1), st.floats(0, 1)),
    prev=st.tuples(st.floats(-1, 1), st.floats(-1, 1)),
    prior=st.floats(0, 1),
    scale=st.floats(0.1, 10),
)
@settings(max_examples=100, deadline=None)
def test_dominant_invariant_under_score_rescaling(sim, prev, prior, scale):
    cfg = PromptWeightConfig()
    scaled = PromptWeightConfig(lambda1=scale, lambda2=scale, lambda3=scale)
    args = [(sim[0], prev[0], 1 - prior), (sim[1], prev[1], prior)]
    s = [prompt_score(*a, cfg) for a in args]
    s_scaled = [prompt_score(*a, scaled) for a in args]
    dom = softmax_weights(s[0], s[1], 0.5)[0] >= 0.5
    dom_scaled = softmax_weights(s_scaled[0], s_scaled[1], 0.5)[0] >= 0.5
    assert dom == dom_scaled


# --- combined embedding ------------------------------------------------------

def _unit(v):
    v = np.asarray(v, dtype=np.float64)
    return v / np.linalg.norm(v)


def test_combine_degenerate_weight_returns_scene():
    scene = _unit([1.0, 2.0, -1.0, 0.5])
    action = _unit([0.0, 1.0, 0.0, 0.0])
    combined, dominant = combine_embeddings(scene, action, 1.0, 0.0)
    assert np.allclose(combined, scene, atol=1e-12)
    assert dominant == "scene"


def test_combine_identical_inputs():
    e = _unit([0.3, -0.7, 0.2, 0.1])
    combined, dominant = combine_embeddings(e, e, 0.5, 0.5)
    assert np.allclose(combined, e, atol=1e-12)
    assert dominant == "scene"  # tie goes to scene


def test_combine_orthogonal_bisects():
    scene = np.array([1.0, 0.0])
    action = np.array([0.0, 1.0])
    combined, _ = combine_embeddings(scene, action, 0.5, 0.5)
    assert np.linalg.norm(combined) == pytest.approx(1.0, abs=1e-12)
    # 45 degrees from both inputs
    assert float(combined @ scene) == pytest.approx(math.sqrt(2) / 2, abs=1e-9)
    assert float(combined @ action) == pytest.approx(math.sqrt(2) / 2, abs=1e-9)


def test_combine_rejects_mismatched_dimensions():
    with pytest.raises(ArgumentError):
        combine_embeddings(np.ones(3), np.ones(4), 0.5, 0.5)


def test_combine_rejects_unnormalized_weights():
    with pytest.raises(ArgumentError):
        combine_embeddings(np.ones(3), np.ones(3), 0.7, 0.7)


# --- full step ---------------------------------------------------------------

def test_step_one_symmetric_when_prompts_identical_and_two_steps():
    # With 2 total steps, step 1 sits at the prior midpoint, so identical
    # prompts make everything symmetric.
    cfg = PromptWeightConfig(total_steps=2)
    e = _unit(np.arange(1, 9))
    probe = _unit(np.ones(8))
    state = initial_state(e, e)
    record, combined, _ = weight_step(state, probe, e, e, 1, cfg)
    assert record.alpha_scene == pytest.approx(0.5, abs=1e-12)
    assert record.alpha_action == pytest.approx(0.5, abs=1e-12)
    assert record.dominant == "scene"
    assert np.allclose(combined, e, atol=1e-12)


def test_final_step_prior_gap_closed_form():
    # Equal sims and prev_sims leave only the prior gap of 1.0 at the
    # final step: alpha_action = 1/(1+e^-2) at tau 0.5.
    cfg = PromptWeightConfig(total_steps=64)
    e = _unit([1.0, 1.0, 0.0, 0.0])
    probe = _unit([1.0, -1.0, 0.0, 0.0])
    state = initial_state(e, e)
    record, _, _ = weight_step(state, probe, e, e, 64, cfg)
    assert record.alpha_action == pytest.approx(1 / (1 + math.exp(-2)), abs=1e-9)
    assert record.alpha_action == pytest.approx(0.880797, abs=1e-6)
    assert record.dominant == "action"


def test_three_step_trace_matches_hand_computation():
    # Fixed embeddings and probes in R^2; every quantity recomputed below
    # with plain arithmetic, independent of the module under test.
    cfg = PromptWeightConfig(total_steps=3, tau=0.5)
    scene = np.array([1.0, 0.0])
    action = np.array([0.0, 1.0])
    probes = [
        _unit([1.0, 1.0]),
        _unit([2.0, 1.0]),
        _unit([1.0, 3.0]),
    ]

    state = weight_step_state = initial_state(scene, action)
    records = []
    combined_trace = []
    for step, probe in enumerate(probes, start=1):
        record, combined, state = weight_step(state, probe, scene, action, step, cfg)
        records.append(record)
        combined_trace.append(combined)

    # -- independent recomputation --
    prev = np.array([1.0, 1.0]) / math.sqrt(2)
    expected = []
    for step, probe in enumerate(probes, start=1):
        sim_s = (1 + float(probe @ scene)) / 2
        sim_a = (1 + float(probe @ action)) / 2
        prev_s = float(scene @ prev) / np.linalg.norm(prev)
        prev_a = float(action @ prev) / np.linalg.norm(prev)
        prior_s = 1 - step / 3
        prior_a = step / 3
        s_s = sim_s + prev_s + prior_s
        s_a = sim_a + prev_a + prior_a
        a_a = 1 / (1 + math.exp(-(s_a - s_s) / 0.5))
        a_s = 1 - a_a
        mix = a_s * scene + a_a * action
        prev = mix / np.linalg.norm(mix)
        expected.append((sim_s, sim_a, prev_s, prev_a, prior_s, prior_a, s_s, s_a, a_s, a_a))

    for record, combined, exp in zip(records, combined_trace, expected):
        sim_s, sim_a, prev_s, prev_a, prior_s, prior_a, s_s, s_a, a_s, a_a = exp
        assert record.sim_scene == pytest.approx(sim_s, abs=1e-12)
        assert record.sim_action == pytest.approx(sim_a, abs=1e-12)
        assert record.prev_sim_scene == pytest.approx(prev_s, abs=1e-12)
        assert record.prev_sim_action == pytest.approx(prev_a, abs=1e-12)
        assert record.prior_scene == pytest.approx(prior_s, abs=1e-12)
        assert record.prior_action == pytest.approx(prior_a, abs=1e-12)
        assert record.s_scene == pytest.approx(s_s, abs=1e-9)
        assert record.s_action == pytest.approx(s_a, abs=1e-9)
        assert record.alpha_scene == pytest.approx(a_s, abs=1e-9)
        assert record.alpha_action == pytest.approx(a_a, abs=1e-9)
    # the state threads the combined embedding forward
    assert np.allclose(combined_trace[-1], prev, atol=1e-9)


def test_first_step_favors_scene_for_long_horizons():
    cfg = PromptWeightConfig(total_steps=64)
    e = _unit([1.0, 1.0, 0.0])
    probe = _unit([0.0, 0.0, 1.0])
    record, _, _ = weight_step(initial_state(e, e), probe, e, e, 1, cfg)
    assert record.dominant == "scene"
    assert record.alpha_scene > 0.5


def test_cosine_sim_mode_uses_raw_cosine():
    cfg = PromptWeightConfig(total_steps=4, sim_mode="cosine")
    scene = _unit([1.0, 0.0])
    action = _unit([0.0, 1.0])
    probe = _unit([-1.0, 0.0])  # cosine -1 to scene, 0 to action
    record, _, _ = weight_step(initial_state(scene, action), probe, scene, action, 2, cfg)
    assert record.sim_scene == pytest.approx(-1.0, abs=1e-9)
    assert record.sim_action == pytest.approx(0.0, abs=1e-12)


def test_step_threads_state_forward():
    cfg = PromptWeightConfig(total_steps=4)
    scene = _unit([1.0, 0.2, 0.0])
    action = _unit([0.0, 1.0, 0.3])
    probe = _unit([1.0, 1.0, 1.0])
    state = initial_state(scene, action)
    record, combined, new_state = weight_step(state, probe, scene, action, 1, cfg)
    assert np.array_equal(new_state.previous_combined, combined)


def test_override_alpha_pins_weights_but_records_observations():
    cfg = PromptWeightConfig(total_steps=4)
    scene = _unit([1.0, 0.0, 0.0])
    action = _unit([0.0, 1.0, 0.0])
    probe = _unit([0.9, 0.1, 0.0])
    state = initial_state(scene, action)
    record, _, _ = weight_step(state, probe, scene, action, 4, cfg, override_alpha=(0.5, 0.5))
    assert record.alpha_scene == 0.5 and record.alpha_action == 0.5
    assert record.dominant == "scene"
    assert record.sim_scene > record.sim_action  # observations still real
    assert record.s_scene == 0.0 and record.s_action == 0.0


def test_record_invariants_fuzzed():
    cfg = PromptWeightConfig(total_steps=16)
    rng = np.random.default_rng(0)
    scene = _unit(rng.standard_normal(8))
    action = _unit(rng.standard_normal(8))
    state = initial_state(scene, action)
    for step in range(1, 17):
        probe = _unit(rng.standard_normal(8))
        record, _, state = weight_step(state, probe, scene, action, step, cfg)
        assert abs(record.alpha_scene + record.alpha_action - 1.0) <= 1e-9
        assert record.prior_scene == pytest.approx(1 - step / 16, abs=1e-12)
        assert record.prior_action == pytest.approx(step / 16, abs=1e-12)
        assert (record.dominant == "scene") == (record.alpha_scene >= record.alpha_action)
        assert 0.0 <= record.sim_scene <= 1.0
        assert -1.0 <= record.prev_sim_scene <= 1.0


def test_initial_state_rejects_antipodal_prompts():
    e = _unit([1.0, 0.0])
    with pytest.raises(ArgumentError):
        initial_state(e, -e)
