import numpy as np
import pytest

from storyloom.backbone import (
    BackboneConfig,
    SegmentLatents,
    ToyBackbone,
    default_noise_schedule,
    init_noise,
    segment_seed,
)
from storyloom.embedding import similarity01
from storyloom.errors import ArgumentError, ConfigError

SHAPE = (4, 8, 8)


def _unit(rng, dim=64):
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def _silent_backbone(steps=64, **kw):
    cfg = BackboneConfig(steps=steps, noise_schedule=tuple([0.0] * steps), **kw)
    return ToyBackbone(cfg, seed=5, embed_dim=64)


def test_init_noise_deterministic():
    a = init_noise(SHAPE, 8, seed=11, segment_index=1)
    b = init_noise(SHAPE, 8, seed=11, segment_index=1)
    assert np.array_equal(a.values, b.values)
    assert a.values.dtype == np.float32


def test_init_noise_segment_streams_differ():
    a = init_noise(SHAPE, 8, seed=11, segment_index=1)
    b = init_noise(SHAPE, 8, seed=11, segment_index=2)
    assert not np.array_equal(a.values, b.values)


def test_init_noise_seed_streams_differ():
    a = init_noise(SHAPE, 8, seed=11, segment_index=1)
    b = init_noise(SHAPE, 8, seed=12, segment_index=1)
    assert not np.array_equal(a.values, b.values)


def test_init_noise_empirical_mean():
    # ~1.05e6 standard-normal draws; mean of N(0,1) should land well
    # inside +-0.01 (10 sigma of the sample mean).
    lat = init_noise(SHAPE, 4096, seed=1, segment_index=1)
    assert abs(float(lat.values.mean())) < 0.01
    assert abs(float(lat.values.std()) - 1.0) < 0.01


def test_init_noise_rejects_zero_frames():
    with pytest.raises(ArgumentError):
        init_noise(SHAPE, 0, seed=1)


def test_segment_seed_mixes_run_seed():
    assert segment_seed(1, 1) != segment_seed(2, 1)
    assert segment_seed(1, 1) != segment_seed(1, 2)
    assert 0 <= segment_seed(123, 45) < 2**64


def test_config_validation():
    with pytest.raises(ConfigError):
        BackboneConfig(steps=0)
    with pytest.raises(ConfigError):
        BackboneConfig(contraction_rate=0.0)
    with pytest.raises(ConfigError):
        BackboneConfig(contraction_rate=1.5)
    with pytest.raises(ConfigError):
        BackboneConfig(guidance_scale=-1.0)
    with pytest.raises(ConfigError):
        BackboneConfig(height=7)
    with pytest.raises(ConfigError):
        BackboneConfig(noise_schedule=(0.1,) * 63)  # wrong length
    with pytest.raises(ConfigError):
        BackboneConfig(steps=3, noise_schedule=(0.1, 0.2, 0.0))  # increasing
    with pytest.raises(ConfigError):
        BackboneConfig(steps=2, noise_schedule=(0.1, -0.1))


def test_default_schedule_shape():
    sched = default_noise_schedule(64)
    assert len(sched) == 64
    assert sched[0] == 0.8
    assert sched[-1] == 0.0
    assert all(a >= b for a, b in zip(sched, sched[1:]))
    assert default_noise_schedule(1) == [0.0]


def test_effective_gain_caps_guidance():
    assert BackboneConfig(guidance_scale=4.5).effective_gain() == pytest.approx(0.45)
    assert BackboneConfig(guidance_scale=25.0).effective_gain() == 1.0


def test_target_fixed_point():
    bb = _silent_backbone()
    rng = np.random.default_rng(0)
    e = _unit(rng)
    target = bb.target_frame(e)
    lat = SegmentLatents(values=np.stack([target] * 8), segment_index=1)
    out = bb.denoise(lat, e, 3, 1)
    assert np.array_equal(out.values, lat.values)


def test_single_step_contracts_by_exact_factor():
    bb = _silent_backbone()
    rng = np.random.default_rng(1)
    e = _unit(rng)
    target = bb.target_frame(e).astype(np.float64)
    lat = init_noise(SHAPE, 8, seed=3, segment_index=1)
    out = bb.denoise(lat, e, 4, 1)
    g = 0.15 * 4.5 / 10.0
    d_before = np.linalg.norm(lat.values.astype(np.float64) - target)
    d_after = np.linalg.norm(out.values.astype(np.float64) - target)
    assert d_after == pytest.approx((1 - g) * d_before, rel=1e-6)


def test_full_run_geometric_decay():
    bb = _silent_backbone()
    rng = np.random.default_rng(2)
    e = _unit(rng)
    target = bb.target_frame(e).astype(np.float64)
    lat = init_noise(SHAPE, 8, seed=11, segment_index=1)
    d0 = np.linalg.norm(lat.values.astype(np.float64) - target)
    cur = lat
    for step in range(1, 65):
        cur = bb.denoise(cur, e, 3, step)
    g = 0.15 * 4.5 / 10.0
    d_final = np.linalg.norm(cur.values.astype(np.float64) - target)
    assert d_final == pytest.approx(d0 * (1 - g) ** 64, rel=1e-6)


def test_contraction_never_increases_distance():
    bb = _silent_backbone()
    rng = np.random.default_rng(3)
    for seed in range(5):
        e = _unit(rng)
        target = bb.target_frame(e).astype(np.float64)
        cur = init_noise(SHAPE, 4, seed=seed, segment_index=1)
        d_prev = np.linalg.norm(cur.values.astype(np.float64) - target)
        for step in range(1, 33):
            cur = bb.denoise(cur, e, 2, step)
            d = np.linalg.norm(cur.values.astype(np.float64) - target)
            assert d <= d_prev + 1e-9
            d_prev = d


def test_denoise_deterministic_with_noise():
    cfg = BackboneConfig()
    bb1 = ToyBackbone(cfg, seed=9, embed_dim=64)
    bb2 = ToyBackbone(cfg, seed=9, embed_dim=64)
    rng = np.random.default_rng(4)
    e = _unit(rng)
    lat = init_noise(SHAPE, 8, seed=9, segment_index=2)
    a = bb1.denoise(lat, e, 3, 1)
    b = bb2.denoise(SegmentLatents(lat.values.copy(), 2), e, 3, 1)
    assert np.array_equal(a.values, b.values)


def test_denoise_noise_differs_by_step_and_segment():
    cfg = BackboneConfig()
    bb = ToyBackbone(cfg, seed=9, embed_dim=64)
    rng = np.random.default_rng(4)
    e = _unit(rng)
    lat1 = init_noise(SHAPE, 8, seed=9, segment_index=1)
    step1 = bb.denoise(lat1, e, 3, 1)
    step2 = bb.denoise(lat1, e, 3, 2)
    assert not np.array_equal(step1.values, step2.values)


def test_denoise_preserves_shape_and_count():
    bb = ToyBackbone(BackboneConfig(), seed=1, embed_dim=64)
    rng = np.random.default_rng(5)
    e = _unit(rng)
    lat = bb.init_segment(1)
    out = bb.denoise(lat, e, 3, 1)
    assert out.values.shape == lat.values.shape
    assert out.frame_count == lat.frame_count
    assert out.values.dtype == np.float32


def test_denoise_rejects_bad_step_and_mask():
    bb = ToyBackbone(BackboneConfig(), seed=1, embed_dim=64)
    rng = np.random.default_rng(6)
    e = _unit(rng)
    lat = bb.init_segment(1)
    with pytest.raises(ArgumentError):
        bb.denoise(lat, e, 3, 0)
    with pytest.raises(ArgumentError):
        bb.denoise(lat, e, 3, 65)
    with pytest.raises(ArgumentError):
        bb.denoise(lat, e, -1, 1)


def test_probe_deterministic_and_scale_invariant():
    bb = ToyBackbone(BackboneConfig(), seed=1, embed_dim=64)
    rng = np.random.default_rng(7)
    frame = rng.standard_normal(SHAPE).astype(np.float32)
    p1 = bb.probe(frame)
    p2 = bb.probe(frame)
    assert np.array_equal(p1, p2)
    assert abs(float(np.linalg.norm(p1)) - 1.0) < 1e-9
    p_scaled = bb.probe(3.0 * frame)
    assert np.allclose(p1, p_scaled, atol=1e-12)


def test_probe_zero_frame_falls_back_to_e1():
    bb = ToyBackbone(BackboneConfig(), seed=1, embed_dim=64)
    probe = bb.probe(np.zeros(SHAPE, dtype=np.float32))
    expected = np.zeros(64)
    expected[0] = 1.0
    assert np.array_equal(probe, expected)


def test_probe_rejects_non_finite():
    bb = ToyBackbone(BackboneConfig(), seed=1, embed_dim=64)
    bad = np.zeros(SHAPE, dtype=np.float32)
    bad[0, 0, 0] = np.nan
    with pytest.raises(ArgumentError):
        bb.probe(bad)


def test_probe_recovers_target_alignment():
    # Monte-Carlo: the probe of an embedding's target frame should beat the
    # probe of an unrelated random frame at matching that embedding.
    bb = ToyBackbone(BackboneConfig(), seed=5, embed_dim=64)
    rng = np.random.default_rng(123)
    hits = 0
    trials = 1000
    for _ in range(trials):
        e = _unit(rng)
        on_target = similarity01(bb.probe(bb.target_frame(e)), e)
        off_target = similarity01(bb.probe(rng.standard_normal(SHAPE).astype(np.float32)), e)
        hits += on_target > off_target
    assert hits >= 950


def test_basis_is_model_identity_not_run_state():
    # Two backbones with different run seeds share the target/probe basis.
    a = ToyBackbone(BackboneConfig(), seed=1, embed_dim=64)
    b = ToyBackbone(BackboneConfig(), seed=2, embed_dim=64)
    rng = np.random.default_rng(8)
    e = _unit(rng)
    assert np.array_equal(a.target_frame(e), b.target_frame(e))
