import json
import math

import numpy as np
import pytest

from storyloom.cli import main
from storyloom.wire import WireClient
from storyloom_bridge.errors import BridgeAssetsError
from storyloom_bridge.metrics import (
    MockScorer,
    RealScorer,
    compute_metric_report,
    decode_frame,
    load_run,
)

from conftest import FAST_CONFIG, NYC_PAIRS, bridge_endpoint, make_script_doc


@pytest.fixture
def two_segment_run(tmp_path):
    script = tmp_path / "script.json"
    script.write_bytes(make_script_doc(NYC_PAIRS[:2], story_id="duo"))
    config = tmp_path / "config.json"
    config.write_text(json.dumps(FAST_CONFIG))
    out = tmp_path / "run"
    assert (
        main(
            [
                "generate",
                "--script", str(script),
                "--config", str(config),
                "--out", str(out),
                "--seed", "5",
            ]
        )
        == 0
    )
    return out


def test_decode_frame_shape_and_range():
    latent = np.random.default_rng(0).standard_normal((4, 8, 8)).astype(np.float32)
    img = decode_frame(latent)
    assert img.shape == (32, 32, 3)
    assert img.min() >= 0.0 and img.max() <= 1.0


def test_load_run_reads_segments(two_segment_run):
    doc, segments = load_run(two_segment_run)
    assert doc["script"]["story_id"] == "duo"
    assert [seg.segment_index for seg in segments] == [1, 2]
    assert segments[0].values.shape == (4, 4, 8, 8)


def test_mock_report_fields_finite_and_in_range(two_segment_run):
    report = compute_metric_report(two_segment_run, MockScorer(seed=5, dim=64))
    assert math.isfinite(report.clip_add) and -1.0 <= report.clip_add <= 1.0
    assert math.isfinite(report.clip_combined) and -1.0 <= report.clip_combined <= 1.0
    assert math.isfinite(report.dino) and -1.0 <= report.dino <= 1.0
    assert math.isfinite(report.lpips_chain) and report.lpips_chain >= 0.0
    assert report.model_id == "mock-hash-64/seed-5"
    assert report.frames_scored == 8


def test_mock_report_is_deterministic(two_segment_run):
    a = compute_metric_report(two_segment_run, MockScorer(seed=5, dim=64))
    b = compute_metric_report(two_segment_run, MockScorer(seed=5, dim=64))
    assert a == b


def test_metrics_over_the_wire(two_segment_run):
    client = WireClient(bridge_endpoint(5))
    client.request(
        "hello",
        {
            "proto": 1,
            "embed_dim": 64,
            "latent_shape": [4, 8, 8],
            "frames": 4,
            "seed": 5,
            "backbone": {"steps": 8},
        },
    )
    result = client.request("metrics", {"run_dir": str(two_segment_run)})
    client.close()
    direct = compute_metric_report(two_segment_run, MockScorer(seed=5, dim=64))
    assert result == direct.to_dict()


def test_missing_run_dir_is_clean_error(tmp_path):
    client = WireClient(bridge_endpoint(5))
    client.request(
        "hello",
        {
            "proto": 1,
            "embed_dim": 64,
            "latent_shape": [4, 8, 8],
            "frames": 4,
            "seed": 5,
            "backbone": {"steps": 8},
        },
    )
    with pytest.raises(Exception):
        client.request("metrics", {"run_dir": str(tmp_path / "nope")})
    client.close(polite=False)


def test_real_scorer_requires_explicit_assets(tmp_path):
    with pytest.raises(BridgeAssetsError, match="--mock"):
        RealScorer(None)
    with pytest.raises(BridgeAssetsError, match="not found"):
        RealScorer(tmp_path / "empty")


def test_real_serve_fails_fast_without_assets(capsys):
    from storyloom_bridge.cli import main as bridge_main

    assert bridge_main(["serve", "--listen", "stdio"]) == 1
    assert "--mock" in capsys.readouterr().err
