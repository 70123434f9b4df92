import json
import sys

import pytest

NYC_PAIRS = [
    ("a corgi dog is inside of the subway train", "a corgi dog is sitting"),
    ("a corgi dog is looking out the subway window", "a corgi dog now stands out"),
    ("a corgi dog is getting off the subway train", "a corgi dog is walking"),
]

FAST_CONFIG = {"backbone": {"steps": 8, "frames": 4}}


def make_script_doc(pairs, story_id="story"):
    return json.dumps(
        {"story_id": story_id, "segments": [{"scene": s, "action": a} for s, a in pairs]}
    ).encode("utf-8")


def bridge_endpoint(seed: int, extra: str = "") -> str:
    return (
        f"stdio:{sys.executable} -m storyloom_bridge serve --mock "
        f"--seed {seed} --listen stdio{extra}"
    )


@pytest.fixture
def script_path(tmp_path):
    path = tmp_path / "script.json"
    path.write_bytes(make_script_doc(NYC_PAIRS, story_id="nyc"))
    return path


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(FAST_CONFIG))
    return path
