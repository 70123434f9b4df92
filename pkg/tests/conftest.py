import json

import pytest

from storyloom.config import engine_config_from_dict
from storyloom.script import parse_script

# First pairs of the corgi New York walkthrough used across the suite.
NYC_CORGI_PAIRS = [
    ("a corgi dog is inside of the subway train", "a corgi dog is sitting"),
    ("a corgi dog is looking out the subway window", "a corgi dog now stands out"),
    ("a corgi dog is getting off the subway train", "a corgi dog is walking"),
]


def make_script_doc(pairs, story_id="story"):
    return json.dumps(
        {
            "story_id": story_id,
            "segments": [{"scene": s, "action": a} for s, a in pairs],
        }
    ).encode("utf-8")


@pytest.fixture
def nyc_script():
    return parse_script(make_script_doc(NYC_CORGI_PAIRS, story_id="nyc"))


@pytest.fixture
def default_config():
    return engine_config_from_dict({})


@pytest.fixture
def fast_config():
    # Small step count keeps whole-story tests quick without changing semantics.
    return engine_config_from_dict({"backbone": {"steps": 8, "frames": 4}})
