"""Story script parsing, validation and canonical serialization.

A script is an ordered list of prompt pairs. Within a pair the scene text
sets the backdrop for a segment and the action text describes what the
subject does in it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any

from .errors import ScriptParseError, ScriptValidationError

SEVERITY_ERROR = "error"
SEVERITY_INFO = "info"


@dataclass(frozen=True)
class PromptPair:
    """One segment's prompts. ``index`` is 1-based within the parent script."""

    index: int
    scene_text: str
    action_text: str


@dataclass(frozen=True)
class StoryScript:
    story_id: str
    pairs: tuple[PromptPair, ...]


@dataclass(frozen=True)
class Diagnostic:
    """Validator finding. ``segment`` 0 means the finding is story-level."""

    segment: int
    message: str
    severity: str = SEVERITY_ERROR


def parse_script(raw: bytes | str) -> StoryScript:
    """Decode and validate a script document.

    Accepts the named-keys form ``{"story_id", "segments": [{"scene", "action"}]}``
    and the flat form ``{"story_id", "prompts": [s1, a1, s2, a2, ...]}`` where
    even positions are scenes and odd positions actions.
    """
    if isinstance(raw, bytes):
        try:
            text = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ScriptParseError(
                f"script is not valid UTF-8 at byte {exc.start}", byte_offset=exc.start
            ) from exc
    else:
        text = raw
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        offset = len(text[: exc.pos].encode("utf-8"))
        raise ScriptParseError(
            f"malformed JSON at byte {offset}: {exc.msg}", byte_offset=offset
        ) from exc

    if not isinstance(doc, dict):
        raise ScriptParseError("script document must be a JSON object")
    story_id = doc.get("story_id")
    if not isinstance(story_id, str):
        raise ScriptValidationError("story_id must be a string")

    has_segments = "segments" in doc
    has_prompts = "prompts" in doc
    if has_segments and has_prompts:
        raise ScriptValidationError("script carries both 'segments' and 'prompts'")
    if has_segments:
        pairs = _pairs_from_segments(doc["segments"])
    elif has_prompts:
        pairs = _pairs_from_flat_list(doc["prompts"])
    else:
        raise ScriptValidationError("script needs a 'segments' or 'prompts' key")

    script = StoryScript(story_id=story_id.strip(), pairs=tuple(pairs))
    errors = [d for d in validate_script(script) if d.severity == SEVERITY_ERROR]
    if errors:
        first = errors[0]
        raise ScriptValidationError(first.message, segment_index=first.segment)
    return script


def _pairs_from_segments(segments: Any) -> list[PromptPair]:
    if not isinstance(segments, list):
        raise ScriptValidationError("'segments' must be an array")
    pairs = []
    for pos, entry in enumerate(segments, start=1):
        if not isinstance(entry, dict):
            raise ScriptValidationError(f"segment entry is not an object", pos)
        unknown = set(entry) - {"scene", "action"}
        if unknown:
            raise ScriptValidationError(
                f"unknown segment key {sorted(unknown)[0]!r}", pos
            )
        scene = entry.get("scene")
        action = entry.get("action")
        if not isinstance(scene, str) or not isinstance(action, str):
            raise ScriptValidationError("segment needs string 'scene' and 'action'", pos)
        pairs.append(PromptPair(index=pos, scene_text=scene.strip(), action_text=action.strip()))
    return pairs


def _pairs_from_flat_list(prompts: Any) -> list[PromptPair]:
    if not isinstance(prompts, list) or not all(isinstance(p, str) for p in prompts):
        raise ScriptValidationError("'prompts' must be an array of strings")
    if len(prompts) % 2 != 0:
        raise ScriptValidationError(
            f"flat prompt list must have even length, got {len(prompts)}"
        )
    return [
        PromptPair(index=k + 1, scene_text=prompts[2 * k].strip(), action_text=prompts[2 * k + 1].strip())
        for k in range(len(prompts) // 2)
    ]


def validate_script(script: StoryScript) -> list[Diagnostic]:
    """Check every structural invariant; returns findings, never raises.

    Error-severity findings mark contract violations; info findings are
    advisory (e.g. an identical adjacent pair, which is legal but usually
    a copy-paste slip).
    """
    out: list[Diagnostic] = []
    if not script.story_id.strip():
        out.append(Diagnostic(0, "story_id is empty"))
    if len(script.pairs) == 0:
        out.append(Diagnostic(0, "empty segment list"))
    for pos, pair in enumerate(script.pairs, start=1):
        if pair.index != pos:
            out.append(Diagnostic(pos, f"pair index {pair.index} != position {pos}"))
        if not pair.scene_text.strip():
            out.append(Diagnostic(pos, "scene text is empty"))
        if not pair.action_text.strip():
            out.append(Diagnostic(pos, "action text is empty"))
    for prev, curr in zip(script.pairs, script.pairs[1:]):
        if (
            prev.scene_text.strip() == curr.scene_text.strip()
            and prev.action_text.strip() == curr.action_text.strip()
        ):
            out.append(
                Diagnostic(curr.index, "identical adjacent pair", SEVERITY_INFO)
            )
    return out


def script_to_dict(script: StoryScript) -> dict[str, Any]:
    return {
        "story_id": script.story_id,
        "segments": [
            {"scene": p.scene_text, "action": p.action_text} for p in script.pairs
        ],
    }


def serialize_script(script: StoryScript) -> str:
    """Canonical named-keys JSON; ``parse_script`` round-trips it."""
    return json.dumps(script_to_dict(script), ensure_ascii=False)
