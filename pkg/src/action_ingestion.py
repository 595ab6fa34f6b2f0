import json
import re
from pathlib import Path
from typing import Any, Dict, List, Optional, TypedDict, Union, cast

from .action_models import ActionUsageError, MPAction, WeightedSpace, validate_action
from .text_utilities import content_hash, format_weight, parse_weight
from .weakeq_config import NUMERIC_MODE

# ---------------------------------------------------------------------------
# File record type
# ---------------------------------------------------------------------------

class ActionFileDict(TypedDict):
    """Structure of an action file; generator images are 1-based."""
    weights: List[Union[float, str]]
    generators: Dict[str, List[int]]


class ActionFileError(ActionUsageError):
    """Raised when an action file is malformed; the message is anchored at path:line."""
    pass


_GENERATOR_NAME = re.compile(r"^g([1-9]\d*)$")


def _line_of(text: str, token: str) -> int:
    """1-based line of the first occurrence of the quoted JSON key *token* (1 if absent)."""
    needle = f'"{token}"'
    for number, line in enumerate(text.splitlines(), start=1):
        if needle in line:
            return number
    return 1


# ---------------------------------------------------------------------------
# Conversion
# ---------------------------------------------------------------------------

def action_to_json(a: MPAction) -> ActionFileDict:
    return {
        "weights": [format_weight(w) for w in a.space.weights],
        "generators": {
            f"g{index + 1}": [int(x) + 1 for x in perm] for index, perm in enumerate(a.generator_perms)
        },
    }


def action_hash(a: MPAction) -> str:
    """Content hash of weights and generators (independent of the cached word count)."""
    return content_hash(action_to_json(a))


def action_from_json(doc: Any, t: int = 1, rational: Optional[bool] = None,
                     source: str = "<action>", text: str = "") -> MPAction:
    """
    Builds an action from a parsed action document and validates it.
    Problems are raised as ActionFileError anchored at the offending line of *text*.
    """
    use_rational = NUMERIC_MODE == "rational" if rational is None else rational

    def fail(token: str, reason: str) -> ActionFileError:
        return ActionFileError(f"{source}:{_line_of(text, token)}: {reason}")

    if not isinstance(doc, dict):
        raise ActionFileError(f"{source}:1: top level must be an object with 'weights' and 'generators'")
    doc_dict = cast(Dict[str, Any], doc)
    raw_weights = doc_dict.get("weights")
    raw_generators = doc_dict.get("generators")
    if not isinstance(raw_weights, list) or not raw_weights:
        raise fail("weights", "'weights' must be a non-empty list")
    if not isinstance(raw_generators, dict) or not raw_generators:
        raise fail("generators", "'generators' must be a non-empty object")

    try:
        weights = tuple(parse_weight(w, use_rational) for w in raw_weights)
    except ValueError as e:
        raise fail("weights", str(e)) from e
    try:
        space = WeightedSpace(weights)
    except ActionUsageError as e:
        raise fail("weights", str(e)) from e

    by_index: Dict[int, List[int]] = {}
    for name, images in raw_generators.items():
        match = _GENERATOR_NAME.match(str(name))
        if not match:
            raise fail(str(name), f"generator name '{name}' must look like g1, g2, ...")
        if not isinstance(images, list) or not all(isinstance(x, int) and not isinstance(x, bool) for x in images):
            raise fail(str(name), f"generator '{name}' must be a list of integer images")
        if len(images) != space.size:
            raise fail(str(name), f"generator '{name}' has {len(images)} images for {space.size} atoms")
        if sorted(images) != list(range(1, space.size + 1)):
            raise fail(str(name), f"generator '{name}' is not a permutation of 1..{space.size}")
        by_index[int(match.group(1))] = [x - 1 for x in images]

    expected = list(range(1, len(by_index) + 1))
    if sorted(by_index) != expected:
        raise fail("generators", f"generators must be named g1..g{len(by_index)} without gaps")

    a = MPAction.build(space, [by_index[i] for i in expected], t)
    issues = validate_action(a)
    if issues:
        first = issues[0]
        token = first.split(":", 1)[0]
        raise fail(token if _GENERATOR_NAME.match(token) else "generators", "; ".join(issues))
    return a


# ---------------------------------------------------------------------------
# File I/O
# ---------------------------------------------------------------------------

def load_action(path: Union[str, Path], t: int = 1, rational: Optional[bool] = None) -> MPAction:
    """Loads, validates and caches *t* words of an action file."""
    file_path = Path(path)
    try:
        text = file_path.read_text(encoding="utf-8")
    except OSError as e:
        raise ActionFileError(f"{file_path}:0: cannot read file ({e})") from e
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ActionFileError(f"{file_path}:{e.lineno}: invalid JSON ({e.msg})") from e
    return action_from_json(doc, t=t, rational=rational, source=str(file_path), text=text)


def save_action(a: MPAction, path: Union[str, Path]) -> None:
    file_path = Path(path)
    file_path.parent.mkdir(parents=True, exist_ok=True)
    file_path.write_text(json.dumps(action_to_json(a), indent=2) + "\n", encoding="utf-8")
