import hashlib
import json
import re
import typing as t
from fractions import Fraction

_FRACTION_PATTERN = re.compile(r"^\s*[+-]?\d+\s*/\s*\d+\s*$")


def canonical_json(obj: t.Any) -> str:
    """Compact, key-sorted JSON used for content hashes."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def content_hash(obj: t.Any) -> str:
    """sha256 of the canonical JSON form of *obj*."""
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()


def parse_weight(value: t.Any, rational: bool) -> t.Union[float, Fraction]:
    """
    Parses a weight given as a JSON number or a string such as "1/3" or "0.25".
    Rational mode keeps the decimal text exact (Fraction("0.1") == 1/10).
    """
    if isinstance(value, bool):
        raise ValueError(f"weight {value!r} is not a number")
    if isinstance(value, (int, float)):
        return Fraction(str(value)) if rational else float(value)
    if isinstance(value, str):
        text = value.strip()
        if _FRACTION_PATTERN.match(text) or re.match(r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$", text):
            exact = Fraction(text.replace(" ", ""))
            return exact if rational else float(exact)
    raise ValueError(f"weight {value!r} is neither a number nor a 'p/q' string")


def format_weight(value: t.Union[float, Fraction]) -> t.Union[float, str]:
    """JSON form of a weight: rationals become 'p/q' strings, floats stay numbers."""
    if isinstance(value, Fraction):
        return str(value)
    return float(value)
