"""Deterministic JSON emission with a fixed float format.

Artifact files must be byte-identical across runs with the same seed, so
floats are written as format(x, '.16e'): 17 significant digits, which
round-trips any IEEE-754 double exactly. The stdlib encoder would use repr
(shortest round-trip form), whose width varies; here every float has a fixed
shape. Parsing stays plain json.loads.
"""

from __future__ import annotations

import json
import math
from typing import Any


def format_float(x: float) -> str:
    if not math.isfinite(x):
        raise ValueError("non-finite float in artifact output")
    return format(float(x), ".16e")


def dumps(obj: Any) -> str:
    """Serialize to compact JSON with the fixed float format."""
    out: list[str] = []
    _emit(obj, out)
    return "".join(out)


def _emit(obj: Any, out: list[str]) -> None:
    # bool check must precede int: bool is an int subclass.
    if obj is None or isinstance(obj, (str, bool)):
        out.append(json.dumps(obj))
    elif isinstance(obj, int):
        out.append(str(obj))
    elif isinstance(obj, float):
        out.append(format_float(obj))
    elif isinstance(obj, (list, tuple)):
        out.append("[")
        for i, item in enumerate(obj):
            if i:
                out.append(",")
            _emit(item, out)
        out.append("]")
    elif isinstance(obj, dict):
        out.append("{")
        for i, (key, value) in enumerate(obj.items()):
            if i:
                out.append(",")
            if not isinstance(key, str):
                raise TypeError(f"JSON object keys must be str, got {type(key)!r}")
            out.append(json.dumps(key))
            out.append(":")
            _emit(value, out)
        out.append("}")
    else:
        raise TypeError(f"cannot serialize {type(obj)!r}")
