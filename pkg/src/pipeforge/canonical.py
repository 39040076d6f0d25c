"""Canonical JSON encoding: stable key order and number formatting.

Every artifact the engine writes to disk (contracts, blueprints, reports)
goes through this module so that independent producers of the same logical
object emit byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
import math
from typing import Any

SCHEMA_VERSION = 1


def canonical_number(x: float) -> float | int:
    """Normalize a float to a fixed 12-significant-digit representation.

    Integral floats stay floats (0.25 -> 0.25, 2.0 -> 2.0); the rounding only
    exists so that two independent measurements of the same data cannot differ
    in the last ulp and break byte-level report comparison.
    """
    if isinstance(x, bool) or isinstance(x, int):
        return x
    if math.isnan(x):
        raise ValueError("NaN is not representable in canonical JSON")
    if math.isinf(x):
        raise ValueError("Infinity is not representable in canonical JSON")
    return float(f"{x:.12g}")


def _normalize(obj: Any) -> Any:
    if obj is None or isinstance(obj, (str, bool, int)):
        return obj
    if isinstance(obj, float):
        return canonical_number(obj)
    if isinstance(obj, dict):
        return {str(k): _normalize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_normalize(v) for v in obj]
    raise TypeError(f"not canonically serializable: {type(obj).__name__}")


def dumps(obj: Any) -> str:
    """Serialize to the canonical text form (sorted keys, 2-space indent)."""
    return json.dumps(_normalize(obj), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def dump_path(obj: Any, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(obj))


def loads(text: str) -> Any:
    return json.loads(text)


def load_path(path) -> Any:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def digest(obj: Any) -> str:
    """SHA-256 hex digest of the canonical form; used to pin contract identity."""
    return hashlib.sha256(dumps(obj).encode("utf-8")).hexdigest()
