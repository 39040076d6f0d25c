"""Canonical JSON encoding, matching the orchestrator's byte for byte.

Sorted keys, two-space indent, trailing newline, and floats normalized to 12
significant digits. Reports from this shim and from the orchestrator-side
verifier must compare byte-equal on identical inputs; any change here is a
format break.
"""

from __future__ import annotations

import json
import math
from typing import Any

SCHEMA_VERSION = 1


def canonical_number(x: float) -> float | int:
    if isinstance(x, bool) or isinstance(x, int):
        return x
    if math.isnan(x) or math.isinf(x):
        raise ValueError("non-finite numbers are not representable")
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
    return json.dumps(_normalize(obj), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def dump_path(obj: Any, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(obj))
