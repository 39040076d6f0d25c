"""Artifact measurement and contract verdicts, execution side.

Mirrors the orchestrator's verifier exactly: same dtype mapping, same verdict
order, same canonical numbers. Per-value statistics read at most
`sample_limit` rows; row counts are exact. Changes must land on both sides
together, guarded by the shared golden reports.
"""

from __future__ import annotations

import json
import re
from pathlib import Path

import numpy as np

from .canonical import SCHEMA_VERSION, canonical_number
from .tabular import classify_value, iter_records, unify_dtypes

DEFAULT_SAMPLE_LIMIT = 2_000

KIND_EXTENSIONS = {
    "table": ".csv",
    "dense_array": ".npy",
    "loader_config": ".json",
    "file_path": "",
}

# Declared dtype -> observed storage dtypes it accepts.
DTYPE_COMPAT = {
    "int": {"int"},
    "real": {"real", "int"},
    "bool": {"bool"},
    "text": {"text"},
    "categorical": {"text", "categorical"},
    "datetime": {"datetime"},
}

_RELATION = re.compile(
    r"^\s*([A-Za-z_][A-Za-z0-9_]*)\.rows\s*==\s*([A-Za-z_][A-Za-z0-9_]*)\.rows\s*$"
)

_NPY_KIND_MAP = {"i": "int", "u": "int", "f": "real", "b": "bool", "M": "datetime"}


def parse_row_relation(expr: str) -> tuple[str, str]:
    m = _RELATION.match(expr)
    if not m:
        raise ValueError(f"unsupported row relation: {expr!r}")
    return m.group(1), m.group(2)


def artifact_filename(spec: dict) -> str:
    return spec["name"] + KIND_EXTENSIONS[spec["kind"]]


def _column_obs(name, dtype, null_count, value_min=None, value_max=None) -> dict:
    return {
        "name": name,
        "dtype": dtype,
        "null_count": null_count,
        "value_min": canonical_number(value_min) if value_min is not None else None,
        "value_max": canonical_number(value_max) if value_max is not None else None,
    }


def _observation(name, status, kind=None, columns=(), row_count=None, shape=None, detail="") -> dict:
    return {
        "name": name,
        "status": status,
        "kind": kind,
        "columns": list(columns),
        "row_count": row_count,
        "shape": list(shape) if shape is not None else None,
        "detail": detail,
    }


def measure_table(path: Path, name: str, sample_limit: int) -> dict:
    with open(path, "r", encoding="utf-8", errors="replace", newline="") as fh:
        records = iter_records(fh)
        try:
            header = [f.value for f in next(records)]
        except StopIteration:
            return _observation(name, "ok", "table", [], 0)
        stats = [
            {"nulls": 0, "dtypes": set(), "min": None, "max": None} for _ in header
        ]
        row_count = 0
        sampled = 0
        for rec in records:
            row_count += 1
            if sampled >= sample_limit or len(rec) != len(header):
                continue
            sampled += 1
            for acc, fval in zip(stats, rec):
                dtype = classify_value(fval)
                if dtype is None:
                    acc["nulls"] += 1
                    continue
                acc["dtypes"].add(dtype)
                if dtype in ("int", "real"):
                    x = float(fval.value)
                    acc["min"] = x if acc["min"] is None else min(acc["min"], x)
                    acc["max"] = x if acc["max"] is None else max(acc["max"], x)
    columns = [
        _column_obs(col, unify_dtypes(acc["dtypes"]), acc["nulls"], acc["min"], acc["max"])
        for col, acc in zip(header, stats)
    ]
    return _observation(name, "ok", "table", columns, row_count)


def measure_dense_array(path: Path, name: str) -> dict:
    arr = np.load(path, allow_pickle=False)
    dtype = _NPY_KIND_MAP.get(arr.dtype.kind, "text")
    null_count = 0
    value_min = value_max = None
    if arr.dtype.kind == "f":
        null_count = int(np.isnan(arr).sum())
        if arr.size > null_count:
            value_min = float(np.nanmin(arr))
            value_max = float(np.nanmax(arr))
    elif arr.dtype.kind in ("i", "u", "b") and arr.size:
        value_min = float(arr.min())
        value_max = float(arr.max())
    return _observation(
        name,
        "ok",
        "dense_array",
        [_column_obs("values", dtype, null_count, value_min, value_max)],
        int(arr.shape[0]) if arr.ndim else None,
        tuple(int(d) for d in arr.shape),
    )


def measure_loader_config(path: Path, name: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        config = json.load(fh)
    if not isinstance(config, dict):
        return _observation(name, "unreadable", detail="not a JSON object")
    detail = ""
    if isinstance(config.get("batch_size"), int):
        detail = f"batch_size={config['batch_size']}"
    return _observation(name, "ok", "loader_config", detail=detail)


def measure_artifact(spec: dict, artifacts_dir: Path, sample_limit: int) -> dict:
    path = artifacts_dir / artifact_filename(spec)
    if not path.exists():
        return _observation(spec["name"], "missing")
    try:
        kind = spec["kind"]
        if kind == "table":
            return measure_table(path, spec["name"], sample_limit)
        if kind == "dense_array":
            return measure_dense_array(path, spec["name"])
        if kind == "loader_config":
            return measure_loader_config(path, spec["name"])
        return _observation(
            spec["name"], "ok", "file_path", detail=f"size={path.stat().st_size}"
        )
    except Exception as exc:
        return _observation(
            spec["name"], "unreadable", detail=f"{type(exc).__name__}: {exc}"
        )


def _verdict(artifact, constraint, passed, detail="") -> dict:
    return {"artifact": artifact, "constraint": constraint, "passed": passed, "detail": detail}


def _find_column(obs: dict, name: str) -> dict | None:
    for c in obs["columns"]:
        if c["name"] == name:
            return c
    return None


def _stage_obligations(contract: dict, stage: str) -> list[dict]:
    if stage in ("preprocessing", "modeling"):
        return [
            a for a in contract["artifacts"]
            if a.get("produced_by", "preprocessing") == stage
        ]
    return list(contract["artifacts"])


def _relation_in_scope(contract: dict, spec: dict, stage: str) -> bool:
    if not spec.get("row_relation"):
        return False
    if stage in ("assembled", "ensemble"):
        return True
    producers = set()
    by_name = {a["name"]: a for a in contract["artifacts"]}
    for ref in parse_row_relation(spec["row_relation"]):
        producers.add(by_name[ref].get("produced_by", "preprocessing"))
    if stage == "preprocessing":
        return producers == {"preprocessing"}
    return True


def compute_verdicts(contract: dict, observations: dict, stage: str) -> list[dict]:
    """Identical constraint evaluation and ordering to the orchestrator side."""
    verdicts: list[dict] = []
    obligations = _stage_obligations(contract, stage)
    for spec in obligations:
        obs = observations.get(spec["name"])
        present = obs is not None and obs["status"] == "ok"
        if not present:
            status = obs["status"] if obs is not None else "missing"
            verdicts.append(_verdict(spec["name"], "present", False, status))
            continue
        verdicts.append(_verdict(spec["name"], "present", True))
        if obs["kind"] != spec["kind"]:
            verdicts.append(
                _verdict(spec["name"], "kind", False,
                         f"declared {spec['kind']}, observed {obs['kind'] or 'none'}")
            )
            continue
        verdicts.append(_verdict(spec["name"], "kind", True))
        for col in spec.get("columns", []):
            seen = _find_column(obs, col["name"])
            if seen is None:
                verdicts.append(_verdict(spec["name"], f"column:{col['name']}", False, "not found"))
                continue
            verdicts.append(_verdict(spec["name"], f"column:{col['name']}", True))
            declared_dtype = col.get("dtype")
            if declared_dtype is not None:
                ok = seen["dtype"] in DTYPE_COMPAT[declared_dtype]
                detail = "" if ok else f"declared {declared_dtype}, observed {seen['dtype']}"
                verdicts.append(_verdict(spec["name"], f"dtype:{col['name']}", ok, detail))
            if not col.get("nullable", True):
                ok = seen["null_count"] == 0
                detail = "" if ok else f"{seen['null_count']} null(s)"
                verdicts.append(_verdict(spec["name"], f"not_null:{col['name']}", ok, detail))
        if spec.get("shape") is not None:
            declared_shape = list(spec["shape"])
            observed = obs["shape"]
            if observed is None and obs["row_count"] is not None:
                observed = [obs["row_count"], len(obs["columns"])]
            if observed is None or len(observed) != len(declared_shape):
                verdicts.append(
                    _verdict(spec["name"], "shape", False,
                             f"declared {declared_shape}, observed {list(observed) if observed else None}")
                )
            else:
                mismatch = [
                    (want, got)
                    for want, got in zip(declared_shape, observed)
                    if want is not None and want != got
                ]
                detail = "" if not mismatch else f"declared {declared_shape}, observed {list(observed)}"
                verdicts.append(_verdict(spec["name"], "shape", not mismatch, detail))
        for col_name in sorted(spec.get("value_ranges", {})):
            lo, hi = spec["value_ranges"][col_name]
            seen = _find_column(obs, col_name)
            if seen is None or seen["value_min"] is None or seen["value_max"] is None:
                verdicts.append(
                    _verdict(spec["name"], f"value_range:{col_name}", False, "no numeric observation")
                )
                continue
            ok = seen["value_min"] >= lo and seen["value_max"] <= hi
            detail = (
                "" if ok
                else f"observed [{seen['value_min']}, {seen['value_max']}] outside [{lo}, {hi}]"
            )
            verdicts.append(_verdict(spec["name"], f"value_range:{col_name}", ok, detail))
        if spec["kind"] == "loader_config" and spec.get("batch_size") is not None:
            ok = obs["detail"] == f"batch_size={spec['batch_size']}"
            verdicts.append(
                _verdict(spec["name"], "batch_size", ok,
                         "" if ok else f"declared batch_size={spec['batch_size']}, "
                                       f"observed {obs['detail'] or 'none'}")
            )
    for spec in obligations:
        if not _relation_in_scope(contract, spec, stage):
            continue
        left, right = parse_row_relation(spec["row_relation"])
        left_obs, right_obs = observations.get(left), observations.get(right)
        left_rows = left_obs["row_count"] if left_obs and left_obs["status"] == "ok" else None
        right_rows = right_obs["row_count"] if right_obs and right_obs["status"] == "ok" else None
        if left_rows is None or right_rows is None:
            verdicts.append(
                _verdict(spec["name"], f"row_relation:{spec['row_relation']}", False,
                         "row counts unavailable")
            )
            continue
        ok = left_rows == right_rows
        detail = "" if ok else f"{left}.rows={left_rows}, {right}.rows={right_rows}"
        verdicts.append(_verdict(spec["name"], f"row_relation:{spec['row_relation']}", ok, detail))
    return verdicts


def build_report(contract: dict, artifacts_dir: Path, stage: str, sample_limit: int) -> dict:
    """Measure every declared artifact and judge the stage's obligations."""
    observations = {
        spec["name"]: measure_artifact(spec, artifacts_dir, sample_limit)
        for spec in contract["artifacts"]
    }
    ordered = [
        observations.get(spec["name"], _observation(spec["name"], "missing"))
        for spec in contract["artifacts"]
    ]
    return {
        "schema_version": SCHEMA_VERSION,
        "stage": stage,
        "observations": ordered,
        "verdicts": compute_verdicts(contract, observations, stage),
    }
