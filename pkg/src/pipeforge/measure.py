"""Artifact measurement: observed schemas for files a stage produced.

This is the orchestrator-side implementation; the execution-side runner shim
carries a twin of this logic and both are pinned to byte-identical reports by
golden tests. Change one only in lockstep with the other.

Dtype mapping to the canonical vocabulary:
  tables       quoted field -> text; unquoted by parse: int, real, bool,
               datetime (ISO-8601), else text
  dense arrays i/u -> int, f -> real, b -> bool, M -> datetime, else text
Per-value statistics read at most `sample_limit` rows; row counts are exact.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .canonical import canonical_number
from .contracts import (
    ArtifactKind,
    ArtifactObservation,
    ArtifactSpec,
    ColumnObservation,
    ContractReport,
    InterfaceContract,
    build_report,
)
from .tabular import scan_table
from .types import Stage

DEFAULT_SAMPLE_LIMIT = 2_000


def _numeric_bounds(minimum: float | None, maximum: float | None):
    lo = canonical_number(minimum) if minimum is not None else None
    hi = canonical_number(maximum) if maximum is not None else None
    return lo, hi


def measure_table(path: Path, name: str, sample_limit: int) -> ArtifactObservation:
    scan = scan_table(path, sample_rows=sample_limit)
    columns = []
    for acc in scan.accumulators:
        lo, hi = _numeric_bounds(acc.minimum, acc.maximum)
        columns.append(
            ColumnObservation(
                name=acc.name,
                dtype=acc.dtype,
                null_count=acc.nulls,
                value_min=lo,
                value_max=hi,
            )
        )
    return ArtifactObservation(
        name=name,
        status="ok",
        kind=ArtifactKind.TABLE,
        columns=tuple(columns),
        row_count=scan.row_count,
    )


_NPY_KIND_MAP = {"i": "int", "u": "int", "f": "real", "b": "bool", "M": "datetime"}


def measure_dense_array(path: Path, name: str) -> ArtifactObservation:
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
    lo, hi = _numeric_bounds(value_min, value_max)
    return ArtifactObservation(
        name=name,
        status="ok",
        kind=ArtifactKind.DENSE_ARRAY,
        columns=(ColumnObservation("values", dtype, null_count, lo, hi),),
        row_count=int(arr.shape[0]) if arr.ndim else None,
        shape=tuple(int(d) for d in arr.shape),
    )


def measure_loader_config(path: Path, name: str) -> ArtifactObservation:
    with open(path, "r", encoding="utf-8") as fh:
        config = json.load(fh)
    if not isinstance(config, dict):
        return ArtifactObservation(name=name, status="unreadable", detail="not a JSON object")
    detail = ""
    if isinstance(config.get("batch_size"), int):
        detail = f"batch_size={config['batch_size']}"
    return ArtifactObservation(
        name=name, status="ok", kind=ArtifactKind.LOADER_CONFIG, detail=detail
    )


def measure_file(path: Path, name: str) -> ArtifactObservation:
    return ArtifactObservation(
        name=name,
        status="ok",
        kind=ArtifactKind.FILE_PATH,
        detail=f"size={path.stat().st_size}",
    )


def measure_artifact(
    spec: ArtifactSpec, artifacts_dir: Path, sample_limit: int = DEFAULT_SAMPLE_LIMIT
) -> ArtifactObservation:
    """Measure one declared artifact; never raises on bad files."""
    path = artifacts_dir / spec.filename
    if not path.exists():
        return ArtifactObservation(name=spec.name, status="missing")
    try:
        if spec.kind is ArtifactKind.TABLE:
            return measure_table(path, spec.name, sample_limit)
        if spec.kind is ArtifactKind.DENSE_ARRAY:
            return measure_dense_array(path, spec.name)
        if spec.kind is ArtifactKind.LOADER_CONFIG:
            return measure_loader_config(path, spec.name)
        return measure_file(path, spec.name)
    except Exception as exc:  # unreadable is a verdict, not a crash
        return ArtifactObservation(
            name=spec.name, status="unreadable", detail=f"{type(exc).__name__}: {exc}"
        )


def measure_stage(
    contract: InterfaceContract,
    artifacts_dir: Path,
    stage: Stage,
    sample_limit: int = DEFAULT_SAMPLE_LIMIT,
) -> ContractReport:
    """Measure every declared artifact and compute the stage's verdicts."""
    observations = {}
    for spec in contract.artifacts:
        observations[spec.name] = measure_artifact(spec, artifacts_dir, sample_limit)
    return build_report(contract, observations, stage)
