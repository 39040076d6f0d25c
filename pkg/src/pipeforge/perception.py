"""Grounding: parse the task description, profile the raw data.

The description analyzer is the only LLM consumer here; everything measured
about the data comes from actually reading the files. Submission headers and
file roles are parsed natively for the same reason: they are data, not
language.
"""

from __future__ import annotations

import json
import re
from pathlib import Path

import numpy as np

from . import registry, tabular
from .errors import AnalyzerMalformed, EmptyDataset, NoTarget
from .gateway import AgentRole, Gateway, LlmRequest
from .types import (
    ColumnProfile,
    FileEntry,
    MetaFeatures,
    MetricDirection,
    ObjectiveKind,
    SubmissionFormat,
    TaskSpec,
    TaskSummary,
    UNKNOWN,
)

SAMPLE_ROWS_DEFAULT = 50_000
CORRELATION_TOP_K = 20
CORRELATION_MAX_COLUMNS = 30

# Column-name signals for target ranking; ids are never candidates.
_TARGET_NAMES = {"target", "label", "class", "y", "outcome", "response", "rating", "score"}
_ID_RE = re.compile(r"^(id|index|.*_id|id_.*)$", re.IGNORECASE)

_ANALYZER_SYSTEM = (
    "You read a machine-learning task description and report its semantics "
    "as JSON with keys: objective_kind (classification|regression|multilabel|"
    "ranking|unknown), optimization_metric (metric name or \"unknown\"), "
    "metric_direction (higher_better|lower_better|bounded_pm1|null), "
    "target_column (name or null). Reply with only the JSON object."
)


def classify_file_role(name: str) -> str:
    lower = Path(name).name.lower()
    if "sample_submission" in lower or "samplesubmission" in lower:
        return "sample_submission"
    if "train" in lower:
        return "train"
    if "test" in lower:
        return "test"
    if "label" in lower:
        return "labels"
    return "aux"


def _list_files(data_root: Path) -> list[Path]:
    return sorted(
        p for p in Path(data_root).rglob("*") if p.is_file() and not p.name.startswith(".")
    )


def _read_submission_format(sample_path: Path) -> SubmissionFormat | None:
    scan = tabular.scan_table(sample_path, sample_rows=1)
    if len(scan.header) < 2:
        return None
    return SubmissionFormat(id_column=scan.header[0], columns=tuple(scan.header))


def _extract_json(text: str) -> dict:
    """Pull the first JSON object out of a completion, fenced or bare."""
    stripped = text.strip()
    fenced = re.search(r"```[^\n]*\n(.*?)```", stripped, re.DOTALL)
    if fenced:
        stripped = fenced.group(1).strip()
    start = stripped.find("{")
    if start < 0:
        raise ValueError("no JSON object found")
    depth = 0
    for i, ch in enumerate(stripped[start:], start):
        if ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                return json.loads(stripped[start : i + 1])
    raise ValueError("unbalanced JSON object")


def analyze_description(spec: TaskSpec, gw: Gateway, *,
                        temperature: float = 0.2, max_tokens: int = 2048) -> TaskSummary:
    """Build the task summary; undetermined fields stay `unknown`.

    Stripped mode (empty or zero-knowledge description) skips the LLM
    entirely: there is nothing to read, so every semantic field starts
    unknown and is back-filled from the data profile later.
    """
    file_map = {
        str(p.relative_to(spec.data_root)): classify_file_role(p.name)
        for p in _list_files(Path(spec.data_root))
    }
    submission_format = None
    if spec.submission_sample and Path(spec.submission_sample).exists():
        submission_format = _read_submission_format(Path(spec.submission_sample))
    else:
        for rel, role in file_map.items():
            if role == "sample_submission":
                submission_format = _read_submission_format(Path(spec.data_root) / rel)
                break

    if spec.stripped:
        summary = TaskSummary(file_map=file_map, submission_format=submission_format)
    else:
        req = LlmRequest(
            agent_role=AgentRole.DESCRIPTION_ANALYZER,
            system_prompt=_ANALYZER_SYSTEM,
            user_prompt=f"Task description:\n{spec.description_text}\n\n"
            f"Files: {sorted(file_map)}\n"
            f"Submission header: {list(submission_format.columns) if submission_format else None}",
            temperature=temperature,
            max_tokens=max_tokens,
        )
        resp = gw.complete(req)
        try:
            parsed = _extract_json(resp.text)
        except (ValueError, json.JSONDecodeError) as exc:
            raise AnalyzerMalformed(f"analyzer response unparseable: {exc}", resp.text)
        summary = TaskSummary(
            objective_kind=ObjectiveKind(parsed.get("objective_kind") or UNKNOWN),
            optimization_metric=str(parsed.get("optimization_metric") or UNKNOWN),
            metric_direction=MetricDirection(parsed["metric_direction"])
            if parsed.get("metric_direction")
            else None,
            submission_format=submission_format,
            file_map=file_map,
            target_column=parsed.get("target_column"),
        )

    # A declared metric on the TaskSpec overrides whatever the text said.
    metric = spec.metric_spec or summary.optimization_metric
    info = registry.resolve(metric) if metric != UNKNOWN else None
    if info is not None:
        summary = _replace(summary, optimization_metric=info.metric_id, metric_direction=info.direction)
    elif metric != UNKNOWN and summary.metric_direction is None:
        # Unregistered metric with no declared direction cannot be scored.
        summary = _replace(summary, optimization_metric=UNKNOWN)
    return summary


def _replace(summary: TaskSummary, **kw) -> TaskSummary:
    d = summary.to_dict()
    base = TaskSummary.from_dict(d)
    from dataclasses import replace

    return replace(base, **kw)


def profile_dataset(
    data_root: str | Path,
    sample_rows: int = SAMPLE_ROWS_DEFAULT,
    *,
    seed: int = 0,
    max_classes_abs: int = 20,
    max_classes_frac: float = 0.05,
    row_observer=None,
) -> MetaFeatures:
    """Profile the dataset by reading it: schema, quality, distributions.

    Statistics cover the first `sample_rows` data rows of each table (a
    deterministic sample); row counts are exact via a full scan. Non-tabular
    files contribute manifest entries only.
    """
    if sample_rows <= 0:
        raise ValueError("sample_rows must be positive")
    data_root = Path(data_root)
    files = _list_files(data_root)
    if not files:
        raise EmptyDataset(f"no readable files under {data_root}")

    manifest: list[FileEntry] = []
    scans: dict[str, tabular.TableScan] = {}
    malformed = 0
    for path in files:
        rel = str(path.relative_to(data_root))
        role = classify_file_role(path.name)
        if tabular.is_tabular(path):
            scan = tabular.scan_table(path, sample_rows=sample_rows, row_observer=row_observer)
            scans[rel] = scan
            malformed += scan.malformed_rows
            manifest.append(
                FileEntry(
                    name=rel,
                    size_bytes=path.stat().st_size,
                    extension=path.suffix.lower(),
                    role=role,
                    row_count=scan.row_count,
                    columns=tuple(scan.header),
                )
            )
        else:
            manifest.append(
                FileEntry(
                    name=rel,
                    size_bytes=path.stat().st_size,
                    extension=path.suffix.lower(),
                    role=role,
                )
            )

    primary_rel = _pick_primary_table(manifest)
    columns: tuple[ColumnProfile, ...] = ()
    row_count = 0
    sampled = 0
    target_candidates: tuple[str, ...] = ()
    class_distribution: dict[str, int] = {}
    correlation: tuple[tuple[str, str, float], ...] = ()

    if primary_rel is not None:
        scan = scans[primary_rel]
        row_count = scan.row_count
        sampled = scan.sampled_rows
        columns = tuple(_column_profile(acc, sampled, max_classes_abs, max_classes_frac)
                        for acc in scan.accumulators)
        target_candidates = _rank_targets(scan.header, manifest, columns, sampled)
        if target_candidates:
            top = next(c for c in columns if c.name == target_candidates[0])
            threshold = max(max_classes_abs, int(max_classes_frac * max(row_count, 1)))
            if top.distinct_count <= threshold:
                acc = next(a for a in scan.accumulators if a.name == top.name)
                class_distribution = dict(sorted(acc.counts.items()))
        correlation = _correlations(data_root / primary_rel, columns, sample_rows)

    return MetaFeatures(
        columns=columns,
        row_count=row_count,
        target_candidates=target_candidates,
        class_distribution=class_distribution,
        correlation_pairs=correlation,
        file_manifest=tuple(manifest),
        primary_table=primary_rel,
        malformed_rows=malformed,
        sampled_rows=sampled,
    )


def _pick_primary_table(manifest: list[FileEntry]) -> str | None:
    tables = [f for f in manifest if f.row_count is not None]
    if not tables:
        return None
    trains = [f for f in tables if f.role == "train"]
    pool = trains or tables
    return max(pool, key=lambda f: (f.row_count, f.name)).name


def _column_profile(
    acc, sampled: int, max_classes_abs: int, max_classes_frac: float
) -> ColumnProfile:
    dtype = acc.dtype
    if dtype == "text":
        threshold = max(max_classes_abs, int(max_classes_frac * max(sampled, 1)))
        if 0 < len(acc.distinct) <= threshold:
            dtype = "categorical"
    top = sorted(acc.counts.items(), key=lambda kv: (-kv[1], kv[0]))[:10]
    total = acc.nulls + acc.non_nulls
    return ColumnProfile(
        name=acc.name,
        dtype=dtype,
        null_rate=acc.nulls / total if total else 0.0,
        distinct_count=len(acc.distinct),
        sample_values=tuple(acc.samples),
        minimum=acc.minimum,
        maximum=acc.maximum,
        mean=acc.mean(),
        std=acc.std(),
        top_categories=tuple(top),
    )


def _rank_targets(
    header: list[str],
    manifest: list[FileEntry],
    columns: tuple[ColumnProfile, ...],
    sampled: int,
) -> tuple[str, ...]:
    test_columns: set[str] = set()
    has_test = False
    for entry in manifest:
        if entry.role == "test" and entry.columns:
            has_test = True
            test_columns.update(entry.columns)
    profiles = {c.name: c for c in columns}

    def name_score(name: str) -> int:
        lower = name.lower()
        if lower in _TARGET_NAMES:
            return 2
        if "target" in lower or "label" in lower:
            return 1
        return 0

    candidates = []
    for pos, name in enumerate(header):
        if _ID_RE.match(name):
            continue
        if has_test:
            if name in test_columns:
                continue
        elif name_score(name) == 0:
            continue
        profile = profiles[name]
        distinct_ratio = profile.distinct_count / max(sampled, 1)
        candidates.append((-name_score(name), distinct_ratio, -pos, name))
    candidates.sort()
    return tuple(name for *_, name in candidates)


def _correlations(
    path: Path, columns: tuple[ColumnProfile, ...], sample_rows: int
) -> tuple[tuple[str, str, float], ...]:
    numeric = [c.name for c in columns if c.dtype in ("int", "real")][:CORRELATION_MAX_COLUMNS]
    if len(numeric) < 2:
        return ()
    scan = tabular.scan_table(path, sample_rows=sample_rows)
    index = {name: i for i, name in enumerate(scan.header)}
    rows: list[list[float]] = []
    with open(path, "r", encoding="utf-8", errors="replace", newline="") as fh:
        records = tabular.iter_records(fh)
        next(records, None)  # header
        for n, rec in enumerate(records):
            if n >= sample_rows or len(rec) != len(scan.header):
                if n >= sample_rows:
                    break
                continue
            row = []
            for name in numeric:
                fval = rec[index[name]]
                kind = tabular.classify_value(fval)
                row.append(float(fval.value) if kind in ("int", "real") else np.nan)
            rows.append(row)
    if len(rows) < 3:
        return ()
    matrix = np.asarray(rows)
    pairs = []
    for i in range(len(numeric)):
        for j in range(i + 1, len(numeric)):
            mask = ~(np.isnan(matrix[:, i]) | np.isnan(matrix[:, j]))
            if mask.sum() < 3:
                continue
            a, b = matrix[mask, i], matrix[mask, j]
            if a.std() == 0 or b.std() == 0:
                continue
            r = float(np.corrcoef(a, b)[0, 1])
            pairs.append((numeric[i], numeric[j], r))
    pairs.sort(key=lambda p: (-abs(p[2]), p[0], p[1]))
    return tuple(pairs[:CORRELATION_TOP_K])


def infer_semantics(
    summary: TaskSummary,
    f: MetaFeatures,
    *,
    max_classes_abs: int = 20,
    max_classes_frac: float = 0.05,
) -> TaskSummary:
    """Back-fill `unknown` fields from the measured profile. Idempotent;
    never overwrites a field the description already determined."""
    if not f.columns and not f.file_manifest:
        raise EmptyDataset("profile is empty")

    target = summary.target_column
    if not target or target == UNKNOWN:
        if not f.target_candidates:
            raise NoTarget(
                "no target candidate: train and test schemas are identical and "
                "no column name suggests a label"
            )
        target = f.target_candidates[0]

    objective = summary.objective_kind
    if objective is ObjectiveKind.UNKNOWN:
        profile = f.column(target)
        if profile is None:
            raise NoTarget(f"target column {target!r} has no profile")
        threshold = max(max_classes_abs, int(max_classes_frac * max(f.row_count, 1)))
        if profile.dtype in ("categorical", "text", "bool") or profile.distinct_count <= threshold:
            objective = ObjectiveKind.CLASSIFICATION
        else:
            objective = ObjectiveKind.REGRESSION

    metric = summary.optimization_metric
    direction = summary.metric_direction
    if metric == UNKNOWN:
        metric = registry.default_metric(objective)
        info = registry.resolve(metric)
        direction = info.direction if info else None

    submission_format = summary.submission_format
    if submission_format is None:
        id_col = _infer_id_column(f)
        submission_format = SubmissionFormat(id_column=id_col, columns=(id_col, target))

    from dataclasses import replace

    return replace(
        summary,
        objective_kind=objective,
        optimization_metric=metric,
        metric_direction=direction,
        submission_format=submission_format,
        target_column=target,
    )


def _infer_id_column(f: MetaFeatures) -> str:
    for entry in f.file_manifest:
        if entry.role == "test" and entry.columns:
            for name in entry.columns:
                if _ID_RE.match(name):
                    return name
            return entry.columns[0]
    for name in f.column_names:
        if _ID_RE.match(name):
            return name
    return "id"
