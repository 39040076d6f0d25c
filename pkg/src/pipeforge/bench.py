"""Batch protocol: run each task, grade submissions against sealed truth,
aggregate normalized scores.

Per-task failures are scored zero and never abort the batch. Above-median
and medal columns appear only when an external thresholds file supplies the
leaderboard numbers; without one those columns are omitted.
"""

from __future__ import annotations

import json
from pathlib import Path

from . import canonical, evaluation, tabular
from .config import RunConfig
from .errors import EngineError, UsageError
from .runner import run_task
from .sandbox import unseal_read
from .types import MetricDirection

BENCH_REPORT = "bench_report.json"


def grade_submission(
    submission_path: Path,
    truth_path: Path,
    metric_id: str,
) -> float:
    """Raw score of a submission against sealed truth, joined on the id column."""
    truth_text = unseal_read(truth_path)
    truth_rows = _parse_table_text(truth_text)
    submission_rows = _parse_table_file(submission_path)
    t_header, t_body = truth_rows
    s_header, s_body = submission_rows
    id_col = t_header[0]
    target_col = t_header[1]
    if id_col not in s_header:
        raise EngineError(f"submission lacks the id column {id_col!r}")
    pred_col = next((c for c in s_header if c != id_col), None)
    if pred_col is None:
        raise EngineError("submission lacks a prediction column")
    s_id, s_pred = s_header.index(id_col), s_header.index(pred_col)
    predictions = {row[s_id]: row[s_pred] for row in s_body}
    truths, preds = [], []
    for row in t_body:
        rid = row[0]
        if rid not in predictions:
            raise EngineError(f"submission is missing id {rid!r}")
        truths.append(row[1])
        preds.append(predictions[rid])
    return evaluation.compute_metric(metric_id, truths, preds)


def _parse_table_text(text: str):
    import io

    records = list(tabular.iter_records(io.StringIO(text)))
    header = [f.value for f in records[0]]
    body = [[f.value for f in rec] for rec in records[1:] if len(rec) == len(header)]
    return header, body


def _parse_table_file(path: Path):
    return _parse_table_text(path.read_text(encoding="utf-8"))


def _task_metric(run_dir: Path) -> str:
    summary_path = run_dir / "summary.json"
    if summary_path.exists():
        return json.loads(summary_path.read_text(encoding="utf-8")).get(
            "optimization_metric", "accuracy"
        )
    return "accuracy"


def _compare(direction: MetricDirection, score: float, threshold: float) -> bool:
    if direction is MetricDirection.LOWER_BETTER:
        return score <= threshold
    return score >= threshold


def run_bench(
    task_dirs: list[Path],
    out_root: Path,
    config: RunConfig,
    thresholds_path: Path | None = None,
) -> dict:
    """Run every task, grade, and aggregate. Returns the batch report."""
    if not task_dirs:
        raise UsageError("bench needs at least one task directory")
    out_root = Path(out_root)
    out_root.mkdir(parents=True, exist_ok=True)
    thresholds = {}
    if thresholds_path is not None:
        thresholds = json.loads(Path(thresholds_path).read_text(encoding="utf-8"))

    per_task = []
    normalized_scores = []
    valid_count = 0
    for task_dir in task_dirs:
        task_dir = Path(task_dir)
        name = task_dir.name
        run_dir = out_root / name
        entry: dict = {"task": name, "run_dir": str(run_dir)}
        raw = None
        normalized = None
        try:
            outcome = run_task(task_dir, run_dir, config)
            entry["valid"] = outcome.valid
            truth = task_dir / "truth" / "truth.csv"
            if outcome.valid and truth.exists():
                metric_id = _task_metric(run_dir)
                raw = grade_submission(run_dir / "submission.csv", truth, metric_id)
                normalized = evaluation.normalize_for_metric(metric_id, raw, failed=False)
                entry["metric"] = metric_id
            elif outcome.valid:
                entry["note"] = "no sealed truth; scored as valid but ungraded"
                normalized = None
            else:
                entry["failure"] = outcome.report.get("failure")
                normalized = evaluation.normalize_for_metric("accuracy", None, failed=True)
        except EngineError as exc:
            entry["valid"] = False
            entry["failure"] = {"code": exc.code, "message": str(exc)}
            normalized = evaluation.normalize_for_metric("accuracy", None, failed=True)

        if entry.get("valid"):
            valid_count += 1
        entry["raw_score"] = raw
        if normalized is not None:
            entry["normalized"] = normalized.to_dict()
            normalized_scores.append(normalized)
        telemetry_path = run_dir / "telemetry.json"
        if telemetry_path.exists():
            entry["telemetry"] = json.loads(telemetry_path.read_text(encoding="utf-8"))
        _apply_thresholds(entry, thresholds.get(name), raw)
        per_task.append(entry)

    report = {
        "tasks": per_task,
        "n_tasks": len(task_dirs),
        "valid_fraction": valid_count / len(task_dirs),
        "aps": evaluation.aps(normalized_scores) if normalized_scores else None,
    }
    if thresholds:
        graded = [t for t in per_task if "above_median" in t]
        if graded:
            report["above_median_fraction"] = sum(
                1 for t in graded if t["above_median"]
            ) / len(graded)
            report["any_medal_fraction"] = sum(
                1 for t in graded if t.get("medal")
            ) / len(graded)
    canonical.dump_path(report, out_root / BENCH_REPORT)
    return report


def _apply_thresholds(entry: dict, spec: dict | None, raw: float | None) -> None:
    if not spec or raw is None:
        return
    from . import registry

    info = registry.resolve(entry.get("metric", "accuracy"))
    direction = info.direction if info else MetricDirection.HIGHER_BETTER
    if "median" in spec:
        entry["above_median"] = _compare(direction, raw, spec["median"])
    medal = None
    for name in ("gold", "silver", "bronze"):
        if name in spec and _compare(direction, raw, spec[name]):
            medal = name
            break
    entry["medal"] = medal


def format_table(report: dict) -> str:
    """Plain-text summary table for terminal output."""
    lines = []
    header = f"{'task':<28} {'valid':<6} {'raw':>10} {'P_norm':>8}"
    lines.append(header)
    lines.append("-" * len(header))
    for entry in report["tasks"]:
        raw = entry.get("raw_score")
        norm = entry.get("normalized", {}).get("value") if entry.get("normalized") else None
        lines.append(
            f"{entry['task']:<28} {str(entry.get('valid', False)):<6} "
            f"{raw if raw is not None else '-':>10} "
            f"{f'{norm:.4f}' if norm is not None else '-':>8}"
        )
    lines.append("-" * len(header))
    aps_value = report.get("aps")
    aps_text = f"{aps_value:.4f}" if aps_value is not None else "n/a"
    lines.append(f"valid: {report['valid_fraction']:.0%}   APS: {aps_text}")
    return "\n".join(lines)
