"""Scoring: validation metrics, track selection, ensembling, normalization.

Metric implementations are the engine's own (they grade generated pipelines,
so they cannot depend on anything a pipeline might import and monkey with).
Normalization follows the benchmark's published rules exactly: identity for
bounded higher-is-better scores, exp(-x) for unbounded losses, (x+1)/2 for
[-1,1] metrics, and a hard zero for execution failures.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence

import numpy as np

from . import registry, tabular
from .contracts import InterfaceContract
from .errors import ApsEmpty, NormalizationDomain, NoValidPipeline, ScoringFailed
from .types import (
    GeneratedModule,
    MetricDirection,
    NormalizationRule,
    NormalizedScore,
    RunStatus,
    Stage,
    TRACK_ORDER,
    TrackRun,
)

ENSEMBLE_STRATEGIES = ("voting", "averaging", "stacking")


# ---------------------------------------------------------------------------
# Metric implementations


def accuracy(y_true: Sequence, y_pred: Sequence) -> float:
    _check_lengths(y_true, y_pred)
    hits = sum(1 for t, p in zip(y_true, y_pred) if str(t) == str(p))
    return hits / len(y_true)


def f1(y_true: Sequence, y_pred: Sequence, positive="1") -> float:
    """Binary F1 with the positive class compared as text."""
    _check_lengths(y_true, y_pred)
    pos = str(positive)
    tp = sum(1 for t, p in zip(y_true, y_pred) if str(p) == pos and str(t) == pos)
    fp = sum(1 for t, p in zip(y_true, y_pred) if str(p) == pos and str(t) != pos)
    fn = sum(1 for t, p in zip(y_true, y_pred) if str(p) != pos and str(t) == pos)
    if 2 * tp + fp + fn == 0:
        return 0.0
    return 2 * tp / (2 * tp + fp + fn)


def auc(y_true: Sequence, y_score: Sequence) -> float:
    """ROC AUC via midranks; equivalent to the Mann-Whitney statistic."""
    _check_lengths(y_true, y_score)
    truth = np.asarray([float(t) for t in y_true])
    scores = np.asarray([float(s) for s in y_score])
    n_pos = int((truth == 1).sum())
    n_neg = int((truth == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise ScoringFailed("auc needs both classes present")
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores), dtype=float)
    sorted_scores = scores[order]
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    rank_sum = ranks[truth == 1].sum()
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def logloss(y_true: Sequence, y_prob: Sequence, eps: float = 1e-15) -> float:
    _check_lengths(y_true, y_prob)
    total = 0.0
    for t, p in zip(y_true, y_prob):
        p = min(max(float(p), eps), 1.0 - eps)
        total += -math.log(p) if float(t) == 1.0 else -math.log(1.0 - p)
    return total / len(y_true)


def mae(y_true: Sequence, y_pred: Sequence) -> float:
    _check_lengths(y_true, y_pred)
    return sum(abs(float(t) - float(p)) for t, p in zip(y_true, y_pred)) / len(y_true)


def rmse(y_true: Sequence, y_pred: Sequence) -> float:
    _check_lengths(y_true, y_pred)
    return math.sqrt(
        sum((float(t) - float(p)) ** 2 for t, p in zip(y_true, y_pred)) / len(y_true)
    )


def quadratic_weighted_kappa(y_true: Sequence, y_pred: Sequence) -> float:
    """Cohen's kappa with quadratic disagreement weights over the confusion
    matrix; labels are treated as ordinal integers."""
    _check_lengths(y_true, y_pred)
    t = [int(float(v)) for v in y_true]
    p = [int(float(v)) for v in y_pred]
    labels = sorted(set(t) | set(p))
    k = len(labels)
    if k < 2:
        return 0.0
    index = {lab: i for i, lab in enumerate(labels)}
    observed = np.zeros((k, k))
    for ti, pi in zip(t, p):
        observed[index[ti], index[pi]] += 1
    n = len(t)
    row = observed.sum(axis=1)
    col = observed.sum(axis=0)
    expected = np.outer(row, col) / n
    weights = np.zeros((k, k))
    for i in range(k):
        for j in range(k):
            weights[i, j] = (i - j) ** 2 / (k - 1) ** 2
    denom = float((weights * expected).sum())
    if denom == 0.0:
        return 1.0
    return 1.0 - float((weights * observed).sum()) / denom


def matthews_corr(y_true: Sequence, y_pred: Sequence) -> float:
    _check_lengths(y_true, y_pred)
    t = [str(v) for v in y_true]
    p = [str(v) for v in y_pred]
    tp = sum(1 for a, b in zip(t, p) if a == "1" and b == "1")
    tn = sum(1 for a, b in zip(t, p) if a == "0" and b == "0")
    fp = sum(1 for a, b in zip(t, p) if a == "0" and b == "1")
    fn = sum(1 for a, b in zip(t, p) if a == "1" and b == "0")
    denom = math.sqrt((tp + fp) * (tp + fn) * (tn + fp) * (tn + fn))
    if denom == 0.0:
        return 0.0
    return (tp * tn - fp * fn) / denom


def _check_lengths(a: Sequence, b: Sequence) -> None:
    if len(a) == 0 or len(a) != len(b):
        raise ScoringFailed(f"shape mismatch: {len(a)} truths vs {len(b)} predictions")


METRIC_FUNCTIONS = {
    "accuracy": accuracy,
    "f1": f1,
    "auc": auc,
    "logloss": logloss,
    "mae": mae,
    "rmse": rmse,
    "quadratic_weighted_kappa": quadratic_weighted_kappa,
    "matthews_corr": matthews_corr,
}


def compute_metric(metric_id: str, y_true: Sequence, y_pred: Sequence) -> float:
    info = registry.resolve(metric_id)
    if info is None:
        raise ScoringFailed(f"metric {metric_id!r} not in registry")
    return METRIC_FUNCTIONS[info.metric_id](y_true, y_pred)


# ---------------------------------------------------------------------------
# Validation scoring and selection


def _read_csv_columns(path: Path) -> tuple[list[str], list[list[str]]]:
    scan_rows: list[list[str]] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        records = tabular.iter_records(fh)
        try:
            header = [f.value for f in next(records)]
        except StopIteration:
            raise ScoringFailed(f"empty table: {path}")
        for rec in records:
            if len(rec) != len(header):
                continue
            scan_rows.append([f.value for f in rec])
    return header, scan_rows


def score_validation(run: TrackRun, metric_id: str, artifacts_dir: Path) -> float:
    """Grade held-out predictions against the training targets they index.

    The modeling stage reports (row, prediction) pairs for the rows its
    validation split held out; truth is looked up in the train_target
    artifact by row position, so labels never round-trip through generated
    output.
    """
    preds_path = artifacts_dir / "validation_predictions.csv"
    target_path = artifacts_dir / "train_target.csv"
    if not preds_path.exists() or not target_path.exists():
        raise ScoringFailed("validation predictions or train target artifact missing")
    pred_header, pred_rows = _read_csv_columns(preds_path)
    if "row" not in pred_header or "prediction" not in pred_header:
        raise ScoringFailed("validation predictions need 'row' and 'prediction' columns")
    row_idx = pred_header.index("row")
    pred_idx = pred_header.index("prediction")
    _, target_rows = _read_csv_columns(target_path)
    truths, preds = [], []
    for row in pred_rows:
        try:
            i = int(row[row_idx])
        except ValueError:
            raise ScoringFailed(f"non-integer validation row index: {row[row_idx]!r}")
        if not 0 <= i < len(target_rows):
            raise ScoringFailed(f"validation row {i} outside train target range")
        truths.append(target_rows[i][0])
        preds.append(row[pred_idx])
    value = compute_metric(metric_id, truths, preds)
    run.validation_score = value
    return value


def select_best(runs: Sequence[TrackRun], direction: MetricDirection) -> TrackRun:
    """Best validated track; ties resolve by fixed track-order precedence."""
    validated = [r for r in runs if r.status is RunStatus.VALIDATED]
    if not validated:
        raise NoValidPipeline("no validated pipeline to select from")
    sign = -1.0 if direction is MetricDirection.LOWER_BETTER else 1.0
    precedence = {t: i for i, t in enumerate(TRACK_ORDER)}
    return max(validated, key=lambda r: (sign * r.validation_score, -precedence[r.track]))


# ---------------------------------------------------------------------------
# Normalization


def normalize_score(
    raw: float | None, direction: MetricDirection | None, failed: bool
) -> NormalizedScore:
    """The benchmark's normalization rules, applied strictly.

    Scores outside each rule's stated domain are rejected rather than
    clipped; callers decide whether a domain violation counts as a failure.
    """
    if failed:
        return NormalizedScore(rule=NormalizationRule.FAILURE_ZERO, value=0.0)
    if raw is None:
        raise NormalizationDomain("a non-failed result needs a raw score")
    if direction is MetricDirection.HIGHER_BETTER:
        if not 0.0 <= raw <= 1.0:
            raise NormalizationDomain(
                f"higher-is-better raw score outside [0,1]: {raw}"
            )
        return NormalizedScore(rule=NormalizationRule.IDENTITY, value=float(raw), raw=float(raw))
    if direction is MetricDirection.LOWER_BETTER:
        if raw < 0.0:
            raise NormalizationDomain(f"loss metrics are non-negative, got {raw}")
        return NormalizedScore(
            rule=NormalizationRule.EXP_DECAY, value=math.exp(-raw), raw=float(raw)
        )
    if direction is MetricDirection.BOUNDED_PM1:
        if not -1.0 <= raw <= 1.0:
            raise NormalizationDomain(f"bounded raw score outside [-1,1]: {raw}")
        return NormalizedScore(
            rule=NormalizationRule.BOUNDED_AFFINE, value=(float(raw) + 1.0) / 2.0, raw=float(raw)
        )
    raise NormalizationDomain(f"no normalization rule for direction {direction!r}")


def normalize_for_metric(metric_id: str, raw: float | None, failed: bool) -> NormalizedScore:
    if failed:
        return normalize_score(None, None, failed=True)
    info = registry.resolve(metric_id)
    if info is None:
        raise NormalizationDomain(f"metric {metric_id!r} not in registry")
    return normalize_score(raw, info.direction, failed=False)


def aps(scores: Sequence[NormalizedScore]) -> float:
    """Average performance score: the arithmetic mean of normalized values."""
    if not scores:
        raise ApsEmpty("cannot average zero scores")
    return sum(s.value for s in scores) / len(scores)


# ---------------------------------------------------------------------------
# Modular ensembling

_ENSEMBLE_TEMPLATE = '''\
import csv
import os

import numpy as np

MEMBER_SOURCES = {member_sources}
STRATEGY = {strategy!r}
ROUND_PREDICTIONS = {round_predictions!r}
ID_COLUMN = {id_column!r}
PREDICTION_COLUMN = {prediction_column!r}
SUBMISSION_COLUMNS = {submission_columns!r}
PREP_ARTIFACTS = {prep_artifacts!r}


def _read_table(path):
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def _write_table(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _finalize(value):
    if ROUND_PREDICTIONS:
        return str(int(round(value)))
    return repr(float(value))


def _vote(values):
    counts = {{}}
    for v in values:
        counts[v] = counts.get(v, 0) + 1
    best = max(counts.values())
    for v in values:  # first member wins ties
        if counts[v] == best:
            return v
    return values[0]


def _stack_weights(validations, truths):
    matrix = np.asarray(validations, dtype=float).T
    target = np.asarray(truths, dtype=float)
    weights, *_ = np.linalg.lstsq(matrix, target, rcond=None)
    weights = np.clip(weights, 0.0, None)
    total = weights.sum()
    if total <= 0:
        weights = np.ones(matrix.shape[1]) / matrix.shape[1]
    else:
        weights = weights / total
    return weights


def main(data_dir, artifacts_dir, submission_path, sample_limit=None):
    import shutil

    member_preds = []
    member_vals = []
    for i, src in enumerate(MEMBER_SOURCES):
        member_dir = os.path.join(artifacts_dir, "member_%d" % i)
        os.makedirs(member_dir, exist_ok=True)
        namespace = {{}}
        exec(compile(src, "member_%d.py" % i, "exec"), namespace)
        namespace["main"](
            data_dir, member_dir, os.path.join(member_dir, "member_submission.csv"), sample_limit
        )
        member_preds.append(_read_table(os.path.join(member_dir, "predictions.csv")))
        val_path = os.path.join(member_dir, "validation_predictions.csv")
        member_vals.append(_read_table(val_path) if os.path.exists(val_path) else None)

    # The members share one contract; the first member's stage artifacts
    # stand in for the composite's.
    first_dir = os.path.join(artifacts_dir, "member_0")
    for rel in PREP_ARTIFACTS:
        src = os.path.join(first_dir, rel)
        if os.path.exists(src):
            shutil.copy(src, os.path.join(artifacts_dir, rel))

    header0, rows0 = member_preds[0]
    id_idx = header0.index(ID_COLUMN)
    pred_idx = header0.index(PREDICTION_COLUMN)
    by_id = []
    for member_header, member_rows in member_preds:
        mi = member_header.index(ID_COLUMN)
        mp = member_header.index(PREDICTION_COLUMN)
        by_id.append({{row[mi]: row[mp] for row in member_rows}})

    if STRATEGY == "stacking":
        weights = _ensemble_weights(member_vals, artifacts_dir)
    else:
        weights = None

    out_rows = []
    for row in rows0:
        rid = row[id_idx]
        votes = [table[rid] for table in by_id]
        if STRATEGY == "voting":
            final = _vote(votes)
        elif STRATEGY == "averaging":
            final = _finalize(sum(float(v) for v in votes) / len(votes))
        else:
            final = _finalize(sum(w * float(v) for w, v in zip(weights, votes)))
        out = list(row)
        out[pred_idx] = final
        out_rows.append(out)
    _write_table(os.path.join(artifacts_dir, "predictions.csv"), header0, out_rows)

    _aggregate_validation(member_vals, artifacts_dir, weights)

    os.makedirs(os.path.dirname(submission_path) or ".", exist_ok=True)
    columns = SUBMISSION_COLUMNS or header0
    index = [header0.index(c) for c in columns]
    _write_table(submission_path, columns, [[r[i] for i in index] for r in out_rows])


def _ensemble_weights(member_vals, artifacts_dir):
    common, tables = _aligned_validations(member_vals)
    if not common:
        return np.ones(len(member_vals)) / len(member_vals)
    truth_header, truth_rows = _read_table(
        os.path.join(artifacts_dir, "member_0", "train_target.csv")
    )
    validations = []
    truths = [float(truth_rows[int(r)][0]) for r in common]
    for table in tables:
        validations.append([float(table[r]) for r in common])
    return _stack_weights(validations, truths)


def _aligned_validations(member_vals):
    tables = []
    key_sets = []
    for entry in member_vals:
        if entry is None:
            return [], []
        header, rows = entry
        ri = header.index("row")
        pi = header.index("prediction")
        table = {{row[ri]: row[pi] for row in rows}}
        tables.append(table)
        key_sets.append(set(table))
    common = sorted(set.intersection(*key_sets), key=int) if key_sets else []
    return common, tables


def _aggregate_validation(member_vals, artifacts_dir, weights):
    common, tables = _aligned_validations(member_vals)
    if not common:
        return
    rows = []
    for r in common:
        votes = [table[r] for table in tables]
        if STRATEGY == "voting":
            final = _vote(votes)
        elif STRATEGY == "averaging":
            final = _finalize(sum(float(v) for v in votes) / len(votes))
        else:
            final = _finalize(sum(w * float(v) for w, v in zip(weights, votes)))
        rows.append([r, final])
    _write_table(os.path.join(artifacts_dir, "validation_predictions.csv"), ["row", "prediction"], rows)
'''


def build_ensemble(
    runs: Sequence[TrackRun], contract: InterfaceContract, strategy: str
) -> GeneratedModule:
    """Compose the top validated pipelines into one aggregating module.

    The members must share the contract (checked by hash), so their assembled
    pipelines are interchangeable: each runs in its own artifact sub-directory
    and the composite aggregates the prediction artifacts.
    """
    if strategy not in ENSEMBLE_STRATEGIES:
        raise ValueError(f"unknown ensemble strategy {strategy!r}")
    members = [r for r in runs if r.status is RunStatus.VALIDATED]
    if len(members) < 2:
        raise NoValidPipeline("ensembling needs at least two validated pipelines")
    hashes = {r.blueprint.contract_hash for r in members}
    if len(hashes) != 1 or contract.hash not in hashes:
        raise ValueError("ensemble members must share the run's interface contract")
    sources = []
    for run in members:
        assembled = run.current(Stage.ASSEMBLED)
        if assembled is None:
            raise NoValidPipeline(f"{run.track.value} track has no assembled pipeline")
        sources.append(assembled.source_text)

    predictions = contract.artifact("predictions")
    id_column = contract.submission.id_column if contract.submission else predictions.columns[0].name
    prediction_column = next(
        (c.name for c in predictions.columns if c.name != id_column), "prediction"
    )
    declared = next((c for c in predictions.columns if c.name == prediction_column), None)
    round_predictions = bool(declared is not None and declared.dtype == "int")
    prep_artifacts = [
        a.filename for a in contract.produced_by(Stage.PREPROCESSING)
    ]
    source = _ENSEMBLE_TEMPLATE.format(
        member_sources="[\n" + ",\n".join(repr(s) for s in sources) + "\n]",
        strategy=strategy,
        round_predictions=round_predictions,
        id_column=id_column,
        prediction_column=prediction_column,
        submission_columns=list(contract.submission.columns) if contract.submission else None,
        prep_artifacts=prep_artifacts,
    )
    return GeneratedModule(
        stage=Stage.ENSEMBLE,
        source_text=source,
        entrypoint="main",
        declared_imports=("csv", "numpy", "os"),
        revision=0,
    )
