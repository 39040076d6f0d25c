"""Benchmark dataset splitting: stratified train/test with sealed truth.

The output directory is a ready-to-run task: data/train.csv keeps the
target, data/test.csv has it withheld, data/sample_submission.csv shows the
expected header, and truth/truth.csv holds the withheld labels sealed to
mode 000 so sandboxed code cannot read it back.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import canonical, tabular
from .errors import UsageError
from .sandbox import seal_file

_ID_RE = re.compile(r"^(id|index|.*_id|id_.*)$", re.IGNORECASE)

DEFAULT_RATIO = 0.8


@dataclass
class SplitResult:
    out_dir: Path
    train_rows: int
    test_rows: int
    stratified: bool
    warning: str = ""

    @property
    def manifest_path(self) -> Path:
        return self.out_dir / "split_manifest.json"

    @property
    def truth_path(self) -> Path:
        return self.out_dir / "truth" / "truth.csv"


def _load_table(path: Path) -> tuple[list[str], list[list[str]]]:
    header: list[str] = []
    rows: list[list[str]] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        records = tabular.iter_records(fh)
        try:
            header = [f.value for f in next(records)]
        except StopIteration:
            raise UsageError(f"dataset is empty: {path}")
        for rec in records:
            if len(rec) == len(header):
                rows.append([f.value for f in rec])
    if not rows:
        raise UsageError(f"dataset has a header but no rows: {path}")
    return header, rows


def _locate_dataset(dataset: Path) -> Path:
    dataset = Path(dataset)
    if dataset.is_file():
        return dataset
    if dataset.is_dir():
        tables = sorted(p for p in dataset.glob("*.csv"))
        if len(tables) == 1:
            return tables[0]
        raise UsageError(
            f"{dataset} holds {len(tables)} csv files; pass the table explicitly"
        )
    raise UsageError(f"dataset not found: {dataset}")


def _infer_target(header: list[str], rows: list[list[str]]) -> str:
    names = {"target", "label", "class", "y", "outcome", "response"}
    for name in header:
        if name.lower() in names:
            return name
    for name in header:
        if "target" in name.lower() or "label" in name.lower():
            return name
    raise UsageError("cannot infer the target column; pass --target")


def _write_csv(path: Path, header: list[str], rows: list[list[str]]) -> None:
    import csv

    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def split_dataset(
    dataset: str | Path,
    out_dir: str | Path,
    ratio: float = DEFAULT_RATIO,
    seed: int = 0,
    target: str | None = None,
    max_classes: int = 100,
) -> SplitResult:
    """Deterministic stratified split; falls back to a plain random split
    (with a warning) when any class is too small to stratify."""
    if not 0.0 < ratio < 1.0:
        raise UsageError(f"ratio must be in (0,1), got {ratio}")
    table_path = _locate_dataset(Path(dataset))
    out_dir = Path(out_dir)
    header, rows = _load_table(table_path)
    target = target or _infer_target(header, rows)
    if target not in header:
        raise UsageError(f"target column {target!r} not in {header}")
    target_idx = header.index(target)

    id_column = next((c for c in header if _ID_RE.match(c)), None)
    if id_column is None:
        id_column = "id"
        header = [id_column, *header]
        rows = [[str(i), *row] for i, row in enumerate(rows)]
        target_idx += 1
    id_idx = header.index(id_column)

    labels = [row[target_idx] for row in rows]
    classes: dict[str, list[int]] = {}
    for i, label in enumerate(labels):
        classes.setdefault(label, []).append(i)

    warning = ""
    stratified = len(classes) <= max_classes and all(
        len(ix) >= 2 for ix in classes.values()
    )
    rng = np.random.RandomState(seed)
    train_idx: list[int] = []
    test_idx: list[int] = []
    if stratified:
        for label in sorted(classes):
            indices = np.array(classes[label])
            rng.shuffle(indices)
            n_train = int(round(ratio * len(indices)))
            n_train = min(max(n_train, 1), len(indices) - 1)
            train_idx.extend(indices[:n_train].tolist())
            test_idx.extend(indices[n_train:].tolist())
    else:
        warning = (
            "stratification impossible (a class is too small or the target "
            "is continuous); using a random split"
        )
        indices = np.arange(len(rows))
        rng.shuffle(indices)
        n_train = int(round(ratio * len(rows)))
        n_train = min(max(n_train, 1), len(rows) - 1)
        train_idx = indices[:n_train].tolist()
        test_idx = indices[n_train:].tolist()
    train_idx.sort()
    test_idx.sort()

    test_header = [c for c in header if c != target]
    keep = [i for i, c in enumerate(header) if c != target]
    _write_csv(out_dir / "data" / "train.csv", header, [rows[i] for i in train_idx])
    _write_csv(
        out_dir / "data" / "test.csv",
        test_header,
        [[rows[i][j] for j in keep] for i in test_idx],
    )
    placeholder = "0"
    _write_csv(
        out_dir / "data" / "sample_submission.csv",
        [id_column, target],
        [[rows[i][id_idx], placeholder] for i in test_idx],
    )
    truth_path = out_dir / "truth" / "truth.csv"
    _write_csv(truth_path, [id_column, target], [[rows[i][id_idx], rows[i][target_idx]] for i in test_idx])
    seal_file(truth_path)

    manifest = {
        "source": str(table_path),
        "seed": seed,
        "ratio": ratio,
        "target": target,
        "id_column": id_column,
        "stratified": stratified,
        "warning": warning,
        "train_ids": [rows[i][id_idx] for i in train_idx],
        "test_ids": [rows[i][id_idx] for i in test_idx],
    }
    canonical.dump_path(manifest, out_dir / "split_manifest.json")
    return SplitResult(
        out_dir=out_dir,
        train_rows=len(train_idx),
        test_rows=len(test_idx),
        stratified=stratified,
        warning=warning,
    )
