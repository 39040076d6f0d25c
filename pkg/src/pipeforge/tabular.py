"""Streaming delimited-text reader with storage-level type inference.

The standard csv module hides whether a field was quoted, but quoting is the
only storage-level signal a delimited file has for "this is text, not a
number". Both the dataset profiler and artifact measurement need that signal,
so this module implements the tokenizer once: it yields rows of
(value, quoted) pairs, handles quoted delimiters/newlines/escaped quotes, and
never materializes more than one record at a time.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterator, TextIO

# Unquoted tokens treated as missing values.
NULL_TOKENS = frozenset({"", "na", "n/a", "nan", "null", "none"})

_INT_RE = re.compile(r"^[+-]?\d+$")
_REAL_RE = re.compile(r"^[+-]?(\d+\.\d*|\.\d+|\d+)([eE][+-]?\d+)?$")
_BOOL_TOKENS = frozenset({"true", "false"})
_DATETIME_RE = re.compile(
    r"^\d{4}-\d{2}-\d{2}([T ]\d{2}:\d{2}(:\d{2}(\.\d+)?)?(Z|[+-]\d{2}:?\d{2})?)?$"
)

DELIMITERS = {".csv": ",", ".tsv": "\t"}


@dataclass(frozen=True)
class Field:
    value: str
    quoted: bool

    @property
    def is_null(self) -> bool:
        return not self.quoted and self.value.strip().lower() in NULL_TOKENS


def iter_records(stream: TextIO, delimiter: str = ",") -> Iterator[list[Field]]:
    """Tokenize a delimited stream into records of Fields.

    Quoting follows the usual convention: `""` escapes a quote inside a quoted
    field; quoted fields may contain delimiters and newlines. Carriage returns
    before a newline are stripped.
    """
    record: list[Field] = []
    value: list[str] = []
    quoted = False
    in_quotes = False
    saw_any = False

    def flush_field():
        nonlocal value, quoted
        record.append(Field("".join(value), quoted))
        value = []
        quoted = False

    while True:
        ch = stream.read(1)
        if ch == "":
            break
        saw_any = True
        if in_quotes:
            if ch == '"':
                nxt = stream.read(1)
                if nxt == '"':
                    value.append('"')
                else:
                    in_quotes = False
                    if nxt == "":
                        break
                    if nxt == delimiter:
                        flush_field()
                    elif nxt == "\n":
                        flush_field()
                        yield record
                        record = []
                    elif nxt == "\r":
                        pass  # swallow; the \n that follows closes the record
                    else:
                        value.append(nxt)
            else:
                value.append(ch)
        elif ch == '"' and not value:
            in_quotes = True
            quoted = True
        elif ch == delimiter:
            flush_field()
        elif ch == "\n":
            flush_field()
            yield record
            record = []
        elif ch == "\r":
            pass
        else:
            value.append(ch)

    if value or quoted or record:
        flush_field()
        yield record
    elif saw_any and not record:
        pass  # trailing newline already closed the last record


def classify_value(f: Field) -> str | None:
    """Storage dtype of one field, or None for nulls.

    Quoted fields are text by construction; unquoted fields run through the
    inference ladder int -> real -> bool -> datetime -> text.
    """
    if f.is_null:
        return None
    if f.quoted:
        return "text"
    v = f.value.strip()
    if _INT_RE.match(v):
        return "int"
    if _REAL_RE.match(v):
        return "real"
    if v.lower() in _BOOL_TOKENS:
        return "bool"
    if _DATETIME_RE.match(v):
        return "datetime"
    return "text"


def unify_dtypes(seen: set[str]) -> str:
    """Collapse per-value dtypes into one column dtype."""
    if not seen:
        return "text"  # all-null column: no storage evidence
    if seen <= {"int"}:
        return "int"
    if seen <= {"int", "real"}:
        return "real"
    if seen == {"bool"}:
        return "bool"
    if seen == {"datetime"}:
        return "datetime"
    return "text"


@dataclass
class _ColumnAccumulator:
    """Streaming per-column statistics over the sampled rows."""

    name: str
    nulls: int = 0
    non_nulls: int = 0
    dtypes: set[str] = None  # type: ignore[assignment]
    distinct: set[str] = None  # type: ignore[assignment]
    counts: dict[str, int] = None  # type: ignore[assignment]
    total: float = 0.0
    total_sq: float = 0.0
    numeric_n: int = 0
    minimum: float | None = None
    maximum: float | None = None
    samples: list[str] = None  # type: ignore[assignment]

    def __post_init__(self):
        self.dtypes = set()
        self.distinct = set()
        self.counts = {}
        self.samples = []

    def add(self, f: Field, distinct_cap: int, sample_cap: int) -> None:
        dtype = classify_value(f)
        if dtype is None:
            self.nulls += 1
            return
        self.non_nulls += 1
        self.dtypes.add(dtype)
        if len(self.distinct) < distinct_cap:
            self.distinct.add(f.value)
        self.counts[f.value] = self.counts.get(f.value, 0) + 1
        if len(self.samples) < sample_cap and f.value not in self.samples:
            self.samples.append(f.value)
        if dtype in ("int", "real"):
            x = float(f.value)
            self.total += x
            self.total_sq += x * x
            self.numeric_n += 1
            self.minimum = x if self.minimum is None else min(self.minimum, x)
            self.maximum = x if self.maximum is None else max(self.maximum, x)

    @property
    def dtype(self) -> str:
        return unify_dtypes(self.dtypes)

    def mean(self) -> float | None:
        return self.total / self.numeric_n if self.numeric_n else None

    def std(self) -> float | None:
        if not self.numeric_n:
            return None
        m = self.total / self.numeric_n
        var = max(self.total_sq / self.numeric_n - m * m, 0.0)
        return var**0.5


@dataclass
class TableScan:
    """Result of one streaming pass over a delimited file."""

    header: list[str]
    accumulators: list[_ColumnAccumulator]
    row_count: int  # exact, counted over the whole file
    sampled_rows: int  # rows that fed the statistics
    malformed_rows: int  # width-mismatched rows, skipped from stats

    # retained sampled numeric values per column, for correlation
    numeric_values: dict[str, list[float]] = None  # type: ignore[assignment]


def scan_table(
    path,
    sample_rows: int,
    delimiter: str | None = None,
    distinct_cap: int = 50_000,
    sample_cap: int = 10,
    keep_numeric: bool = False,
    row_observer=None,
) -> TableScan:
    """Single streaming pass: exact row count, stats over the first sample_rows.

    `row_observer`, when given, is called once per row fed into statistics;
    tests use it to assert the in-memory sampling bound.
    """
    if delimiter is None:
        delimiter = DELIMITERS.get(str(path)[str(path).rfind("."):].lower(), ",")
    with open(path, "r", encoding="utf-8", errors="replace", newline="") as fh:
        records = iter_records(fh, delimiter)
        try:
            header_rec = next(records)
        except StopIteration:
            return TableScan(header=[], accumulators=[], row_count=0, sampled_rows=0, malformed_rows=0)
        header = [f.value for f in header_rec]
        accs = [_ColumnAccumulator(name) for name in header]
        numeric_values: dict[str, list[float]] = {name: [] for name in header} if keep_numeric else {}
        row_count = 0
        sampled = 0
        malformed = 0
        for rec in records:
            # An empty line is a null row for single-column tables; with more
            # columns it counts as malformed below.
            row_count += 1
            if sampled >= sample_rows:
                continue
            if len(rec) != len(header):
                malformed += 1
                continue
            sampled += 1
            if row_observer is not None:
                row_observer(rec)
            for acc, fval in zip(accs, rec):
                acc.add(fval, distinct_cap, sample_cap)
                if keep_numeric and classify_value(fval) in ("int", "real"):
                    numeric_values[acc.name].append(float(fval.value))
    scan = TableScan(
        header=header,
        accumulators=accs,
        row_count=row_count,
        sampled_rows=sampled,
        malformed_rows=malformed,
    )
    scan.numeric_values = numeric_values
    return scan


def is_tabular(path) -> bool:
    return str(path).lower().endswith((".csv", ".tsv"))
