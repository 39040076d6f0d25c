"""Delimited-text measurement primitives.

This is the execution-side twin of the orchestrator's reader: identical
quoting rules, null tokens, and dtype ladder, because the two sides must
measure the same file to the same report bytes. Quoted fields are text by
construction; unquoted fields are classified int -> real -> bool -> datetime
-> text; unquoted empty/NA tokens are nulls.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterator, TextIO

NULL_TOKENS = frozenset({"", "na", "n/a", "nan", "null", "none"})

_INT_RE = re.compile(r"^[+-]?\d+$")
_REAL_RE = re.compile(r"^[+-]?(\d+\.\d*|\.\d+|\d+)([eE][+-]?\d+)?$")
_BOOL_TOKENS = frozenset({"true", "false"})
_DATETIME_RE = re.compile(
    r"^\d{4}-\d{2}-\d{2}([T ]\d{2}:\d{2}(:\d{2}(\.\d+)?)?(Z|[+-]\d{2}:?\d{2})?)?$"
)


@dataclass(frozen=True)
class Field:
    value: str
    quoted: bool

    @property
    def is_null(self) -> bool:
        return not self.quoted and self.value.strip().lower() in NULL_TOKENS


def iter_records(stream: TextIO, delimiter: str = ",") -> Iterator[list[Field]]:
    record: list[Field] = []
    value: list[str] = []
    quoted = False
    in_quotes = False

    def flush_field():
        nonlocal value, quoted
        record.append(Field("".join(value), quoted))
        value = []
        quoted = False

    while True:
        ch = stream.read(1)
        if ch == "":
            break
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
                        pass
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


def classify_value(f: Field) -> str | None:
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
    if not seen:
        return "text"
    if seen <= {"int"}:
        return "int"
    if seen <= {"int", "real"}:
        return "real"
    if seen == {"bool"}:
        return "bool"
    if seen == {"datetime"}:
        return "datetime"
    return "text"
