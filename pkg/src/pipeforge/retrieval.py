"""Model-candidate retrieval behind a pluggable interface.

The default retriever reads an offline catalog file and filters by the task's
modality; an optional liveness check issues HEAD requests against candidate
URLs. Implementations that search the live web can plug in behind
`CandidateRetriever` without touching planning.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Protocol

import requests

from .types import MetaFeatures, TaskSummary

VALIDATION_CONCURRENCY = 4

_MODALITY_EXTENSIONS = {
    "vision": {".png", ".jpg", ".jpeg", ".gif", ".bmp", ".tif", ".tiff", ".webp"},
    "audio": {".wav", ".mp3", ".flac", ".ogg", ".m4a"},
    "text": {".txt", ".md", ".jsonl"},
}


@dataclass(frozen=True)
class ModelCandidate:
    kind: str  # pretrained_checkpoint | architecture
    name: str
    reference: str  # URL or catalog id
    modalities: tuple[str, ...] = ()
    validated: bool = False
    notes: str = ""

    def __post_init__(self):
        if self.kind not in ("pretrained_checkpoint", "architecture"):
            raise ValueError(f"unknown candidate kind: {self.kind!r}")
        if self.kind == "pretrained_checkpoint" and not self.reference:
            raise ValueError("pretrained checkpoints need a reference")

    @property
    def is_url(self) -> bool:
        return self.reference.startswith(("http://", "https://"))

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "name": self.name,
            "reference": self.reference,
            "modalities": list(self.modalities),
            "validated": self.validated,
            "notes": self.notes,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ModelCandidate":
        return cls(
            kind=d["kind"],
            name=d["name"],
            reference=d["reference"],
            modalities=tuple(d.get("modalities", [])),
            validated=d.get("validated", False),
            notes=d.get("notes", ""),
        )


class CandidateRetriever(Protocol):
    def retrieve(
        self, summary: TaskSummary, f: MetaFeatures, max_n: int
    ) -> list[ModelCandidate]: ...


def task_modalities(f: MetaFeatures) -> tuple[str, ...]:
    """Modalities present in the dataset, judged from the file manifest."""
    found = set()
    for entry in f.file_manifest:
        if entry.row_count is not None:
            found.add("tabular")
            continue
        for modality, extensions in _MODALITY_EXTENSIONS.items():
            if entry.extension in extensions:
                found.add(modality)
    return tuple(sorted(found)) or ("tabular",)


def default_catalog_path() -> Path:
    return Path(str(resources.files("pipeforge").joinpath("data/model_catalog.json")))


class CatalogRetriever:
    """Offline retriever over a checked-in JSON catalog."""

    def __init__(self, catalog_path: str | Path | None = None):
        import json

        path = Path(catalog_path) if catalog_path else default_catalog_path()
        self.catalog_path = path
        if path.exists():
            raw = json.loads(path.read_text(encoding="utf-8"))
        else:
            raw = {}
        self._entries: list[ModelCandidate] = []
        for modality in sorted(raw):
            for item in raw[modality]:
                item = dict(item)
                item.setdefault("modalities", [modality])
                self._entries.append(ModelCandidate.from_dict(item))

    def retrieve(
        self, summary: TaskSummary, f: MetaFeatures, max_n: int
    ) -> list[ModelCandidate]:
        return retrieve_candidates(self._entries, f, max_n)


def retrieve_candidates(
    entries: list[ModelCandidate], f: MetaFeatures, max_n: int
) -> list[ModelCandidate]:
    """Filter catalog entries by task modality; catalog order, then name."""
    if max_n < 1:
        raise ValueError("max_n must be >= 1")
    wanted = set(task_modalities(f))
    matches = [
        (i, c) for i, c in enumerate(entries) if wanted.intersection(c.modalities)
    ]
    matches.sort(key=lambda pair: (pair[0], pair[1].name))
    return [c for _, c in matches[:max_n]]


def validate_reference(
    c: ModelCandidate, timeout: float = 5.0, session: requests.Session | None = None
) -> ModelCandidate:
    """HEAD-check a candidate URL. Advisory: network failure never raises."""
    if not c.is_url:
        return c
    session = session or requests
    try:
        resp = session.head(c.reference, timeout=timeout, allow_redirects=False)
        ok = 200 <= resp.status_code < 400
        note = "" if ok else f"HEAD returned {resp.status_code}"
        return replace(c, validated=ok, notes=(c.notes + " " + note).strip() if note else c.notes)
    except requests.RequestException as exc:
        return replace(
            c,
            validated=False,
            notes=(c.notes + f" liveness check failed: {type(exc).__name__}").strip(),
        )


def validate_candidates(
    candidates: list[ModelCandidate],
    timeout: float = 5.0,
    max_in_flight: int = VALIDATION_CONCURRENCY,
) -> list[ModelCandidate]:
    """Validate URL candidates concurrently under a global in-flight cap."""
    gate = threading.Semaphore(max_in_flight)
    results: list[ModelCandidate | None] = [None] * len(candidates)

    def work(i: int, cand: ModelCandidate) -> None:
        with gate:
            results[i] = validate_reference(cand, timeout=timeout)

    threads = [
        threading.Thread(target=work, args=(i, c), daemon=True)
        for i, c in enumerate(candidates)
    ]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    return [r for r in results if r is not None]
