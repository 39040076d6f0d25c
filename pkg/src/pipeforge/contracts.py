"""Interface contracts and contract reports.

A contract binds the preprocessing stage's outputs to the modeling stage's
inputs: named artifacts with machine-checkable column, shape, range, and
row-relation constraints, plus the entrypoints each stage must expose.

The verdict computation here is the orchestrator-side twin of the
execution-side shim; both must agree bit-exactly on identical observations
(pinned by golden-report tests).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Mapping

from . import canonical
from .types import Stage, SubmissionFormat

# Canonical dtype vocabulary shared by contracts, measurements, and profiles.
DTYPES = ("int", "real", "bool", "text", "datetime", "categorical")

# Declared dtype -> observed dtypes it accepts. Measurement reports physical
# storage, so `categorical` declarations accept observed text and `real`
# accepts integer-valued storage.
DTYPE_COMPAT: dict[str, frozenset[str]] = {
    "int": frozenset({"int"}),
    "real": frozenset({"real", "int"}),
    "bool": frozenset({"bool"}),
    "text": frozenset({"text"}),
    "categorical": frozenset({"text", "categorical"}),
    "datetime": frozenset({"datetime"}),
}

_IDENT = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")
_RELATION = re.compile(
    r"^\s*([A-Za-z_][A-Za-z0-9_]*)\.rows\s*==\s*([A-Za-z_][A-Za-z0-9_]*)\.rows\s*$"
)


class ArtifactKind(str, Enum):
    TABLE = "table"
    DENSE_ARRAY = "dense_array"
    LOADER_CONFIG = "loader_config"
    FILE_PATH = "file_path"


# On-disk file name for each artifact kind, rooted at the artifacts directory.
KIND_EXTENSIONS = {
    ArtifactKind.TABLE: ".csv",
    ArtifactKind.DENSE_ARRAY: ".npy",
    ArtifactKind.LOADER_CONFIG: ".json",
    ArtifactKind.FILE_PATH: "",
}


def artifact_filename(name: str, kind: ArtifactKind) -> str:
    return name + KIND_EXTENSIONS[kind]


def parse_row_relation(expr: str) -> tuple[str, str]:
    """Parse `a.rows == b.rows`; returns the two artifact names."""
    m = _RELATION.match(expr)
    if not m:
        raise ValueError(f"unsupported row relation: {expr!r}")
    return m.group(1), m.group(2)


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    dtype: str | None = None
    nullable: bool = True

    def __post_init__(self):
        if self.dtype is not None and self.dtype not in DTYPES:
            raise ValueError(f"unknown dtype {self.dtype!r} for column {self.name!r}")

    def to_dict(self) -> dict:
        return {"name": self.name, "dtype": self.dtype, "nullable": self.nullable}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ColumnSpec":
        return cls(name=d["name"], dtype=d.get("dtype"), nullable=d.get("nullable", True))


@dataclass(frozen=True)
class ArtifactSpec:
    name: str
    kind: ArtifactKind
    produced_by: Stage = Stage.PREPROCESSING
    columns: tuple[ColumnSpec, ...] = ()
    shape: tuple[int | None, ...] | None = None  # None dims are wildcards
    value_ranges: Mapping[str, tuple[float, float]] = field(default_factory=dict)
    row_relation: str | None = None
    batch_size: int | None = None  # loader_config directive

    def __post_init__(self):
        if not _IDENT.match(self.name):
            raise ValueError(f"artifact name is not a valid identifier: {self.name!r}")
        if self.produced_by not in (Stage.PREPROCESSING, Stage.MODELING):
            raise ValueError("artifacts are produced by preprocessing or modeling")
        if self.row_relation is not None:
            parse_row_relation(self.row_relation)

    @property
    def filename(self) -> str:
        return artifact_filename(self.name, self.kind)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind.value,
            "produced_by": self.produced_by.value,
            "columns": [c.to_dict() for c in self.columns],
            "shape": list(self.shape) if self.shape is not None else None,
            "value_ranges": {k: [v[0], v[1]] for k, v in self.value_ranges.items()},
            "row_relation": self.row_relation,
            "batch_size": self.batch_size,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ArtifactSpec":
        return cls(
            name=d["name"],
            kind=ArtifactKind(d["kind"]),
            produced_by=Stage(d.get("produced_by", "preprocessing")),
            columns=tuple(ColumnSpec.from_dict(c) for c in d.get("columns", [])),
            shape=tuple(d["shape"]) if d.get("shape") is not None else None,
            value_ranges={k: (v[0], v[1]) for k, v in d.get("value_ranges", {}).items()},
            row_relation=d.get("row_relation"),
            batch_size=d.get("batch_size"),
        )


@dataclass(frozen=True)
class EntrypointSpec:
    function: str
    parameters: tuple[str, ...]

    def __post_init__(self):
        if not _IDENT.match(self.function):
            raise ValueError(f"entrypoint is not a valid identifier: {self.function!r}")
        for p in self.parameters:
            if not _IDENT.match(p):
                raise ValueError(f"parameter is not a valid identifier: {p!r}")

    def to_dict(self) -> dict:
        return {"function": self.function, "parameters": list(self.parameters)}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "EntrypointSpec":
        return cls(function=d["function"], parameters=tuple(d.get("parameters", [])))


@dataclass(frozen=True)
class InterfaceContract:
    artifacts: tuple[ArtifactSpec, ...]
    preprocessing_entrypoint: EntrypointSpec
    modeling_entrypoint: EntrypointSpec
    submission: SubmissionFormat | None = None
    batch_directives: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        names = [a.name for a in self.artifacts]
        if len(set(names)) != len(names):
            raise ValueError("artifact names must be unique")
        declared = set(names)
        for a in self.artifacts:
            if a.row_relation is None:
                continue
            for ref in parse_row_relation(a.row_relation):
                if ref not in declared:
                    raise ValueError(
                        f"row relation on {a.name!r} references undeclared artifact {ref!r}"
                    )

    def artifact(self, name: str) -> ArtifactSpec | None:
        for a in self.artifacts:
            if a.name == name:
                return a
        return None

    def produced_by(self, stage: Stage) -> tuple[ArtifactSpec, ...]:
        return tuple(a for a in self.artifacts if a.produced_by is stage)

    @property
    def hash(self) -> str:
        return canonical.digest(self.to_dict())

    def to_dict(self) -> dict:
        return {
            "schema_version": canonical.SCHEMA_VERSION,
            "artifacts": [a.to_dict() for a in self.artifacts],
            "preprocessing_entrypoint": self.preprocessing_entrypoint.to_dict(),
            "modeling_entrypoint": self.modeling_entrypoint.to_dict(),
            "submission": self.submission.to_dict() if self.submission else None,
            "batch_directives": dict(self.batch_directives),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "InterfaceContract":
        return cls(
            artifacts=tuple(ArtifactSpec.from_dict(a) for a in d["artifacts"]),
            preprocessing_entrypoint=EntrypointSpec.from_dict(d["preprocessing_entrypoint"]),
            modeling_entrypoint=EntrypointSpec.from_dict(d["modeling_entrypoint"]),
            submission=SubmissionFormat.from_dict(d["submission"]) if d.get("submission") else None,
            batch_directives=dict(d.get("batch_directives", {})),
        )


# ---------------------------------------------------------------------------
# Observations: what measurement actually found on disk


@dataclass(frozen=True)
class ColumnObservation:
    name: str
    dtype: str
    null_count: int
    value_min: float | None = None
    value_max: float | None = None

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "dtype": self.dtype,
            "null_count": self.null_count,
            "value_min": self.value_min,
            "value_max": self.value_max,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ColumnObservation":
        return cls(
            name=d["name"],
            dtype=d["dtype"],
            null_count=d["null_count"],
            value_min=d.get("value_min"),
            value_max=d.get("value_max"),
        )


@dataclass(frozen=True)
class ArtifactObservation:
    name: str
    status: str  # ok | missing | unreadable
    kind: ArtifactKind | None = None
    columns: tuple[ColumnObservation, ...] = ()
    row_count: int | None = None
    shape: tuple[int, ...] | None = None
    detail: str = ""  # loader keys, unreadable reason, etc.

    def column(self, name: str) -> ColumnObservation | None:
        for c in self.columns:
            if c.name == name:
                return c
        return None

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "status": self.status,
            "kind": self.kind.value if self.kind else None,
            "columns": [c.to_dict() for c in self.columns],
            "row_count": self.row_count,
            "shape": list(self.shape) if self.shape is not None else None,
            "detail": self.detail,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ArtifactObservation":
        return cls(
            name=d["name"],
            status=d["status"],
            kind=ArtifactKind(d["kind"]) if d.get("kind") else None,
            columns=tuple(ColumnObservation.from_dict(c) for c in d.get("columns", [])),
            row_count=d.get("row_count"),
            shape=tuple(d["shape"]) if d.get("shape") is not None else None,
            detail=d.get("detail", ""),
        )


@dataclass(frozen=True)
class Verdict:
    artifact: str
    constraint: str
    passed: bool
    detail: str = ""

    def to_dict(self) -> dict:
        return {
            "artifact": self.artifact,
            "constraint": self.constraint,
            "passed": self.passed,
            "detail": self.detail,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Verdict":
        return cls(
            artifact=d["artifact"],
            constraint=d["constraint"],
            passed=d["passed"],
            detail=d.get("detail", ""),
        )


@dataclass(frozen=True)
class ContractReport:
    stage: Stage
    observations: tuple[ArtifactObservation, ...]  # one per declared artifact
    verdicts: tuple[Verdict, ...]

    @property
    def all_passed(self) -> bool:
        return all(v.passed for v in self.verdicts)

    def failed_constraints(self) -> tuple[str, ...]:
        return tuple(f"{v.artifact}:{v.constraint}" for v in self.verdicts if not v.passed)

    def observation(self, name: str) -> ArtifactObservation | None:
        for o in self.observations:
            if o.name == name:
                return o
        return None

    def to_dict(self) -> dict:
        return {
            "schema_version": canonical.SCHEMA_VERSION,
            "stage": self.stage.value,
            "observations": [o.to_dict() for o in self.observations],
            "verdicts": [v.to_dict() for v in self.verdicts],
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ContractReport":
        return cls(
            stage=Stage(d["stage"]),
            observations=tuple(ArtifactObservation.from_dict(o) for o in d["observations"]),
            verdicts=tuple(Verdict.from_dict(v) for v in d["verdicts"]),
        )


# ---------------------------------------------------------------------------
# Verdict computation


def _stage_obligations(contract: InterfaceContract, stage: Stage) -> tuple[ArtifactSpec, ...]:
    if stage in (Stage.PREPROCESSING, Stage.MODELING):
        return contract.produced_by(stage)
    return contract.artifacts  # assembled / ensemble answer for everything


def _relation_in_scope(contract: InterfaceContract, spec: ArtifactSpec, stage: Stage) -> bool:
    """A relation is checked once every artifact it references has been produced."""
    if spec.row_relation is None:
        return False
    if stage in (Stage.ASSEMBLED, Stage.ENSEMBLE):
        return True
    producers = set()
    for ref in parse_row_relation(spec.row_relation):
        producers.add(contract.artifact(ref).produced_by)
    if stage is Stage.PREPROCESSING:
        return producers == {Stage.PREPROCESSING}
    return True  # modeling runs after preprocessing artifacts already exist


def compute_verdicts(
    contract: InterfaceContract,
    observations: Mapping[str, ArtifactObservation],
    stage: Stage,
) -> tuple[Verdict, ...]:
    """Evaluate every constraint the executed stage is responsible for.

    Verdict order is deterministic: contract artifact order, then per artifact
    presence, kind, per-declared-column existence/dtype/nullability, shape,
    value ranges, batch directive, row relation.
    """
    verdicts: list[Verdict] = []
    obligations = _stage_obligations(contract, stage)
    for spec in obligations:
        obs = observations.get(spec.name)
        present = obs is not None and obs.status == "ok"
        if not present:
            status = obs.status if obs is not None else "missing"
            verdicts.append(Verdict(spec.name, "present", False, status))
            continue
        verdicts.append(Verdict(spec.name, "present", True))
        if obs.kind is not spec.kind:
            verdicts.append(
                Verdict(spec.name, "kind", False,
                        f"declared {spec.kind.value}, observed {obs.kind.value if obs.kind else 'none'}")
            )
            continue
        verdicts.append(Verdict(spec.name, "kind", True))
        for col in spec.columns:
            seen = obs.column(col.name)
            if seen is None:
                verdicts.append(Verdict(spec.name, f"column:{col.name}", False, "not found"))
                continue
            verdicts.append(Verdict(spec.name, f"column:{col.name}", True))
            if col.dtype is not None:
                ok = seen.dtype in DTYPE_COMPAT[col.dtype]
                detail = "" if ok else f"declared {col.dtype}, observed {seen.dtype}"
                verdicts.append(Verdict(spec.name, f"dtype:{col.name}", ok, detail))
            if not col.nullable:
                ok = seen.null_count == 0
                detail = "" if ok else f"{seen.null_count} null(s)"
                verdicts.append(Verdict(spec.name, f"not_null:{col.name}", ok, detail))
        if spec.shape is not None:
            observed = obs.shape if obs.shape is not None else (
                (obs.row_count, len(obs.columns)) if obs.row_count is not None else None
            )
            if observed is None or len(observed) != len(spec.shape):
                verdicts.append(
                    Verdict(spec.name, "shape", False,
                            f"declared {list(spec.shape)}, observed {list(observed) if observed else None}")
                )
            else:
                mismatch = [
                    (want, got)
                    for want, got in zip(spec.shape, observed)
                    if want is not None and want != got
                ]
                detail = "" if not mismatch else f"declared {list(spec.shape)}, observed {list(observed)}"
                verdicts.append(Verdict(spec.name, "shape", not mismatch, detail))
        for col_name in sorted(spec.value_ranges):
            lo, hi = spec.value_ranges[col_name]
            seen = obs.column(col_name)
            if seen is None or seen.value_min is None or seen.value_max is None:
                verdicts.append(
                    Verdict(spec.name, f"value_range:{col_name}", False, "no numeric observation")
                )
                continue
            ok = seen.value_min >= lo and seen.value_max <= hi
            detail = "" if ok else f"observed [{seen.value_min}, {seen.value_max}] outside [{lo}, {hi}]"
            verdicts.append(Verdict(spec.name, f"value_range:{col_name}", ok, detail))
        if spec.kind is ArtifactKind.LOADER_CONFIG and spec.batch_size is not None:
            ok = obs.detail == f"batch_size={spec.batch_size}"
            verdicts.append(
                Verdict(spec.name, "batch_size", ok,
                        "" if ok else f"declared batch_size={spec.batch_size}, observed {obs.detail or 'none'}")
            )
    for spec in obligations:
        if not _relation_in_scope(contract, spec, stage):
            continue
        left, right = parse_row_relation(spec.row_relation)
        left_obs, right_obs = observations.get(left), observations.get(right)
        left_rows = left_obs.row_count if left_obs and left_obs.status == "ok" else None
        right_rows = right_obs.row_count if right_obs and right_obs.status == "ok" else None
        if left_rows is None or right_rows is None:
            verdicts.append(
                Verdict(spec.name, f"row_relation:{spec.row_relation}", False,
                        "row counts unavailable")
            )
            continue
        ok = left_rows == right_rows
        detail = "" if ok else f"{left}.rows={left_rows}, {right}.rows={right_rows}"
        verdicts.append(Verdict(spec.name, f"row_relation:{spec.row_relation}", ok, detail))
    return tuple(verdicts)


def build_report(
    contract: InterfaceContract,
    observations: Mapping[str, ArtifactObservation],
    stage: Stage,
) -> ContractReport:
    """Assemble the canonical report: one observation per declared artifact."""
    ordered = []
    for spec in contract.artifacts:
        obs = observations.get(spec.name)
        if obs is None:
            obs = ArtifactObservation(name=spec.name, status="missing")
        ordered.append(obs)
    return ContractReport(
        stage=stage,
        observations=tuple(ordered),
        verdicts=compute_verdicts(contract, observations, stage),
    )
