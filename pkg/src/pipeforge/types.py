"""Domain types shared across all phases. No I/O, no LLM calls.

Everything here serializes to canonical JSON (see `canonical`) and back with
field-for-field equality; the on-disk JSON form is the interchange format
between the orchestrator, the run directory, and the execution-side shim.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, Mapping

from . import canonical
from .errors import EngineError

UNKNOWN = "unknown"

# Replacement text used when a task description is stripped or absent.
ZERO_KNOWLEDGE_DESCRIPTION = (
    "Analyze the provided data files and execute the appropriate predictive "
    "task for the target variable"
)


class ObjectiveKind(str, Enum):
    CLASSIFICATION = "classification"
    REGRESSION = "regression"
    MULTILABEL = "multilabel"
    RANKING = "ranking"
    UNKNOWN = "unknown"


class MetricDirection(str, Enum):
    HIGHER_BETTER = "higher_better"
    LOWER_BETTER = "lower_better"
    BOUNDED_PM1 = "bounded_pm1"


class Track(str, Enum):
    TRADITIONAL = "traditional"
    PRETRAINED = "pretrained"
    CUSTOM_NEURAL = "custom_neural"


# Tie-break precedence for best-track selection and deterministic scheduling.
TRACK_ORDER = (Track.TRADITIONAL, Track.PRETRAINED, Track.CUSTOM_NEURAL)


class Stage(str, Enum):
    PREPROCESSING = "preprocessing"
    MODELING = "modeling"
    ASSEMBLED = "assembled"
    ENSEMBLE = "ensemble"


class RunStatus(str, Enum):
    PLANNED = "planned"
    CODING = "coding"
    VERIFYING = "verifying"
    DEBUGGING = "debugging"
    VALIDATED = "validated"
    FAILED = "failed"


class FaultClass(str, Enum):
    CONTRACT_FULFILLMENT_FAILURE = "contract_fulfillment_failure"
    CONTRACT_USAGE_VIOLATION = "contract_usage_violation"


class NormalizationRule(str, Enum):
    IDENTITY = "identity"
    EXP_DECAY = "exp_decay"
    BOUNDED_AFFINE = "bounded_affine"
    FAILURE_ZERO = "failure_zero"


def _enum(cls, value, default=None):
    if value is None and default is not None:
        return default
    return cls(value)


# ---------------------------------------------------------------------------
# Task input


@dataclass(frozen=True)
class TaskSpec:
    """What the user handed us: a description, a data directory, budgets."""

    description_text: str
    data_root: str
    metric_spec: str | None = None
    metric_direction: MetricDirection | None = None
    submission_sample: str | None = None
    time_budget: float = 5 * 3600.0
    exec_interpreter: str = "python3"

    def __post_init__(self):
        if self.time_budget <= 0:
            raise ValueError("time_budget must be positive")
        if not Path(self.data_root).is_dir():
            raise ValueError(f"data_root is not a readable directory: {self.data_root}")

    @property
    def stripped(self) -> bool:
        """Empty or zero-knowledge descriptions put the run in stripped mode."""
        text = self.description_text.strip()
        return not text or text == ZERO_KNOWLEDGE_DESCRIPTION

    def to_dict(self) -> dict:
        return {
            "description_text": self.description_text,
            "data_root": str(self.data_root),
            "metric_spec": self.metric_spec,
            "metric_direction": self.metric_direction.value if self.metric_direction else None,
            "submission_sample": str(self.submission_sample) if self.submission_sample else None,
            "time_budget": self.time_budget,
            "exec_interpreter": self.exec_interpreter,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "TaskSpec":
        return cls(
            description_text=d["description_text"],
            data_root=d["data_root"],
            metric_spec=d.get("metric_spec"),
            metric_direction=_enum(MetricDirection, d.get("metric_direction"))
            if d.get("metric_direction")
            else None,
            submission_sample=d.get("submission_sample"),
            time_budget=d.get("time_budget", 5 * 3600.0),
            exec_interpreter=d.get("exec_interpreter", "python3"),
        )


@dataclass(frozen=True)
class SubmissionFormat:
    """Header layout the final submission file must follow."""

    id_column: str
    columns: tuple[str, ...]

    def __post_init__(self):
        if self.id_column not in self.columns:
            raise ValueError("id_column must appear in columns")
        if len(self.columns) < 2:
            raise ValueError("submission needs at least one id and one prediction column")

    @property
    def prediction_columns(self) -> tuple[str, ...]:
        return tuple(c for c in self.columns if c != self.id_column)

    def to_dict(self) -> dict:
        return {"id_column": self.id_column, "columns": list(self.columns)}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "SubmissionFormat":
        return cls(id_column=d["id_column"], columns=tuple(d["columns"]))


@dataclass(frozen=True)
class TaskSummary:
    """Semantic reading of the task; `unknown` fields await empirical inference."""

    objective_kind: ObjectiveKind = ObjectiveKind.UNKNOWN
    optimization_metric: str = UNKNOWN
    metric_direction: MetricDirection | None = None
    submission_format: SubmissionFormat | None = None
    file_map: Mapping[str, str] = field(default_factory=dict)  # filename -> role
    target_column: str | None = None

    def to_dict(self) -> dict:
        return {
            "objective_kind": self.objective_kind.value,
            "optimization_metric": self.optimization_metric,
            "metric_direction": self.metric_direction.value if self.metric_direction else None,
            "submission_format": self.submission_format.to_dict() if self.submission_format else None,
            "file_map": dict(self.file_map),
            "target_column": self.target_column,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "TaskSummary":
        return cls(
            objective_kind=_enum(ObjectiveKind, d.get("objective_kind"), ObjectiveKind.UNKNOWN),
            optimization_metric=d.get("optimization_metric", UNKNOWN),
            metric_direction=_enum(MetricDirection, d.get("metric_direction"))
            if d.get("metric_direction")
            else None,
            submission_format=SubmissionFormat.from_dict(d["submission_format"])
            if d.get("submission_format")
            else None,
            file_map=dict(d.get("file_map", {})),
            target_column=d.get("target_column"),
        )


# ---------------------------------------------------------------------------
# Dataset profile

SAMPLE_VALUES_CAP = 10


@dataclass(frozen=True)
class ColumnProfile:
    name: str
    dtype: str  # canonical vocabulary: int real bool datetime categorical text
    null_rate: float
    distinct_count: int
    sample_values: tuple[str, ...] = ()
    minimum: float | None = None
    maximum: float | None = None
    mean: float | None = None
    std: float | None = None
    top_categories: tuple[tuple[str, int], ...] = ()

    def __post_init__(self):
        if not 0.0 <= self.null_rate <= 1.0:
            raise ValueError(f"null_rate out of range for {self.name}: {self.null_rate}")
        if len(self.sample_values) > SAMPLE_VALUES_CAP:
            raise ValueError(f"sample_values exceeds cap of {SAMPLE_VALUES_CAP}")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "dtype": self.dtype,
            "null_rate": self.null_rate,
            "distinct_count": self.distinct_count,
            "sample_values": list(self.sample_values),
            "minimum": self.minimum,
            "maximum": self.maximum,
            "mean": self.mean,
            "std": self.std,
            "top_categories": [[v, c] for v, c in self.top_categories],
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ColumnProfile":
        return cls(
            name=d["name"],
            dtype=d["dtype"],
            null_rate=d["null_rate"],
            distinct_count=d["distinct_count"],
            sample_values=tuple(d.get("sample_values", [])),
            minimum=d.get("minimum"),
            maximum=d.get("maximum"),
            mean=d.get("mean"),
            std=d.get("std"),
            top_categories=tuple((v, c) for v, c in d.get("top_categories", [])),
        )


@dataclass(frozen=True)
class FileEntry:
    name: str  # path relative to data_root
    size_bytes: int
    extension: str
    role: str = "aux"  # train / test / sample_submission / labels / aux
    row_count: int | None = None
    columns: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "size_bytes": self.size_bytes,
            "extension": self.extension,
            "role": self.role,
            "row_count": self.row_count,
            "columns": list(self.columns),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "FileEntry":
        return cls(
            name=d["name"],
            size_bytes=d["size_bytes"],
            extension=d["extension"],
            role=d.get("role", "aux"),
            row_count=d.get("row_count"),
            columns=tuple(d.get("columns", [])),
        )


@dataclass(frozen=True)
class MetaFeatures:
    """Empirical profile of the dataset, measured by reading the files."""

    columns: tuple[ColumnProfile, ...]
    row_count: int
    target_candidates: tuple[str, ...] = ()
    class_distribution: Mapping[str, int] = field(default_factory=dict)
    correlation_pairs: tuple[tuple[str, str, float], ...] = ()
    file_manifest: tuple[FileEntry, ...] = ()
    primary_table: str | None = None
    malformed_rows: int = 0
    sampled_rows: int = 0

    def __post_init__(self):
        if sum(self.class_distribution.values()) > self.row_count:
            raise ValueError("class_distribution counts exceed row_count")

    def column(self, name: str) -> ColumnProfile | None:
        for c in self.columns:
            if c.name == name:
                return c
        return None

    @property
    def column_names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.columns)

    def to_dict(self) -> dict:
        return {
            "columns": [c.to_dict() for c in self.columns],
            "row_count": self.row_count,
            "target_candidates": list(self.target_candidates),
            "class_distribution": dict(self.class_distribution),
            "correlation_pairs": [[a, b, r] for a, b, r in self.correlation_pairs],
            "file_manifest": [f.to_dict() for f in self.file_manifest],
            "primary_table": self.primary_table,
            "malformed_rows": self.malformed_rows,
            "sampled_rows": self.sampled_rows,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "MetaFeatures":
        return cls(
            columns=tuple(ColumnProfile.from_dict(c) for c in d["columns"]),
            row_count=d["row_count"],
            target_candidates=tuple(d.get("target_candidates", [])),
            class_distribution=dict(d.get("class_distribution", {})),
            correlation_pairs=tuple((a, b, r) for a, b, r in d.get("correlation_pairs", [])),
            file_manifest=tuple(FileEntry.from_dict(f) for f in d.get("file_manifest", [])),
            primary_table=d.get("primary_table"),
            malformed_rows=d.get("malformed_rows", 0),
            sampled_rows=d.get("sampled_rows", 0),
        )


# ---------------------------------------------------------------------------
# Blueprint


@dataclass(frozen=True)
class PrepDirective:
    """One preprocessing instruction: what transform, on which columns, why."""

    transform: str
    columns: tuple[str, ...] = ()
    params: Mapping[str, Any] = field(default_factory=dict)
    rationale: str = ""
    creates: tuple[str, ...] = ()  # derived columns this directive declares

    def to_dict(self) -> dict:
        return {
            "transform": self.transform,
            "columns": list(self.columns),
            "params": dict(self.params),
            "rationale": self.rationale,
            "creates": list(self.creates),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "PrepDirective":
        return cls(
            transform=d["transform"],
            columns=tuple(d.get("columns", [])),
            params=dict(d.get("params", {})),
            rationale=d.get("rationale", ""),
            creates=tuple(d.get("creates", [])),
        )


@dataclass(frozen=True)
class ModelPlan:
    track: Track
    candidate: str | None = None  # checkpoint/architecture reference
    notes: str = ""

    def __post_init__(self):
        if self.track is Track.TRADITIONAL and self.candidate is not None:
            raise ValueError("traditional track carries no candidate payload")
        if self.track is not Track.TRADITIONAL and not self.candidate:
            raise ValueError(f"{self.track.value} track requires a candidate reference")

    def to_dict(self) -> dict:
        return {"track": self.track.value, "candidate": self.candidate, "notes": self.notes}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ModelPlan":
        return cls(track=Track(d["track"]), candidate=d.get("candidate"), notes=d.get("notes", ""))


@dataclass(frozen=True)
class TrainPlan:
    strategy: str  # e.g. grid_search, random_search, bayesian
    search_space: Mapping[str, Any] = field(default_factory=dict)
    loss: str | None = None

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "search_space": {k: list(v) if isinstance(v, (list, tuple)) else v
                             for k, v in self.search_space.items()},
            "loss": self.loss,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "TrainPlan":
        return cls(
            strategy=d["strategy"],
            search_space=dict(d.get("search_space", {})),
            loss=d.get("loss"),
        )


@dataclass(frozen=True)
class EvalPlan:
    scheme: str  # e.g. stratified_holdout, stratified_kfold
    metric: str
    params: Mapping[str, Any] = field(default_factory=dict)
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "scheme": self.scheme,
            "metric": self.metric,
            "params": dict(self.params),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "EvalPlan":
        return cls(
            scheme=d["scheme"],
            metric=d["metric"],
            params=dict(d.get("params", {})),
            seed=d.get("seed", 0),
        )


@dataclass(frozen=True)
class StrategicBlueprint:
    """The four-part architectural invariant that prunes code generation."""

    prep: tuple[PrepDirective, ...]
    model: ModelPlan
    train: TrainPlan
    eval: EvalPlan
    contract: "Any"  # InterfaceContract; typed loosely to avoid an import cycle
    provenance: Mapping[str, str] = field(default_factory=dict)

    @property
    def contract_hash(self) -> str:
        return canonical.digest(self.contract.to_dict())

    def to_dict(self) -> dict:
        return {
            "schema_version": canonical.SCHEMA_VERSION,
            "prep": [p.to_dict() for p in self.prep],
            "model": self.model.to_dict(),
            "train": self.train.to_dict(),
            "eval": self.eval.to_dict(),
            "contract": self.contract.to_dict(),
            "provenance": dict(self.provenance),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "StrategicBlueprint":
        from .contracts import InterfaceContract

        return cls(
            prep=tuple(PrepDirective.from_dict(p) for p in d["prep"]),
            model=ModelPlan.from_dict(d["model"]),
            train=TrainPlan.from_dict(d["train"]),
            eval=EvalPlan.from_dict(d["eval"]),
            contract=InterfaceContract.from_dict(d["contract"]),
            provenance=dict(d.get("provenance", {})),
        )


def validate_blueprint(
    b: StrategicBlueprint,
    f: MetaFeatures,
    expected_metric: str | None = None,
) -> list[str]:
    """Structural validation of a blueprint against the measured profile.

    Returns a list of violation strings; empty means the blueprint holds.
    Violations are data, not errors: planning decides what to do with them.
    """
    violations: list[str] = []
    known = set(f.column_names)
    for directive in b.prep:
        for col in directive.columns:
            if col not in known:
                violations.append(
                    f"prep directive {directive.transform!r} targets column {col!r} "
                    "absent from the data profile"
                )
        known.update(directive.creates)
    if not b.train.search_space:
        violations.append("train plan has an empty hyperparameter search space")
    for param, space in b.train.search_space.items():
        if isinstance(space, (list, tuple)) and len(space) == 0:
            violations.append(f"train plan search space for {param!r} is empty")
        if isinstance(space, dict) and not space:
            violations.append(f"train plan search space for {param!r} is empty")
    if not b.train.strategy:
        violations.append("train plan names no optimization strategy")
    if not b.eval.scheme:
        violations.append("eval plan names no validation scheme")
    if not b.eval.metric:
        violations.append("eval plan names no metric")
    if expected_metric and expected_metric != UNKNOWN and b.eval.metric != expected_metric:
        violations.append(
            f"eval metric {b.eval.metric!r} does not match the task metric {expected_metric!r}"
        )
    return violations


# ---------------------------------------------------------------------------
# Generated code and execution evidence


@dataclass(frozen=True)
class GeneratedModule:
    stage: Stage
    source_text: str
    entrypoint: str
    declared_imports: tuple[str, ...] = ()
    revision: int = 0

    def __post_init__(self):
        if not self.source_text.strip():
            raise ValueError("source_text must be non-empty")
        if self.revision < 0:
            raise ValueError("revision must be >= 0")

    def to_dict(self) -> dict:
        return {
            "stage": self.stage.value,
            "source_text": self.source_text,
            "entrypoint": self.entrypoint,
            "declared_imports": list(self.declared_imports),
            "revision": self.revision,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "GeneratedModule":
        return cls(
            stage=Stage(d["stage"]),
            source_text=d["source_text"],
            entrypoint=d["entrypoint"],
            declared_imports=tuple(d.get("declared_imports", [])),
            revision=d.get("revision", 0),
        )


@dataclass(frozen=True)
class TracebackFrame:
    file: str
    line: int
    function: str
    text: str = ""  # source line under the frame header, when present

    def to_dict(self) -> dict:
        return {"file": self.file, "line": self.line, "function": self.function, "text": self.text}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "TracebackFrame":
        return cls(file=d["file"], line=d["line"], function=d["function"], text=d.get("text", ""))


@dataclass(frozen=True)
class ParsedTraceback:
    frames: tuple[TracebackFrame, ...]  # outermost first, innermost last
    error_type: str = ""
    error_message: str = ""

    @property
    def innermost(self) -> TracebackFrame | None:
        return self.frames[-1] if self.frames else None

    def to_dict(self) -> dict:
        return {
            "frames": [f.to_dict() for f in self.frames],
            "error_type": self.error_type,
            "error_message": self.error_message,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ParsedTraceback":
        return cls(
            frames=tuple(TracebackFrame.from_dict(f) for f in d.get("frames", [])),
            error_type=d.get("error_type", ""),
            error_message=d.get("error_message", ""),
        )


@dataclass(frozen=True)
class ExecutionResult:
    exit_status: int
    wall_time: float
    stdout_tail: str = ""
    stderr_tail: str = ""
    traceback: ParsedTraceback | None = None
    artifact_report: "Any" = None  # ContractReport, present only on stage completion
    timed_out: bool = False

    def __post_init__(self):
        if self.timed_out and self.exit_status == 0:
            raise ValueError("a timed-out execution cannot report a zero exit status")

    @property
    def ok(self) -> bool:
        return self.exit_status == 0 and not self.timed_out

    def to_dict(self) -> dict:
        return {
            "exit_status": self.exit_status,
            "wall_time": self.wall_time,
            "stdout_tail": self.stdout_tail,
            "stderr_tail": self.stderr_tail,
            "traceback": self.traceback.to_dict() if self.traceback else None,
            "artifact_report": self.artifact_report.to_dict() if self.artifact_report else None,
            "timed_out": self.timed_out,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ExecutionResult":
        from .contracts import ContractReport

        return cls(
            exit_status=d["exit_status"],
            wall_time=d["wall_time"],
            stdout_tail=d.get("stdout_tail", ""),
            stderr_tail=d.get("stderr_tail", ""),
            traceback=ParsedTraceback.from_dict(d["traceback"]) if d.get("traceback") else None,
            artifact_report=ContractReport.from_dict(d["artifact_report"])
            if d.get("artifact_report")
            else None,
            timed_out=d.get("timed_out", False),
        )


@dataclass(frozen=True)
class FaultClassification:
    fault_class: FaultClass
    localized_stage: Stage
    infra_flag: bool = False  # missing dependency / interpreter; orthogonal to class
    violated_constraints: tuple[str, ...] = ()
    repair_hint: str = ""

    def to_dict(self) -> dict:
        return {
            "fault_class": self.fault_class.value,
            "localized_stage": self.localized_stage.value,
            "infra_flag": self.infra_flag,
            "violated_constraints": list(self.violated_constraints),
            "repair_hint": self.repair_hint,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "FaultClassification":
        return cls(
            fault_class=FaultClass(d["fault_class"]),
            localized_stage=Stage(d["localized_stage"]),
            infra_flag=d.get("infra_flag", False),
            violated_constraints=tuple(d.get("violated_constraints", [])),
            repair_hint=d.get("repair_hint", ""),
        )


# Admissible track-state transitions. `coding -> failed` covers generation
# failures that never reach the sandbox.
_TRANSITIONS: dict[RunStatus, frozenset[RunStatus]] = {
    RunStatus.PLANNED: frozenset({RunStatus.CODING}),
    RunStatus.CODING: frozenset({RunStatus.VERIFYING, RunStatus.FAILED}),
    RunStatus.VERIFYING: frozenset({RunStatus.VALIDATED, RunStatus.DEBUGGING, RunStatus.FAILED}),
    RunStatus.DEBUGGING: frozenset({RunStatus.VERIFYING}),
    RunStatus.VALIDATED: frozenset(),
    RunStatus.FAILED: frozenset(),
}


class InvalidTransition(EngineError):
    code = "INVALID_TRANSITION"


@dataclass
class TrackRun:
    """Mutable per-track pipeline state; owned by a single track worker."""

    track: Track
    blueprint: StrategicBlueprint
    debug_budget: int
    modules: dict[Stage, list[GeneratedModule]] = field(default_factory=dict)
    executions: list[ExecutionResult] = field(default_factory=list)
    debug_attempts_used: int = 0
    status: RunStatus = RunStatus.PLANNED
    validation_score: float | None = None
    notes: list[str] = field(default_factory=list)

    def transition(self, new_status: RunStatus) -> None:
        if new_status not in _TRANSITIONS[self.status]:
            raise InvalidTransition(f"{self.status.value} -> {new_status.value}")
        if new_status is RunStatus.VALIDATED:
            if self.validation_score is None:
                raise InvalidTransition("validated requires a validation score")
            last = self.executions[-1] if self.executions else None
            if last is None or not last.ok:
                raise InvalidTransition("validated requires a passing final execution")
        self.status = new_status

    def record_module(self, module: GeneratedModule) -> None:
        self.modules.setdefault(module.stage, []).append(module)

    def current(self, stage: Stage) -> GeneratedModule | None:
        history = self.modules.get(stage)
        return history[-1] if history else None

    def use_debug_attempt(self) -> None:
        if self.debug_attempts_used >= self.debug_budget:
            raise EngineError("debug budget exhausted")
        self.debug_attempts_used += 1

    def to_dict(self) -> dict:
        return {
            "track": self.track.value,
            "status": self.status.value,
            "debug_budget": self.debug_budget,
            "debug_attempts_used": self.debug_attempts_used,
            "validation_score": self.validation_score,
            "module_revisions": {
                stage.value: [m.revision for m in history]
                for stage, history in sorted(self.modules.items(), key=lambda kv: kv[0].value)
            },
            "executions": len(self.executions),
            "notes": list(self.notes),
        }


# ---------------------------------------------------------------------------
# Scores and telemetry

_CONSISTENCY_TOL = 1e-12


@dataclass(frozen=True)
class NormalizedScore:
    rule: NormalizationRule
    value: float
    raw: float | None = None

    def __post_init__(self):
        import math

        if not 0.0 <= self.value <= 1.0:
            raise ValueError(f"normalized value out of [0,1]: {self.value}")
        if self.rule is NormalizationRule.FAILURE_ZERO:
            if self.value != 0.0 or self.raw is not None:
                raise ValueError("failure_zero requires value=0 and no raw score")
            return
        if self.raw is None:
            raise ValueError(f"{self.rule.value} requires a raw score")
        expected = {
            NormalizationRule.IDENTITY: self.raw,
            NormalizationRule.EXP_DECAY: math.exp(-self.raw),
            NormalizationRule.BOUNDED_AFFINE: (self.raw + 1.0) / 2.0,
        }[self.rule]
        if abs(expected - self.value) > _CONSISTENCY_TOL:
            raise ValueError(
                f"value {self.value} inconsistent with {self.rule.value}({self.raw})"
            )

    def to_dict(self) -> dict:
        return {"rule": self.rule.value, "value": self.value, "raw": self.raw}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "NormalizedScore":
        return cls(rule=NormalizationRule(d["rule"]), value=d["value"], raw=d.get("raw"))


@dataclass
class RunTelemetry:
    phase_seconds: dict[str, float] = field(default_factory=dict)
    llm_calls: int = 0
    prompt_tokens: int = 0
    completion_tokens: int = 0
    estimated_cost: float = 0.0

    def to_dict(self) -> dict:
        return {
            "phase_seconds": {k: canonical.canonical_number(v) for k, v in sorted(self.phase_seconds.items())},
            "llm_calls": self.llm_calls,
            "prompt_tokens": self.prompt_tokens,
            "completion_tokens": self.completion_tokens,
            "estimated_cost": canonical.canonical_number(self.estimated_cost),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "RunTelemetry":
        return cls(
            phase_seconds=dict(d.get("phase_seconds", {})),
            llm_calls=d.get("llm_calls", 0),
            prompt_tokens=d.get("prompt_tokens", 0),
            completion_tokens=d.get("completion_tokens", 0),
            estimated_cost=d.get("estimated_cost", 0.0),
        )


__all__ = [
    "UNKNOWN",
    "ZERO_KNOWLEDGE_DESCRIPTION",
    "ObjectiveKind",
    "MetricDirection",
    "Track",
    "TRACK_ORDER",
    "Stage",
    "RunStatus",
    "FaultClass",
    "NormalizationRule",
    "TaskSpec",
    "SubmissionFormat",
    "TaskSummary",
    "ColumnProfile",
    "FileEntry",
    "MetaFeatures",
    "PrepDirective",
    "ModelPlan",
    "TrainPlan",
    "EvalPlan",
    "StrategicBlueprint",
    "validate_blueprint",
    "GeneratedModule",
    "TracebackFrame",
    "ParsedTraceback",
    "ExecutionResult",
    "FaultClassification",
    "InvalidTransition",
    "TrackRun",
    "NormalizedScore",
    "RunTelemetry",
    "replace",
]
