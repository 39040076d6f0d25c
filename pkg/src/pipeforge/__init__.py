"""pipeforge: an orchestration engine that turns a task description plus raw
data into a verified, executable ML pipeline.

The workflow plans a strategic blueprint from an empirical data profile,
generates preprocessing and modeling modules under a machine-checkable
interface contract, executes and verifies every intermediate stage in a
sandbox, and repairs failures one stage at a time under a bounded debugging
budget. Pluggable LLM providers (including a deterministic scripted one)
keep the whole control plane testable offline.
"""

from .config import RunConfig, resolve_config
from .contracts import ArtifactKind, ArtifactSpec, ColumnSpec, ContractReport, InterfaceContract
from .types import (
    ExecutionResult,
    FaultClass,
    FaultClassification,
    GeneratedModule,
    MetaFeatures,
    MetricDirection,
    NormalizedScore,
    ObjectiveKind,
    RunStatus,
    Stage,
    StrategicBlueprint,
    TaskSpec,
    TaskSummary,
    Track,
    TrackRun,
)

__version__ = "0.1.0"

__all__ = [
    "RunConfig",
    "resolve_config",
    "ArtifactKind",
    "ArtifactSpec",
    "ColumnSpec",
    "ContractReport",
    "InterfaceContract",
    "ExecutionResult",
    "FaultClass",
    "FaultClassification",
    "GeneratedModule",
    "MetaFeatures",
    "MetricDirection",
    "NormalizedScore",
    "ObjectiveKind",
    "RunStatus",
    "Stage",
    "StrategicBlueprint",
    "TaskSpec",
    "TaskSummary",
    "Track",
    "TrackRun",
    "__version__",
]
