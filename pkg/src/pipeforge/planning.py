"""Strategy synthesis: the interface contract first, then one blueprint per
implementation track, each validated structurally before any code is written.

Both artifacts are requested from the LLM as structured JSON against the
published schemas; malformed or invalid responses earn at most two
re-prompts (with the violations quoted back) before the run fails loudly.
"""

from __future__ import annotations

import json
from typing import Sequence

from . import canonical
from .contracts import ArtifactKind, InterfaceContract, parse_row_relation
from .errors import ContractSynthesisFailed, PlanningFailed
from .gateway import AgentRole, Gateway, LlmRequest
from .perception import _extract_json
from .retrieval import ModelCandidate
from .types import (
    EvalPlan,
    MetaFeatures,
    ModelPlan,
    PrepDirective,
    Stage,
    StrategicBlueprint,
    TaskSummary,
    Track,
    TRACK_ORDER,
    TrainPlan,
    UNKNOWN,
    validate_blueprint,
)

RE_PROMPT_LIMIT = 2  # total attempts = 1 + RE_PROMPT_LIMIT

REQUIRED_ARTIFACTS = ("train_features", "train_target", "test_features", "predictions")
PREPROCESSING_ENTRYPOINT = "preprocess_data"
MODELING_ENTRYPOINT = "train_and_predict"

_CONTRACT_SYSTEM = (
    "You define the machine-checkable interface contract between a data "
    "preparation stage and a modeling stage. Reply with only a JSON object "
    "matching the interface-contract schema you are shown."
)

_BLUEPRINT_SYSTEM = (
    "You are the planning agent. Produce a strategic blueprint as a JSON "
    "object with keys prep, model, train, eval, provenance, matching the "
    "schema you are shown. Every preprocessing directive must target columns "
    "that exist in the data profile or declare the columns it creates."
)


def _profile_excerpt(f: MetaFeatures) -> dict:
    return {
        "row_count": f.row_count,
        "columns": [
            {
                "name": c.name,
                "dtype": c.dtype,
                "null_rate": c.null_rate,
                "distinct_count": c.distinct_count,
            }
            for c in f.columns
        ],
        "target_candidates": list(f.target_candidates),
        "class_distribution": dict(f.class_distribution),
        "files": [{"name": e.name, "role": e.role, "rows": e.row_count} for e in f.file_manifest],
    }


def check_contract(contract: InterfaceContract, summary: TaskSummary) -> list[str]:
    """Structural requirements every synthesized contract must meet."""
    problems = []
    names = {a.name for a in contract.artifacts}
    for required in REQUIRED_ARTIFACTS:
        if required not in names:
            problems.append(f"missing required artifact {required!r}")
    predictions = contract.artifact("predictions")
    if predictions is not None:
        if predictions.produced_by is not Stage.MODELING:
            problems.append("predictions must be produced by the modeling stage")
        relation_ok = False
        if predictions.row_relation:
            refs = set(parse_row_relation(predictions.row_relation))
            relation_ok = refs == {"predictions", "test_features"}
        if not relation_ok:
            problems.append(
                "predictions must carry the row relation "
                "'predictions.rows == test_features.rows'"
            )
    train_features = contract.artifact("train_features")
    if train_features is not None and train_features.kind not in (
        ArtifactKind.TABLE,
        ArtifactKind.DENSE_ARRAY,
    ):
        problems.append("train_features must be a table or dense_array")
    if contract.preprocessing_entrypoint.function != PREPROCESSING_ENTRYPOINT:
        problems.append(f"preprocessing entrypoint must be {PREPROCESSING_ENTRYPOINT!r}")
    if contract.modeling_entrypoint.function != MODELING_ENTRYPOINT:
        problems.append(f"modeling entrypoint must be {MODELING_ENTRYPOINT!r}")
    if summary.submission_format is not None:
        if contract.submission is None:
            problems.append("contract must carry the submission format")
        elif predictions is not None and predictions.columns:
            declared = {c.name for c in predictions.columns}
            if contract.submission.id_column not in declared:
                problems.append(
                    f"submission id column {contract.submission.id_column!r} "
                    "is not carried through the predictions artifact"
                )
    return problems


def define_contract(
    summary: TaskSummary,
    f: MetaFeatures,
    gw: Gateway,
    *,
    temperature: float = 0.2,
    max_tokens: int = 4096,
) -> InterfaceContract:
    prompt = (
        "Define the interface contract for this task.\n"
        f"TASK SUMMARY:\n{canonical.dumps(summary.to_dict())}\n"
        f"DATA PROFILE:\n{canonical.dumps(_profile_excerpt(f))}\n"
        f"Required artifacts: {list(REQUIRED_ARTIFACTS)}; required entrypoints: "
        f"{PREPROCESSING_ENTRYPOINT}({{data_dir, artifacts_dir, sample_limit}}) and "
        f"{MODELING_ENTRYPOINT}({{artifacts_dir, sample_limit}}).\n"
        "The predictions artifact must declare "
        "'predictions.rows == test_features.rows' and carry the submission id column."
    )
    failures: list[str] = []
    for attempt in range(1 + RE_PROMPT_LIMIT):
        user_prompt = prompt
        if failures:
            user_prompt += "\nYour previous response was rejected:\n- " + "\n- ".join(failures)
        resp = gw.complete(
            LlmRequest(
                agent_role=AgentRole.GUIDELINE,
                system_prompt=_CONTRACT_SYSTEM,
                user_prompt=user_prompt,
                temperature=temperature,
                max_tokens=max_tokens,
            )
        )
        try:
            contract = InterfaceContract.from_dict(_extract_json(resp.text))
        except (ValueError, KeyError, TypeError, json.JSONDecodeError) as exc:
            failures = [f"unparseable contract JSON: {exc}"]
            continue
        problems = check_contract(contract, summary)
        if not problems:
            return contract
        failures = problems
    raise ContractSynthesisFailed(
        f"contract invalid after {RE_PROMPT_LIMIT} re-prompt(s): " + "; ".join(failures)
    )


def _parse_blueprint(
    payload: dict, contract: InterfaceContract, track: Track, seed: int
) -> StrategicBlueprint:
    model = ModelPlan.from_dict(payload["model"])
    if model.track is not track:
        raise ValueError(f"blueprint declares track {model.track.value}, expected {track.value}")
    eval_payload = dict(payload["eval"])
    eval_payload.setdefault("seed", seed)
    return StrategicBlueprint(
        prep=tuple(PrepDirective.from_dict(p) for p in payload.get("prep", [])),
        model=model,
        train=TrainPlan.from_dict(payload["train"]),
        eval=EvalPlan.from_dict(eval_payload),
        contract=contract,
        provenance=dict(payload.get("provenance", {})),
    )


def _candidate_refs(candidates: Sequence[ModelCandidate], kind: str) -> list[str]:
    """References a blueprint may cite, preferring liveness-validated ones."""
    of_kind = [c for c in candidates if c.kind == kind]
    validated = [c for c in of_kind if c.validated]
    pool = validated if (kind == "pretrained_checkpoint" and validated) else of_kind
    refs = []
    for c in pool:
        refs.extend((c.name, c.reference))
    return refs


def _track_violations(
    b: StrategicBlueprint, track: Track, candidates: Sequence[ModelCandidate]
) -> list[str]:
    violations = []
    if track is Track.PRETRAINED:
        allowed = _candidate_refs(candidates, "pretrained_checkpoint")
        if b.model.candidate not in allowed:
            violations.append(
                f"pretrained blueprint must reference a retrieved checkpoint, "
                f"got {b.model.candidate!r}"
            )
    elif track is Track.CUSTOM_NEURAL:
        allowed = _candidate_refs(candidates, "architecture")
        if b.model.candidate not in allowed:
            violations.append(
                f"custom-neural blueprint must reference a retrieved topology, "
                f"got {b.model.candidate!r}"
            )
    return violations


def synthesize_blueprint(
    summary: TaskSummary,
    f: MetaFeatures,
    candidates: Sequence[ModelCandidate],
    contract: InterfaceContract,
    gw: Gateway,
    tracks: set[Track],
    *,
    seed: int = 0,
    temperature: float = 0.2,
    max_tokens: int = 8192,
) -> list[StrategicBlueprint]:
    """One validated blueprint per requested track, in deterministic order.

    Tracks that require retrieved candidates are skipped up front when none
    are available; if that leaves no tracks, planning fails.
    """
    if not tracks:
        raise PlanningFailed("no implementation tracks requested")
    has_checkpoint = any(c.kind == "pretrained_checkpoint" for c in candidates)
    has_architecture = any(c.kind == "architecture" for c in candidates)
    runnable = []
    for track in TRACK_ORDER:
        if track not in tracks:
            continue
        if track is Track.PRETRAINED and not has_checkpoint:
            continue
        if track is Track.CUSTOM_NEURAL and not has_architecture:
            continue
        runnable.append(track)
    if not runnable:
        raise PlanningFailed(
            "no plannable tracks: requested tracks need retrieved candidates "
            "and none are available"
        )

    blueprints = []
    for track in runnable:
        blueprints.append(
            _synthesize_one(summary, f, candidates, contract, gw, track,
                            seed=seed, temperature=temperature, max_tokens=max_tokens)
        )
    return blueprints


def _synthesize_one(
    summary, f, candidates, contract, gw, track, *, seed, temperature, max_tokens
) -> StrategicBlueprint:
    candidate_payload = [c.to_dict() for c in candidates]
    prompt = (
        f"Synthesize the strategic blueprint for the {track.value} implementation track.\n"
        f"TASK SUMMARY:\n{canonical.dumps(summary.to_dict())}\n"
        f"DATA PROFILE:\n{canonical.dumps(_profile_excerpt(f))}\n"
        f"RETRIEVED CANDIDATES:\n{canonical.dumps(candidate_payload)}\n"
        f"INTERFACE CONTRACT:\n{canonical.dumps(contract.to_dict())}\n"
        "The train section must name an optimization strategy and a non-empty "
        "hyperparameter search space; the eval section must name a validation "
        f"scheme and use the task metric {summary.optimization_metric!r}."
    )
    failures: list[str] = []
    for attempt in range(1 + RE_PROMPT_LIMIT):
        user_prompt = prompt
        if failures:
            user_prompt += "\nYour previous blueprint was rejected:\n- " + "\n- ".join(failures)
        resp = gw.complete(
            LlmRequest(
                agent_role=AgentRole.GUIDELINE,
                system_prompt=_BLUEPRINT_SYSTEM,
                user_prompt=user_prompt,
                temperature=temperature,
                max_tokens=max_tokens,
            )
        )
        try:
            blueprint = _parse_blueprint(_extract_json(resp.text), contract, track, seed)
        except (ValueError, KeyError, TypeError, json.JSONDecodeError) as exc:
            failures = [f"unparseable blueprint JSON: {exc}"]
            continue
        expected_metric = summary.optimization_metric
        violations = validate_blueprint(
            blueprint, f, expected_metric=None if expected_metric == UNKNOWN else expected_metric
        )
        violations += _track_violations(blueprint, track, candidates)
        if not violations:
            return blueprint
        failures = violations
    raise PlanningFailed(
        f"{track.value} blueprint invalid after {RE_PROMPT_LIMIT} re-prompt(s)",
        violations=failures,
    )
