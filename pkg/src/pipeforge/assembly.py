"""Pipeline assembly, end-to-end verification, fault localization, repair.

Assembly is deterministic template work: both stage sources are embedded
unmodified (future-imports excepted, which must sit at file top), imports are
merged, and a main() binds artifact paths between the stages and writes the
submission. Failures are classified into exactly two contract categories and
repaired one stage at a time under the debugging budget.
"""

from __future__ import annotations

import ast
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Protocol

from . import canonical
from .codegen import (
    SAMPLE_LIMIT_DEFAULT,
    run_stage_in_sandbox,
    scan_module,
    verify_stage,
)
from .contracts import (
    ArtifactObservation,
    ContractReport,
    InterfaceContract,
    Verdict,
    build_report,
    compute_verdicts,
)
from .errors import AssemblyConflict, CodegenFailed, EmptyCompletion
from .gateway import AgentRole, Gateway, LlmRequest, extract_code_block
from .measure import measure_artifact, measure_table
from .sandbox import Sandbox
from .types import (
    ExecutionResult,
    FaultClass,
    FaultClassification,
    GeneratedModule,
    RunStatus,
    Stage,
    StrategicBlueprint,
    TaskSpec,
    TrackRun,
)

STAGE_MARKER = "# === stage:{name} ==="
STAGE_END_MARKER = "# === end stage:{name} ==="

MAIN_ENTRYPOINT = "main"
MAIN_PARAMETERS = ("data_dir", "artifacts_dir", "submission_path", "sample_limit")

_INFRA_ERRORS = {"ModuleNotFoundError", "ImportError"}


class DocRetriever(Protocol):
    """Plug point for the debugger's documentation lookup tool."""

    def lookup(self, query: str) -> str: ...


class NullDocRetriever:
    """Default: the debugger proceeds without retrieved documentation."""

    def lookup(self, query: str) -> str:
        return ""


def _import_lines(source: str) -> list[str]:
    lines = source.splitlines()
    out = []
    try:
        tree = ast.parse(source)
    except SyntaxError:
        return []
    for node in tree.body:
        if isinstance(node, (ast.Import, ast.ImportFrom)):
            out.append("\n".join(lines[node.lineno - 1 : node.end_lineno]))
    return out


def _strip_future_imports(source: str) -> tuple[str, list[str]]:
    kept, futures = [], []
    for line in source.splitlines():
        if line.strip().startswith("from __future__ import"):
            futures.append(line.strip())
        else:
            kept.append(line)
    return "\n".join(kept), futures


def assemble(
    prep: GeneratedModule, model: GeneratedModule, contract: InterfaceContract
) -> GeneratedModule:
    """Bind the two verified stages into one executable pipeline module."""
    prep_scan = scan_module(prep.source_text)
    model_scan = scan_module(model.source_text)
    if prep_scan is None or model_scan is None:
        raise CodegenFailed("assembled", "stage source no longer parses")
    collisions = sorted(set(prep_scan.top_level) & set(model_scan.top_level))
    if collisions:
        raise AssemblyConflict(collisions)

    prep_body, prep_futures = _strip_future_imports(prep.source_text)
    model_body, model_futures = _strip_future_imports(model.source_text)
    merged_imports: list[str] = []
    for stmt in _import_lines(prep.source_text) + _import_lines(model.source_text):
        if stmt not in merged_imports and not stmt.startswith("from __future__"):
            merged_imports.append(stmt)

    artifact_paths = {a.name: a.filename for a in contract.artifacts}
    submission_columns = list(contract.submission.columns) if contract.submission else None
    prep_call = _call_expression(
        contract.preprocessing_entrypoint.function,
        contract.preprocessing_entrypoint.parameters,
    )
    model_call = _call_expression(
        contract.modeling_entrypoint.function,
        contract.modeling_entrypoint.parameters,
    )

    sections = []
    for future in dict.fromkeys(prep_futures + model_futures):
        sections.append(future)
    sections.append("\n".join(merged_imports))
    sections.append(STAGE_MARKER.format(name="preprocessing"))
    sections.append(prep_body)
    sections.append(STAGE_END_MARKER.format(name="preprocessing"))
    sections.append(STAGE_MARKER.format(name="modeling"))
    sections.append(model_body)
    sections.append(STAGE_END_MARKER.format(name="modeling"))
    sections.append(
        f'''
# Output -> input binding per contract artifact name, rooted at artifacts_dir.
ARTIFACT_FILES = {artifact_paths!r}

SUBMISSION_COLUMNS = {submission_columns!r}


def artifact_paths(artifacts_dir):
    import os

    return {{name: os.path.join(artifacts_dir, rel) for name, rel in ARTIFACT_FILES.items()}}


def write_submission(artifacts_dir, submission_path):
    import csv
    import os

    paths = artifact_paths(artifacts_dir)
    with open(paths["predictions"], "r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    columns = SUBMISSION_COLUMNS or header
    index = [header.index(c) for c in columns]
    os.makedirs(os.path.dirname(submission_path) or ".", exist_ok=True)
    with open(submission_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in body:
            writer.writerow([row[i] for i in index])


def {MAIN_ENTRYPOINT}(data_dir, artifacts_dir, submission_path, sample_limit=None):
    {prep_call}
    {model_call}
    write_submission(artifacts_dir, submission_path)
'''
    )
    source = "\n\n".join(s for s in sections if s.strip()) + "\n"
    combined_imports = tuple(sorted(set(prep.declared_imports) | set(model.declared_imports)))
    return GeneratedModule(
        stage=Stage.ASSEMBLED,
        source_text=source,
        entrypoint=MAIN_ENTRYPOINT,
        declared_imports=combined_imports,
        revision=max(prep.revision, model.revision),
    )


def _call_expression(function: str, parameters: tuple[str, ...]) -> str:
    binding = {
        "data_dir": "data_dir",
        "artifacts_dir": "artifacts_dir",
        "sample_limit": "sample_limit",
        "submission_path": "submission_path",
        "seed": "0",
    }
    args = ", ".join(f"{p}={binding[p]}" for p in parameters)
    return f"{function}({args})"


def stage_spans(assembled_source: str) -> dict[Stage, tuple[int, int]]:
    """1-based line spans of each embedded stage, from the section markers."""
    spans: dict[Stage, tuple[int, int]] = {}
    start: dict[str, int] = {}
    for i, line in enumerate(assembled_source.splitlines(), start=1):
        text = line.strip()
        for name in ("preprocessing", "modeling"):
            if text == STAGE_MARKER.format(name=name):
                start[name] = i
            elif text == STAGE_END_MARKER.format(name=name) and name in start:
                spans[Stage(name)] = (start[name], i)
    return spans


# ---------------------------------------------------------------------------
# Integrated verification


def _submission_verdicts(
    contract: InterfaceContract,
    submission_path: Path,
    observations: dict[str, ArtifactObservation],
    sample_limit: int,
) -> tuple[Verdict, ...]:
    verdicts: list[Verdict] = []
    if not submission_path.exists():
        return (Verdict("submission", "present", False, "missing"),)
    verdicts.append(Verdict("submission", "present", True))
    obs = measure_table(submission_path, "submission", sample_limit)
    declared = contract.submission
    if declared is not None:
        observed_columns = [c.name for c in obs.columns]
        ok = observed_columns == list(declared.columns)
        verdicts.append(
            Verdict(
                "submission",
                "columns",
                ok,
                "" if ok else f"declared {list(declared.columns)}, observed {observed_columns}",
            )
        )
        for col in declared.prediction_columns:
            seen = obs.column(col)
            nulls = seen.null_count if seen else None
            ok = seen is not None and seen.null_count == 0
            verdicts.append(
                Verdict("submission", f"not_null:{col}", ok, "" if ok else f"{nulls} null(s)")
            )
    test = observations.get("test_features")
    test_rows = test.row_count if test and test.status == "ok" else None
    if test_rows is None or obs.row_count != test_rows:
        verdicts.append(
            Verdict(
                "submission",
                "row_relation:submission.rows == test_features.rows",
                False,
                f"submission.rows={obs.row_count}, test_features.rows={test_rows}",
            )
        )
    else:
        verdicts.append(
            Verdict("submission", "row_relation:submission.rows == test_features.rows", True)
        )
    return tuple(verdicts)


def verify_integrated(
    assembled: GeneratedModule,
    contract: InterfaceContract,
    sandbox: Sandbox,
    mode: str,
    *,
    data_root: Path,
    artifacts_dir: Path,
    submission_dest: Path,
    sample_limit: int = SAMPLE_LIMIT_DEFAULT,
    timeout_s: float = 600.0,
    record_dir: Path | None = None,
) -> ExecutionResult:
    """Execute the assembled pipeline and gate it on the full contract plus
    submission-format conformance. The verdicts in the attached report ARE
    the runtime verification gate: ok exit + all passed = accepted."""
    if mode not in ("sample", "full"):
        raise ValueError(f"mode must be sample or full, got {mode!r}")
    effective_limit = sample_limit if mode == "sample" else None
    ws, result = run_stage_in_sandbox(
        assembled,
        contract,
        sandbox,
        data_root,
        artifacts_dir=artifacts_dir,
        entrypoint_params=MAIN_PARAMETERS,
        sample_limit=effective_limit,
        timeout_s=timeout_s,
        fresh_artifacts=True,  # the whole pipeline must reproduce its artifacts
    )
    try:
        report = None
        if result.ok:
            measure_limit = effective_limit or SAMPLE_LIMIT_DEFAULT * 100
            observations = {
                spec.name: measure_artifact(spec, artifacts_dir, measure_limit)
                for spec in contract.artifacts
            }
            scratch_submission = ws.path("out/submission.csv")
            if scratch_submission.exists():
                submission_dest.parent.mkdir(parents=True, exist_ok=True)
                submission_dest.write_bytes(scratch_submission.read_bytes())
            verdicts = compute_verdicts(contract, observations, Stage.ASSEMBLED)
            verdicts += _submission_verdicts(
                contract, submission_dest if submission_dest.exists() else scratch_submission,
                observations, measure_limit,
            )
            base = build_report(contract, observations, Stage.ASSEMBLED)
            report = ContractReport(
                stage=Stage.ASSEMBLED, observations=base.observations, verdicts=verdicts
            )
            result = replace(result, artifact_report=report)
        if record_dir is not None:
            record_dir.mkdir(parents=True, exist_ok=True)
            canonical.dump_path(
                {k: v for k, v in result.to_dict().items() if k != "artifact_report"},
                record_dir / "result.json",
            )
            if report is not None:
                canonical.dump_path(report.to_dict(), record_dir / "contract_report.json")
        return result
    finally:
        ws.cleanup()


def v_exec(result: ExecutionResult) -> bool:
    """The runtime verification gate over one integrated execution."""
    return bool(result.ok and result.artifact_report and result.artifact_report.all_passed)


# ---------------------------------------------------------------------------
# Fault classification


def _function_stage_map(
    contract: InterfaceContract,
    prep: GeneratedModule | None,
    model: GeneratedModule | None,
) -> dict[str, Stage]:
    mapping: dict[str, Stage] = {
        contract.preprocessing_entrypoint.function: Stage.PREPROCESSING,
        contract.modeling_entrypoint.function: Stage.MODELING,
    }
    for module, stage in ((prep, Stage.PREPROCESSING), (model, Stage.MODELING)):
        if module is None:
            continue
        scan = scan_module(module.source_text)
        if scan is None:
            continue
        for fn in scan.functions:
            mapping.setdefault(fn, stage)
    return mapping


def classify_failure(
    result: ExecutionResult,
    contract: InterfaceContract,
    b: StrategicBlueprint,
    *,
    prep: GeneratedModule | None = None,
    model: GeneratedModule | None = None,
    assembled: GeneratedModule | None = None,
    known_stage: Stage | None = None,
) -> FaultClassification:
    """Map a failing execution onto the two contract fault categories.

    Either the producer broke its post-condition (a preprocessing artifact or
    constraint is wrong) or the consumer violated its pre-condition (clean
    preprocessing evidence, failure inside modeling). Infrastructure failures
    (missing dependency or interpreter) are an orthogonal annotation, never a
    third class. Unattributable failures default to the preprocessing side,
    which is the cheaper stage to re-verify.
    """
    violated: tuple[str, ...] = ()
    stage: Stage | None = None
    notes: list[str] = []

    report = result.artifact_report
    if report is not None and not report.all_passed:
        violated = report.failed_constraints()
        stage = Stage.MODELING
        for verdict in report.verdicts:
            if verdict.passed:
                continue
            spec = contract.artifact(verdict.artifact)
            if spec is not None and spec.produced_by is Stage.PREPROCESSING:
                stage = Stage.PREPROCESSING
                break
        for verdict in report.verdicts:
            if not verdict.passed:
                notes.append(
                    f"{verdict.artifact}:{verdict.constraint} expected to hold, observed: "
                    f"{verdict.detail or 'violation'}"
                )

    if stage is None and result.traceback is not None and result.traceback.frames:
        mapping = _function_stage_map(contract, prep, model)
        for frame in reversed(result.traceback.frames):
            if frame.function in mapping:
                stage = mapping[frame.function]
                break
        if stage is None and assembled is not None:
            spans = stage_spans(assembled.source_text)
            for frame in reversed(result.traceback.frames):
                if not frame.file.endswith("stage_module.py"):
                    continue
                for span_stage, (lo, hi) in spans.items():
                    if lo <= frame.line <= hi:
                        stage = span_stage
                        break
                if stage is not None:
                    break
        if result.traceback.error_type:
            notes.append(
                f"{result.traceback.error_type}: {result.traceback.error_message}".strip(": ")
            )

    if stage is None and "MISSING_ENTRYPOINT:" in result.stderr_tail:
        marker = result.stderr_tail.split("MISSING_ENTRYPOINT:", 1)[1].splitlines()[0].strip()
        stage = (
            Stage.PREPROCESSING
            if marker == contract.preprocessing_entrypoint.function
            else Stage.MODELING
        )
        notes.append(f"entrypoint {marker!r} missing at runtime")

    if stage is None:
        stage = known_stage or Stage.PREPROCESSING
        if known_stage is None:
            notes.append(
                "failure not attributable from evidence; defaulting to the "
                "preprocessing stage"
            )
    if result.timed_out:
        notes.append(f"execution timed out after {result.wall_time:.1f}s")

    infra = False
    if result.traceback is not None and result.traceback.error_type in _INFRA_ERRORS:
        infra = True
    elif "No module named" in result.stderr_tail:
        infra = True

    fault_class = (
        FaultClass.CONTRACT_FULFILLMENT_FAILURE
        if stage is Stage.PREPROCESSING
        else FaultClass.CONTRACT_USAGE_VIOLATION
    )
    return FaultClassification(
        fault_class=fault_class,
        localized_stage=stage,
        infra_flag=infra,
        violated_constraints=violated,
        repair_hint="; ".join(notes),
    )


# ---------------------------------------------------------------------------
# Debugging loop

_DEBUGGER_SYSTEM = (
    "You repair exactly one stage module of an ML pipeline. You receive the "
    "faulty module, the fault classification, and the runtime evidence. "
    "Return the complete corrected module in a fenced code block; keep the "
    "same entrypoint."
)


@dataclass
class TrackContext:
    """Everything a track worker needs to verify and repair its pipeline."""

    spec: TaskSpec
    contract: InterfaceContract
    blueprint: StrategicBlueprint
    gw: Gateway
    sandbox: Sandbox
    track_dir: Path
    artifacts_dir: Path
    submission_dest: Path
    sample_limit: int = SAMPLE_LIMIT_DEFAULT
    stage_timeout: float = 600.0
    temperature: float = 0.2
    context_label: str = ""
    search: DocRetriever = field(default_factory=NullDocRetriever)
    shim_command: tuple[str, ...] | None = None

    def stage_source_path(self, module: GeneratedModule) -> Path:
        order = {
            Stage.PREPROCESSING: 1,
            Stage.MODELING: 2,
            Stage.ASSEMBLED: 3,
            Stage.ENSEMBLE: 4,
        }[module.stage]
        return self.track_dir / f"stage_{order}_rev{module.revision}.py"

    def persist_module(self, module: GeneratedModule) -> Path:
        path = self.stage_source_path(module)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(module.source_text, encoding="utf-8")
        return path


def regenerate_stage(
    faulty: GeneratedModule,
    classification: FaultClassification,
    last_result: ExecutionResult,
    ctx: TrackContext,
) -> GeneratedModule | None:
    """One repair attempt: a single debugger call, statically screened.

    Returns None when the completion is not a usable module; the attempt is
    still spent, mirroring a real failed repair round.
    """
    docs = ""
    if last_result.traceback is not None and last_result.traceback.error_type:
        docs = ctx.search.lookup(
            f"{last_result.traceback.error_type}: {last_result.traceback.error_message}"
        )
    traceback_text = ""
    if last_result.traceback is not None:
        traceback_text = canonical.dumps(last_result.traceback.to_dict())
    prompt = "\n".join(
        [
            f"Repair the {faulty.stage.value} stage module.",
            "FAULT CLASSIFICATION:\n" + canonical.dumps(classification.to_dict()),
            "RUNTIME EVIDENCE (stderr tail):\n" + last_result.stderr_tail[-4000:],
            ("PARSED TRACEBACK:\n" + traceback_text) if traceback_text else "",
            ("RETRIEVED DOCUMENTATION:\n" + docs) if docs else "",
            "CONTRACT:\n" + canonical.dumps(ctx.contract.to_dict()),
            "FAULTY MODULE:\n```python\n" + faulty.source_text + "\n```",
        ]
    )
    resp = ctx.gw.complete(
        LlmRequest(
            agent_role=AgentRole.DEBUGGER,
            system_prompt=_DEBUGGER_SYSTEM,
            user_prompt=prompt,
            temperature=ctx.temperature,
            max_tokens=8192,
            context=ctx.context_label,
        )
    )
    try:
        block = extract_code_block(resp.text)
    except EmptyCompletion:
        return None
    scan = scan_module(block.text)
    if scan is None or faulty.entrypoint not in scan.functions:
        return None
    return GeneratedModule(
        stage=faulty.stage,
        source_text=block.text,
        entrypoint=faulty.entrypoint,
        declared_imports=scan.imports,
        revision=faulty.revision + 1,
    )


def _verify_stage_for(run: TrackRun, module: GeneratedModule, ctx: TrackContext):
    return verify_stage(
        module,
        ctx.contract,
        ctx.sandbox,
        data_root=Path(ctx.spec.data_root),
        artifacts_dir=ctx.artifacts_dir,
        sample_limit=ctx.sample_limit,
        timeout_s=ctx.stage_timeout,
        shim_command=ctx.shim_command,
    )


def debug_loop(run: TrackRun, K: int, ctx: TrackContext) -> TrackRun:
    """Repair under budget: classify, regenerate ONLY the faulty stage,
    re-verify it, re-assemble when both stages exist, re-verify end to end.

    Exits with the last verification passing (status stays `verifying`; the
    caller scores and promotes) or with the budget exhausted (`failed`).
    Budget exhaustion is a normal terminal state, not an error.
    """
    if run.status is not RunStatus.VERIFYING:
        raise ValueError("debug_loop expects a track in the verifying state")
    while True:
        last = run.executions[-1] if run.executions else None
        if last is None:
            raise ValueError("debug_loop expects at least one failed execution")
        if run.debug_attempts_used >= K:
            run.transition(RunStatus.FAILED)
            run.notes.append(f"debug budget K={K} exhausted")
            return run

        prep = run.current(Stage.PREPROCESSING)
        model = run.current(Stage.MODELING)
        assembled = run.current(Stage.ASSEMBLED)
        known = Stage.MODELING if (model is not None and assembled is None) else None
        classification = classify_failure(
            last, ctx.contract, run.blueprint,
            prep=prep, model=model, assembled=assembled, known_stage=known,
        )
        faulty_stage = classification.localized_stage
        if faulty_stage is Stage.MODELING and model is None:
            faulty_stage = Stage.PREPROCESSING
        faulty = run.current(faulty_stage)

        run.transition(RunStatus.DEBUGGING)
        run.use_debug_attempt()
        attempt_dir = ctx.track_dir / "debug" / f"attempt_{run.debug_attempts_used}"
        attempt_dir.mkdir(parents=True, exist_ok=True)
        (attempt_dir / "traceback.txt").write_text(last.stderr_tail, encoding="utf-8")
        canonical.dump_path(classification.to_dict(), attempt_dir / "classification.json")

        repaired = regenerate_stage(faulty, classification, last, ctx)
        run.transition(RunStatus.VERIFYING)
        if repaired is None:
            run.notes.append(
                f"attempt {run.debug_attempts_used}: debugger returned no usable module"
            )
            continue
        run.record_module(repaired)
        ctx.persist_module(repaired)
        (attempt_dir / f"regenerated_{faulty_stage.value}.py").write_text(
            repaired.source_text, encoding="utf-8"
        )

        result, passed = _verify_stage_for(run, repaired, ctx)
        run.executions.append(result)
        if not passed:
            continue

        prep = run.current(Stage.PREPROCESSING)
        model = run.current(Stage.MODELING)
        if model is None:
            return run  # preprocessing-phase repair: stage gate passed
        try:
            assembled = assemble(prep, model, ctx.contract)
        except AssemblyConflict as exc:
            run.notes.append(f"attempt {run.debug_attempts_used}: {exc}")
            continue
        run.record_module(assembled)
        ctx.persist_module(assembled)
        integrated = verify_integrated(
            assembled,
            ctx.contract,
            ctx.sandbox,
            "sample",
            data_root=Path(ctx.spec.data_root),
            artifacts_dir=ctx.artifacts_dir,
            submission_dest=ctx.submission_dest,
            sample_limit=ctx.sample_limit,
            timeout_s=ctx.stage_timeout,
        )
        run.executions.append(integrated)
        if v_exec(integrated):
            return run
