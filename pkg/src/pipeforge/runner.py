"""End-to-end run controller: perception, planning, per-track code
generation with verification and repair, evaluation, and the final report.

A run directory is self-describing: profile, summary, contract, blueprints,
per-track sources and state, debug diagnostics, transcript, submission, and
a deterministic report.json (wall times and token counts live in a separate
telemetry.json so reports from identical seeded runs compare byte-equal).
"""

from __future__ import annotations

import shutil
import threading
import time
from contextlib import contextmanager
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from . import canonical, evaluation, perception, planning, retrieval
from .assembly import TrackContext, assemble, debug_loop, v_exec, verify_integrated
from .codegen import generate_modeling, generate_preprocessing, verify_stage
from .config import RunConfig
from .contracts import InterfaceContract
from .errors import AssemblyConflict, EngineError, NoValidPipeline, ScoringFailed
from .gateway import Gateway, HttpProvider, ScriptedProvider
from .sandbox import Budget, Sandbox
from .types import (
    ExecutionResult,
    MetaFeatures,
    MetricDirection,
    RunStatus,
    Stage,
    StrategicBlueprint,
    TaskSpec,
    TaskSummary,
    Track,
    TRACK_ORDER,
    ZERO_KNOWLEDGE_DESCRIPTION,
)

REPORT_SCHEMA_VERSION = 1


@dataclass
class RunOutcome:
    run_dir: Path
    report: dict
    valid: bool


def _discover_task(task_dir: Path, config: RunConfig) -> TaskSpec:
    data_root = task_dir / "data" if (task_dir / "data").is_dir() else task_dir
    description = ""
    for name in ("description.txt", "description.md"):
        p = task_dir / name
        if p.exists():
            description = p.read_text(encoding="utf-8")
            break
    if config.strip_description:
        description = ZERO_KNOWLEDGE_DESCRIPTION
    sample = None
    for p in sorted(data_root.rglob("*.csv")):
        if perception.classify_file_role(p.name) == "sample_submission":
            sample = str(p)
            break
    return TaskSpec(
        description_text=description,
        data_root=str(data_root),
        submission_sample=sample,
        time_budget=config.time_budget,
        exec_interpreter=config.interpreter,
    )


def _build_gateway(config: RunConfig, run_dir: Path) -> Gateway:
    if config.provider == "scripted":
        if not config.fixtures_dir:
            raise EngineError("scripted provider needs fixtures_dir")
        provider = ScriptedProvider(config.fixtures_dir)
    else:
        provider = HttpProvider(
            endpoint=config.endpoint,
            model=config.model,
            api_key_env=config.api_key_env,
            max_attempts=config.retry_attempts,
            backoff_base=config.retry_backoff,
        )
    prices = {k: tuple(v) for k, v in config.price_per_1k.items()}
    return Gateway(
        provider=provider,
        transcript_path=run_dir / "transcript.jsonl",
        price_per_1k=prices,
    )


class _PhaseTimer:
    """Wall-clock accounting per phase, written to telemetry only."""

    def __init__(self, gw: Gateway):
        self.phases = gw.telemetry.phase_seconds
        self._lock = threading.Lock()

    @contextmanager
    def __call__(self, name: str):
        t0 = time.monotonic()
        try:
            yield
        finally:
            with self._lock:
                self.phases[name] = self.phases.get(name, 0.0) + (time.monotonic() - t0)


def run_task(task_dir: Path, out_dir: Path, config: RunConfig) -> RunOutcome:
    """Execute the full workflow for one task; never raises on pipeline
    failures (they land in the report), only on usage errors."""
    task_dir = Path(task_dir)
    run_dir = Path(out_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    gw = _build_gateway(config, run_dir)
    phase = _PhaseTimer(gw)
    spec = _discover_task(task_dir, config)
    budget = Budget(spec.time_budget)
    sandbox = Sandbox(
        interpreter=spec.exec_interpreter,
        budget=budget,
        max_concurrency=max(len(config.tracks), 1),
        seed=config.seed,
        drop_privileges=config.drop_privileges,
    )

    failure: dict | None = None
    summary = None
    profile = None
    blueprints: list[StrategicBlueprint] = []
    contract: InterfaceContract | None = None
    runs: list = []
    current_phase = "perception"
    try:
        with phase("perception"):
            summary = perception.analyze_description(spec, gw, temperature=config.temperature)
            profile = perception.profile_dataset(
                spec.data_root,
                sample_rows=config.sample_rows,
                seed=config.seed,
                max_classes_abs=config.max_classes_abs,
                max_classes_frac=config.max_classes_frac,
            )
            canonical.dump_path(profile.to_dict(), run_dir / "profile.json")
            summary = perception.infer_semantics(
                summary,
                profile,
                max_classes_abs=config.max_classes_abs,
                max_classes_frac=config.max_classes_frac,
            )
            canonical.dump_path(summary.to_dict(), run_dir / "summary.json")

        current_phase = "planning"
        with phase("planning"):
            retriever = retrieval.CatalogRetriever(config.catalog or None)
            candidates = retriever.retrieve(summary, profile, config.max_candidates)
            if config.validate_urls:
                candidates = retrieval.validate_candidates(candidates)
            contract = planning.define_contract(
                summary, profile, gw, temperature=config.temperature
            )
            canonical.dump_path(contract.to_dict(), run_dir / "contract.json")
            blueprints = planning.synthesize_blueprint(
                summary,
                profile,
                candidates,
                contract,
                gw,
                config.track_set,
                seed=config.seed,
                temperature=config.temperature,
            )
            bp_dir = run_dir / "blueprints"
            bp_dir.mkdir(exist_ok=True)
            for b in blueprints:
                canonical.dump_path(b.to_dict(), bp_dir / f"{b.model.track.value}.json")
    except EngineError as exc:
        failure = {"code": exc.code, "phase": current_phase, "message": str(exc)}

    if failure is None:
        workers = [
            _TrackWorker(spec, summary, profile, b, contract, gw, sandbox, run_dir, config, phase)
            for b in blueprints
        ]
        if config.parallel_tracks and len(workers) > 1:
            with ThreadPoolExecutor(max_workers=len(workers)) as pool:
                runs = list(pool.map(lambda w: w.run(), workers))
        else:
            runs = [w.run() for w in workers]

    report, valid = _finalize(
        run_dir, spec, summary, contract, runs, config, sandbox, gw, failure
    )
    canonical.dump_path(gw.telemetry.to_dict(), run_dir / "telemetry.json")
    return RunOutcome(run_dir=run_dir, report=report, valid=valid)


class _TrackWorker:
    """Owns one TrackRun from coding through validation."""

    def __init__(self, spec, summary, profile, blueprint, contract, gw, sandbox, run_dir, config, phase):
        self.spec: TaskSpec = spec
        self.summary: TaskSummary = summary
        self.profile: MetaFeatures = profile
        self.blueprint: StrategicBlueprint = blueprint
        self.contract: InterfaceContract = contract
        self.gw = gw
        self.config: RunConfig = config
        self.track: Track = blueprint.model.track
        self.run_dir = run_dir
        self.phase = phase
        track_dir = run_dir / "tracks" / self.track.value
        self.ctx = TrackContext(
            spec=spec,
            contract=contract,
            blueprint=blueprint,
            gw=gw,
            sandbox=sandbox,
            track_dir=track_dir,
            artifacts_dir=run_dir / "artifacts" / self.track.value,
            submission_dest=track_dir / "submission.csv",
            sample_limit=config.sample_limit,
            stage_timeout=config.stage_timeout,
            temperature=config.temperature,
            context_label=self.track.value,
            shim_command=config.shim_argv,
        )

    def run(self):
        from .types import TrackRun

        run = TrackRun(
            track=self.track, blueprint=self.blueprint, debug_budget=self.config.debug_budget
        )
        try:
            self._drive(run)
        except EngineError as exc:
            run.notes.append(f"{exc.code}: {exc}")
            if run.status not in (RunStatus.FAILED, RunStatus.VALIDATED):
                run.status = RunStatus.FAILED  # terminal bookkeeping, transition may be mid-phase
        self._persist_state(run)
        return run

    def _drive(self, run) -> None:
        ctx = self.ctx
        run.transition(RunStatus.CODING)
        with self.phase("codegen"):
            prep = generate_preprocessing(
                self.blueprint, self.spec, self.profile, self.gw,
                context=self.track.value, temperature=self.config.temperature,
            )
        run.record_module(prep)
        ctx.persist_module(prep)
        result, passed = self._verify_stage(run, prep)
        if not passed:
            run.transition(RunStatus.VERIFYING)
            with self.phase("verification"):
                run = debug_loop(run, self.config.debug_budget, ctx)
            if run.status is RunStatus.FAILED:
                return
        prep = run.current(Stage.PREPROCESSING)
        prep_report = self._latest_stage_report(run, Stage.PREPROCESSING)
        if prep_report is None or not prep_report.all_passed:
            run.notes.append("preprocessing never satisfied its post-condition")
            if run.status is not RunStatus.FAILED:
                self._fail(run)
            return

        with self.phase("codegen"):
            model = generate_modeling(
                self.blueprint, self.contract, prep, prep_report, self.gw,
                context=self.track.value, temperature=self.config.temperature,
            )
        run.record_module(model)
        ctx.persist_module(model)
        result, passed = self._verify_stage(run, model)
        if not passed:
            if run.status is RunStatus.CODING:
                run.transition(RunStatus.VERIFYING)
            with self.phase("verification"):
                run = debug_loop(run, self.config.debug_budget, ctx)
            if run.status is RunStatus.FAILED:
                return

        if run.current(Stage.ASSEMBLED) is None:
            try:
                assembled = assemble(
                    run.current(Stage.PREPROCESSING), run.current(Stage.MODELING), self.contract
                )
            except AssemblyConflict as exc:
                run.notes.append(str(exc))
                self._fail(run)
                return
            run.record_module(assembled)
            ctx.persist_module(assembled)
            if run.status is RunStatus.CODING:
                run.transition(RunStatus.VERIFYING)
            integrated = self._verify_integrated(run, "sample")
            if not v_exec(integrated):
                with self.phase("verification"):
                    run = debug_loop(run, self.config.debug_budget, ctx)
                if run.status is RunStatus.FAILED:
                    return

        # Sample-mode gate passed; now the full run that produces the
        # deliverable submission and validation predictions.
        while True:
            full = self._verify_integrated(run, "full")
            if v_exec(full):
                break
            run.notes.append("full-data execution failed after sample-mode success")
            with self.phase("verification"):
                run = debug_loop(run, self.config.debug_budget, ctx)
            if run.status is RunStatus.FAILED:
                return

        try:
            with self.phase("evaluation"):
                evaluation.score_validation(
                    run, self.summary.optimization_metric, ctx.artifacts_dir
                )
        except ScoringFailed as exc:
            run.notes.append(f"{exc.code}: {exc}")
            self._fail(run)
            return
        run.transition(RunStatus.VALIDATED)

    def _verify_stage(self, run, module):
        with self.phase("verification"):
            result, passed = verify_stage(
                module,
                self.contract,
                self.ctx.sandbox,
                data_root=Path(self.spec.data_root),
                artifacts_dir=self.ctx.artifacts_dir,
                sample_limit=self.config.sample_limit,
                timeout_s=self.config.stage_timeout,
                record_dir=self.ctx.track_dir
                / f"verify_{module.stage.value}_rev{module.revision}",
                shim_command=self.ctx.shim_command,
            )
        run.executions.append(result)
        return result, passed

    def _verify_integrated(self, run, mode: str) -> ExecutionResult:
        assembled = run.current(Stage.ASSEMBLED)
        # sample mode gets the stage timeout; the full run may use whatever is
        # left of the global budget (the sandbox clamps to the remainder)
        timeout = self.config.stage_timeout if mode == "sample" else self.spec.time_budget
        with self.phase("verification"):
            result = verify_integrated(
                assembled,
                self.contract,
                self.ctx.sandbox,
                mode,
                data_root=Path(self.spec.data_root),
                artifacts_dir=self.ctx.artifacts_dir,
                submission_dest=self.ctx.submission_dest,
                sample_limit=self.config.sample_limit,
                timeout_s=timeout,
                record_dir=self.ctx.track_dir / f"integrated_{mode}_rev{assembled.revision}",
            )
        run.executions.append(result)
        return result

    def _latest_stage_report(self, run, stage: Stage):
        for result in reversed(run.executions):
            report = result.artifact_report
            if report is not None and report.stage is stage:
                return report
        return None

    def _fail(self, run) -> None:
        if run.status in (RunStatus.CODING, RunStatus.VERIFYING):
            run.transition(RunStatus.FAILED)
        else:
            run.status = RunStatus.FAILED

    def _persist_state(self, run) -> None:
        self.ctx.track_dir.mkdir(parents=True, exist_ok=True)
        canonical.dump_path(run.to_dict(), self.ctx.track_dir / "state.json")


def _finalize(run_dir, spec, summary, contract, runs, config, sandbox, gw, failure):
    """Persist selection state, copy the winning submission, emit report.json.

    The report itself is produced by rebuild_report() from on-disk state only,
    so a run directory always reproduces its own report."""
    direction = summary.metric_direction if summary else None
    valid = False

    if failure is None and runs:
        validated = [r for r in runs if r.status is RunStatus.VALIDATED]
        if validated:
            selected_ensemble = False
            if config.aggregate != "best" and len(validated) >= 2:
                selected_ensemble = _try_ensemble(
                    run_dir, spec, summary, contract, validated, config, sandbox
                )
            if selected_ensemble:
                valid = True
            else:
                best = evaluation.select_best(
                    runs, direction or MetricDirection.HIGHER_BETTER
                )
                src_submission = run_dir / "tracks" / best.track.value / "submission.csv"
                if src_submission.exists():
                    shutil.copy(src_submission, run_dir / "submission.csv")
                    valid = True
                else:
                    failure = {
                        "code": NoValidPipeline.code,
                        "phase": "evaluation",
                        "message": f"{best.track.value} track validated but left no submission",
                    }
        else:
            failure = {"code": NoValidPipeline.code, "phase": "verification",
                       "message": "no track produced a verified pipeline"}

    meta = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "task": {
            "data_root": str(Path(spec.data_root).name) if spec else None,
            "stripped": spec.stripped if spec else None,
        },
        "config": {
            "debug_budget": config.debug_budget,
            "tracks": list(config.tracks),
            "aggregate": config.aggregate,
            "seed": config.seed,
            "temperature": config.temperature,
        },
    }
    canonical.dump_path(meta, run_dir / "run_meta.json")
    if failure is not None:
        canonical.dump_path(failure, run_dir / "failure.json")

    report = rebuild_report(run_dir)
    canonical.dump_path(report, run_dir / "report.json")
    return report, report["valid"]


def rebuild_report(run_dir: Path) -> dict:
    """Recompute the run report from the directory's persisted state alone."""
    import json

    run_dir = Path(run_dir)

    def load(name):
        path = run_dir / name
        if not path.exists():
            return None
        return json.loads(path.read_text(encoding="utf-8"))

    meta = load("run_meta.json") or {"task": {}, "config": {}}
    summary = load("summary.json")
    contract_doc = load("contract.json")
    failure = load("failure.json")
    metric = summary.get("optimization_metric") if summary else None
    direction = None
    if summary and summary.get("metric_direction"):
        direction = MetricDirection(summary["metric_direction"])

    track_entries = []
    validated_states = []
    for track in TRACK_ORDER:
        state = load(f"tracks/{track.value}/state.json")
        if state is None:
            continue
        normalized = None
        if state.get("status") == RunStatus.VALIDATED.value and metric:
            try:
                normalized = evaluation.normalize_for_metric(
                    metric, state.get("validation_score"), failed=False
                ).to_dict()
            except EngineError as exc:
                normalized = {"error": exc.code}
        entry = dict(state)
        entry["normalized_validation"] = normalized
        track_entries.append(entry)
        if state.get("status") == RunStatus.VALIDATED.value:
            validated_states.append(state)

    ensemble = load("tracks/ensemble/state.json")
    selected = None
    if failure is None:
        if ensemble and ensemble.get("verified"):
            selected = "ensemble"
        elif validated_states:
            sign = -1.0 if direction is MetricDirection.LOWER_BETTER else 1.0
            precedence = {t.value: i for i, t in enumerate(TRACK_ORDER)}
            best = max(
                validated_states,
                key=lambda s: (sign * s["validation_score"], -precedence[s["track"]]),
            )
            selected = best["track"]

    submission = _submission_summary(run_dir / "submission.csv")
    task_info = dict(meta.get("task", {}))
    task_info.update(
        {
            "metric": metric,
            "objective": summary.get("objective_kind") if summary else None,
            "target": summary.get("target_column") if summary else None,
        }
    )
    return {
        "schema_version": meta.get("schema_version", REPORT_SCHEMA_VERSION),
        "task": task_info,
        "config": meta.get("config", {}),
        "contract_hash": canonical.digest(contract_doc) if contract_doc else None,
        "tracks": track_entries,
        "ensemble": ensemble,
        "selected": selected,
        "valid": bool(selected) and submission is not None,
        "failure": failure,
        "submission": submission,
    }


def _submission_summary(path: Path):
    if not path.exists():
        return None
    from .tabular import scan_table

    scan = scan_table(path, sample_rows=1)
    return {"columns": list(scan.header), "rows": scan.row_count}


def _try_ensemble(run_dir, spec, summary, contract, validated, config, sandbox) -> bool:
    """Build and verify the composite; returns False to fall back to best-valid."""
    ensemble_dir = run_dir / "tracks" / "ensemble"
    try:
        composite = evaluation.build_ensemble(validated, contract, config.aggregate)
    except (EngineError, ValueError):
        return False
    ensemble_dir.mkdir(parents=True, exist_ok=True)
    (ensemble_dir / "stage_4_rev0.py").write_text(composite.source_text, encoding="utf-8")
    artifacts_dir = run_dir / "artifacts" / "ensemble"
    submission_dest = ensemble_dir / "submission.csv"
    result = verify_integrated(
        composite,
        contract,
        sandbox,
        "full",
        data_root=Path(spec.data_root),
        artifacts_dir=artifacts_dir,
        submission_dest=submission_dest,
        sample_limit=config.sample_limit,
        timeout_s=spec.time_budget,  # full runs may use the budget remainder
        record_dir=ensemble_dir / "integrated_full",
    )
    score = None
    verified = v_exec(result)
    if verified:
        shutil.copy(submission_dest, run_dir / "submission.csv")
        try:
            probe = _ScoreProbe()
            evaluation.score_validation(probe, summary.optimization_metric, artifacts_dir)
            score = probe.validation_score
        except ScoringFailed:
            pass
    state = {
        "strategy": config.aggregate,
        "members": [r.track.value for r in validated],
        "validation_score": score,
        "verified": verified,
    }
    canonical.dump_path(state, ensemble_dir / "state.json")
    return verified


class _ScoreProbe:
    """Minimal stand-in accepted by score_validation for composite scoring."""

    validation_score: float | None = None
