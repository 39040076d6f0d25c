"""Shared builders for debug-loop and fault-classification tests."""

from __future__ import annotations

from pathlib import Path

from conftest import GOLDEN_PROVIDERS, TOY_TASK, scripted_gateway, toy_blueprint, toy_contract
from pipeforge.assembly import TrackContext
from pipeforge.codegen import verify_stage
from pipeforge.gateway import extract_code_block
from pipeforge.sandbox import Sandbox
from pipeforge.types import (
    GeneratedModule,
    RunStatus,
    Stage,
    TaskSpec,
    Track,
    TrackRun,
)

DATA_ROOT = TOY_TASK / "data"


def golden_source(role_file: str) -> str:
    return extract_code_block((GOLDEN_PROVIDERS / role_file).read_text()).text


def golden_prep_module(revision: int = 0) -> GeneratedModule:
    return GeneratedModule(
        stage=Stage.PREPROCESSING,
        source_text=golden_source("prep_coder_0.txt"),
        entrypoint="preprocess_data",
        declared_imports=("csv", "os"),
        revision=revision,
    )


def golden_model_module(revision: int = 0) -> GeneratedModule:
    return GeneratedModule(
        stage=Stage.MODELING,
        source_text=golden_source("model_coder_0.txt"),
        entrypoint="train_and_predict",
        declared_imports=("csv", "os"),
        revision=revision,
    )


BROKEN_MODEL_SOURCE = """\
import csv
import os


def train_and_predict(artifacts_dir, sample_limit=None):
    with open(os.path.join(artifacts_dir, "train_features.csv")) as fh:
        rows = list(csv.reader(fh))
    raise ValueError("shape mismatch: centroid dims disagree with %d features" % (len(rows[0])))
"""


def broken_model_module(revision: int = 0) -> GeneratedModule:
    return GeneratedModule(
        stage=Stage.MODELING,
        source_text=BROKEN_MODEL_SOURCE,
        entrypoint="train_and_predict",
        declared_imports=("csv", "os"),
        revision=revision,
    )


def fenced(source: str) -> str:
    return f"```python\n{source}\n```"


def write_debugger_fixtures(fixtures_dir: Path, fix_at_attempt: int) -> None:
    """Attempts 1..j-1 return the still-broken module; attempt j the fix."""
    fixtures_dir.mkdir(parents=True, exist_ok=True)
    for i in range(fix_at_attempt - 1):
        (fixtures_dir / f"debugger_{i}.txt").write_text(fenced(BROKEN_MODEL_SOURCE))
    (fixtures_dir / f"debugger_{fix_at_attempt - 1}.txt").write_text(
        fenced(golden_source("model_coder_0.txt"))
    )


def make_failing_run(
    tmp_path: Path,
    fixtures_dir: Path,
    debug_budget: int,
    broken: GeneratedModule | None = None,
) -> tuple[TrackRun, TrackContext]:
    """A track with a verified golden prep and a failing modeling stage, parked
    in `verifying` with the failed execution recorded — debug_loop's precondition."""
    contract = toy_contract()
    blueprint = toy_blueprint(contract)
    spec = TaskSpec(description_text="toy", data_root=str(DATA_ROOT), time_budget=300)
    sandbox = Sandbox(max_concurrency=1, seed=0)
    track_dir = tmp_path / "tracks" / "traditional"
    ctx = TrackContext(
        spec=spec,
        contract=contract,
        blueprint=blueprint,
        gw=scripted_gateway(fixtures_dir),
        sandbox=sandbox,
        track_dir=track_dir,
        artifacts_dir=tmp_path / "artifacts",
        submission_dest=track_dir / "submission.csv",
        sample_limit=200,
        stage_timeout=60.0,
    )
    run = TrackRun(track=Track.TRADITIONAL, blueprint=blueprint, debug_budget=debug_budget)
    run.transition(RunStatus.CODING)

    prep = golden_prep_module()
    run.record_module(prep)
    result, passed = verify_stage(
        prep, contract, sandbox,
        data_root=DATA_ROOT, artifacts_dir=ctx.artifacts_dir,
        sample_limit=ctx.sample_limit, timeout_s=ctx.stage_timeout,
    )
    assert passed, "golden preprocessing fixture must verify"
    run.executions.append(result)

    model = broken or broken_model_module()
    run.record_module(model)
    result, passed = verify_stage(
        model, contract, sandbox,
        data_root=DATA_ROOT, artifacts_dir=ctx.artifacts_dir,
        sample_limit=ctx.sample_limit, timeout_s=ctx.stage_timeout,
    )
    assert not passed, "the broken modeling stage must fail verification"
    run.executions.append(result)
    run.transition(RunStatus.VERIFYING)
    return run, ctx
