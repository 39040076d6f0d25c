from __future__ import annotations

import shutil
from pathlib import Path

import pytest

from pipeforge.config import RunConfig
from pipeforge.contracts import (
    ArtifactKind,
    ArtifactSpec,
    ColumnSpec,
    EntrypointSpec,
    InterfaceContract,
)
from pipeforge.gateway import Gateway, ScriptedProvider
from pipeforge.runner import run_task
from pipeforge.types import (
    ColumnProfile,
    EvalPlan,
    FileEntry,
    MetaFeatures,
    ModelPlan,
    PrepDirective,
    Stage,
    StrategicBlueprint,
    SubmissionFormat,
    TrainPlan,
    Track,
)

FIXTURES = Path(__file__).parent / "fixtures"
TOY_TASK = FIXTURES / "toy_task"
GOLDEN_PROVIDERS = FIXTURES / "providers" / "golden"


@pytest.fixture(scope="session")
def toy_task() -> Path:
    return TOY_TASK


@pytest.fixture(scope="session")
def golden_fixtures() -> Path:
    return GOLDEN_PROVIDERS


def golden_config(**overrides) -> RunConfig:
    base = dict(
        provider="scripted",
        fixtures_dir=str(GOLDEN_PROVIDERS),
        tracks=("traditional",),
        seed=0,
        time_budget=600.0,
        stage_timeout=60.0,
    )
    for key, value in overrides.items():
        base[key] = value
    return RunConfig(**base)


def scripted_gateway(fixtures_dir: Path, transcript: Path | None = None) -> Gateway:
    return Gateway(provider=ScriptedProvider(fixtures_dir), transcript_path=transcript)


@pytest.fixture(scope="session")
def golden_run(tmp_path_factory):
    """One shared golden end-to-end run; treat its directory as read-only."""
    out = tmp_path_factory.mktemp("golden-run")
    outcome = run_task(TOY_TASK, out, golden_config())
    assert outcome.valid, outcome.report.get("failure")
    return outcome


def toy_contract() -> InterfaceContract:
    """The golden task's contract, constructed directly for unit tests."""
    feature_columns = tuple(
        ColumnSpec(name, "real" if name.startswith("x") else "int", nullable=False)
        for name in ("x1", "x2", "x3", "color_red", "color_blue", "color_green")
    )
    return InterfaceContract(
        artifacts=(
            ArtifactSpec("train_features", ArtifactKind.TABLE, Stage.PREPROCESSING,
                         columns=feature_columns),
            ArtifactSpec("train_target", ArtifactKind.TABLE, Stage.PREPROCESSING,
                         columns=(ColumnSpec("target", "int", nullable=False),),
                         row_relation="train_target.rows == train_features.rows"),
            ArtifactSpec("test_features", ArtifactKind.TABLE, Stage.PREPROCESSING,
                         columns=feature_columns),
            ArtifactSpec("test_ids", ArtifactKind.TABLE, Stage.PREPROCESSING,
                         columns=(ColumnSpec("id", "int", nullable=False),),
                         row_relation="test_ids.rows == test_features.rows"),
            ArtifactSpec("validation_predictions", ArtifactKind.TABLE, Stage.MODELING,
                         columns=(ColumnSpec("row", "int", nullable=False),
                                  ColumnSpec("prediction", "int", nullable=False))),
            ArtifactSpec("predictions", ArtifactKind.TABLE, Stage.MODELING,
                         columns=(ColumnSpec("id", "int", nullable=False),
                                  ColumnSpec("target", "int", nullable=False)),
                         row_relation="predictions.rows == test_features.rows"),
        ),
        preprocessing_entrypoint=EntrypointSpec(
            "preprocess_data", ("data_dir", "artifacts_dir", "sample_limit")
        ),
        modeling_entrypoint=EntrypointSpec(
            "train_and_predict", ("artifacts_dir", "sample_limit")
        ),
        submission=SubmissionFormat(id_column="id", columns=("id", "target")),
    )


def toy_profile() -> MetaFeatures:
    return MetaFeatures(
        columns=(
            ColumnProfile("id", "int", 0.0, 160),
            ColumnProfile("x1", "real", 0.0, 150, minimum=-3.0, maximum=3.0, mean=0.0, std=1.0),
            ColumnProfile("x2", "real", 0.0, 150, minimum=-3.0, maximum=3.0, mean=0.0, std=1.0),
            ColumnProfile("x3", "real", 0.1, 140, minimum=-1.0, maximum=11.0, mean=5.0, std=2.0),
            ColumnProfile("color", "categorical", 0.0, 3,
                          top_categories=(("red", 60), ("blue", 55), ("green", 45))),
            ColumnProfile("target", "int", 0.0, 2),
        ),
        row_count=160,
        target_candidates=("target",),
        class_distribution={"0": 66, "1": 94},
        file_manifest=(
            FileEntry("train.csv", 1000, ".csv", "train", 160,
                      ("id", "x1", "x2", "x3", "color", "target")),
            FileEntry("test.csv", 300, ".csv", "test", 40,
                      ("id", "x1", "x2", "x3", "color")),
        ),
        primary_table="train.csv",
        sampled_rows=160,
    )


def toy_blueprint(contract: InterfaceContract | None = None,
                  track: Track = Track.TRADITIONAL) -> StrategicBlueprint:
    payload = None if track is Track.TRADITIONAL else "catalog:tabular-mlp-v1"
    return StrategicBlueprint(
        prep=(
            PrepDirective("impute_mean", ("x3",), rationale="nulls present"),
            PrepDirective("standardize", ("x1", "x2", "x3")),
            PrepDirective("one_hot", ("color",),
                          creates=("color_red", "color_blue", "color_green")),
        ),
        model=ModelPlan(track=track, candidate=payload),
        train=TrainPlan(strategy="grid_search", search_space={"shrinkage": [0.0, 0.25, 0.5]}),
        eval=EvalPlan(scheme="stratified_holdout", metric="accuracy",
                      params={"ratio": 0.2}, seed=1337),
        contract=contract or toy_contract(),
    )


def copy_fixture_dir(src: Path, dst: Path) -> Path:
    shutil.copytree(src, dst)
    return dst
