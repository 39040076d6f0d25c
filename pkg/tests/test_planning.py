import json

import pytest

from conftest import GOLDEN_PROVIDERS, scripted_gateway, toy_contract, toy_profile
from pipeforge import canonical
from pipeforge.contracts import InterfaceContract
from pipeforge.errors import ContractSynthesisFailed, PlanningFailed
from pipeforge.planning import check_contract, define_contract, synthesize_blueprint
from pipeforge.retrieval import ModelCandidate
from pipeforge.types import (
    MetricDirection,
    ObjectiveKind,
    SubmissionFormat,
    TaskSummary,
    Track,
)

SUMMARY = TaskSummary(
    objective_kind=ObjectiveKind.CLASSIFICATION,
    optimization_metric="accuracy",
    metric_direction=MetricDirection.HIGHER_BETTER,
    submission_format=SubmissionFormat("id", ("id", "target")),
    target_column="target",
)

CANDIDATES = [
    ModelCandidate(kind="pretrained_checkpoint", name="tabnet-base",
                   reference="catalog:tabnet-base", modalities=("tabular",)),
    ModelCandidate(kind="architecture", name="tabular-mlp-v1",
                   reference="catalog:tabular-mlp-v1", modalities=("tabular",)),
]


def _blueprint_payload(track="traditional", candidate=None, metric="accuracy"):
    return {
        "prep": [
            {"transform": "impute_mean", "columns": ["x3"], "rationale": "nulls"},
        ],
        "model": {"track": track, "candidate": candidate},
        "train": {"strategy": "grid_search", "search_space": {"c": [1, 2]}},
        "eval": {"scheme": "stratified_holdout", "metric": metric, "params": {"ratio": 0.2}},
        "provenance": {},
    }


def _fixture_dir(tmp_path, files):
    fx = tmp_path / "fx"
    fx.mkdir(exist_ok=True)
    for name, payload in files.items():
        text = payload if isinstance(payload, str) else json.dumps(payload)
        (fx / name).write_text(text)
    return fx


class TestDefineContract:
    def test_golden_fixture_yields_required_structure(self):
        gw = scripted_gateway(GOLDEN_PROVIDERS)
        contract = define_contract(SUMMARY, toy_profile(), gw)
        names = {a.name for a in contract.artifacts}
        assert {"train_features", "train_target", "test_features", "predictions"} <= names
        predictions = contract.artifact("predictions")
        assert predictions.row_relation == "predictions.rows == test_features.rows"
        assert {c.dtype for c in predictions.columns} <= {"real", "int"}
        assert contract.preprocessing_entrypoint.function == "preprocess_data"
        assert contract.modeling_entrypoint.function == "train_and_predict"

    def test_contract_echo_is_byte_identical(self):
        gw = scripted_gateway(GOLDEN_PROVIDERS)
        contract = define_contract(SUMMARY, toy_profile(), gw)
        first = canonical.dumps(contract.to_dict())
        second = canonical.dumps(InterfaceContract.from_dict(json.loads(first)).to_dict())
        assert first == second

    def test_missing_predictions_reprompts_then_fails(self, tmp_path):
        bad = json.loads(
            (GOLDEN_PROVIDERS / "guideline_0.txt").read_text().strip("`json \n")
        )
        bad["artifacts"] = [a for a in bad["artifacts"] if a["name"] != "predictions"]
        fx = _fixture_dir(
            tmp_path,
            {f"guideline_{i}.txt": bad for i in range(3)},
        )
        gw = scripted_gateway(fx)
        with pytest.raises(ContractSynthesisFailed) as err:
            define_contract(SUMMARY, toy_profile(), gw)
        assert "predictions" in str(err.value)
        assert gw.telemetry.llm_calls == 3  # initial + two re-prompts

    def test_reprompt_recovers_from_one_bad_response(self, tmp_path):
        good = (GOLDEN_PROVIDERS / "guideline_0.txt").read_text()
        fx = _fixture_dir(
            tmp_path, {"guideline_0.txt": "not json", "guideline_1.txt": good}
        )
        gw = scripted_gateway(fx)
        contract = define_contract(SUMMARY, toy_profile(), gw)
        assert contract.artifact("predictions") is not None
        assert gw.telemetry.llm_calls == 2

    def test_check_contract_flags_entrypoint_rename(self):
        contract = toy_contract()
        renamed = InterfaceContract(
            artifacts=contract.artifacts,
            preprocessing_entrypoint=type(contract.preprocessing_entrypoint)(
                "prep", ("data_dir",)
            ),
            modeling_entrypoint=contract.modeling_entrypoint,
            submission=contract.submission,
        )
        problems = check_contract(renamed, SUMMARY)
        assert any("preprocess_data" in p for p in problems)


class TestSynthesizeBlueprint:
    def test_single_track_yields_one_blueprint(self, tmp_path):
        fx = _fixture_dir(tmp_path, {"guideline_0.txt": _blueprint_payload()})
        gw = scripted_gateway(fx)
        out = synthesize_blueprint(
            SUMMARY, toy_profile(), CANDIDATES, toy_contract(), gw, {Track.TRADITIONAL}
        )
        assert len(out) == 1
        assert out[0].model.track is Track.TRADITIONAL
        assert out[0].model.candidate is None

    def test_all_tracks_without_candidates_degrades_to_traditional(self, tmp_path):
        fx = _fixture_dir(tmp_path, {"guideline_0.txt": _blueprint_payload()})
        gw = scripted_gateway(fx)
        out = synthesize_blueprint(
            SUMMARY, toy_profile(), [], toy_contract(), gw,
            {Track.TRADITIONAL, Track.PRETRAINED, Track.CUSTOM_NEURAL},
        )
        assert [b.model.track for b in out] == [Track.TRADITIONAL]

    def test_candidate_tracks_alone_without_candidates_fail(self, tmp_path):
        gw = scripted_gateway(tmp_path)
        with pytest.raises(PlanningFailed):
            synthesize_blueprint(
                SUMMARY, toy_profile(), [], toy_contract(), gw, {Track.PRETRAINED}
            )

    def test_three_tracks_with_candidates(self, tmp_path):
        fx = _fixture_dir(
            tmp_path,
            {
                "guideline_0.txt": _blueprint_payload("traditional"),
                "guideline_1.txt": _blueprint_payload("pretrained", "catalog:tabnet-base"),
                "guideline_2.txt": _blueprint_payload("custom_neural", "catalog:tabular-mlp-v1"),
            },
        )
        gw = scripted_gateway(fx)
        out = synthesize_blueprint(
            SUMMARY, toy_profile(), CANDIDATES, toy_contract(), gw,
            {Track.TRADITIONAL, Track.PRETRAINED, Track.CUSTOM_NEURAL},
        )
        assert [b.model.track for b in out] == [
            Track.TRADITIONAL, Track.PRETRAINED, Track.CUSTOM_NEURAL
        ]
        assert out[1].model.candidate == "catalog:tabnet-base"

    def test_every_blueprint_pins_the_contract_hash(self, tmp_path):
        fx = _fixture_dir(tmp_path, {"guideline_0.txt": _blueprint_payload()})
        gw = scripted_gateway(fx)
        contract = toy_contract()
        out = synthesize_blueprint(
            SUMMARY, toy_profile(), CANDIDATES, contract, gw, {Track.TRADITIONAL}
        )
        assert out[0].contract_hash == contract.hash

    def test_ghost_column_violations_reprompt_then_fail(self, tmp_path):
        bad = _blueprint_payload()
        bad["prep"][0]["columns"] = ["ghost"]
        fx = _fixture_dir(tmp_path, {f"guideline_{i}.txt": bad for i in range(3)})
        gw = scripted_gateway(fx)
        with pytest.raises(PlanningFailed) as err:
            synthesize_blueprint(
                SUMMARY, toy_profile(), CANDIDATES, toy_contract(), gw, {Track.TRADITIONAL}
            )
        assert any("ghost" in v for v in err.value.violations)

    def test_pretrained_blueprint_must_cite_retrieved_candidate(self, tmp_path):
        rogue = _blueprint_payload("pretrained", "hub:made-up-model")
        fx = _fixture_dir(tmp_path, {f"guideline_{i}.txt": rogue for i in range(3)})
        gw = scripted_gateway(fx)
        with pytest.raises(PlanningFailed):
            synthesize_blueprint(
                SUMMARY, toy_profile(), CANDIDATES, toy_contract(), gw, {Track.PRETRAINED}
            )

    def test_unvalidated_checkpoint_excluded_when_validated_alternative_exists(self, tmp_path):
        validated = ModelCandidate(
            kind="pretrained_checkpoint", name="good", reference="http://ok/m.bin",
            modalities=("tabular",), validated=True,
        )
        stale = ModelCandidate(
            kind="pretrained_checkpoint", name="stale", reference="http://gone/m.bin",
            modalities=("tabular",), validated=False,
        )
        picks_stale = _blueprint_payload("pretrained", "http://gone/m.bin")
        fx = _fixture_dir(tmp_path, {f"guideline_{i}.txt": picks_stale for i in range(3)})
        gw = scripted_gateway(fx)
        with pytest.raises(PlanningFailed):
            synthesize_blueprint(
                SUMMARY, toy_profile(), [validated, stale], toy_contract(), gw,
                {Track.PRETRAINED},
            )

    def test_golden_blueprint_imputes_every_null_column(self):
        # mirrors the planning contract: columns with nulls get an imputation
        # directive in the fixture blueprint
        gw = scripted_gateway(GOLDEN_PROVIDERS)
        profile = toy_profile()
        contract = define_contract(SUMMARY, profile, gw)
        out = synthesize_blueprint(
            SUMMARY, profile, CANDIDATES, contract, gw, {Track.TRADITIONAL}
        )
        blueprint = out[0]
        null_columns = {c.name for c in profile.columns if c.null_rate > 0}
        imputed = set()
        for directive in blueprint.prep:
            if directive.transform.startswith("impute"):
                imputed.update(directive.columns)
        assert null_columns <= imputed
