import json
from pathlib import Path

import pytest

from conftest import (
    GOLDEN_PROVIDERS,
    TOY_TASK,
    scripted_gateway,
    toy_blueprint,
    toy_contract,
    toy_profile,
)
from pipeforge import canonical
from pipeforge.codegen import (
    directives_section,
    entrypoint_signature,
    generate_modeling,
    generate_preprocessing,
    scan_module,
    verify_stage,
)
from pipeforge.errors import CodegenFailed
from pipeforge.gateway import read_transcript
from pipeforge.measure import measure_stage
from pipeforge.sandbox import Sandbox
from pipeforge.types import PrepDirective, Stage, StrategicBlueprint, TaskSpec

DATA_ROOT = TOY_TASK / "data"


def _spec():
    return TaskSpec(description_text="toy", data_root=str(DATA_ROOT), time_budget=120)


@pytest.fixture
def sandbox():
    return Sandbox(max_concurrency=1, seed=0)


class TestScanModule:
    def test_functions_and_imports(self):
        scan = scan_module(
            "import os\nfrom pathlib import Path\n\n"
            "def outer():\n    def inner():\n        pass\n    return inner\n\nX = 3\n"
        )
        assert set(scan.functions) == {"outer", "inner"}
        assert scan.top_level == ("outer", "X")
        assert scan.imports == ("os", "pathlib")

    def test_syntax_error_returns_none(self):
        assert scan_module("def broken(:") is None

    def test_signature_extraction(self):
        source = "def preprocess_data(data_dir, artifacts_dir, sample_limit=None):\n    pass\n"
        assert entrypoint_signature(source, "preprocess_data") == (
            "def preprocess_data(data_dir, artifacts_dir, sample_limit=None):"
        )


class TestGeneratePreprocessing:
    def test_golden_fixture_accepted(self):
        gw = scripted_gateway(GOLDEN_PROVIDERS)
        module = generate_preprocessing(toy_blueprint(), _spec(), toy_profile(), gw)
        assert module.stage is Stage.PREPROCESSING
        assert module.entrypoint == "preprocess_data"
        assert module.revision == 0
        assert "csv" in module.declared_imports

    def test_wrong_entrypoint_reprompted_then_fails(self, tmp_path):
        fx = tmp_path / "fx"
        fx.mkdir()
        for i in range(3):
            (fx / f"prep_coder_{i}.txt").write_text("```python\ndef prep():\n    pass\n```")
        gw = scripted_gateway(fx)
        with pytest.raises(CodegenFailed) as err:
            generate_preprocessing(toy_blueprint(), _spec(), toy_profile(), gw)
        assert err.value.stage == "preprocessing"
        assert gw.telemetry.llm_calls == 3

    def test_reprompt_feedback_names_the_entrypoint(self, tmp_path):
        fx = tmp_path / "fx"
        fx.mkdir()
        (fx / "prep_coder_0.txt").write_text("```python\ndef prep():\n    pass\n```")
        (fx / "prep_coder_1.txt").write_text(
            "```python\ndef preprocess_data(data_dir, artifacts_dir, sample_limit=None):\n"
            "    pass\n```"
        )
        transcript = tmp_path / "t.jsonl"
        gw = scripted_gateway(fx, transcript)
        module = generate_preprocessing(toy_blueprint(), _spec(), toy_profile(), gw)
        assert module.entrypoint == "preprocess_data"
        records = read_transcript(transcript)
        assert "preprocess_data" in records[1]["user_prompt"]
        assert "did not define" in records[1]["user_prompt"]

    def test_prompt_carries_only_blueprint_directives(self, tmp_path):
        transcript = tmp_path / "t.jsonl"
        gw = scripted_gateway(GOLDEN_PROVIDERS, transcript)
        blueprint = toy_blueprint()
        generate_preprocessing(blueprint, _spec(), toy_profile(), gw)
        prompt = read_transcript(transcript)[0]["user_prompt"]
        marker = directives_section(blueprint)
        assert marker in prompt
        # the directives section parses back to exactly the blueprint's list
        payload = prompt.split("DIRECTIVES:\n", 1)[1].split("CONTRACT ARTIFACTS:", 1)[0]
        assert json.loads(payload) == [d.to_dict() for d in blueprint.prep]

    def test_bespoke_feature_directive_flows_into_prompt(self, tmp_path):
        # a text-length feature directive appears verbatim in the coder prompt
        blueprint = toy_blueprint()
        extended = StrategicBlueprint(
            prep=blueprint.prep
            + (
                PrepDirective(
                    "text_length",
                    ("color",),
                    params={"output": "description_length"},
                    rationale="length of the free-text field",
                    creates=("description_length",),
                ),
            ),
            model=blueprint.model,
            train=blueprint.train,
            eval=blueprint.eval,
            contract=blueprint.contract,
        )
        transcript = tmp_path / "t.jsonl"
        gw = scripted_gateway(GOLDEN_PROVIDERS, transcript)
        generate_preprocessing(extended, _spec(), toy_profile(), gw)
        prompt = read_transcript(transcript)[0]["user_prompt"]
        assert '"description_length"' in prompt
        assert '"text_length"' in prompt


class TestGenerateModeling:
    def _prep_and_report(self, sandbox, tmp_path):
        gw = scripted_gateway(GOLDEN_PROVIDERS)
        contract = toy_contract()
        prep = generate_preprocessing(toy_blueprint(contract), _spec(), toy_profile(), gw)
        artifacts = tmp_path / "artifacts"
        result, passed = verify_stage(
            prep, contract, sandbox,
            data_root=DATA_ROOT, artifacts_dir=artifacts, sample_limit=100, timeout_s=60,
        )
        assert passed, result.artifact_report and result.artifact_report.failed_constraints()
        return gw, contract, prep, result.artifact_report

    def test_prompt_isolation_and_search_space_quoting(self, sandbox, tmp_path):
        gw, contract, prep, report = self._prep_and_report(sandbox, tmp_path)
        transcript = tmp_path / "t.jsonl"
        gw2 = scripted_gateway(GOLDEN_PROVIDERS, transcript)
        blueprint = toy_blueprint(contract)
        module = generate_modeling(blueprint, contract, prep, report, gw2)
        assert module.entrypoint == "train_and_predict"
        prompt = read_transcript(transcript)[0]["user_prompt"]
        # decoupling: signature yes, body no
        assert "def preprocess_data(data_dir, artifacts_dir, sample_limit=None):" in prompt
        assert "_feature_matrix" not in prompt  # a helper only the prep body defines
        assert "COLOR_VALUES" not in prompt
        # the search space appears verbatim (canonical form)
        assert canonical.dumps(blueprint.train.to_dict()) in prompt
        # the observed report, not just the contract, is present
        assert '"row_count": 100' in prompt or '"observations"' in prompt

    def test_pretrained_prompt_references_candidate(self, sandbox, tmp_path):
        gw, contract, prep, report = self._prep_and_report(sandbox, tmp_path)
        fx = tmp_path / "fx"
        fx.mkdir()
        (fx / "model_coder_0.txt").write_text(
            "```python\n# checkpoint: catalog:tabular-mlp-v1\n"
            "def train_and_predict(artifacts_dir, sample_limit=None):\n    pass\n```"
        )
        transcript = tmp_path / "t2.jsonl"
        gw3 = scripted_gateway(fx, transcript)
        from pipeforge.types import Track

        blueprint = toy_blueprint(contract, track=Track.PRETRAINED)
        module = generate_modeling(blueprint, contract, prep, report, gw3)
        assert "catalog:tabular-mlp-v1" in module.source_text
        assert "catalog:tabular-mlp-v1" in read_transcript(transcript)[0]["user_prompt"]


class TestVerifyStage:
    def test_golden_prep_passes(self, sandbox, tmp_path):
        gw = scripted_gateway(GOLDEN_PROVIDERS)
        contract = toy_contract()
        prep = generate_preprocessing(toy_blueprint(contract), _spec(), toy_profile(), gw)
        result, passed = verify_stage(
            prep, contract, sandbox,
            data_root=DATA_ROOT, artifacts_dir=tmp_path / "a", sample_limit=100, timeout_s=60,
        )
        assert passed
        assert result.artifact_report.stage is Stage.PREPROCESSING
        assert (tmp_path / "a" / "train_features.csv").exists()

    def test_sample_limit_respected_by_golden_prep(self, sandbox, tmp_path):
        gw = scripted_gateway(GOLDEN_PROVIDERS)
        contract = toy_contract()
        prep = generate_preprocessing(toy_blueprint(contract), _spec(), toy_profile(), gw)
        verify_stage(
            prep, contract, sandbox,
            data_root=DATA_ROOT, artifacts_dir=tmp_path / "a", sample_limit=16, timeout_s=60,
        )
        report = measure_stage(contract, tmp_path / "a", Stage.PREPROCESSING)
        assert report.observation("train_features").row_count == 16

    def test_missing_artifact_fails_with_missing_entry(self, sandbox, tmp_path):
        contract = toy_contract()
        source = (
            "def preprocess_data(data_dir, artifacts_dir, sample_limit=None):\n"
            "    import os, csv\n"
            "    os.makedirs(artifacts_dir, exist_ok=True)\n"
            "    with open(os.path.join(artifacts_dir, 'train_features.csv'), 'w') as fh:\n"
            "        fh.write('x1,x2,x3,color_red,color_blue,color_green\\n0.1,0.2,0.3,1,0,0\\n')\n"
        )
        from pipeforge.types import GeneratedModule

        module = GeneratedModule(
            stage=Stage.PREPROCESSING, source_text=source, entrypoint="preprocess_data"
        )
        result, passed = verify_stage(
            module, contract, sandbox,
            data_root=DATA_ROOT, artifacts_dir=tmp_path / "a", sample_limit=50, timeout_s=60,
        )
        assert not passed
        report = result.artifact_report
        assert report.observation("train_target").status == "missing"
        assert "train_target:present" in report.failed_constraints()

    def test_stage_timeout_flags_timed_out(self, sandbox, tmp_path):
        from pipeforge.types import GeneratedModule

        module = GeneratedModule(
            stage=Stage.PREPROCESSING,
            source_text=(
                "import time\n"
                "def preprocess_data(data_dir, artifacts_dir, sample_limit=None):\n"
                "    time.sleep(30)\n"
            ),
            entrypoint="preprocess_data",
        )
        result, passed = verify_stage(
            module, toy_contract(), sandbox,
            data_root=DATA_ROOT, artifacts_dir=tmp_path / "a", sample_limit=50, timeout_s=1.0,
        )
        assert not passed
        assert result.timed_out
        assert result.artifact_report is None  # the stage never completed

    def test_exception_keeps_report_absent_and_traceback_present(self, sandbox, tmp_path):
        from pipeforge.types import GeneratedModule

        module = GeneratedModule(
            stage=Stage.PREPROCESSING,
            source_text=(
                "def preprocess_data(data_dir, artifacts_dir, sample_limit=None):\n"
                "    raise RuntimeError('bad read')\n"
            ),
            entrypoint="preprocess_data",
        )
        result, passed = verify_stage(
            module, toy_contract(), sandbox,
            data_root=DATA_ROOT, artifacts_dir=tmp_path / "a", sample_limit=50, timeout_s=30,
        )
        assert not passed
        assert result.artifact_report is None
        assert result.traceback.error_type == "RuntimeError"
