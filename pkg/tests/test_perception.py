import pytest

from conftest import scripted_gateway
from pipeforge.errors import AnalyzerMalformed, EmptyDataset, NoTarget
from pipeforge.perception import (
    analyze_description,
    classify_file_role,
    infer_semantics,
    profile_dataset,
)
from pipeforge.types import (
    MetricDirection,
    ObjectiveKind,
    TaskSpec,
    TaskSummary,
    UNKNOWN,
    ZERO_KNOWLEDGE_DESCRIPTION,
)


def _task(tmp_path, description="Predict things. Scored by LogLoss.", with_sample=True):
    data = tmp_path / "data"
    data.mkdir(exist_ok=True)
    (data / "train.csv").write_text("id,f,target\n1,0.5,0\n2,0.25,1\n3,0.75,1\n4,0.5,0\n")
    (data / "test.csv").write_text("id,f\n5,0.5\n6,0.25\n")
    sample = None
    if with_sample:
        sample = data / "sample_submission.csv"
        sample.write_text("id,target\n5,0\n6,0\n")
    return TaskSpec(
        description_text=description,
        data_root=str(data),
        submission_sample=str(sample) if sample else None,
        time_budget=60,
    )


class TestAnalyzeDescription:
    def test_logloss_description_parsed(self, tmp_path):
        fixtures = tmp_path / "fx"
        fixtures.mkdir()
        (fixtures / "description_analyzer_0.txt").write_text(
            '{"objective_kind": "classification", "optimization_metric": "LogLoss",'
            ' "metric_direction": null, "target_column": "target"}'
        )
        summary = analyze_description(_task(tmp_path), scripted_gateway(fixtures))
        assert summary.optimization_metric == "logloss"
        assert summary.metric_direction is MetricDirection.LOWER_BETTER
        assert summary.submission_format.columns == ("id", "target")
        assert summary.submission_format.id_column == "id"

    def test_stripped_description_yields_all_unknown_without_llm(self, tmp_path):
        spec = _task(tmp_path, description=ZERO_KNOWLEDGE_DESCRIPTION)
        summary = analyze_description(spec, scripted_gateway(tmp_path / "empty"))
        assert summary.objective_kind is ObjectiveKind.UNKNOWN
        assert summary.optimization_metric == UNKNOWN
        assert summary.target_column is None

    def test_empty_description_no_sample_no_error(self, tmp_path):
        spec = _task(tmp_path, description="", with_sample=False)
        summary = analyze_description(spec, scripted_gateway(tmp_path / "empty"))
        assert summary.objective_kind is ObjectiveKind.UNKNOWN
        assert summary.submission_format is None

    def test_malformed_response_carries_raw_text(self, tmp_path):
        fixtures = tmp_path / "fx"
        fixtures.mkdir()
        (fixtures / "description_analyzer_0.txt").write_text("not json at all")
        with pytest.raises(AnalyzerMalformed) as err:
            analyze_description(_task(tmp_path), scripted_gateway(fixtures))
        assert err.value.raw_text == "not json at all"

    def test_file_roles(self):
        assert classify_file_role("train.csv") == "train"
        assert classify_file_role("test_data.csv") == "test"
        assert classify_file_role("sample_submission.csv") == "sample_submission"
        assert classify_file_role("labels.csv") == "labels"
        assert classify_file_role("notes.txt") == "aux"


class TestProfileDataset:
    def test_tiny_class_column(self, tmp_path):
        (tmp_path / "train.csv").write_text("y\na\na\nb\nb\n")
        f = profile_dataset(tmp_path, sample_rows=100)
        column = f.column("y")
        assert column.distinct_count == 2
        assert column.null_rate == 0.0
        assert f.class_distribution == {"a": 2, "b": 2}
        assert f.target_candidates == ("y",)

    def test_null_rate_and_mean(self, tmp_path):
        (tmp_path / "train.csv").write_text("v,target\n1,a\n2,a\n,b\n4,b\n")
        f = profile_dataset(tmp_path, sample_rows=100)
        v = f.column("v")
        assert v.null_rate == 0.25
        assert v.mean == pytest.approx(7 / 3)

    def test_non_tabular_files_manifest_only(self, tmp_path):
        (tmp_path / "train.csv").write_text("a,target\n1,0\n2,1\n")
        for name in ("img1.png", "img2.png", "img3.png"):
            (tmp_path / name).write_bytes(b"\x89PNG fake")
        f = profile_dataset(tmp_path, sample_rows=10)
        assert len(f.file_manifest) == 4
        images = [e for e in f.file_manifest if e.extension == ".png"]
        assert len(images) == 3
        assert all(e.row_count is None and not e.columns for e in images)
        assert len(f.columns) == 2  # only the table contributes column profiles

    def test_empty_dataset_raises(self, tmp_path):
        with pytest.raises(EmptyDataset):
            profile_dataset(tmp_path, sample_rows=10)

    def test_sampling_bound_observed(self, tmp_path):
        rows = "\n".join(f"{i},{i % 2}" for i in range(100))
        (tmp_path / "train.csv").write_text("v,target\n" + rows + "\n")
        seen = []
        f = profile_dataset(tmp_path, sample_rows=25, row_observer=seen.append)
        assert len(seen) == 25
        assert f.row_count == 100
        assert f.sampled_rows == 25

    def test_correlations_reported(self, tmp_path):
        lines = ["a,b,c,target"]
        for i in range(40):
            lines.append(f"{i},{2 * i},{(-1) ** i},{i % 2}")
        (tmp_path / "train.csv").write_text("\n".join(lines) + "\n")
        f = profile_dataset(tmp_path, sample_rows=100)
        top = f.correlation_pairs[0]
        assert {top[0], top[1]} == {"a", "b"}
        assert top[2] == pytest.approx(1.0)

    def test_primary_table_prefers_train_role(self, tmp_path):
        (tmp_path / "aux_big.csv").write_text("z\n" + "\n".join("1" for _ in range(50)) + "\n")
        (tmp_path / "train.csv").write_text("a,target\n1,0\n2,1\n")
        f = profile_dataset(tmp_path, sample_rows=100)
        assert f.primary_table == "train.csv"


class TestInferSemantics:
    def _profile(self, tmp_path):
        (tmp_path / "train.csv").write_text(
            "id,x,label\n1,0.5,cat\n2,1.5,dog\n3,2.5,cat\n4,3.5,bird\n"
        )
        (tmp_path / "test.csv").write_text("id,x\n5,4.5\n6,5.5\n")
        return profile_dataset(tmp_path, sample_rows=100)

    def test_label_column_inferred_as_classification(self, tmp_path):
        f = self._profile(tmp_path)
        summary = infer_semantics(TaskSummary(), f)
        assert summary.target_column == "label"
        assert summary.objective_kind is ObjectiveKind.CLASSIFICATION
        assert summary.optimization_metric == "accuracy"
        assert summary.metric_direction is MetricDirection.HIGHER_BETTER

    def test_known_summary_unchanged(self, tmp_path):
        f = self._profile(tmp_path)
        fully = infer_semantics(TaskSummary(), f)
        again = infer_semantics(fully, f)
        assert again == fully  # idempotent, nothing overwritten

    def test_partial_fill_preserves_known_fields(self, tmp_path):
        f = self._profile(tmp_path)
        partial = TaskSummary(
            objective_kind=ObjectiveKind.REGRESSION, optimization_metric="rmse",
            metric_direction=MetricDirection.LOWER_BETTER,
        )
        filled = infer_semantics(partial, f)
        assert filled.objective_kind is ObjectiveKind.REGRESSION
        assert filled.optimization_metric == "rmse"
        assert filled.target_column == "label"

    def test_identical_schemas_no_target(self, tmp_path):
        (tmp_path / "train.csv").write_text("id,x\n1,0.5\n2,1.5\n")
        (tmp_path / "test.csv").write_text("id,x\n3,2.5\n")
        f = profile_dataset(tmp_path, sample_rows=100)
        with pytest.raises(NoTarget):
            infer_semantics(TaskSummary(), f)

    def test_continuous_target_inferred_as_regression(self, tmp_path):
        lines = ["id,x,target"]
        for i in range(500):
            lines.append(f"{i},{i / 7:.5f},{i * 3.14159:.5f}")
        (tmp_path / "train.csv").write_text("\n".join(lines) + "\n")
        (tmp_path / "test.csv").write_text("id,x\n1000,0.5\n")
        f = profile_dataset(tmp_path, sample_rows=1000)
        summary = infer_semantics(TaskSummary(), f)
        assert summary.objective_kind is ObjectiveKind.REGRESSION
        assert summary.optimization_metric == "rmse"
