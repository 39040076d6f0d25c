"""Golden-file conformance: the shim reproduces every checked-in report
byte-for-byte, run after run."""

import hashlib
import shutil
import subprocess
import sys
from pathlib import Path

import pytest

GOLDENS = Path(__file__).parent / "goldens"
CASES = sorted(p.name for p in GOLDENS.iterdir() if p.is_dir())


def _run_case(case_name: str, workdir: Path, sample: int = 1000):
    case = GOLDENS / case_name
    shutil.copytree(case / "artifacts", workdir / "artifacts")
    shutil.copy(case / "contract.json", workdir / "contract.json")
    shutil.copy(case / "stage_module.py", workdir / "stage_module.py")
    proc = subprocess.run(
        [sys.executable, "-m", "runner_shim", "run-stage",
         "--module", "stage_module.py", "--contract", "contract.json",
         "--artifacts", "artifacts", "--sample", str(sample)],
        cwd=workdir, capture_output=True, text=True,
    )
    return proc


def test_golden_corpus_has_eight_cases():
    assert len(CASES) == 8


@pytest.mark.parametrize("case_name", CASES)
def test_report_byte_identical_to_golden(case_name, tmp_path):
    proc = _run_case(case_name, tmp_path)
    assert proc.returncode == 0, proc.stderr
    produced = (tmp_path / "contract_report.json").read_bytes()
    expected = (GOLDENS / case_name / "contract_report.json").read_bytes()
    assert produced == expected


@pytest.mark.parametrize("case_name", CASES[:3])
def test_report_byte_stable_across_repeated_runs(case_name, tmp_path):
    first = _run_case(case_name, tmp_path / "a")
    second = _run_case(case_name, tmp_path / "b")
    assert first.returncode == 0 and second.returncode == 0
    assert (
        (tmp_path / "a" / "contract_report.json").read_bytes()
        == (tmp_path / "b" / "contract_report.json").read_bytes()
    )


def test_prestaged_artifacts_never_mutated(tmp_path):
    # case 8 measures a pre-staged input artifact; its bytes must not change
    case = "case_08_modeling_relation"
    workdir = tmp_path / "w"
    workdir.mkdir()
    shutil.copytree(GOLDENS / case / "artifacts", workdir / "artifacts")
    shutil.copy(GOLDENS / case / "contract.json", workdir / "contract.json")
    shutil.copy(GOLDENS / case / "stage_module.py", workdir / "stage_module.py")
    target = workdir / "artifacts" / "test_features.csv"
    before = hashlib.sha256(target.read_bytes()).hexdigest()
    proc = subprocess.run(
        [sys.executable, "-m", "runner_shim", "run-stage",
         "--module", "stage_module.py", "--contract", "contract.json",
         "--artifacts", "artifacts", "--sample", "1000"],
        cwd=workdir, capture_output=True, text=True,
    )
    assert proc.returncode == 0
    assert hashlib.sha256(target.read_bytes()).hexdigest() == before
