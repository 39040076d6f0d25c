"""Regenerate the golden report fixtures.

Run from the package root after INTENTIONAL format changes, then review the
diff before committing:

    python tests/make_goldens.py

Each case directory holds the stage module, its contract, pre-staged input
artifacts, and the expected contract_report.json the shim must reproduce
byte-for-byte.
"""

from __future__ import annotations

import json
import os
import shutil
import subprocess
import sys
from pathlib import Path

GOLDENS = Path(__file__).parent / "goldens"


def _contract(artifacts, prep_params=("data_dir", "artifacts_dir", "sample_limit")):
    return {
        "schema_version": 1,
        "artifacts": artifacts,
        "preprocessing_entrypoint": {
            "function": "preprocess_data",
            "parameters": list(prep_params),
        },
        "modeling_entrypoint": {
            "function": "train_and_predict",
            "parameters": ["artifacts_dir", "sample_limit"],
        },
        "submission": None,
        "batch_directives": {},
    }


def _table(name, columns, produced_by="preprocessing", row_relation=None):
    return {
        "name": name,
        "kind": "table",
        "produced_by": produced_by,
        "columns": columns,
        "shape": None,
        "value_ranges": {},
        "row_relation": row_relation,
        "batch_size": None,
    }


def _col(name, dtype=None, nullable=True):
    return {"name": name, "dtype": dtype, "nullable": nullable}


CASES = {}


def case(name):
    def register(fn):
        CASES[name] = fn
        return fn

    return register


@case("case_01_conformant_prep")
def _conformant():
    module = '''\
import csv
import os


def preprocess_data(data_dir, artifacts_dir, sample_limit=None):
    with open(os.path.join(artifacts_dir, "items.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["width", "height", "grade"])
        for i in range(5):
            writer.writerow([i + 0.5, i * 2, "ab"[i % 2]])
    with open(os.path.join(artifacts_dir, "labels.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label"])
        for i in range(5):
            writer.writerow([i % 2])
'''
    contract = _contract([
        _table("items", [_col("width", "real", False), _col("height", "int", False),
                         _col("grade", "categorical", False)]),
        _table("labels", [_col("label", "int", False)],
               row_relation="labels.rows == items.rows"),
    ])
    return module, contract, {}


@case("case_02_null_violation")
def _null_violation():
    module = '''\
import os


def preprocess_data(data_dir, artifacts_dir, sample_limit=None):
    rows = ["amount\\n", "1.5\\n", "\\n", "2.5\\n"]
    with open(os.path.join(artifacts_dir, "amounts.csv"), "w") as fh:
        fh.writelines(rows)
'''
    contract = _contract([
        _table("amounts", [_col("amount", "real", nullable=False)]),
    ])
    return module, contract, {}


@case("case_03_missing_artifact")
def _missing():
    module = '''\
import os


def preprocess_data(data_dir, artifacts_dir, sample_limit=None):
    with open(os.path.join(artifacts_dir, "present.csv"), "w") as fh:
        fh.write("a\\n1\\n")
'''
    contract = _contract([
        _table("present", [_col("a", "int")]),
        _table("absent", [_col("b", "int")]),
    ])
    return module, contract, {}


@case("case_04_quoted_digits")
def _quoted_digits():
    module = '''\
import os


def preprocess_data(data_dir, artifacts_dir, sample_limit=None):
    with open(os.path.join(artifacts_dir, "codes.csv"), "w") as fh:
        fh.write('code,plain\\n"01",1\\n"02",2\\n')
'''
    contract = _contract([
        _table("codes", [_col("code", "int", False), _col("plain", "int", False)]),
    ])
    return module, contract, {}


@case("case_05_dense_array")
def _dense():
    module = '''\
import os

import numpy as np


def preprocess_data(data_dir, artifacts_dir, sample_limit=None):
    matrix = np.arange(6, dtype=np.float64).reshape(3, 2)
    np.save(os.path.join(artifacts_dir, "embedding.npy"), matrix)
'''
    contract = _contract([
        {
            "name": "embedding",
            "kind": "dense_array",
            "produced_by": "preprocessing",
            "columns": [_col("values", "real", False)],
            "shape": [None, 2],
            "value_ranges": {"values": [0.0, 10.0]},
            "row_relation": None,
            "batch_size": None,
        }
    ])
    return module, contract, {}


@case("case_06_loader_config")
def _loader():
    module = '''\
import json
import os


def preprocess_data(data_dir, artifacts_dir, sample_limit=None):
    with open(os.path.join(artifacts_dir, "train_loader.json"), "w") as fh:
        json.dump({"batch_size": 64, "dataset": "items.csv"}, fh)
    with open(os.path.join(artifacts_dir, "eval_loader.json"), "w") as fh:
        json.dump({"batch_size": 16}, fh)
'''
    contract = _contract([
        {
            "name": "train_loader",
            "kind": "loader_config",
            "produced_by": "preprocessing",
            "columns": [],
            "shape": None,
            "value_ranges": {},
            "row_relation": None,
            "batch_size": 64,
        },
        {
            "name": "eval_loader",
            "kind": "loader_config",
            "produced_by": "preprocessing",
            "columns": [],
            "shape": None,
            "value_ranges": {},
            "row_relation": None,
            "batch_size": 64,
        },
    ])
    return module, contract, {}


@case("case_07_empty_table")
def _empty():
    module = '''\
import os


def preprocess_data(data_dir, artifacts_dir, sample_limit=None):
    with open(os.path.join(artifacts_dir, "rows.csv"), "w") as fh:
        fh.write("a,b\\n")
'''
    contract = _contract([
        _table("rows", [_col("a"), _col("b")]),
    ])
    return module, contract, {}


@case("case_08_modeling_relation")
def _modeling():
    module = '''\
import os


def train_and_predict(artifacts_dir, sample_limit=None):
    with open(os.path.join(artifacts_dir, "predictions.csv"), "w") as fh:
        fh.write("id,target\\n1,0\\n2,1\\n")
'''
    contract = _contract([
        _table("test_features", [_col("x", "real", False)]),
        _table("predictions", [_col("id", "int", False), _col("target", "int", False)],
               produced_by="modeling",
               row_relation="predictions.rows == test_features.rows"),
    ])
    prestaged = {
        "artifacts/test_features.csv": "x\n0.1\n0.2\n0.3\n",
    }
    return module, contract, prestaged


def build(case_name: str, builder) -> None:
    case_dir = GOLDENS / case_name
    if case_dir.exists():
        shutil.rmtree(case_dir)
    (case_dir / "artifacts").mkdir(parents=True)
    module, contract, prestaged = builder()
    (case_dir / "stage_module.py").write_text(module)
    (case_dir / "contract.json").write_text(json.dumps(contract, indent=2) + "\n")
    for rel, text in prestaged.items():
        target = case_dir / rel
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(text)
    env = dict(os.environ, PYTHONDONTWRITEBYTECODE="1")
    proc = subprocess.run(
        [sys.executable, "-m", "runner_shim", "run-stage",
         "--module", "stage_module.py", "--contract", "contract.json",
         "--artifacts", "artifacts", "--sample", "1000"],
        cwd=case_dir, capture_output=True, text=True, env=env,
    )
    if proc.returncode != 0:
        raise SystemExit(f"{case_name}: shim failed\n{proc.stderr}")
    print(f"{case_name}: report written")


def main() -> None:
    GOLDENS.mkdir(exist_ok=True)
    for name in sorted(CASES):
        build(name, CASES[name])


if __name__ == "__main__":
    main()
