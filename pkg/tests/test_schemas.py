"""The published JSON schemas must accept everything the engine emits."""

import json
from pathlib import Path

import pytest
from jsonschema import Draft7Validator, RefResolver

from conftest import toy_blueprint, toy_contract
from pipeforge.contracts import build_report
from pipeforge.measure import measure_stage
from pipeforge.types import Stage

SCHEMA_DIR = Path(__file__).parent.parent / "docs" / "schemas"


def _validator(name):
    schema = json.loads((SCHEMA_DIR / name).read_text())
    store = {
        s["$id"]: s
        for s in (
            json.loads(p.read_text()) for p in SCHEMA_DIR.glob("*.schema.json")
        )
    }
    resolver = RefResolver(base_uri=schema["$id"], referrer=schema, store=store)
    return Draft7Validator(schema, resolver=resolver)


def test_contract_schema_accepts_engine_output():
    _validator("interface_contract.schema.json").validate(toy_contract().to_dict())


def test_blueprint_schema_accepts_engine_output():
    _validator("strategic_blueprint.schema.json").validate(toy_blueprint().to_dict())


def test_report_schema_accepts_engine_output(tmp_path):
    (tmp_path / "train_features.csv").write_text(
        "x1,x2,x3,color_red,color_blue,color_green\n0.5,0.5,0.5,1,0,0\n"
    )
    report = measure_stage(toy_contract(), tmp_path, Stage.PREPROCESSING)
    _validator("contract_report.schema.json").validate(report.to_dict())


def test_schemas_reject_missing_version():
    validator = _validator("interface_contract.schema.json")
    doc = toy_contract().to_dict()
    del doc["schema_version"]
    assert not validator.is_valid(doc)


def test_contract_schema_rejects_unknown_dtype():
    validator = _validator("interface_contract.schema.json")
    doc = toy_contract().to_dict()
    doc["artifacts"][0]["columns"][0]["dtype"] = "float64"
    assert not validator.is_valid(doc)
