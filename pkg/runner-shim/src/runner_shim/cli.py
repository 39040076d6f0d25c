"""CLI: run one generated stage under its contract and emit the report.

    runner-shim run-stage --module M --contract C --artifacts D --sample N

Exit status is zero unless the stage entrypoint itself raised (constraint
failures are data in the report, not errors). A module that does not expose
its contract entrypoint exits 3 after printing a MISSING_ENTRYPOINT marker
line, so the orchestrator can classify the failure without a traceback.
"""

from __future__ import annotations

import argparse
import importlib.util
import json
import sys
from pathlib import Path

from .canonical import dump_path
from .measure import DEFAULT_SAMPLE_LIMIT, build_report

REPORT_FILENAME = "contract_report.json"

# Values bound to contract-declared entrypoint parameter names.
_PARAMETER_BINDING = {
    "data_dir": "data",
    "submission_path": "out/submission.csv",
    "seed": 0,
}


def _load_module(path: Path):
    spec = importlib.util.spec_from_file_location("generated_stage", path)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


def _detect_stage(module, contract: dict) -> tuple[str, dict]:
    prep = contract["preprocessing_entrypoint"]
    model = contract["modeling_entrypoint"]
    has_prep = callable(getattr(module, prep["function"], None))
    has_model = callable(getattr(module, model["function"], None))
    if has_prep and has_model:
        return "assembled", {"function": "main", "parameters":
                             ["data_dir", "artifacts_dir", "submission_path", "sample_limit"]}
    if has_model:
        return "modeling", model
    return "preprocessing", prep


def run_stage(module_path: Path, contract_path: Path, artifacts_dir: Path,
              sample: int) -> int:
    with open(contract_path, "r", encoding="utf-8") as fh:
        contract = json.load(fh)
    artifacts_dir.mkdir(parents=True, exist_ok=True)
    sample_limit = sample if sample > 0 else None

    module = _load_module(module_path)
    stage, entrypoint = _detect_stage(module, contract)
    fn = getattr(module, entrypoint["function"], None)
    if fn is None:
        sys.stderr.write(f"MISSING_ENTRYPOINT:{entrypoint['function']}\n")
        return 3

    binding = dict(_PARAMETER_BINDING)
    binding["artifacts_dir"] = str(artifacts_dir)
    binding["sample_limit"] = sample_limit
    unknown = [p for p in entrypoint["parameters"] if p not in binding]
    if unknown:
        sys.stderr.write(f"UNBINDABLE_PARAMETERS:{','.join(unknown)}\n")
        return 4
    call_args = {p: binding[p] for p in entrypoint["parameters"]}

    fn(**call_args)  # an exception here propagates: nonzero exit + traceback

    measure_limit = sample_limit if sample_limit is not None else DEFAULT_SAMPLE_LIMIT
    report = build_report(contract, artifacts_dir, stage, measure_limit)
    dump_path(report, Path.cwd() / REPORT_FILENAME)
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="runner-shim")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run-stage", help="execute a stage module under its contract")
    p_run.add_argument("--module", required=True, type=Path)
    p_run.add_argument("--contract", required=True, type=Path)
    p_run.add_argument("--artifacts", required=True, type=Path)
    p_run.add_argument("--sample", type=int, default=0,
                       help="row cap for the stage and for per-value statistics; 0 = full data")
    args = parser.parse_args(argv)
    return run_stage(args.module, args.contract, args.artifacts, args.sample)


if __name__ == "__main__":
    sys.exit(main())
