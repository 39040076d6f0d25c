"""Stage code generation and immediate sandbox verification.

Each coder prompt embeds only blueprint directives and contract facts; the
modeling prompt additionally gets the preprocessing stage's *observed*
contract report and entrypoint signature, never its function body, so the
modeling architecture stays decoupled from preprocessing implementation
details.
"""

from __future__ import annotations

import ast
from dataclasses import dataclass, replace
from pathlib import Path

from . import canonical
from .contracts import ContractReport, InterfaceContract
from .errors import CodegenFailed, EmptyCompletion
from .gateway import AgentRole, Gateway, LlmRequest, extract_code_block
from .measure import measure_stage
from .sandbox import ExecutionLimits, Sandbox, Workspace
from .types import GeneratedModule, MetaFeatures, Stage, StrategicBlueprint, TaskSpec

RE_PROMPT_LIMIT = 2
SAMPLE_LIMIT_DEFAULT = 2_000

# Sandbox-side driver: loads the stage module by path and calls the contract
# entrypoint with the arguments bound in driver_args.json. Exit code 3 with a
# marker line means the entrypoint was missing (traceback-free classification).
DRIVER_SOURCE = '''\
import importlib.util
import json
import sys


def main():
    with open("driver_args.json", "r", encoding="utf-8") as fh:
        args = json.load(fh)
    spec = importlib.util.spec_from_file_location("generated_stage", args["module_path"])
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    fn = getattr(module, args["entrypoint"], None)
    if fn is None:
        sys.stderr.write("MISSING_ENTRYPOINT:%s\\n" % args["entrypoint"])
        sys.exit(3)
    fn(**args["call_args"])


if __name__ == "__main__":
    main()
'''


@dataclass(frozen=True)
class ModuleScan:
    functions: tuple[str, ...]  # every def, any nesting depth
    top_level: tuple[str, ...]  # top-level defs, classes, and assignments
    imports: tuple[str, ...]


def scan_module(source: str) -> ModuleScan | None:
    """Static scan of generated source; None when it does not even parse."""
    try:
        tree = ast.parse(source)
    except SyntaxError:
        return None
    functions: list[str] = []
    imports: set[str] = set()
    for node in ast.walk(tree):
        if isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef)):
            functions.append(node.name)
        elif isinstance(node, ast.Import):
            imports.update(alias.name.split(".")[0] for alias in node.names)
        elif isinstance(node, ast.ImportFrom) and node.module and node.level == 0:
            imports.add(node.module.split(".")[0])
    top_level: list[str] = []
    for node in tree.body:
        if isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef, ast.ClassDef)):
            top_level.append(node.name)
        elif isinstance(node, ast.Assign):
            for tgt in node.targets:
                if isinstance(tgt, ast.Name):
                    top_level.append(tgt.id)
        elif isinstance(node, ast.AnnAssign) and isinstance(node.target, ast.Name):
            top_level.append(node.target.id)
    return ModuleScan(
        functions=tuple(functions),
        top_level=tuple(top_level),
        imports=tuple(sorted(imports)),
    )


def entrypoint_signature(source: str, entrypoint: str) -> str:
    """The `def entrypoint(...)` line only; what the modeling prompt may see."""
    for line in source.splitlines():
        if line.lstrip().startswith(f"def {entrypoint}("):
            return line.strip()
    return f"def {entrypoint}(...)"


def directives_section(b: StrategicBlueprint) -> str:
    """Exact prompt text for the preprocessing directives; audited by tests."""
    return "DIRECTIVES:\n" + canonical.dumps([d.to_dict() for d in b.prep])


def train_section(b: StrategicBlueprint) -> str:
    return "TRAIN PLAN:\n" + canonical.dumps(b.train.to_dict())


def _artifact_conventions(contract: InterfaceContract, stage: Stage) -> str:
    lines = [
        "Artifacts are exchanged as files under artifacts_dir: tables as "
        "<name>.csv with a header row, dense arrays as <name>.npy, loader "
        "configs as <name>.json.",
        f"Your stage must write: "
        f"{[a.filename for a in contract.produced_by(stage)]}",
    ]
    return "\n".join(lines)


def _profile_section(f: MetaFeatures) -> str:
    excerpt = {
        "row_count": f.row_count,
        "columns": [
            {"name": c.name, "dtype": c.dtype, "null_rate": c.null_rate}
            for c in f.columns
        ],
    }
    return "PROFILE EXCERPT:\n" + canonical.dumps(excerpt)


_PREP_SYSTEM = (
    "You write the data preparation module of an ML pipeline as a single "
    "Python module in a fenced code block. Implement exactly the entrypoint "
    "you are given; perform only the listed directives."
)

_MODEL_SYSTEM = (
    "You write the modeling module of an ML pipeline as a single Python "
    "module in a fenced code block. Implement exactly the entrypoint you are "
    "given. Treat the interface contract and the observed preprocessing "
    "report as the authoritative schema of your inputs."
)


def _generate(
    gw: Gateway,
    role: AgentRole,
    system_prompt: str,
    user_prompt: str,
    stage: Stage,
    entrypoint: str,
    *,
    context: str = "",
    temperature: float = 0.2,
    max_tokens: int = 8192,
    revision: int = 0,
) -> GeneratedModule:
    feedback = ""
    for attempt in range(1 + RE_PROMPT_LIMIT):
        resp = gw.complete(
            LlmRequest(
                agent_role=role,
                system_prompt=system_prompt,
                user_prompt=user_prompt + feedback,
                temperature=temperature,
                max_tokens=max_tokens,
                context=context,
            )
        )
        try:
            block = extract_code_block(resp.text)
        except EmptyCompletion:
            feedback = "\nYour previous reply was empty. Return the full module."
            continue
        scan = scan_module(block.text)
        if scan is None:
            feedback = "\nYour previous module did not parse. Return valid source."
            continue
        if entrypoint not in scan.functions:
            feedback = (
                f"\nYour previous module did not define the required entrypoint "
                f"{entrypoint!r}. Define it with exactly that name."
            )
            continue
        return GeneratedModule(
            stage=stage,
            source_text=block.text,
            entrypoint=entrypoint,
            declared_imports=scan.imports,
            revision=revision,
        )
    raise CodegenFailed(stage.value, f"no valid module after {RE_PROMPT_LIMIT} re-prompt(s)")


def generate_preprocessing(
    b: StrategicBlueprint,
    spec: TaskSpec,
    f: MetaFeatures,
    gw: Gateway,
    *,
    context: str = "",
    temperature: float = 0.2,
) -> GeneratedModule:
    contract = b.contract
    ep = contract.preprocessing_entrypoint
    prompt = "\n".join(
        [
            "Write the preprocessing stage module.",
            directives_section(b),
            "CONTRACT ARTIFACTS:\n" + canonical.dumps([a.to_dict() for a in contract.artifacts]),
            _profile_section(f),
            f"ENTRYPOINT: def {ep.function}({', '.join(ep.parameters)})",
            "data_dir holds the raw task files; sample_limit, when not null, "
            "caps the rows read from each input file.",
            _artifact_conventions(contract, Stage.PREPROCESSING),
        ]
    )
    return _generate(
        gw,
        AgentRole.PREP_CODER,
        _PREP_SYSTEM,
        prompt,
        Stage.PREPROCESSING,
        ep.function,
        context=context,
        temperature=temperature,
    )


def generate_modeling(
    b: StrategicBlueprint,
    contract: InterfaceContract,
    prep: GeneratedModule,
    prep_report: ContractReport,
    gw: Gateway,
    *,
    context: str = "",
    temperature: float = 0.2,
) -> GeneratedModule:
    """Modeling code from the contract and the observed preprocessing report.

    The prompt deliberately carries the preprocessing entrypoint signature
    only; the report, not the source, tells the modeling agent what its
    inputs physically look like.
    """
    ep = contract.modeling_entrypoint
    track_directive = {
        "traditional": "Configure a traditional ML algorithm from the train plan.",
        "pretrained": f"Load the pretrained checkpoint {b.model.candidate!r} and adapt "
        "its head to the task outputs.",
        "custom_neural": f"Instantiate the retrieved topology {b.model.candidate!r} and "
        "size its layers from the observed schema.",
    }[b.model.track.value]
    prompt = "\n".join(
        [
            "Write the modeling stage module.",
            "CONTRACT:\n" + canonical.dumps(contract.to_dict()),
            "OBSERVED PREPROCESSING REPORT:\n" + canonical.dumps(prep_report.to_dict()),
            "UPSTREAM SIGNATURE: " + entrypoint_signature(prep.source_text, prep.entrypoint),
            "MODEL PLAN:\n" + canonical.dumps(b.model.to_dict()),
            train_section(b),
            track_directive,
            "Embed a hyperparameter optimization routine that searches the "
            "train plan's space with its named strategy; validate per "
            "EVAL PLAN:\n" + canonical.dumps(b.eval.to_dict()),
            f"ENTRYPOINT: def {ep.function}({', '.join(ep.parameters)})",
            _artifact_conventions(contract, Stage.MODELING),
        ]
    )
    return _generate(
        gw,
        AgentRole.MODEL_CODER,
        _MODEL_SYSTEM,
        prompt,
        Stage.MODELING,
        ep.function,
        context=context,
        temperature=temperature,
    )


def _entrypoint_args(parameters: tuple[str, ...], *, sample_limit, submission_rel="out/submission.csv") -> dict:
    """Bind contract-declared parameter names to scratch-relative values."""
    binding = {
        "data_dir": "data",
        "artifacts_dir": "artifacts",
        "sample_limit": sample_limit,
        "submission_path": submission_rel,
        "seed": 0,
    }
    unknown = [p for p in parameters if p not in binding]
    if unknown:
        raise CodegenFailed("contract", f"unbindable entrypoint parameters: {unknown}")
    return {p: binding[p] for p in parameters}


def run_stage_in_sandbox(
    module: GeneratedModule,
    contract: InterfaceContract,
    sandbox: Sandbox,
    data_root: Path,
    artifacts_dir: Path,
    *,
    entrypoint_params: tuple[str, ...],
    sample_limit: int | None,
    timeout_s: float,
    shim_command: tuple[str, ...] | None = None,
    extra_files: dict[str, str] | None = None,
    collect_artifacts: bool = True,
    fresh_artifacts: bool = False,
) -> tuple["Workspace", object]:
    """Execute one stage in a fresh scratch; returns (workspace, raw result).

    The caller owns report computation and workspace cleanup.
    """
    ws = sandbox.workspace()
    ws.add_file("stage_module.py", module.source_text)
    ws.add_file("contract.json", canonical.dumps(contract.to_dict()))
    ws.mount_dir("data", data_root)
    mount_src = None
    if not fresh_artifacts and artifacts_dir and artifacts_dir.exists():
        mount_src = artifacts_dir
    ws.mount_dir("artifacts", mount_src, writable=True)
    out_dir = ws.root / "out"
    out_dir.mkdir(exist_ok=True)
    out_dir.chmod(0o777)
    for rel, text in (extra_files or {}).items():
        ws.add_file(rel, text)
    limits = ExecutionLimits(timeout_s=timeout_s)
    if shim_command:
        argv = [
            *shim_command,
            "run-stage",
            "--module", "stage_module.py",
            "--contract", "contract.json",
            "--artifacts", "artifacts",
            "--sample", str(sample_limit if sample_limit is not None else 0),
        ]
        result = sandbox.execute_argv(argv, limits=limits, workspace=ws)
    else:
        ws.add_file(
            "driver_args.json",
            canonical.dumps(
                {
                    "module_path": "stage_module.py",
                    "entrypoint": module.entrypoint,
                    "call_args": _entrypoint_args(entrypoint_params, sample_limit=sample_limit),
                }
            ),
        )
        ws.add_file("driver.py", DRIVER_SOURCE)
        result = sandbox.execute(ws.path("driver.py"), limits=limits, workspace=ws)
    if collect_artifacts and result.ok:
        ws.collect_dir("artifacts", artifacts_dir)
    return ws, result


def verify_stage(
    module: GeneratedModule,
    contract: InterfaceContract,
    sandbox: Sandbox,
    *,
    data_root: Path,
    artifacts_dir: Path,
    sample_limit: int | None = SAMPLE_LIMIT_DEFAULT,
    timeout_s: float = 600.0,
    record_dir: Path | None = None,
    shim_command: tuple[str, ...] | None = None,
):
    """Run a stage on a data sample and judge it against its contract side.

    Returns (ExecutionResult, passed). The report is attached only when the
    stage ran to completion; sandbox failures are data, never exceptions.
    With `shim_command` configured the report is produced execution-side by
    the runner shim; otherwise the orchestrator measures the artifacts itself.
    """
    stage = module.stage
    params = (
        contract.preprocessing_entrypoint.parameters
        if stage is Stage.PREPROCESSING
        else contract.modeling_entrypoint.parameters
    )
    ws, result = run_stage_in_sandbox(
        module,
        contract,
        sandbox,
        data_root,
        artifacts_dir,
        entrypoint_params=params,
        sample_limit=sample_limit,
        timeout_s=timeout_s,
        shim_command=shim_command,
    )
    try:
        report = None
        if result.ok:
            shim_report = ws.path("contract_report.json")
            if shim_command and shim_report.exists():
                report = ContractReport.from_dict(canonical.load_path(shim_report))
            else:
                report = measure_stage(
                    contract,
                    artifacts_dir,
                    stage,
                    sample_limit=sample_limit or SAMPLE_LIMIT_DEFAULT,
                )
            result = replace(result, artifact_report=report)
        if record_dir is not None:
            record_dir.mkdir(parents=True, exist_ok=True)
            canonical.dump_path(
                {k: v for k, v in result.to_dict().items() if k != "artifact_report"},
                record_dir / "result.json",
            )
            if report is not None:
                canonical.dump_path(report.to_dict(), record_dir / "contract_report.json")
        passed = result.ok and report is not None and report.all_passed
        return result, passed
    finally:
        ws.cleanup()
