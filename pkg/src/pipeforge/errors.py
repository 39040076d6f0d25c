"""Error taxonomy.

Every failure the engine can surface carries a stable machine-readable code
so harness output and failure records can be parsed without string matching
on messages.
"""

from __future__ import annotations


class EngineError(Exception):
    """Base class; `code` is the stable identifier written to failure records."""

    code = "ENGINE_ERROR"

    def __init__(self, message: str = "", **details):
        super().__init__(message or self.code)
        self.details = details


class ProviderUnavailable(EngineError):
    code = "PROVIDER_UNAVAILABLE"


class FixtureMiss(EngineError):
    code = "FIXTURE_MISS"

    def __init__(self, agent_role: str, call_index: int, context: str = ""):
        scope = f" context={context!r}" if context else ""
        super().__init__(
            f"no scripted fixture for role={agent_role!r} call_index={call_index}{scope}",
            agent_role=agent_role,
            call_index=call_index,
            context=context,
        )
        self.agent_role = agent_role
        self.call_index = call_index


class EmptyCompletion(EngineError):
    code = "EMPTY_COMPLETION"


class AnalyzerMalformed(EngineError):
    code = "ANALYZER_MALFORMED"

    def __init__(self, message: str, raw_text: str):
        super().__init__(message, raw_text=raw_text)
        self.raw_text = raw_text


class EmptyDataset(EngineError):
    code = "EMPTY_DATASET"


class NoTarget(EngineError):
    code = "NO_TARGET"


class ContractSynthesisFailed(EngineError):
    code = "CONTRACT_SYNTHESIS_FAILED"


class PlanningFailed(EngineError):
    code = "PLANNING_FAILED"

    def __init__(self, message: str, violations: list[str] | None = None):
        super().__init__(message, violations=violations or [])
        self.violations = violations or []


class CodegenFailed(EngineError):
    code = "CODEGEN_FAILED"

    def __init__(self, stage: str, message: str):
        super().__init__(f"{stage}: {message}", stage=stage)
        self.stage = stage


class AssemblyConflict(EngineError):
    code = "ASSEMBLY_CONFLICT"

    def __init__(self, symbols: list[str]):
        super().__init__(f"colliding symbols: {', '.join(sorted(symbols))}", symbols=symbols)
        self.symbols = symbols


class ScoringFailed(EngineError):
    code = "SCORING_FAILED"


class NoValidPipeline(EngineError):
    code = "NO_VALID_PIPELINE"


class ApsEmpty(EngineError):
    code = "APS_EMPTY"


class NormalizationDomain(EngineError):
    code = "NORMALIZATION_DOMAIN"


class InterpreterMissing(EngineError):
    code = "INTERPRETER_MISSING"


class UsageError(EngineError):
    code = "USAGE_ERROR"
