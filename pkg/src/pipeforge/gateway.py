"""Provider abstraction over chat-completion backends.

Three implementations matter here: a live HTTP provider speaking the generic
chat-completions JSON protocol, a scripted provider that replays fixture
files so entire runs are deterministic and offline, and the gateway wrapper
that records every exchange to a JSON-lines transcript and keeps telemetry
counters in sync with it.
"""

from __future__ import annotations

import json
import os
import re
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Mapping, Protocol

import requests

from .errors import EmptyCompletion, FixtureMiss, ProviderUnavailable
from .types import RunTelemetry


class AgentRole(str, Enum):
    DESCRIPTION_ANALYZER = "description_analyzer"
    GUIDELINE = "guideline"
    PREP_CODER = "prep_coder"
    MODEL_CODER = "model_coder"
    ASSEMBLER = "assembler"
    ERROR_ANALYZER = "error_analyzer"
    DEBUGGER = "debugger"
    COMPARISON = "comparison"


@dataclass(frozen=True)
class LlmRequest:
    agent_role: AgentRole
    system_prompt: str
    user_prompt: str
    temperature: float
    max_tokens: int
    context: str = ""  # e.g. track label; scopes scripted fixture lookup


@dataclass(frozen=True)
class LlmResponse:
    text: str
    prompt_tokens: int
    completion_tokens: int
    provider_id: str
    latency: float

    def __post_init__(self):
        if self.prompt_tokens < 0 or self.completion_tokens < 0:
            raise ValueError("token counts must be non-negative")


class LlmProvider(Protocol):
    provider_id: str

    def complete(self, req: LlmRequest) -> LlmResponse: ...


def _estimate_tokens(text: str) -> int:
    # Deterministic stand-in when the backend reports no usage.
    return max(1, (len(text) + 3) // 4)


class ScriptedProvider:
    """Replays fixture files addressed by (agent_role, per-role call ordinal).

    Layout: `<role>_<n>.txt` in the fixture directory, n counted per role from
    zero. Requests carrying a context (one per track worker) consume
    `<role>__<context>_<n>.txt` with an independent counter, so concurrent
    tracks stay deterministic. An optional `fixtures.json` manifest may route
    a call by prompt content first:

        {"debugger": [{"file": "fix.txt", "when_contains": "KeyError"}]}

    Manifest-routed calls do not advance the role's ordinal counter.
    """

    provider_id = "scripted"

    def __init__(self, fixtures_dir: str | Path):
        self.fixtures_dir = Path(fixtures_dir)
        self._counters: dict[tuple[str, str], int] = {}
        self._lock = threading.Lock()
        manifest_path = self.fixtures_dir / "fixtures.json"
        self._manifest: dict = {}
        if manifest_path.exists():
            self._manifest = json.loads(manifest_path.read_text(encoding="utf-8"))

    def _next_index(self, role: str, context: str) -> int:
        with self._lock:
            key = (role, context)
            index = self._counters.get(key, 0)
            self._counters[key] = index + 1
            return index

    def complete(self, req: LlmRequest) -> LlmResponse:
        role = req.agent_role.value
        text = self._route_by_manifest(role, req.user_prompt)
        if text is None:
            index = self._next_index(role, req.context)
            stem = f"{role}__{req.context}_{index}" if req.context else f"{role}_{index}"
            path = self.fixtures_dir / f"{stem}.txt"
            if req.context and not path.exists():
                # No context-scoped fixture set: fall back to the shared series.
                index = self._next_index(role, "")
                path = self.fixtures_dir / f"{role}_{index}.txt"
            if not path.exists():
                raise FixtureMiss(role, index, req.context)
            text = path.read_text(encoding="utf-8")
        return LlmResponse(
            text=text,
            prompt_tokens=_estimate_tokens(req.system_prompt + req.user_prompt),
            completion_tokens=_estimate_tokens(text),
            provider_id=self.provider_id,
            latency=0.0,
        )

    def _route_by_manifest(self, role: str, user_prompt: str) -> str | None:
        for rule in self._manifest.get(role, []):
            needle = rule.get("when_contains", "")
            if needle and needle in user_prompt:
                return (self.fixtures_dir / rule["file"]).read_text(encoding="utf-8")
        return None


class HttpProvider:
    """Generic chat-completions client with exponential-backoff retry."""

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key_env: str = "PIPEFORGE_API_KEY",
        max_attempts: int = 3,
        backoff_base: float = 1.0,
        timeout: float = 120.0,
        session: requests.Session | None = None,
    ):
        self.endpoint = endpoint.rstrip("/")
        self.model = model
        self.api_key_env = api_key_env
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self.timeout = timeout
        self.provider_id = model
        self._session = session or requests.Session()

    def complete(self, req: LlmRequest) -> LlmResponse:
        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(self.api_key_env, "")
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        payload = {
            "model": self.model,
            "messages": [
                {"role": "system", "content": req.system_prompt},
                {"role": "user", "content": req.user_prompt},
            ],
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        }
        started = time.monotonic()
        last_error = "no attempt made"
        for attempt in range(self.max_attempts):
            if attempt:
                time.sleep(self.backoff_base * 2 ** (attempt - 1))
            try:
                resp = self._session.post(
                    f"{self.endpoint}/chat/completions",
                    headers=headers,
                    json=payload,
                    timeout=self.timeout,
                )
            except requests.RequestException as exc:
                last_error = f"transport: {exc}"
                continue
            if resp.status_code >= 500 or resp.status_code == 429:
                last_error = f"HTTP {resp.status_code}"
                continue
            if resp.status_code != 200:
                raise ProviderUnavailable(f"HTTP {resp.status_code}: {resp.text[:500]}")
            body = resp.json()
            text = body["choices"][0]["message"]["content"]
            usage = body.get("usage", {})
            return LlmResponse(
                text=text,
                prompt_tokens=usage.get("prompt_tokens", _estimate_tokens(req.user_prompt)),
                completion_tokens=usage.get("completion_tokens", _estimate_tokens(text)),
                provider_id=self.provider_id,
                latency=time.monotonic() - started,
            )
        raise ProviderUnavailable(
            f"{self.max_attempts} attempt(s) failed against {self.endpoint}: {last_error}"
        )


@dataclass
class Gateway:
    """Single entry point all agents call; owns transcript and telemetry."""

    provider: LlmProvider
    transcript_path: Path | None = None
    telemetry: RunTelemetry = field(default_factory=RunTelemetry)
    price_per_1k: Mapping[str, tuple[float, float]] = field(default_factory=dict)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)
    _call_index: int = 0

    def complete(self, req: LlmRequest) -> LlmResponse:
        resp = self.provider.complete(req)
        with self._lock:
            index = self._call_index
            self._call_index += 1
            self.telemetry.llm_calls += 1
            self.telemetry.prompt_tokens += resp.prompt_tokens
            self.telemetry.completion_tokens += resp.completion_tokens
            prompt_price, completion_price = self.price_per_1k.get(resp.provider_id, (0.0, 0.0))
            self.telemetry.estimated_cost += (
                resp.prompt_tokens * prompt_price + resp.completion_tokens * completion_price
            ) / 1000.0
            if self.transcript_path is not None:
                record = {
                    "index": index,
                    "agent_role": req.agent_role.value,
                    "context": req.context,
                    "system_prompt": req.system_prompt,
                    "user_prompt": req.user_prompt,
                    "temperature": req.temperature,
                    "max_tokens": req.max_tokens,
                    "response_text": resp.text,
                    "prompt_tokens": resp.prompt_tokens,
                    "completion_tokens": resp.completion_tokens,
                    "provider_id": resp.provider_id,
                    "latency": resp.latency,
                }
                with open(self.transcript_path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(record, ensure_ascii=False) + "\n")
        return resp


def read_transcript(path: Path) -> list[dict]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                records.append(json.loads(line))
    return records


_FENCE_RE = re.compile(r"```[^\n]*\n(.*?)```", re.DOTALL)


@dataclass(frozen=True)
class CodeBlock:
    text: str
    fenced: bool


def extract_code_block(text: str) -> CodeBlock:
    """First fenced code block, or the whole text flagged unfenced."""
    if not text.strip():
        raise EmptyCompletion("completion carried no content")
    m = _FENCE_RE.search(text)
    if m:
        return CodeBlock(text=m.group(1).rstrip("\n"), fenced=True)
    return CodeBlock(text=text.strip(), fenced=False)
