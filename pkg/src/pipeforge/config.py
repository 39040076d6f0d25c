"""Run configuration and its precedence chain.

Precedence: CLI flags > environment variables (PIPEFORGE_*) > config file >
defaults. Every knob the experiments vary (debug budget, tracks, aggregation,
temperature, budgets, seed) lives here so a run is reproducible from its
printed configuration alone.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping

from .errors import UsageError
from .types import Track

ENV_PREFIX = "PIPEFORGE_"


@dataclass
class RunConfig:
    provider: str = "scripted"  # scripted | http
    fixtures_dir: str = ""
    endpoint: str = ""
    model: str = "gemini-2.5-flash"
    api_key_env: str = "PIPEFORGE_API_KEY"
    temperature: float = 0.2
    retry_attempts: int = 3
    retry_backoff: float = 1.0
    debug_budget: int = 10
    tracks: tuple[str, ...] = ("traditional", "pretrained", "custom_neural")
    aggregate: str = "best"  # best | voting | averaging | stacking
    strip_description: bool = False
    time_budget: float = 5 * 3600.0
    stage_timeout: float = 600.0
    sample_limit: int = 2_000
    sample_rows: int = 50_000
    interpreter: str = "python3"
    seed: int = 0
    catalog: str = ""
    max_candidates: int = 5
    validate_urls: bool = False
    parallel_tracks: bool = False
    shim_command: str = ""  # e.g. "python3 -m runner_shim"
    drop_privileges: str = "auto"  # auto | never
    price_per_1k: dict = field(default_factory=dict)  # provider_id -> [prompt, completion]
    max_classes_abs: int = 20
    max_classes_frac: float = 0.05

    def __post_init__(self):
        if isinstance(self.tracks, str):
            self.tracks = tuple(t.strip() for t in self.tracks.split(",") if t.strip())
        else:
            self.tracks = tuple(self.tracks)
        for t in self.tracks:
            try:
                Track(t)
            except ValueError:
                raise UsageError(f"unknown track {t!r}; choose from "
                                 f"{[t.value for t in Track]}")
        if self.aggregate not in ("best", "voting", "averaging", "stacking"):
            raise UsageError(f"unknown aggregate mode {self.aggregate!r}")
        if self.provider not in ("scripted", "http"):
            raise UsageError(f"unknown provider {self.provider!r}")
        if self.debug_budget < 0:
            raise UsageError("debug budget must be >= 0")

    @property
    def track_set(self) -> set[Track]:
        return {Track(t) for t in self.tracks}

    @property
    def shim_argv(self) -> tuple[str, ...] | None:
        import shlex

        return tuple(shlex.split(self.shim_command)) if self.shim_command else None

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            out[f.name] = list(value) if isinstance(value, tuple) else value
        return out


def _coerce(field_type: type, raw: str) -> Any:
    if field_type is bool:
        return raw.strip().lower() in ("1", "true", "yes", "on")
    if field_type is int:
        return int(raw)
    if field_type is float:
        return float(raw)
    if field_type is dict:
        return json.loads(raw)
    if field_type is tuple:
        return tuple(part.strip() for part in raw.split(",") if part.strip())
    return raw


_FIELD_TYPES = {
    "provider": str, "fixtures_dir": str, "endpoint": str, "model": str,
    "api_key_env": str, "temperature": float, "retry_attempts": int,
    "retry_backoff": float, "debug_budget": int, "tracks": tuple,
    "aggregate": str, "strip_description": bool, "time_budget": float,
    "stage_timeout": float, "sample_limit": int, "sample_rows": int,
    "interpreter": str, "seed": int, "catalog": str, "max_candidates": int,
    "validate_urls": bool, "parallel_tracks": bool, "shim_command": str,
    "drop_privileges": str, "price_per_1k": dict, "max_classes_abs": int,
    "max_classes_frac": float,
}


def resolve_config(
    cli_overrides: Mapping[str, Any] | None = None,
    config_file: str | Path | None = None,
    env: Mapping[str, str] | None = None,
) -> RunConfig:
    """Layer the precedence chain onto the defaults and validate once."""
    env = os.environ if env is None else env
    values: dict[str, Any] = {}
    if config_file:
        loaded = json.loads(Path(config_file).read_text(encoding="utf-8"))
        unknown = set(loaded) - set(_FIELD_TYPES)
        if unknown:
            raise UsageError(f"unknown config file keys: {sorted(unknown)}")
        values.update(loaded)
    for name, field_type in _FIELD_TYPES.items():
        raw = env.get(ENV_PREFIX + name.upper())
        if raw is not None:
            values[name] = _coerce(field_type, raw)
    for name, value in (cli_overrides or {}).items():
        if value is not None:
            values[name] = value
    return RunConfig(**values)
