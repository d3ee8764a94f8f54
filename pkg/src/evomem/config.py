"""Run settings: defaults, then a config file, then command-line flags."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any

import yaml

from .errors import UsageError

SUMMARIZER_URL_ENV = "EVOMEM_SUMMARIZER_URL"


@dataclass(frozen=True)
class Settings:
    window_size: int = 5
    top_k: int = 2
    cap_m: int = 20
    decay_lambda: float = 0.99
    max_retries: int = 2
    seed: int = 0
    out: str | None = None
    summarizer_url: str | None = None

    def __post_init__(self) -> None:
        if self.window_size < 1 or self.top_k < 1 or self.cap_m < 1:
            raise UsageError("window_size, top_k and cap_m must be >= 1")
        if not 0 < self.decay_lambda <= 1:
            raise UsageError("decay_lambda must lie in (0, 1]")
        if self.max_retries < 0:
            raise UsageError("max_retries must be >= 0")

    def merged(self, overrides: dict[str, Any]) -> Settings:
        known = {f.name for f in fields(self)}
        unknown = sorted(set(overrides) - set(known))
        if unknown:
            raise UsageError(f"unknown setting(s): {', '.join(unknown)}")
        values = {k: v for k, v in overrides.items() if v is not None}
        return replace(self, **values)


def read_config(path: str | Path) -> dict[str, Any]:
    """Load a YAML or JSON mapping; keys use underscores or dashes."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)
    except (ValueError, yaml.YAMLError) as exc:
        raise UsageError(f"cannot parse config {path}: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise UsageError(f"config {path} must hold a mapping")
    return {str(k).replace("-", "_"): v for k, v in data.items()}


def resolve(config_path: str | Path | None, flags: dict[str, Any], environ: dict[str, str] | None = None) -> Settings:
    environ = os.environ if environ is None else environ
    settings = Settings()
    if environ.get(SUMMARIZER_URL_ENV):
        settings = replace(settings, summarizer_url=environ[SUMMARIZER_URL_ENV])
    if config_path is not None:
        settings = settings.merged(read_config(config_path))
    return settings.merged(flags)
