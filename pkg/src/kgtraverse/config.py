"""Run configuration: one JSON file, flags override it, secrets come from the environment."""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

from .similarity import SimilarityConfig

PROVIDERS = ("external", "script", "template")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    provider: str = "template"
    graph: str | None = None
    # provider specifics
    script: str | None = None
    templates: str | None = None
    domain: str = "academic"
    answer_keys: list[str] | None = None
    endpoint: str | None = None
    model: str | None = None
    temperature: float = 0.0
    api_key_env: str | None = None
    request_timeout: float = 60.0
    embedding: str = "hashed"
    embedding_endpoint: str | None = None
    embedding_api_key_env: str | None = None
    # retrieval
    theta: float = 0.5
    top_k: int | None = 5
    max_hops: int = 3
    step_cap: int | None = 200
    max_retries: int = 3
    context_window: int = 8192
    few_shot: str | None = None
    # evaluation
    input_rate: float = 30.0
    output_rate: float = 60.0
    parallelism: int = 1
    rouge_floor: float = 0.2
    results_path: str | None = None
    summary_path: str | None = None
    record_timing: bool = True

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.provider not in PROVIDERS:
            raise ConfigError(f"provider: must be one of {', '.join(PROVIDERS)}, got {self.provider!r}")
        if self.provider == "script" and not self.script:
            raise ConfigError("script: required when provider is 'script'")
        if self.provider == "external":
            for name in ("endpoint", "model"):
                if not getattr(self, name):
                    raise ConfigError(f"{name}: required when provider is 'external'")
        if self.embedding not in ("hashed", "http"):
            raise ConfigError(f"embedding: must be 'hashed' or 'http', got {self.embedding!r}")
        if self.embedding == "http" and not self.embedding_endpoint:
            raise ConfigError("embedding_endpoint: required when embedding is 'http'")
        if not -1.0 <= self.theta <= 1.0:
            raise ConfigError(f"theta: must lie in [-1, 1], got {self.theta}")
        checks = {
            "top_k": self.top_k is None or self.top_k >= 1,
            "max_hops": self.max_hops >= 1,
            "step_cap": self.step_cap is None or self.step_cap >= 1,
            "max_retries": self.max_retries >= 0,
            "context_window": self.context_window >= 1,
            "input_rate": self.input_rate >= 0,
            "output_rate": self.output_rate >= 0,
            "parallelism": self.parallelism >= 1,
            "temperature": self.temperature >= 0,
        }
        for name, ok in checks.items():
            if not ok:
                raise ConfigError(f"{name}: out of range ({getattr(self, name)!r})")

    @property
    def similarity(self) -> SimilarityConfig:
        return SimilarityConfig(theta=self.theta, top_k=self.top_k, provider=self.embedding)

    def api_key(self) -> str | None:
        return _secret(self.api_key_env)

    def embedding_api_key(self) -> str | None:
        return _secret(self.embedding_api_key_env)

    def replace(self, **changes) -> RunConfig:
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any], base_dir: str | Path | None = None) -> RunConfig:
        if "provider" not in doc:
            raise ConfigError("provider: missing required field")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ConfigError(f"{unknown[0]}: unknown configuration field")
        values = dict(doc)
        if base_dir is not None:
            for key in ("graph", "script", "templates", "few_shot", "results_path", "summary_path"):
                if values.get(key) and not os.path.isabs(values[key]):
                    values[key] = str(Path(base_dir) / values[key])
        try:
            return cls(**values)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_file(cls, path: str | Path) -> RunConfig:
        path = Path(path)
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file {path} not found") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path}: invalid JSON at line {exc.lineno} column {exc.colno}") from None
        if not isinstance(doc, dict):
            raise ConfigError(f"config file {path}: top level must be an object")
        return cls.from_dict(doc, base_dir=path.parent)


def _secret(env_name: str | None) -> str | None:
    if not env_name:
        return None
    value = os.environ.get(env_name)
    if value is None:
        raise ConfigError(f"environment variable {env_name} (named by config) is not set")
    return value
