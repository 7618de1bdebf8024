"""Run manifests: one YAML document describing dataset, backend, and pipeline.

Example::

    dataset_root: data/minicorpus
    split: dev
    subtask: full
    output_dir: out/minicorpus
    parallelism: 2
    backend:
      kind: scripted
      script_path: data/minicorpus/script.json
    pipeline:
      max_fix_attempts: 3
      timeout_ms: 30000

Relative paths are resolved against the manifest file's directory.  Secrets
never live in the manifest; the HTTP backend reads its API key from the
environment variable named by ``api_key_env``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import yaml

from .llm import Backend, HttpBackend, ReplayBackend, ScriptedBackend, load_script
from .pipeline import PipelineConfig


class ConfigError(ValueError):
    """The manifest is malformed or inconsistent."""


@dataclass(frozen=True)
class BackendSpec:
    """Which backend to build and its connection settings."""

    kind: str
    base_url: str = ""
    model: str = ""
    api_key_env: str = "TABQA_API_KEY"
    timeout_s: float = 120.0
    max_retries: int = 3
    retry_base_delay_s: float = 1.0
    context_window: Optional[int] = None
    min_request_interval_s: float = 0.0
    script_path: Optional[str] = None
    cassette_path: Optional[str] = None

    def __post_init__(self) -> None:
        if self.kind not in ("http", "scripted", "replay"):
            raise ConfigError(f"unknown backend kind {self.kind!r}")

    def build(self) -> Backend:
        if self.kind == "http":
            if not self.base_url or not self.model:
                raise ConfigError("http backend requires base_url and model")
            return HttpBackend(
                base_url=self.base_url,
                model=self.model,
                api_key_env=self.api_key_env,
                timeout_s=self.timeout_s,
                max_retries=self.max_retries,
                retry_base_delay_s=self.retry_base_delay_s,
                context_window=self.context_window,
                min_request_interval_s=self.min_request_interval_s,
            )
        if self.kind == "scripted":
            if not self.script_path:
                raise ConfigError("scripted backend requires script_path")
            return ScriptedBackend(load_script(self.script_path))
        if not self.cassette_path:
            raise ConfigError("replay backend requires cassette_path")
        return ReplayBackend(self.cassette_path)


@dataclass(frozen=True)
class RunManifest:
    """Everything cmd_run needs to execute a split."""

    dataset_root: str
    split: str
    backend: BackendSpec
    output_dir: str
    subtask: str = "full"
    parallelism: int = 1
    ordered_lists: bool = False
    pipeline: PipelineConfig = dataclasses.field(default_factory=PipelineConfig)

    def __post_init__(self) -> None:
        if self.split not in ("train", "dev", "test"):
            raise ConfigError(f"unknown split {self.split!r}")
        if self.subtask not in ("full", "lite"):
            raise ConfigError(f"unknown subtask {self.subtask!r}")
        if self.parallelism < 1:
            raise ConfigError("parallelism must be >= 1")


def _build_from_mapping(cls, data: dict, context: str):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"{context}: unknown keys {sorted(unknown)}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{context}: {exc}") from exc


def load_manifest(path) -> RunManifest:
    """Parse a YAML manifest, resolving relative paths against its directory."""
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: manifest must be a mapping")
    base = path.parent

    def resolve(value: Optional[str]) -> Optional[str]:
        if value is None:
            return None
        return str((base / value).resolve()) if not Path(value).is_absolute() else value

    backend_data = dict(data.pop("backend", {}) or {})
    for key in ("script_path", "cassette_path"):
        if backend_data.get(key):
            backend_data[key] = resolve(backend_data[key])
    backend = _build_from_mapping(BackendSpec, backend_data, f"{path}: backend")

    pipeline_data = dict(data.pop("pipeline", {}) or {})
    if "stop_sequences" in pipeline_data:
        pipeline_data["stop_sequences"] = tuple(pipeline_data["stop_sequences"])
    pipeline = _build_from_mapping(PipelineConfig, pipeline_data, f"{path}: pipeline")

    for key in ("dataset_root", "output_dir"):
        if key in data and data[key] is not None:
            data[key] = resolve(str(data[key]))
    return _build_from_mapping(
        RunManifest, {**data, "backend": backend, "pipeline": pipeline}, str(path)
    )
