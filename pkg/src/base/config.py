"""
Run configuration.

Precedence: CLI flag > config file > environment (CARE_*, nested with __) > default.
The file and the CLI overrides are merged into init arguments, which
pydantic-settings ranks above the environment.
"""

import json
import logging
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from src.base.errors import ConfigError
from src.base.jsonl import digest
from src.engine.care import AblationSwitches, CareSettings, EngineLimits
from src.engine.gate import GateThresholds
from src.gateway.llm_gateway import BackendSpec, Role
from src.rubric.rules import RuleThresholds

logger = logging.getLogger(__name__)

WORKFLOWS = ("single", "vote", "rsmad", "confmad", "care")
MULTI_AGENT = ("vote", "rsmad", "confmad")


class BackendsConfig(BaseModel):
    local: str = "mock:"
    remote: Optional[str] = "mock:"
    remote_role: Role = Role.REMOTE
    agents: List[str] = Field(default_factory=lambda: ["mock:", "mock:", "mock:"])
    temperature: float = Field(default=0.0, ge=0.0, le=2.0)

    @field_validator("local", "remote")
    @classmethod
    def _parsable(cls, v: Optional[str]) -> Optional[str]:
        if v is not None:
            BackendSpec.parse(v)
        return v

    @field_validator("agents")
    @classmethod
    def _three_agents(cls, v: List[str]) -> List[str]:
        if len(v) != 3:
            raise ValueError(f"agents needs exactly three backend specs, got {len(v)}")
        for spec in v:
            BackendSpec.parse(spec)
        return v


class OutputPaths(BaseModel):
    traces: Optional[Path] = None
    report: Optional[Path] = None
    audit_log: Optional[Path] = None
    wire_log: Optional[Path] = None


class RunConfig(BaseSettings):
    model_config = SettingsConfigDict(env_prefix="CARE_", env_nested_delimiter="__", extra="ignore")

    workflow: str = "care"
    backends: BackendsConfig = Field(default_factory=BackendsConfig)
    rubric_path: Optional[Path] = None
    engine: EngineLimits = Field(default_factory=EngineLimits)
    rules: RuleThresholds = Field(default_factory=RuleThresholds)
    gate: GateThresholds = Field(default_factory=GateThresholds)
    ablation: AblationSwitches = Field(default_factory=AblationSwitches)
    seed: int = 0
    jobs: int = Field(default=1, ge=1)
    outputs: OutputPaths = Field(default_factory=OutputPaths)

    @field_validator("workflow")
    @classmethod
    def _known_workflow(cls, v: str) -> str:
        if v not in WORKFLOWS:
            raise ValueError(f"unknown workflow {v!r}, expected one of {', '.join(WORKFLOWS)}")
        return v

    @model_validator(mode="after")
    def _remote_is_remote(self) -> "RunConfig":
        if self.uses_remote:
            if not self.backends.remote:
                raise ValueError("stage 3 is enabled but backends.remote is not set")
            if self.backends.remote_role is not Role.REMOTE:
                raise ValueError("stage 3 backend must have role REMOTE")
        return self

    @property
    def uses_remote(self) -> bool:
        return self.workflow == "care" and not self.ablation.no_stage3

    @property
    def workflow_id(self) -> str:
        return self.ablation.workflow_id if self.workflow == "care" else self.workflow

    def care_settings(self) -> CareSettings:
        return CareSettings(limits=self.engine, rules=self.rules, gate=self.gate, ablation=self.ablation)

    def digest(self, rubric_document: Optional[dict] = None) -> str:
        """Provenance digest. Output paths, jobs and the rubric's location are left out; its content is not."""
        doc = self.model_dump(mode="json", exclude={"outputs", "jobs", "rubric_path"})
        doc["rubric"] = rubric_document
        return digest(doc)


def read_config_file(path: Path) -> Dict[str, Any]:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    try:
        if path.suffix.lower() == ".toml":
            return tomllib.loads(raw.decode("utf-8"))
        return json.loads(raw.decode("utf-8"))
    except (tomllib.TOMLDecodeError, json.JSONDecodeError, UnicodeDecodeError) as e:
        raise ConfigError(f"config {path} is not valid: {e}") from e


def _deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = value
    return out


def load_config(path: Optional[Path] = None, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """overrides holds CLI values as a nested dict; None entries are dropped so they never mask the file."""
    doc = read_config_file(path) if path else {}
    doc = _deep_merge(doc, _drop_none(overrides or {}))
    try:
        return RunConfig(**doc)
    except ValidationError as e:
        raise ConfigError(f"invalid run configuration: {e}") from e


def _drop_none(d: Dict[str, Any]) -> Dict[str, Any]:
    out = {}
    for key, value in d.items():
        if isinstance(value, dict):
            value = _drop_none(value)
            if value:
                out[key] = value
        elif value is not None:
            out[key] = value
    return out
