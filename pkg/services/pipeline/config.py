from __future__ import annotations

import json
from datetime import timedelta
from pathlib import Path
from typing import Any, Dict, Mapping, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from libs.core.errors import ConfigError

from ._utils import env


class RunConfig(BaseModel):
    """Settings shared by every stage.

    Sources, highest first: command-line flag, CXRVAL_<NAME> environment
    variable, the JSON file given by --config, then these defaults.
    """

    model_config = ConfigDict(extra="forbid")

    pacs_dir: Optional[Path] = None
    pacs_json: Optional[Path] = None
    pacs_url: Optional[str] = None
    his_dir: Optional[Path] = None
    his_aliases: Optional[Path] = None
    templates: Optional[Path] = None
    scorer_config: Optional[Path] = None
    service_id: str = "CXR"
    pa_threshold: float = Field(default=0.5, gt=0.0, lt=1.0)
    abn_threshold: float = Field(default=0.5, gt=0.0, lt=1.0)
    window_hours: float = Field(default=24.0, ge=0.0)
    bootstrap_n: int = Field(default=10000, ge=1)
    seed: int = 0
    histogram_bins: int = Field(default=50, ge=1)
    workers: int = Field(default=1, ge=1)
    out: Path = Path("out")

    @field_validator("window_hours", mode="before")
    @classmethod
    def _hours_suffix(cls, v: Any) -> Any:
        # "24h" and "0h" are accepted as well as plain numbers
        if isinstance(v, str) and v.strip().lower().endswith("h"):
            return v.strip()[:-1]
        return v

    @property
    def window(self) -> timedelta:
        return timedelta(hours=self.window_hours)

    def stage_dir(self, stage: str) -> Path:
        return self.out / stage


def _file_values(path: Optional[Path]) -> Dict[str, Any]:
    if path is None:
        return {}
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ConfigError(f"Cannot read config file: {e}", record=str(path)) from e
    if not isinstance(data, dict):
        raise ConfigError("Config file must be a JSON object", record=str(path))
    # keys may be written the way the flags are spelled
    values = {k.lstrip("-").replace("-", "_"): v for k, v in data.items()}
    values.pop("log_level", None)
    return values


def _env_values() -> Dict[str, Any]:
    values: Dict[str, Any] = {}
    for name in RunConfig.model_fields:
        raw = env(name)
        if raw is not None:
            values[name] = raw
    return values


def resolve_config(flags: Mapping[str, Any], config_path: Optional[Path] = None) -> RunConfig:
    """Merge defaults, config file, environment and flags (flags win)."""
    if config_path is None and env("config") is not None:
        config_path = Path(env("config") or "")
    merged: Dict[str, Any] = {}
    merged.update(_file_values(config_path))
    merged.update(_env_values())
    merged.update({k: v for k, v in flags.items() if v is not None})
    try:
        return RunConfig.model_validate(merged)
    except ValidationError as e:
        raise ConfigError(f"Invalid run configuration: {e}") from e
