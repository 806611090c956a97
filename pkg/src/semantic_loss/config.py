"""Configuration management via Pydantic Settings."""

from __future__ import annotations

import json
import logging
from collections.abc import Mapping
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, Field, ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict

from semantic_loss.compiler import DEFAULT_NODE_CAP
from semantic_loss.errors import ConfigError
from semantic_loss.models import LossConfig, TrainConfig

logger = logging.getLogger(__name__)

DEFAULT_PREFLIB_URL = "https://www.preflib.org/static/data/sushi/00014-00000001.soc"


class GridTrainConfig(TrainConfig):
    semantic_weight: float = Field(0.5, ge=0)


class PrefTrainConfig(TrainConfig):
    semantic_weight: float = Field(0.25, ge=0)


class ToyTrainConfig(TrainConfig):
    semantic_weight: float = Field(1.0, ge=0)
    learning_rate: float = Field(0.05, gt=0)
    max_epochs: int = Field(500, ge=1)


class GridSection(BaseModel):
    rows: int = Field(4, ge=1)
    cols: int = Field(4, ge=1)
    count: int = Field(1600, ge=1)
    seed: int = 0
    hidden: list[int] = Field(default_factory=lambda: [50] * 5)
    train: GridTrainConfig = Field(default_factory=GridTrainConfig)


class PrefSection(BaseModel):
    seed: int = 0
    hidden: list[int] = Field(default_factory=lambda: [25] * 3)
    train: PrefTrainConfig = Field(default_factory=PrefTrainConfig)


class ToySection(BaseModel):
    n_labeled: int = Field(4, ge=1)
    n_unlabeled: int = Field(200, ge=1)
    seed: int = 0
    train: ToyTrainConfig = Field(default_factory=ToyTrainConfig)


class Settings(BaseSettings):
    """All runtime configuration for compilation, data and training runs."""

    model_config = SettingsConfigDict(
        env_prefix="SEMLOSS_",
        env_file=".env",
        env_file_encoding="utf-8",
        env_nested_delimiter="__",
        case_sensitive=False,
        extra="ignore",
    )

    # --- General ---
    log_level: str = Field("INFO")
    node_cap: int = Field(DEFAULT_NODE_CAP, ge=2, description="BDD node table capacity")
    variable_order: Literal["natural", "first-occurrence"] = "natural"
    out_dir: str | None = Field(None, description="Default run directory for artifacts")

    # --- PrefLib ---
    preflib_url: str = Field(DEFAULT_PREFLIB_URL, description="Sushi SOC download URL")
    preflib_sha256: str = Field("", description="Expected SHA-256 of the download")
    preflib_path: str = Field("./data/sushi.soc", description="Local SOC file")

    # --- Runs ---
    grid: GridSection = Field(default_factory=GridSection)
    pref: PrefSection = Field(default_factory=PrefSection)
    toy: ToySection = Field(default_factory=ToySection)
    loss: LossConfig = Field(default_factory=LossConfig)


def _merge(base: dict[str, Any], extra: Mapping[str, Any]) -> dict[str, Any]:
    merged = dict(base)
    for key, value in extra.items():
        if value is None:
            continue
        if isinstance(value, Mapping) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_settings(
    config_path: str | Path | None = None, overrides: Mapping[str, Any] | None = None
) -> Settings:
    """Settings from a JSON file plus flag overrides; flags win, env fills the rest.

    ``None`` values in ``overrides`` mean "flag not given" and are skipped.
    """
    data: dict[str, Any] = {}
    if config_path is not None:
        path = Path(config_path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"Cannot read config {path}: {exc}") from exc
        except UnicodeDecodeError as exc:
            raise ConfigError(f"Config {path} is not valid UTF-8: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"Config {path} is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"Config {path} must hold a JSON object")
        logger.debug("Config loaded from %s: %s", path, sorted(data))
    merged = _merge(data, overrides or {})
    try:
        return Settings(**merged)
    except ValidationError as exc:
        raise ConfigError(f"Invalid configuration: {exc}") from exc
