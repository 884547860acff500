"""
Конфигурация пайплайна
"""
import logging
import os
from pathlib import Path
from typing import Any, Dict, Mapping, Optional

from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import InvalidParameter

logger = logging.getLogger(__name__)

CONFIG_ENV_VAR = "BARSRATE_CONFIG"


class PipelineConfig(BaseModel):
    """Все параметры, от которых зависит результат запуска"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    # signal_core
    conf_floor: float = Field(0.2, ge=0.0, le=1.0)

    # stabilize
    stabilize: bool = True
    min_points: int = Field(2, ge=2)
    outlier_factor: float = Field(3.0, gt=0.0)

    # regularize
    regularize: bool = True
    window: int = Field(5, ge=1)
    top_fraction: float = Field(0.05, gt=0.0, le=1.0)
    snap_fraction: float = Field(0.25, gt=0.0)

    # segment
    fwd_frac: float = Field(0.6, gt=0.0, lt=1.0)
    bwd_frac: float = Field(0.4, gt=0.0, lt=1.0)

    # features
    apen_m: int = Field(3, ge=1)
    apen_mode: str = Field("concatenated", pattern="^(concatenated|per_cycle)$")

    # model
    grid_size: int = Field(50, ge=1)
    grid_ratio: float = Field(1e-4, gt=0.0, le=1.0)
    inner_folds: int = Field(5, ge=2)
    tol: float = Field(1e-8, gt=0.0)
    max_sweeps: int = Field(10000, ge=1)

    # eval / runtime
    seed: int = Field(0, ge=0)
    repeats: int = Field(100, ge=1)
    jobs: int = Field(1, ge=1)

    @field_validator("window")
    @classmethod
    def validate_window(cls, v):
        if v % 2 == 0:
            raise ValueError("window must be odd")
        return v

    @model_validator(mode="after")
    def validate_thresholds(self):
        if not self.bwd_frac < self.fwd_frac:
            raise ValueError("bwd_frac must be below fwd_frac")
        return self


def _normalize_keys(values: Mapping[str, Any]) -> Dict[str, Any]:
    return {str(k).strip().lower().replace("-", "_"): v for k, v in values.items() if v is not None}


def resolve_config_path(explicit: Optional[Path] = None) -> Optional[Path]:
    """Путь к файлу конфигурации: флаг, затем переменная окружения"""
    if explicit is not None:
        return Path(explicit)
    env_path = os.getenv(CONFIG_ENV_VAR)
    if env_path:
        return Path(env_path)
    return None


def load_config(path: Optional[Path] = None,
                overrides: Optional[Mapping[str, Any]] = None) -> PipelineConfig:
    """Загрузка конфигурации из плоского key=value файла с переопределениями

    Значения из `overrides` (флаги CLI) имеют приоритет над файлом.
    """
    values: Dict[str, Any] = {}
    config_path = resolve_config_path(path)
    if config_path is not None:
        if not config_path.exists():
            raise InvalidParameter(f"config file not found: {config_path}")
        logger.info(f"Loading config from: {config_path}")
        values.update(_normalize_keys(dotenv_values(config_path)))

    if overrides:
        values.update(_normalize_keys(overrides))

    try:
        return PipelineConfig(**values)
    except ValidationError as e:
        raise InvalidParameter(f"invalid configuration: {e}") from e


def parse_assignments(items) -> Dict[str, str]:
    """Разбор повторяемых `--set key=value`"""
    result: Dict[str, str] = {}
    for item in items or ():
        if "=" not in item:
            raise InvalidParameter(f"expected key=value, got {item!r}")
        key, value = item.split("=", 1)
        result[key.strip()] = value.strip()
    return result
