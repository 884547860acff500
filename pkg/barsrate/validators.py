import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Type, TypeVar

from pydantic import BaseModel, ConfigDict, Field, FiniteFloat, TypeAdapter, ValidationError, create_model, field_validator

from .errors import SchemaError
from .features import FEATURE_NAMES
from .signal_core import Hand, is_valid_rating

logger = logging.getLogger(__name__)

Row = TypeVar("Row", bound=BaseModel)

# Первая строка файла - заголовок
HEADER_LINES = 1


def _check_rating(value: float) -> float:
    if not is_valid_rating(value):
        raise ValueError(f"rating {value} is not one of 0, 0.5, ..., 4")
    return float(value)


class TrajectoryRow(BaseModel):
    """Строка CSV траекторий позы"""

    frame: int = Field(..., ge=0, description="Номер кадра")
    joint: str = Field(..., pattern=r"^(wrist|head|bg\d+)$", description="Сустав или фоновая точка")
    x: Optional[float] = Field(None, description="Координата x в пикселях; пусто - нет оценки")
    y: Optional[float] = Field(None, description="Координата y в пикселях")
    confidence: float = Field(..., ge=0.0, le=1.0, description="Уверенность детектора")


class FlowRow(BaseModel):
    """Смещение оптического потока в точке запястья между кадрами frame и frame+1"""

    frame: int = Field(..., ge=0)
    dx: FiniteFloat
    dy: FiniteFloat


class DenseTrajectoryRow(BaseModel):
    """Точка плотной траектории"""

    traj_id: str = Field(..., min_length=1)
    frame: int = Field(..., ge=0)
    x: FiniteFloat
    y: FiniteFloat


class ManifestRow(BaseModel):
    """Строка манифеста набора данных"""

    video_id: str = Field(..., min_length=1)
    patient_id: str = Field(..., min_length=1)
    hand: Hand
    gold_rating: float
    fps: float = Field(..., gt=0.0)
    trajectory_path: str = Field(..., min_length=1)
    flow_path: Optional[str] = None
    trajectories_path: Optional[str] = None

    @field_validator("gold_rating")
    @classmethod
    def validate_gold(cls, v):
        return _check_rating(v)


class RaterRow(BaseModel):
    """Оценка одного видео одним оценщиком"""

    video_id: str = Field(..., min_length=1)
    rater_id: str = Field(..., min_length=1)
    rating: float

    @field_validator("rating")
    @classmethod
    def validate_rating(cls, v):
        return _check_rating(v)


class _FeatureRowBase(BaseModel):
    model_config = ConfigDict(extra="forbid")

    video_id: str = Field(..., min_length=1)
    patient_id: str = Field(..., min_length=1)
    hand: Hand
    gold_rating: float

    @field_validator("gold_rating")
    @classmethod
    def validate_gold(cls, v):
        return _check_rating(v)


FeatureRow = create_model(
    "FeatureRow",
    __base__=_FeatureRowBase,
    **{name: (FiniteFloat, ...) for name in FEATURE_NAMES},
)

FEATURE_COLUMNS: Tuple[str, ...] = ("video_id", "patient_id", "hand", "gold_rating") + FEATURE_NAMES


class RowValidator:
    """Проверка табличных файлов с диагностикой по номерам строк"""

    MAX_DIAGNOSTICS = 20

    @classmethod
    def require_columns(cls, columns: Iterable[str], required: Sequence[str], source: str) -> None:
        present = list(columns)
        missing = [c for c in required if c not in present]
        if missing:
            raise SchemaError(source, [f"line 1: missing column {c!r}" for c in missing])

    @classmethod
    def validate_rows(cls, model: Type[Row], records: List[Dict[str, Any]], source: str) -> List[Row]:
        """Валидация записей; номер строки файла = индекс записи + 2"""
        try:
            return TypeAdapter(List[model]).validate_python(records)
        except ValidationError as e:
            diagnostics = []
            for error in e.errors()[:cls.MAX_DIAGNOSTICS]:
                loc = error["loc"]
                line = loc[0] + HEADER_LINES + 1 if loc and isinstance(loc[0], int) else "?"
                field_name = ".".join(str(p) for p in loc[1:]) or "row"
                diagnostics.append(f"line {line}: {field_name}: {error['msg']}")
            logger.warning(f"Schema violations in {source}: {len(e.errors())}")
            raise SchemaError(source, diagnostics) from e

    @classmethod
    def require_unique(cls, values: Sequence[str], what: str, source: str) -> None:
        seen: Dict[str, int] = {}
        diagnostics = []
        for i, value in enumerate(values):
            if value in seen:
                diagnostics.append(
                    f"line {i + HEADER_LINES + 1}: duplicate {what} {value!r} (first at line {seen[value]})"
                )
            else:
                seen[value] = i + HEADER_LINES + 1
        if diagnostics:
            raise SchemaError(source, diagnostics[:cls.MAX_DIAGNOSTICS])


def validate_input_path(path: Path, allowed_extensions: Sequence[str] = (".csv",)) -> Tuple[bool, Optional[str]]:
    """Проверка, что входной файл существует и имеет ожидаемое расширение"""
    path = Path(path)
    if not path.exists():
        return False, f"file not found: {path}"
    if not path.is_file():
        return False, f"not a regular file: {path}"
    if path.suffix.lower() not in allowed_extensions:
        return False, f"unsupported file type {path.suffix!r}, expected one of {', '.join(allowed_extensions)}"
    return True, None
