import logging
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional

import numpy as np

from .errors import AllInvalid, DegenerateRange, FpsMismatch, InvalidParameter, LengthMismatch

logger = logging.getLogger(__name__)

DEFAULT_CONF_FLOOR = 0.2
VALID_RATINGS = tuple(i / 2 for i in range(9))

_BACKGROUND_RE = re.compile(r"^bg(\d+)$")


class Hand(str, Enum):
    LEFT = "left"
    RIGHT = "right"


def _frozen(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def is_valid_rating(value: float) -> bool:
    """Проверка, что оценка лежит в {0, 0.5, ..., 4}"""
    return bool(np.isfinite(value)) and any(abs(value - r) < 1e-9 for r in VALID_RATINGS)


def background_index(joint: str) -> Optional[int]:
    """Номер фоновой точки для меток вида bg<k>"""
    match = _BACKGROUND_RE.match(joint)
    return int(match.group(1)) if match else None


@dataclass(frozen=True, eq=False)
class KeypointTrack:
    """Траектория одного сустава: позиции и уверенности по кадрам"""
    joint: str
    x: np.ndarray
    y: np.ndarray
    confidence: np.ndarray
    fps: float

    def __post_init__(self):
        object.__setattr__(self, "x", _frozen(self.x))
        object.__setattr__(self, "y", _frozen(self.y))
        object.__setattr__(self, "confidence", _frozen(self.confidence))

        if self.joint not in ("wrist", "head") and background_index(self.joint) is None:
            raise InvalidParameter(f"unknown joint label: {self.joint!r}")
        if not (self.fps > 0 and np.isfinite(self.fps)):
            raise InvalidParameter(f"fps must be positive, got {self.fps}")
        n = len(self.x)
        if len(self.y) != n or len(self.confidence) != n:
            raise InvalidParameter("x, y and confidence must have equal length")
        if n < 2:
            raise InvalidParameter("a track needs at least 2 frames")
        conf = self.confidence
        if np.any(~np.isfinite(conf)) or np.any(conf < 0) or np.any(conf > 1):
            raise InvalidParameter("confidences must lie in [0, 1]")

    def __len__(self) -> int:
        return len(self.x)

    @property
    def positions(self) -> np.ndarray:
        """Массив (N, 2) позиций"""
        return np.column_stack([self.x, self.y])

    def replace(self, x=None, y=None, confidence=None) -> "KeypointTrack":
        return KeypointTrack(
            joint=self.joint,
            x=self.x if x is None else x,
            y=self.y if y is None else y,
            confidence=self.confidence if confidence is None else confidence,
            fps=self.fps,
        )


@dataclass(frozen=True, eq=False)
class RelativeSignal:
    """Положение запястья относительно головы во времени

    `start_frame` - номер исходного кадра, соответствующего первому отсчету
    после обрезки невалидных краев.
    """
    x: np.ndarray
    y: np.ndarray
    fps: float
    valid_mask: np.ndarray
    start_frame: int = 0

    def __post_init__(self):
        object.__setattr__(self, "x", _frozen(self.x))
        object.__setattr__(self, "y", _frozen(self.y))
        object.__setattr__(self, "valid_mask", _frozen(self.valid_mask, dtype=bool))
        n = len(self.x)
        if len(self.y) != n or len(self.valid_mask) != n:
            raise InvalidParameter("x, y and valid_mask must have equal length")
        if not (self.fps > 0):
            raise InvalidParameter(f"fps must be positive, got {self.fps}")
        valid = self.valid_mask
        if not (np.all(np.isfinite(self.x[valid])) and np.all(np.isfinite(self.y[valid]))):
            raise InvalidParameter("valid samples must be finite")

    def __len__(self) -> int:
        return len(self.x)


@dataclass(frozen=True, eq=False)
class VideoRecord:
    """Одно видео пробы: идентификаторы, золотая оценка и треки"""
    video_id: str
    patient_id: str
    hand: Hand
    gold_rating: float
    wrist: KeypointTrack
    head: KeypointTrack
    background: List[KeypointTrack] = field(default_factory=list)

    def __post_init__(self):
        object.__setattr__(self, "hand", Hand(self.hand))
        if not self.patient_id:
            raise InvalidParameter("patient_id must be non-empty")
        if not is_valid_rating(self.gold_rating):
            raise InvalidParameter(f"gold rating {self.gold_rating} is not a BARS half-point")
        if self.wrist.joint != "wrist" or self.head.joint != "head":
            raise InvalidParameter("tracks must be labelled wrist and head")

    @property
    def fps(self) -> float:
        return self.wrist.fps

    @property
    def tracks(self) -> Dict[str, KeypointTrack]:
        return {"wrist": self.wrist, "head": self.head}


def relative_signal(wrist: KeypointTrack, head: KeypointTrack,
                    conf_floor: float = DEFAULT_CONF_FLOOR) -> RelativeSignal:
    """Сигнал запястье минус голова с интерполяцией пропусков

    Отсчет валиден, если обе уверенности не ниже `conf_floor`. Невалидные
    отсчеты внутри сигнала интерполируются линейно и остаются помеченными,
    невалидные края обрезаются.
    """
    if len(wrist) != len(head):
        raise LengthMismatch(f"wrist has {len(wrist)} frames, head has {len(head)}")
    if wrist.fps != head.fps:
        raise FpsMismatch(f"wrist fps {wrist.fps} != head fps {head.fps}")

    dx = wrist.x - head.x
    dy = wrist.y - head.y
    valid = (
        (wrist.confidence >= conf_floor)
        & (head.confidence >= conf_floor)
        & np.isfinite(dx)
        & np.isfinite(dy)
    )
    if not valid.any():
        raise AllInvalid(f"no frame clears confidence floor {conf_floor}")

    idx = np.flatnonzero(valid)
    first, last = idx[0], idx[-1]
    frames = np.arange(first, last + 1)

    x = np.interp(frames, idx, dx[idx])
    y = np.interp(frames, idx, dy[idx])
    mask = valid[first:last + 1]

    n_filled = int((~mask).sum())
    if n_filled:
        logger.debug(f"Interpolated {n_filled} of {len(mask)} samples")

    return RelativeSignal(x=x, y=y, fps=wrist.fps, valid_mask=mask, start_frame=int(first))


def normalize_units(signal: RelativeSignal) -> RelativeSignal:
    """Масштабирование сигнала на размах x по валидным отсчетам"""
    valid = signal.valid_mask
    if valid.sum() < 2:
        raise DegenerateRange("need at least 2 valid samples to normalize")
    x_valid = signal.x[valid]
    x_range = float(x_valid.max() - x_valid.min())
    if x_range <= 0:
        raise DegenerateRange("x range is zero")
    return RelativeSignal(
        x=signal.x / x_range,
        y=signal.y / x_range,
        fps=signal.fps,
        valid_mask=signal.valid_mask,
        start_frame=signal.start_frame,
    )
