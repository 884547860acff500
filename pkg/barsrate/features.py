"""
Признаки движения по сегментированному сигналу запястья

14 признаков: логарифмы средних длительностей (цикл, нос->палец,
палец->нос), число смен направления по x и y (сырое и на цикл),
стандартные отклонения длительностей и приближенная энтропия ApEn
сигнала x при четырех порогах схожести.
"""
import logging
import math
from dataclasses import astuple, dataclass, fields
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.spatial.distance import cdist

from .errors import InvalidParameter, SeriesTooShort, ZeroDuration
from .segment import CycleSet
from .signal_core import RelativeSignal

logger = logging.getLogger(__name__)

APEN_M = 3
APEN_R_VALUES = (0.10, 0.12, 0.14, 0.18)
APEN_MODES = ("concatenated", "per_cycle")

# Ограничение памяти на матрицу расстояний между окнами
_APEN_CHUNK = 512


@dataclass(frozen=True)
class FeatureVector:
    """Вектор из 14 признаков в каноническом порядке"""
    log_mean_cycle_s: float
    log_mean_n2f_s: float
    log_mean_f2n_s: float
    dirchg_x_raw: float
    dirchg_y_raw: float
    dirchg_x_per_cycle: float
    dirchg_y_per_cycle: float
    std_cycle_s: float
    std_n2f_s: float
    std_f2n_s: float
    apen_r010: float
    apen_r012: float
    apen_r014: float
    apen_r018: float

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not math.isfinite(value):
                raise InvalidParameter(f"feature {f.name} is not finite: {value}")
            if f.name.startswith(("std_", "dirchg_", "apen_")) and value < 0:
                raise InvalidParameter(f"feature {f.name} must be non-negative: {value}")

    @classmethod
    def names(cls) -> Tuple[str, ...]:
        return tuple(f.name for f in fields(cls))

    @classmethod
    def from_array(cls, values) -> "FeatureVector":
        values = [float(v) for v in values]
        if len(values) != len(FEATURE_NAMES):
            raise InvalidParameter(f"expected {len(FEATURE_NAMES)} features, got {len(values)}")
        return cls(*values)

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=float)

    def as_dict(self) -> Dict[str, float]:
        return dict(zip(FEATURE_NAMES, astuple(self)))


FEATURE_NAMES: Tuple[str, ...] = FeatureVector.names()


def duration_features(cycles: CycleSet, fps: float) -> Tuple[float, ...]:
    """Логарифмы средних и стандартные отклонения длительностей (в секундах)

    Порядок: log_mean_cycle, log_mean_n2f, log_mean_f2n, std_cycle,
    std_n2f, std_f2n.
    """
    if len(cycles) == 0:
        raise InvalidParameter("need at least one cycle")
    full = np.array([c.length for c in cycles.cycles], dtype=float)
    n2f, f2n = cycles.half_durations()
    if np.any(full <= 0) or np.any(n2f <= 0) or np.any(f2n <= 0):
        raise ZeroDuration("a cycle or half-cycle spans zero frames")

    groups = [full / fps, n2f / fps, f2n / fps]
    log_means = [math.log(float(np.mean(g))) for g in groups]
    stds = [float(np.std(g)) for g in groups]
    return tuple(log_means + stds)


def _sign_changes(values: np.ndarray) -> int:
    """Число смен знака первой разности; нулевые разности пропускаются"""
    signs = np.sign(np.diff(values))
    signs = signs[signs != 0]
    return int(np.count_nonzero(signs[1:] != signs[:-1]))


def direction_changes(signal: RelativeSignal, cycles: CycleSet) -> Tuple[float, float, float, float]:
    """Смены направления по x и y внутри циклов

    Порядок: raw_x, raw_y, per_cycle_x, per_cycle_y.
    """
    if len(cycles) == 0:
        raise InvalidParameter("need at least one cycle")
    raw_x = 0
    raw_y = 0
    for c in cycles.cycles:
        # Разности внутри отрезка цикла, включая его граничный кадр
        raw_x += _sign_changes(signal.x[c.start:c.end + 1])
        raw_y += _sign_changes(signal.y[c.start:c.end + 1])
    n = len(cycles)
    return float(raw_x), float(raw_y), raw_x / n, raw_y / n


def _phi(series: np.ndarray, k: int, tolerance: float) -> float:
    windows = np.lib.stride_tricks.sliding_window_view(series, k)
    n_windows = len(windows)
    counts = np.empty(n_windows)
    for lo in range(0, n_windows, _APEN_CHUNK):
        block = cdist(windows[lo:lo + _APEN_CHUNK], windows, metric="chebyshev")
        counts[lo:lo + _APEN_CHUNK] = np.count_nonzero(block <= tolerance, axis=1)
    # Самосовпадения включены, поэтому counts >= 1
    return float(np.mean(np.log(counts / n_windows)))


def apen(series, m: int = APEN_M, r: float = 0.2) -> float:
    """Приближенная энтропия ApEn

    Порог схожести - r, умноженное на популяционное стандартное
    отклонение ряда. Для ряда без разброса возвращается 0.
    """
    series = np.asarray(series, dtype=float)
    n = len(series)
    if m < 1:
        raise InvalidParameter(f"embedding dimension must be >= 1, got {m}")
    if n <= m + 1:
        raise SeriesTooShort(f"series of length {n} is too short for m={m}")
    if not r > 0:
        raise InvalidParameter(f"r must be positive, got {r}")

    sigma = float(np.std(series))
    if sigma == 0:
        return 0.0
    tolerance = r * sigma
    value = _phi(series, m, tolerance) - _phi(series, m + 1, tolerance)
    return max(value, 0.0)


def _apen_features(signal: RelativeSignal, cycles: CycleSet, m: int, mode: str) -> Tuple[float, ...]:
    spans = [signal.x[c.start:c.end] for c in cycles.cycles]
    concatenated = np.concatenate(spans)

    if mode == "per_cycle":
        usable = [s for s in spans if len(s) > m + 1]
        if usable:
            return tuple(float(np.mean([apen(s, m, r) for s in usable])) for r in APEN_R_VALUES)
        logger.warning("No cycle is long enough for per-cycle ApEn, using concatenated spans")

    return tuple(apen(concatenated, m, r) for r in APEN_R_VALUES)


def featurize(signal: RelativeSignal, cycles: CycleSet, fps: Optional[float] = None,
              apen_m: int = APEN_M, apen_mode: str = "concatenated") -> FeatureVector:
    """Сборка вектора признаков в фиксированном порядке"""
    if apen_mode not in APEN_MODES:
        raise InvalidParameter(f"apen_mode must be one of {APEN_MODES}, got {apen_mode!r}")
    fps = signal.fps if fps is None else fps

    log_mean_cycle, log_mean_n2f, log_mean_f2n, std_cycle, std_n2f, std_f2n = \
        duration_features(cycles, fps)
    raw_x, raw_y, per_x, per_y = direction_changes(signal, cycles)
    apen_values = _apen_features(signal, cycles, apen_m, apen_mode)

    return FeatureVector(
        log_mean_cycle, log_mean_n2f, log_mean_f2n,
        raw_x, raw_y, per_x, per_y,
        std_cycle, std_n2f, std_f2n,
        *apen_values,
    )
