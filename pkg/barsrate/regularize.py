"""
Временная регуляризация трека запястья

Оценки позы по отдельным кадрам сглаживаются средним по окну, где каждая
соседняя оценка переносится в текущий кадр суммой смещений оптического
потока. Затем оценки притягиваются к области самого быстрого движения,
заданной плотными траекториями с наибольшим пройденным путем.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np

from .errors import EmptyInput, InvalidParameter, LengthMismatch, WindowTooLarge
from .signal_core import KeypointTrack, RelativeSignal

logger = logging.getLogger(__name__)

DEFAULT_WINDOW = 5
DEFAULT_TOP_FRACTION = 0.05
DEFAULT_SNAP_FRACTION = 0.25


@dataclass(frozen=True, eq=False)
class FlowSamples:
    """Смещения потока (dx, dy) в точке оценки запястья, по одному на промежуток кадров"""
    dx: np.ndarray
    dy: np.ndarray

    def __post_init__(self):
        dx = np.asarray(self.dx, dtype=float)
        dy = np.asarray(self.dy, dtype=float)
        if dx.shape != dy.shape or dx.ndim != 1:
            raise InvalidParameter("dx and dy must be 1-D arrays of equal length")
        if not (np.all(np.isfinite(dx)) and np.all(np.isfinite(dy))):
            raise InvalidParameter("flow samples must be finite")
        object.__setattr__(self, "dx", dx)
        object.__setattr__(self, "dy", dy)

    def __len__(self) -> int:
        return len(self.dx)

    @classmethod
    def zeros(cls, n_gaps: int) -> "FlowSamples":
        return cls(np.zeros(n_gaps), np.zeros(n_gaps))


@dataclass(frozen=True, eq=False)
class MotionTrajectory:
    """Плотная траектория точки на отрезке кадров"""
    traj_id: str
    start_frame: int
    x: np.ndarray
    y: np.ndarray
    total_motion: float = field(init=False)

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if x.shape != y.shape or x.ndim != 1 or len(x) == 0:
            raise InvalidParameter(f"trajectory {self.traj_id}: x and y must be non-empty and equal length")
        if self.start_frame < 0:
            raise InvalidParameter(f"trajectory {self.traj_id}: negative start frame")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "total_motion", float(np.hypot(np.diff(x), np.diff(y)).sum()))

    @property
    def end_frame(self) -> int:
        """Последний кадр траектории (включительно)"""
        return self.start_frame + len(self.x) - 1

    def point_at(self, frame: int):
        i = frame - self.start_frame
        return self.x[i], self.y[i]


def flow_smooth(estimates: KeypointTrack, flows: FlowSamples,
                window: int = DEFAULT_WINDOW) -> KeypointTrack:
    """Сглаживание оценок по окну с переносом соседей потоком

    Выход в кадре t - взвешенное уверенностями среднее оценок кадров
    s из [t-h, t+h], каждая сдвинута на сумму смещений потока от s до t.
    Уверенность выхода - среднее использованных весов.
    """
    n = len(estimates)
    if window < 1 or window % 2 == 0:
        raise InvalidParameter(f"window must be odd and >= 1, got {window}")
    if window > 2 * n - 1:
        raise WindowTooLarge(f"window {window} exceeds 2*{n}-1")
    if len(flows) != n - 1:
        raise LengthMismatch(f"expected {n - 1} flow samples, got {len(flows)}")

    # Накопленное смещение от кадра 0 до кадра t
    cum_x = np.concatenate([[0.0], np.cumsum(flows.dx)])
    cum_y = np.concatenate([[0.0], np.cumsum(flows.dy)])

    x = np.nan_to_num(estimates.x)
    y = np.nan_to_num(estimates.y)
    conf = np.where(np.isfinite(estimates.x) & np.isfinite(estimates.y), estimates.confidence, 0.0)

    half = (window - 1) // 2
    if half == 0:
        return estimates.replace(confidence=conf)

    sum_w = np.zeros(n)
    sum_x = np.zeros(n)
    sum_y = np.zeros(n)
    count = np.zeros(n)
    frames = np.arange(n)

    for offset in range(-half, half + 1):
        src = frames + offset
        inside = (src >= 0) & (src < n)
        t = frames[inside]
        s = src[inside]
        w = conf[s]
        sum_w[t] += w
        sum_x[t] += w * (x[s] + cum_x[t] - cum_x[s])
        sum_y[t] += w * (y[s] + cum_y[t] - cum_y[s])
        count[t] += 1

    out_x = np.array(estimates.x, dtype=float)
    out_y = np.array(estimates.y, dtype=float)
    has_weight = sum_w > 0
    out_x[has_weight] = sum_x[has_weight] / sum_w[has_weight]
    out_y[has_weight] = sum_y[has_weight] / sum_w[has_weight]
    out_conf = np.clip(sum_w / count, 0.0, 1.0)

    return estimates.replace(x=out_x, y=out_y, confidence=out_conf)


def fastest_region(trajectories: Sequence[MotionTrajectory],
                   top_fraction: float = DEFAULT_TOP_FRACTION) -> List[MotionTrajectory]:
    """Траектории с наибольшим движением за видео

    Сохраняется ceil(top_fraction * n) траекторий; при равенстве движения
    раньше идет траектория с меньшим начальным кадром, затем по входному
    порядку.
    """
    if not trajectories:
        raise EmptyInput("no trajectories")
    if not (0 < top_fraction <= 1):
        raise InvalidParameter(f"top_fraction must lie in (0, 1], got {top_fraction}")

    n = len(trajectories)
    keep = min(n, max(1, math.ceil(top_fraction * n - 1e-9)))
    order = sorted(
        range(n),
        key=lambda i: (-trajectories[i].total_motion, trajectories[i].start_frame, i),
    )
    return [trajectories[i] for i in order[:keep]]


def _active_points(region: Sequence[MotionTrajectory], n_frames: int) -> List[np.ndarray]:
    """Точки области, активные в каждом кадре"""
    per_frame: List[list] = [[] for _ in range(n_frames)]
    for traj in region:
        for i in range(len(traj.x)):
            f = traj.start_frame + i
            if 0 <= f < n_frames:
                per_frame[f].append((traj.x[i], traj.y[i]))
    return [np.array(points, dtype=float).reshape(-1, 2) for points in per_frame]


def constrain_to_region(track: KeypointTrack, region: Sequence[MotionTrajectory],
                        max_snap: float) -> KeypointTrack:
    """Притягивание оценок к ближайшей точке области быстрого движения

    Если оценка дальше `max_snap` от всех активных в кадре точек области,
    она заменяется ближайшей из них; кадры без активных точек не меняются.
    """
    if not region:
        return track

    active = _active_points(region, len(track))
    x = np.array(track.x, dtype=float)
    y = np.array(track.y, dtype=float)
    snapped = 0
    for t, points in enumerate(active):
        if len(points) == 0:
            continue
        dist = np.hypot(points[:, 0] - x[t], points[:, 1] - y[t])
        nearest = int(np.argmin(dist))
        if not np.isfinite(x[t]) or not np.isfinite(y[t]) or dist[nearest] > max_snap:
            x[t], y[t] = points[nearest]
            snapped += 1

    if snapped:
        logger.debug(f"Snapped {snapped} of {len(track)} frames to the fastest-moving region")
    return track.replace(x=x, y=y)


def default_snap_radius(signal: RelativeSignal, snap_fraction: float = DEFAULT_SNAP_FRACTION) -> float:
    """Радиус притяжения как доля размаха x относительного сигнала по валидным отсчетам"""
    xs = signal.x[signal.valid_mask]
    if len(xs) == 0:
        return 0.0
    return snap_fraction * float(xs.max() - xs.min())


def tracking_error(estimate: KeypointTrack, truth: KeypointTrack) -> float:
    """Средняя евклидова ошибка как доля размаха движения руки по x"""
    if len(estimate) != len(truth):
        raise LengthMismatch(f"{len(estimate)} estimated frames vs {len(truth)} true frames")
    motion_range = float(truth.x.max() - truth.x.min())
    if motion_range <= 0:
        raise InvalidParameter("true track has zero x range")
    err = np.hypot(estimate.x - truth.x, estimate.y - truth.y)
    return float(np.mean(err)) / motion_range


def tracking_improvement(before: float, after: float) -> float:
    """Относительное снижение ошибки трекинга"""
    if before <= 0:
        return 0.0
    return (before - after) / before
