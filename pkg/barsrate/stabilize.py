"""
Стабилизация кадров по фоновым точкам

Для каждой пары соседних кадров по соответствиям фоновых точек оценивается
преобразование подобия (масштаб, поворот, сдвиг), переводящее координаты
кадра t в координаты кадра t+1. Композиция этих преобразований дает
отображение кадра 0 в кадр t; обратное к нему переносит треки в систему
координат первого кадра.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .errors import BarsError, DegenerateGeometry, InvalidParameter, LengthMismatch, TooFewPoints
from .regularize import FlowSamples, MotionTrajectory
from .signal_core import KeypointTrack

logger = logging.getLogger(__name__)

DEFAULT_MIN_POINTS = 2
DEFAULT_OUTLIER_FACTOR = 3.0


def _wrap_angle(angle: float) -> float:
    """Приведение угла к (-pi, pi]"""
    wrapped = math.atan2(math.sin(angle), math.cos(angle))
    return math.pi if wrapped == -math.pi else wrapped


@dataclass(frozen=True)
class SimilarityTransform:
    """p' = scale * R(rotation) @ p + (tx, ty)"""
    scale: float = 1.0
    rotation: float = 0.0
    tx: float = 0.0
    ty: float = 0.0

    def __post_init__(self):
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise InvalidParameter(f"scale must be positive, got {self.scale}")

    @classmethod
    def identity(cls) -> "SimilarityTransform":
        return cls()

    @property
    def translation(self) -> np.ndarray:
        return np.array([self.tx, self.ty])

    def linear(self) -> np.ndarray:
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        return self.scale * np.array([[c, -s], [s, c]])

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Применение к массиву точек (N, 2)"""
        points = np.asarray(points, dtype=float)
        return points @ self.linear().T + self.translation

    def inverse(self) -> "SimilarityTransform":
        inv_scale = 1.0 / self.scale
        c, s = math.cos(-self.rotation), math.sin(-self.rotation)
        tx = -inv_scale * (c * self.tx - s * self.ty)
        ty = -inv_scale * (s * self.tx + c * self.ty)
        return SimilarityTransform(inv_scale, _wrap_angle(-self.rotation), tx, ty)

    def compose(self, first: "SimilarityTransform") -> "SimilarityTransform":
        """self ∘ first: сначала `first`, затем self"""
        t = self.apply(first.translation[None, :])[0]
        return SimilarityTransform(
            self.scale * first.scale,
            _wrap_angle(self.rotation + first.rotation),
            float(t[0]),
            float(t[1]),
        )

    def as_dict(self) -> Dict[str, float]:
        return {"scale": self.scale, "rotation": self.rotation, "tx": self.tx, "ty": self.ty}


@dataclass(frozen=True, eq=False)
class PointCorrespondences:
    """Пары точек между соседними кадрами: src в кадре t, dst в кадре t+1"""
    src: np.ndarray
    dst: np.ndarray

    def __post_init__(self):
        src = np.asarray(self.src, dtype=float).reshape(-1, 2)
        dst = np.asarray(self.dst, dtype=float).reshape(-1, 2)
        if src.shape != dst.shape:
            raise LengthMismatch(f"{len(src)} source points vs {len(dst)} destination points")
        object.__setattr__(self, "src", src)
        object.__setattr__(self, "dst", dst)

    def __len__(self) -> int:
        return len(self.src)

    def subset(self, mask: np.ndarray) -> "PointCorrespondences":
        return PointCorrespondences(self.src[mask], self.dst[mask])


@dataclass(frozen=True, eq=False)
class SimilarityFit:
    """Результат оценки: преобразование, RMS остатков по inliers и маска inliers"""
    transform: SimilarityTransform
    rms: float
    inlier_mask: np.ndarray


def residuals(transform: SimilarityTransform, corr: PointCorrespondences) -> np.ndarray:
    return np.linalg.norm(transform.apply(corr.src) - corr.dst, axis=1)


def _rms(values: np.ndarray) -> float:
    return float(np.sqrt(np.mean(values ** 2))) if len(values) else 0.0


def _closed_form(src: np.ndarray, dst: np.ndarray) -> SimilarityTransform:
    """Наименьшие квадраты для подобия на плоскости

    Центроиды совмещаются, поворот максимизирует взаимную ковариацию,
    масштаб - отношение ковариации к дисперсии источника.
    """
    if len(src) < 2:
        raise TooFewPoints(f"need at least 2 correspondences, got {len(src)}")

    mu_src = src.mean(axis=0)
    mu_dst = dst.mean(axis=0)
    s = src - mu_src
    d = dst - mu_dst

    var_src = float(np.sum(s ** 2))
    if var_src <= 1e-12 * max(1.0, float(np.sum(src ** 2))):
        raise DegenerateGeometry("source points are coincident")

    # Компоненты взаимной ковариации: a - "косинусная", b - "синусная"
    a = float(np.sum(s[:, 0] * d[:, 0] + s[:, 1] * d[:, 1]))
    b = float(np.sum(s[:, 0] * d[:, 1] - s[:, 1] * d[:, 0]))
    norm = math.hypot(a, b)
    if norm <= 0:
        raise DegenerateGeometry("destination points carry no rotation/scale information")

    rotation = math.atan2(b, a)
    scale = norm / var_src
    c, sn = a / norm, b / norm
    tx = mu_dst[0] - scale * (c * mu_src[0] - sn * mu_src[1])
    ty = mu_dst[1] - scale * (sn * mu_src[0] + c * mu_src[1])
    return SimilarityTransform(scale, _wrap_angle(rotation), float(tx), float(ty))


def estimate_similarity(corr: PointCorrespondences,
                        outlier_factor: Optional[float] = DEFAULT_OUTLIER_FACTOR) -> SimilarityFit:
    """Оценка преобразования подобия по соответствиям

    Один проход отсева: пары с остатком больше `outlier_factor` медиан
    отбрасываются и модель переоценивается. `outlier_factor=None` отключает
    отсев.
    """
    transform = _closed_form(corr.src, corr.dst)
    inliers = np.ones(len(corr), dtype=bool)

    if outlier_factor is not None and len(corr) > 2:
        res = residuals(transform, corr)
        # Абсолютный минимум порога, чтобы шум округления не считался выбросом
        threshold = max(outlier_factor * float(np.median(res)), 1e-9)
        keep = res <= threshold
        if 2 <= keep.sum() < len(corr):
            try:
                transform = _closed_form(corr.src[keep], corr.dst[keep])
                inliers = keep
            except DegenerateGeometry:
                logger.debug("Outlier trimming left degenerate geometry, keeping full fit")

    rms = _rms(residuals(transform, corr.subset(inliers)))
    return SimilarityFit(transform=transform, rms=rms, inlier_mask=inliers)


def cumulative_transforms(per_frame: Sequence[SimilarityTransform]) -> List[SimilarityTransform]:
    """Отображения кадр 0 -> кадр t для t = 0..len(per_frame)"""
    chain = [SimilarityTransform.identity()]
    for step in per_frame:
        chain.append(step.compose(chain[-1]))
    return chain


def stabilize_track(track: KeypointTrack,
                    per_frame: Sequence[SimilarityTransform]) -> KeypointTrack:
    """Перенос трека в систему координат кадра 0"""
    if len(per_frame) != len(track) - 1:
        raise LengthMismatch(
            f"expected {len(track) - 1} frame-gap transforms, got {len(per_frame)}"
        )
    chain = cumulative_transforms(per_frame)
    points = track.positions
    out = np.empty_like(points)
    for t, to_frame in enumerate(chain):
        out[t] = to_frame.inverse().apply(points[t:t + 1])[0]
    return track.replace(x=out[:, 0], y=out[:, 1])


def unstabilize_track(track: KeypointTrack,
                      per_frame: Sequence[SimilarityTransform]) -> KeypointTrack:
    """Обратная операция: из координат кадра 0 в координаты каждого кадра"""
    if len(per_frame) != len(track) - 1:
        raise LengthMismatch(
            f"expected {len(track) - 1} frame-gap transforms, got {len(per_frame)}"
        )
    chain = cumulative_transforms(per_frame)
    points = track.positions
    out = np.empty_like(points)
    for t, to_frame in enumerate(chain):
        out[t] = to_frame.apply(points[t:t + 1])[0]
    return track.replace(x=out[:, 0], y=out[:, 1])


def background_correspondences(background: Sequence[KeypointTrack],
                               conf_floor: float = 0.0) -> List[PointCorrespondences]:
    """Соответствия по каждому промежутку кадров из фоновых треков

    Точка используется в промежутке t -> t+1, если в обоих кадрах она
    конечна и уверенность не ниже `conf_floor`.
    """
    if not background:
        return []
    n = len(background[0])
    if any(len(track) != n for track in background):
        raise LengthMismatch("background tracks differ in length")

    pos = np.stack([track.positions for track in background])  # (K, N, 2)
    conf = np.stack([track.confidence for track in background])  # (K, N)
    ok = (conf >= conf_floor) & np.all(np.isfinite(pos), axis=2)

    result = []
    for t in range(n - 1):
        usable = ok[:, t] & ok[:, t + 1]
        result.append(PointCorrespondences(pos[usable, t], pos[usable, t + 1]))
    return result


@dataclass(frozen=True, eq=False)
class StabilizationResult:
    tracks: Dict[str, KeypointTrack]
    stabilized: bool
    fits: List[SimilarityFit] = field(default_factory=list)
    reason: str = ""

    @property
    def transforms(self) -> List[SimilarityTransform]:
        return [fit.transform for fit in self.fits]


def try_stabilize(video_tracks: Dict[str, KeypointTrack],
                  bg_corr: Sequence[PointCorrespondences],
                  min_points: int = DEFAULT_MIN_POINTS,
                  outlier_factor: Optional[float] = DEFAULT_OUTLIER_FACTOR) -> StabilizationResult:
    """Стабилизация с откатом к исходным трекам при любой неудаче"""
    n_frames = len(next(iter(video_tracks.values())))

    def passthrough(reason: str) -> StabilizationResult:
        logger.info(f"Stabilization skipped: {reason}")
        return StabilizationResult(tracks=dict(video_tracks), stabilized=False, reason=reason)

    if len(bg_corr) != n_frames - 1:
        return passthrough(f"{len(bg_corr)} correspondence sets for {n_frames - 1} frame gaps")

    fits = []
    for t, corr in enumerate(bg_corr):
        if len(corr) < min_points:
            return passthrough(f"frame gap {t} has {len(corr)} usable points (< {min_points})")
        try:
            fits.append(estimate_similarity(corr, outlier_factor))
        except BarsError as e:
            return passthrough(f"frame gap {t}: {type(e).__name__}: {e}")

    per_frame = [fit.transform for fit in fits]
    tracks = {name: stabilize_track(track, per_frame) for name, track in video_tracks.items()}
    return StabilizationResult(tracks=tracks, stabilized=True, fits=fits)


def stabilize_flows(raw_track: KeypointTrack, flows: FlowSamples,
                    per_frame: Sequence[SimilarityTransform]) -> FlowSamples:
    """Пересчет смещений потока в координаты кадра 0

    Смещение в кадре t измерено в точке исходного (нестабилизированного)
    трека; его конец лежит в координатах кадра t+1.
    """
    if len(flows) != len(raw_track) - 1 or len(per_frame) != len(flows):
        raise LengthMismatch(f"{len(flows)} flow samples, {len(per_frame)} transforms, {len(raw_track)} frames")
    chain = cumulative_transforms(per_frame)
    start = np.nan_to_num(raw_track.positions[:-1])
    end = start + np.column_stack([flows.dx, flows.dy])
    out = np.empty_like(start)
    for t in range(len(start)):
        p = chain[t].inverse().apply(start[t:t + 1])[0]
        q = chain[t + 1].inverse().apply(end[t:t + 1])[0]
        out[t] = q - p
    return FlowSamples(out[:, 0], out[:, 1])


def stabilize_trajectories(trajectories: Sequence[MotionTrajectory],
                           per_frame: Sequence[SimilarityTransform]) -> List[MotionTrajectory]:
    """Перенос плотных траекторий в координаты кадра 0"""
    inverses = [c.inverse() for c in cumulative_transforms(per_frame)]
    linear = np.stack([c.linear() for c in inverses])
    shift = np.stack([c.translation for c in inverses])
    result = []
    for traj in trajectories:
        if traj.end_frame >= len(inverses):
            raise LengthMismatch(f"trajectory {traj.traj_id} ends at frame {traj.end_frame}, "
                                 f"video has {len(inverses)} frames")
        frames = np.arange(traj.start_frame, traj.end_frame + 1)
        points = np.column_stack([traj.x, traj.y])
        out = np.einsum("fij,fj->fi", linear[frames], points) + shift[frames]
        result.append(MotionTrajectory(traj.traj_id, traj.start_frame, out[:, 0], out[:, 1]))
    return result
