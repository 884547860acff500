"""
Синтетические записи пальце-носовой пробы

Генератор нужен как воспроизводимый набор данных вместо закрытых
клинических видео. Тяжесть влияет на кинематику: средняя длительность
цикла растет как base_cycle_s * (1 + 0.5 * severity), разброс длительностей
как 0.1 * severity от среднего, а 2 * severity колебаний за цикл добавляют
смены направления. Коэффициенты подобраны так, чтобы тяжесть
восстанавливалась по признакам, и не претендуют на клиническую точность.

Запись начинается покоем у носа, затем n_cycles выходов к пальцу и
возвратов, затем половина выхода к пальцу и покой у пальца: на чистых
данных сегментация дает ровно n_cycles циклов нос-палец-нос.
"""
import logging
import math
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import InvalidParameter
from .evaluation import RaterMatrix
from .formats import write_synth_dataset
from .regularize import FlowSamples, MotionTrajectory
from .signal_core import VALID_RATINGS, Hand, KeypointTrack, VideoRecord, is_valid_rating
from .stabilize import SimilarityTransform

logger = logging.getLogger(__name__)

IMAGE_CENTER = (320.0, 240.0)
HEAD_POSITION = (300.0, 200.0)
NOSE_OFFSET = (10.0, 40.0)

DEFAULT_AMPLITUDE = 150.0
REST_S = 0.5
TRAJECTORY_WINDOW = 15
N_BACKGROUND = 12


class Stream(IntEnum):
    """Подпотоки генератора; номер занимает третье слово счетчика Philox"""
    CYCLES = 0
    WRIST = 1
    HEAD = 2
    BACKGROUND = 3
    FLOW = 4
    TRAJECTORIES = 5
    DROPOUT = 6
    ORDER = 7
    HANDS = 8
    RATERS = 9


def philox_stream(key: int, stream: Stream, index: int = 0) -> np.random.Generator:
    """Генератор Philox с ключом `key` и счетчиком (0, 0, stream, index)

    Младшие слова счетчика растут при генерации, поэтому подпотоки с
    разными (stream, index) не пересекаются и не зависят от порядка вызовов.
    """
    if key < 0 or index < 0:
        raise InvalidParameter(f"seed and stream index must be non-negative, got {key}, {index}")
    counter = np.array([0, 0, int(stream), index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


@dataclass(frozen=True)
class CameraDrift:
    """Движение камеры: равномерный сдвиг и зум плюс колебания зума и поворота

    Отображение мира в кадр t подобно; в кадре 0 оно тождественно.
    """
    pan_x: float = 0.4          # пикселей за кадр
    pan_y: float = 0.15
    zoom_rate: float = 1.0005   # множитель за кадр
    rotation_rate: float = 0.0005  # радиан за кадр
    zoom_amplitude: float = 0.0
    rotation_amplitude: float = 0.0
    wobble_period_s: float = 1.7

    def __post_init__(self):
        if not self.zoom_rate > 0:
            raise InvalidParameter(f"zoom_rate must be positive, got {self.zoom_rate}")
        if not (0 <= self.zoom_amplitude < 1):
            raise InvalidParameter(f"zoom_amplitude must lie in [0, 1), got {self.zoom_amplitude}")
        if not self.wobble_period_s > 0:
            raise InvalidParameter("wobble_period_s must be positive")

    @classmethod
    def shaky(cls) -> "CameraDrift":
        """Сильная тряска: колебания зума на 30% и поворота на 0.3 рад"""
        return cls(zoom_amplitude=0.3, rotation_amplitude=0.3)

    def transform_at(self, frame: int, fps: float) -> SimilarityTransform:
        wobble = math.sin(2.0 * math.pi * frame / (fps * self.wobble_period_s))
        scale = self.zoom_rate ** frame * (1.0 + self.zoom_amplitude * wobble)
        rotation = self.rotation_rate * frame + self.rotation_amplitude * wobble
        about_center = SimilarityTransform(scale, rotation)
        cx, cy = IMAGE_CENTER
        c = about_center.apply(np.array([[cx, cy]]))[0]
        return SimilarityTransform(
            scale,
            about_center.rotation,
            cx - c[0] + self.pan_x * frame,
            cy - c[1] + self.pan_y * frame,
        )


@dataclass(frozen=True)
class SynthParams:
    severity: float
    n_cycles: int = 8
    fps: float = 30.0
    base_cycle_s: float = 1.2
    noise_seed: int = 0
    exam_index: int = 0
    camera_motion: Optional[CameraDrift] = None
    amplitude: float = DEFAULT_AMPLITUDE
    dropout_rate: float = 0.02

    def __post_init__(self):
        if not is_valid_rating(self.severity):
            raise InvalidParameter(f"severity {self.severity} is not a BARS half-point")
        if self.n_cycles < 2:
            raise InvalidParameter(f"n_cycles must be >= 2, got {self.n_cycles}")
        if not self.base_cycle_s > 0:
            raise InvalidParameter(f"base_cycle_s must be positive, got {self.base_cycle_s}")
        if not self.fps > 0:
            raise InvalidParameter(f"fps must be positive, got {self.fps}")
        if not self.amplitude > 0:
            raise InvalidParameter(f"amplitude must be positive, got {self.amplitude}")
        if not (0 <= self.dropout_rate < 1):
            raise InvalidParameter(f"dropout_rate must lie in [0, 1), got {self.dropout_rate}")
        if self.noise_seed < 0 or self.exam_index < 0:
            raise InvalidParameter(
                f"noise_seed and exam_index must be non-negative, got {self.noise_seed}, {self.exam_index}")

    @property
    def mean_cycle_s(self) -> float:
        return self.base_cycle_s * (1.0 + 0.5 * self.severity)


@dataclass(frozen=True, eq=False)
class SynthExam:
    """Синтетическое видео: запись с треками, поток, плотные траектории и
    истинный трек запястья в координатах кадра 0"""
    params: SynthParams
    record: VideoRecord
    flows: FlowSamples
    trajectories: List[MotionTrajectory]
    clean_wrist: KeypointTrack
    cycle_durations_s: np.ndarray


@dataclass(frozen=True, eq=False)
class SynthDataset:
    exams: List[SynthExam]
    patient_severity: Dict[str, float] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.exams)

    @property
    def records(self) -> List[VideoRecord]:
        return [exam.record for exam in self.exams]


def _waveform(params: SynthParams, durations: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Смещение запястья от носа (x к пальцу, y поперек) по кадрам"""
    A = params.amplitude
    k = 2.0 * params.severity
    half_s = params.mean_cycle_s / 2.0
    total_s = 2 * REST_S + float(durations.sum()) + half_s
    n_frames = int(math.ceil(total_s * params.fps)) + 1
    t = np.arange(n_frames) / params.fps

    x = np.full(n_frames, A)
    y = np.zeros(n_frames)
    x[t < REST_S] = 0.0

    start = REST_S
    for d in durations:
        inside = (t >= start) & (t < start + d)
        phi = (t[inside] - start) / d
        x[inside] = A * (1.0 - np.cos(2 * np.pi * phi)) / 2.0 + 0.04 * A * np.sin(2 * np.pi * k * phi)
        y[inside] = 0.1 * A * np.sin(2 * np.pi * phi) + 0.04 * A * np.sin(2 * np.pi * k * phi)
        start += d

    # Финальная половина выхода к пальцу
    inside = (t >= start) & (t < start + half_s)
    phi = (t[inside] - start) / (2.0 * half_s)
    x[inside] = A * (1.0 - np.cos(2 * np.pi * phi)) / 2.0
    y[inside] = 0.1 * A * np.sin(2 * np.pi * phi)
    return x, y


def _apply(transforms: Sequence[SimilarityTransform], points: np.ndarray) -> np.ndarray:
    """Точки (N, 2), по одной на кадр, в координатах изображения"""
    out = np.empty_like(points)
    for i, tr in enumerate(transforms):
        out[i] = tr.apply(points[i:i + 1])[0]
    return out


def generate_exam(params: SynthParams, hand: Union[Hand, str] = Hand.RIGHT,
                  video_id: str = "synth", patient_id: str = "P000") -> SynthExam:
    """Генерация одного видео; результат полностью определен `noise_seed` и `exam_index`"""
    rng_cycles, rng_wrist, rng_head, rng_bg, rng_flow, rng_traj, rng_drop = (
        philox_stream(params.noise_seed, stream, params.exam_index)
        for stream in (Stream.CYCLES, Stream.WRIST, Stream.HEAD, Stream.BACKGROUND,
                       Stream.FLOW, Stream.TRAJECTORIES, Stream.DROPOUT)
    )

    mean_s = params.mean_cycle_s
    jitter = 0.1 * params.severity * mean_s
    durations = np.maximum(rng_cycles.normal(mean_s, jitter, params.n_cycles), 0.4 * mean_s)

    dx, dy = _waveform(params, durations)
    n = len(dx)
    head_world = np.tile(HEAD_POSITION, (n, 1))
    wrist_world = np.column_stack([
        HEAD_POSITION[0] + NOSE_OFFSET[0] + dx,
        HEAD_POSITION[1] + NOSE_OFFSET[1] + dy,
    ])

    if params.camera_motion is not None:
        camera = [params.camera_motion.transform_at(f, params.fps) for f in range(n)]
    else:
        camera = [SimilarityTransform.identity()] * n

    # Оценки позы в координатах изображения
    wrist_img = _apply(camera, wrist_world) + rng_wrist.normal(0.0, 0.3, (n, 2))
    wrist_conf = rng_wrist.uniform(0.7, 1.0, n)
    dropped = rng_drop.random(n) < params.dropout_rate
    n_drop = int(dropped.sum())
    if n_drop:
        angle = rng_drop.uniform(0, 2 * np.pi, n_drop)
        radius = rng_drop.uniform(0.1, 0.3, n_drop) * params.amplitude
        wrist_img[dropped] += np.column_stack([radius * np.cos(angle), radius * np.sin(angle)])
        wrist_conf[dropped] = 0.05

    head_img = _apply(camera, head_world) + rng_head.normal(0.0, 0.5, (n, 2))
    head_conf = rng_head.uniform(0.85, 1.0, n)

    bg_world = np.column_stack([rng_bg.uniform(40, 600, N_BACKGROUND), rng_bg.uniform(40, 440, N_BACKGROUND)])
    background = []
    for k, point in enumerate(bg_world):
        img = _apply(camera, np.tile(point, (n, 1))) + rng_bg.normal(0.0, 0.05, (n, 2))
        background.append(KeypointTrack(f"bg{k}", img[:, 0], img[:, 1], np.full(n, 0.9), params.fps))

    true_img = _apply(camera, wrist_world)
    flow = np.diff(true_img, axis=0) + rng_flow.normal(0.0, 0.05, (n - 1, 2))

    trajectories = _trajectories(camera, wrist_world, bg_world, rng_traj, n)

    record = VideoRecord(
        video_id=video_id,
        patient_id=patient_id,
        hand=Hand(hand),
        gold_rating=params.severity,
        wrist=KeypointTrack("wrist", wrist_img[:, 0], wrist_img[:, 1], wrist_conf, params.fps),
        head=KeypointTrack("head", head_img[:, 0], head_img[:, 1], head_conf, params.fps),
        background=background,
    )
    clean = KeypointTrack("wrist", wrist_world[:, 0], wrist_world[:, 1], np.ones(n), params.fps)
    return SynthExam(
        params=params,
        record=record,
        flows=FlowSamples(flow[:, 0], flow[:, 1]),
        trajectories=trajectories,
        clean_wrist=clean,
        cycle_durations_s=durations,
    )


def _trajectories(camera: Sequence[SimilarityTransform], wrist_world: np.ndarray,
                  bg_world: np.ndarray, rng: np.random.Generator, n: int) -> List[MotionTrajectory]:
    """Плотные траектории окнами по TRAJECTORY_WINDOW кадров: точки кисти,
    фона и головы"""
    result = []
    for w, start in enumerate(range(0, n, TRAJECTORY_WINDOW)):
        frames = np.arange(start, min(start + TRAJECTORY_WINDOW, n))
        cams = [camera[f] for f in frames]
        sources = [("h", wrist_world[frames] + rng.uniform(-12, 12, 2)) for _ in range(6)]
        sources += [("b", np.tile(p, (len(frames), 1))) for p in bg_world]
        sources += [("c", np.tile(HEAD_POSITION, (len(frames), 1)) + rng.uniform(-15, 15, 2)) for _ in range(3)]
        for k, (kind, world) in enumerate(sources):
            img = _apply(cams, world) + rng.normal(0.0, 0.2, world.shape)
            result.append(MotionTrajectory(f"{kind}{w}_{k}", int(start), img[:, 0], img[:, 1]))
    return result


def _allocate(n_patients: int, distribution: Mapping[float, float]) -> List[float]:
    """Распределение тяжестей по пациентам методом наибольших остатков"""
    levels = sorted(distribution)
    weights = np.array([distribution[s] for s in levels], dtype=float)
    if np.any(weights < 0) or weights.sum() <= 0:
        raise InvalidParameter("severity distribution needs non-negative weights with positive sum")
    quotas = weights / weights.sum() * n_patients
    counts = np.floor(quotas).astype(int)
    remainder = n_patients - int(counts.sum())
    order = sorted(range(len(levels)), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in order[:remainder]:
        counts[i] += 1
    return [s for s, c in zip(levels, counts) for _ in range(c)]


def generate_dataset(n_patients: int, videos_per_patient: int = 2,
                     severity_distribution: Optional[Mapping[float, float]] = None,
                     seed: int = 0, camera_motion: Optional[CameraDrift] = None,
                     **exam_options) -> SynthDataset:
    """Синтетический набор: пациенты с латентной тяжестью и видео обеих рук

    Тяжесть руки с вероятностью 0.3 отличается от латентной на 0.5.
    Видео чередуют правую и левую руку. Видео с номером k по порядку
    генерации получает ключ Philox `seed` и счетчик k.
    """
    if n_patients < 2:
        raise InvalidParameter(f"n_patients must be >= 2, got {n_patients}")
    if videos_per_patient < 1:
        raise InvalidParameter(f"videos_per_patient must be >= 1, got {videos_per_patient}")
    distribution = severity_distribution or {s: 1.0 for s in VALID_RATINGS}
    for s in distribution:
        if not is_valid_rating(s):
            raise InvalidParameter(f"severity {s} is not a BARS half-point")

    severities = _allocate(n_patients, distribution)
    order = philox_stream(seed, Stream.ORDER).permutation(n_patients)

    exams = []
    patient_severity = {}
    for i in range(n_patients):
        patient_id = f"P{i:03d}"
        latent = severities[order[i]]
        patient_severity[patient_id] = latent

        rng = philox_stream(seed, Stream.HANDS, i)
        hand_severity = {}
        for hand in (Hand.RIGHT, Hand.LEFT):
            shift = rng.choice([-0.5, 0.5]) if rng.random() < 0.3 else 0.0
            hand_severity[hand] = float(np.clip(latent + shift, 0.0, 4.0))

        for j in range(videos_per_patient):
            hand = Hand.RIGHT if j % 2 == 0 else Hand.LEFT
            params = SynthParams(
                severity=hand_severity[hand],
                noise_seed=seed,
                exam_index=len(exams),
                camera_motion=camera_motion,
                **exam_options,
            )
            video_id = f"{patient_id}_{hand.value}_{j // 2}"
            exams.append(generate_exam(params, hand=hand, video_id=video_id, patient_id=patient_id))

    logger.info(f"Generated {len(exams)} synthetic videos for {n_patients} patients")
    return SynthDataset(exams=exams, patient_severity=patient_severity)


def synth_raters(dataset: SynthDataset, n_raters: int = 6, seed: int = 0) -> RaterMatrix:
    """Оценки специалистов: золотая оценка, сдвинутая не более чем на 0.5"""
    if n_raters < 1:
        raise InvalidParameter(f"n_raters must be >= 1, got {n_raters}")
    gold = {}
    specialists = {}
    for i, exam in enumerate(dataset.exams):
        rng = philox_stream(seed, Stream.RATERS, i)
        video_id = exam.record.video_id
        gold[video_id] = exam.record.gold_rating
        shifts = rng.choice([-0.5, 0.0, 0.5], size=n_raters, p=[0.2, 0.6, 0.2])
        specialists[video_id] = {
            f"rater{r + 1}": float(np.clip(gold[video_id] + s, 0.0, 4.0)) for r, s in enumerate(shifts)
        }
    return RaterMatrix(gold=gold, specialists=specialists)


def write_dataset(dataset: SynthDataset, out_dir: Path, raters: Optional[RaterMatrix] = None) -> Path:
    """Запись набора в форматах, которые читает пайплайн; возвращает путь к манифесту"""
    return write_synth_dataset(dataset, Path(out_dir), raters)
