"""
Обработка видео: от треков позы до вектора признаков

Цепочка стадий для одного видео:
load -> stabilize -> regularize -> signal -> segment -> features.
Ошибка любой стадии превращается в StageFailure с именем стадии, и
видео попадает в файл ошибок; остальные видео обрабатываются дальше.
"""
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Iterator, List, Optional, Sequence

import numpy as np

from .config import PipelineConfig
from .errors import AllInvalid, StageFailure
from .evaluation import Exclusion, FeatureTable
from .features import FEATURE_NAMES, FeatureVector, featurize
from .formats import ManifestEntry, load_record, read_dense_trajectories, read_flows
from .logger import LoggerMixin, log_error
from .monitoring import PerformanceProfiler, RunMetrics
from .regularize import (
    FlowSamples,
    MotionTrajectory,
    constrain_to_region,
    default_snap_radius,
    fastest_region,
    flow_smooth,
)
from .segment import CycleSet, segment_signal
from .signal_core import KeypointTrack, VideoRecord, normalize_units, relative_signal
from .stabilize import (
    SimilarityFit,
    background_correspondences,
    stabilize_flows,
    stabilize_trajectories,
    try_stabilize,
)

STAGES = ("load", "stabilize", "regularize", "signal", "segment", "features")


@dataclass(frozen=True, eq=False)
class VideoInput:
    """Все входы одного видео"""
    record: VideoRecord
    flows: Optional[FlowSamples] = None
    trajectories: Sequence[MotionTrajectory] = ()


@dataclass(frozen=True, eq=False)
class VideoResult:
    """Результат обработки видео: признаки либо ошибка стадии"""
    video_id: str
    patient_id: str
    hand: str
    gold_rating: float
    features: Optional[FeatureVector] = None
    failure: Optional[StageFailure] = None
    stabilized: bool = False
    fits: List[SimilarityFit] = field(default_factory=list)
    cycles: Optional[CycleSet] = None
    start_frame: int = 0

    @property
    def ok(self) -> bool:
        return self.features is not None

    def exclusion(self) -> Exclusion:
        return Exclusion(
            video_id=self.video_id,
            stage=self.failure.stage,
            error=self.failure.error_name,
            message=str(self.failure.cause),
        )


class VideoPipeline(LoggerMixin):
    """Пайплайн извлечения признаков"""

    def __init__(self, config: PipelineConfig = PipelineConfig(), metrics: Optional[RunMetrics] = None):
        self.config = config
        self.metrics = metrics if metrics is not None else RunMetrics()
        self.profiler = PerformanceProfiler(self.metrics)

    @contextmanager
    def _stage(self, name: str, video_id: str) -> Iterator[None]:
        try:
            with self.profiler.stage(name):
                yield
        except StageFailure:
            raise
        except Exception as e:
            failure = StageFailure(name, e, video_id)
            log_error(e, {"video_id": video_id, "stage": name})
            raise failure from e

    def _load(self, entry: ManifestEntry) -> VideoInput:
        record = load_record(entry)
        flows = read_flows(entry.flow_path, len(record.wrist)) if entry.flow_path else None
        trajectories = read_dense_trajectories(entry.trajectories_path) if entry.trajectories_path else []
        return VideoInput(record, flows, trajectories)

    def _snap_radius(self, wrist: KeypointTrack, head: KeypointTrack) -> Optional[float]:
        """Радиус притяжения по относительному сигналу; None, если сигнал не строится"""
        try:
            reference = relative_signal(wrist, head, self.config.conf_floor)
        except AllInvalid:
            return None
        return default_snap_radius(reference, self.config.snap_fraction)

    def process(self, video: VideoInput) -> VideoResult:
        """Обработка одного видео; ошибки стадий возвращаются в результате"""
        record = video.record
        result = dict(
            video_id=record.video_id,
            patient_id=record.patient_id,
            hand=record.hand.value,
            gold_rating=record.gold_rating,
        )
        try:
            return VideoResult(**result, **self._run_stages(video))
        except StageFailure as failure:
            return VideoResult(**result, failure=failure)

    def _run_stages(self, video: VideoInput) -> dict:
        cfg = self.config
        record = video.record
        vid = record.video_id
        n_frames = len(record.wrist)
        flows = video.flows if video.flows is not None else FlowSamples.zeros(n_frames - 1)
        trajectories = list(video.trajectories)

        with self._stage("stabilize", vid):
            wrist, head = record.wrist, record.head
            stabilized = False
            fits: List[SimilarityFit] = []
            if cfg.stabilize:
                bg_corr = background_correspondences(record.background, cfg.conf_floor)
                outcome = try_stabilize(record.tracks, bg_corr, cfg.min_points, cfg.outlier_factor)
                if outcome.stabilized:
                    flows = stabilize_flows(record.wrist, flows, outcome.transforms)
                    trajectories = stabilize_trajectories(trajectories, outcome.transforms)
                    wrist, head = outcome.tracks["wrist"], outcome.tracks["head"]
                    stabilized = True
                    fits = outcome.fits
                else:
                    self.logger.warning(f"Video {vid}: {outcome.reason}",
                                        extra={"video_id": vid, "stage": "stabilize"})

        with self._stage("regularize", vid):
            if cfg.regularize:
                wrist = flow_smooth(wrist, flows, cfg.window)
                if trajectories:
                    region = fastest_region(trajectories, cfg.top_fraction)
                    radius = self._snap_radius(wrist, head)
                    if radius is not None:
                        wrist = constrain_to_region(wrist, region, radius)

        with self._stage("signal", vid):
            signal = relative_signal(wrist, head, cfg.conf_floor)

        with self._stage("segment", vid):
            signal = normalize_units(signal)
            cycles = segment_signal(signal, cfg.fwd_frac, cfg.bwd_frac)

        with self._stage("features", vid):
            features = featurize(signal, cycles, apen_m=cfg.apen_m, apen_mode=cfg.apen_mode)

        self.logger.debug(f"Video {vid}: {len(cycles)} cycles", extra={"video_id": vid})
        return dict(features=features, stabilized=stabilized, fits=fits, cycles=cycles,
                    start_frame=signal.start_frame)

    def process_entry(self, entry: ManifestEntry) -> VideoResult:
        """Загрузка и обработка видео из манифеста"""
        try:
            with self._stage("load", entry.video_id):
                video = self._load(entry)
        except StageFailure as failure:
            return VideoResult(
                video_id=entry.video_id,
                patient_id=entry.patient_id,
                hand=entry.hand,
                gold_rating=entry.gold_rating,
                failure=failure,
            )
        return self.process(video)

    def _record(self, result: VideoResult) -> VideoResult:
        self.metrics.record_video(result.ok)
        return result

    def run(self, entries: Sequence[ManifestEntry], jobs: Optional[int] = None) -> List[VideoResult]:
        """Обработка всех видео; порядок результатов совпадает с порядком манифеста"""
        jobs = jobs or self.config.jobs
        start = time.perf_counter()
        self.logger.info(f"Processing {len(entries)} videos with {jobs} worker(s)")
        if jobs == 1:
            results = [self._record(self.process_entry(e)) for e in entries]
        else:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                results = list(pool.map(lambda e: self._record(self.process_entry(e)), entries))

        n_ok = sum(r.ok for r in results)
        self.logger.info(
            f"Processed {n_ok} of {len(results)} videos in {time.perf_counter() - start:.2f}s"
        )
        return results


def feature_table(results: Sequence[VideoResult]) -> FeatureTable:
    """Таблица признаков успешно обработанных видео в исходном порядке"""
    ok = [r for r in results if r.ok]
    return FeatureTable(
        video_ids=[r.video_id for r in ok],
        patient_ids=[r.patient_id for r in ok],
        hands=[r.hand for r in ok],
        gold=[r.gold_rating for r in ok],
        X=np.array([r.features.as_array() for r in ok], dtype=float).reshape(len(ok), len(FEATURE_NAMES)),
    )


def exclusions(results: Sequence[VideoResult]) -> List[Exclusion]:
    return [r.exclusion() for r in results if not r.ok]
