"""
Чтение и запись файлов пайплайна

Все числа с плавающей точкой пишутся с 17 значащими цифрами, поэтому
повторный запуск с теми же входами дает побайтно одинаковые файлы.
"""
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import ValidationError

from .errors import ModelSchemaMismatch, SchemaError
from .evaluation import GOLD_RATER, EvaluationReport, Exclusion, FeatureTable, RaterMatrix
from .features import FEATURE_NAMES
from .model import RatingModel
from .regularize import FlowSamples, MotionTrajectory
from .segment import CycleSet
from .signal_core import KeypointTrack, VideoRecord, background_index
from .stabilize import SimilarityFit
from .validators import (
    FEATURE_COLUMNS,
    DenseTrajectoryRow,
    FeatureRow,
    FlowRow,
    ManifestRow,
    RaterRow,
    RowValidator,
    TrajectoryRow,
)

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"

TRAJECTORY_COLUMNS = ("frame", "joint", "x", "y", "confidence")
FLOW_COLUMNS = ("frame", "dx", "dy")
DENSE_COLUMNS = ("traj_id", "frame", "x", "y")
MANIFEST_COLUMNS = ("video_id", "patient_id", "hand", "gold_rating", "fps",
                    "trajectory_path", "flow_path", "trajectories_path")
RATER_COLUMNS = ("video_id", "rater_id", "rating")
ERROR_COLUMNS = ("video_id", "stage", "error", "message")
PREDICTION_COLUMNS = ("video_id", "patient_id", "hand", "gold_rating", "predicted_raw", "predicted_rounded")


# ---------------------------------------------------------------------------
# JSON
# ---------------------------------------------------------------------------

def _encode(value: Any, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(value, (np.floating, np.integer, np.bool_)):
        value = value.item()
    if value is None or value is True or value is False:
        return json.dumps(value)
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return FLOAT_FORMAT % value if math.isfinite(value) else "null"
    if isinstance(value, str):
        return json.dumps(value, ensure_ascii=False)
    if isinstance(value, dict):
        if not value:
            return "{}"
        items = [f"{pad}{json.dumps(str(k), ensure_ascii=False)}: {_encode(v, indent, level + 1)}"
                 for k, v in value.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(value, (list, tuple, np.ndarray)):
        if len(value) == 0:
            return "[]"
        items = [f"{pad}{_encode(v, indent, level + 1)}" for v in value]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(value).__name__}")


def to_json_text(value: Any, indent: int = 2) -> str:
    """JSON с числами в формате %.17g; NaN и бесконечности пишутся как null"""
    return _encode(value, indent, 0) + "\n"


def write_json(value: Any, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(to_json_text(value), encoding="utf-8")


def _read_json(path: Path) -> Any:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise SchemaError(str(path), [f"line {e.lineno}: {e.msg}"]) from e


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

def _write_csv(frame: pd.DataFrame, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def _read_csv(path: Path, required: Sequence[str], dtype: Optional[Dict[str, Any]] = None) -> List[Dict[str, Any]]:
    """Записи CSV с пустыми ячейками как None"""
    source = str(path)
    try:
        frame = pd.read_csv(path, dtype=dtype)
    except pd.errors.EmptyDataError as e:
        raise SchemaError(source, ["line 1: file is empty"]) from e
    except pd.errors.ParserError as e:
        raise SchemaError(source, [f"unparseable CSV: {e}"]) from e
    RowValidator.require_columns(frame.columns, required, source)
    frame = frame.astype(object).where(frame.notna(), None)
    return frame.to_dict("records")


def read_tracks(path: Path, fps: float) -> Dict[str, KeypointTrack]:
    """Треки всех суставов из CSV `frame,joint,x,y,confidence`

    Кадры без строки для сустава считаются пропуском (NaN, уверенность 0).
    """
    source = str(path)
    records = _read_csv(path, TRAJECTORY_COLUMNS, dtype={"joint": str})
    rows = RowValidator.validate_rows(TrajectoryRow, records, source)
    if not rows:
        raise SchemaError(source, ["file has no data rows"])

    n_frames = max(r.frame for r in rows) + 1
    joints: Dict[str, Dict[str, np.ndarray]] = {}
    for line, row in enumerate(rows, start=2):
        data = joints.setdefault(row.joint, {
            "x": np.full(n_frames, np.nan),
            "y": np.full(n_frames, np.nan),
            "confidence": np.zeros(n_frames),
            "seen": np.zeros(n_frames, dtype=bool),
        })
        if data["seen"][row.frame]:
            raise SchemaError(source, [f"line {line}: duplicate row for {row.joint} frame {row.frame}"])
        data["seen"][row.frame] = True
        data["x"][row.frame] = np.nan if row.x is None else row.x
        data["y"][row.frame] = np.nan if row.y is None else row.y
        data["confidence"][row.frame] = row.confidence

    missing = [j for j in ("wrist", "head") if j not in joints]
    if missing:
        raise SchemaError(source, [f"no rows for joint {j!r}" for j in missing])
    return {
        joint: KeypointTrack(joint, d["x"], d["y"], d["confidence"], fps)
        for joint, d in joints.items()
    }


def write_tracks(record: VideoRecord, path: Path) -> None:
    tracks = [record.wrist, record.head] + list(record.background)
    parts = []
    for track in tracks:
        parts.append(pd.DataFrame({
            "frame": np.arange(len(track)),
            "joint": track.joint,
            "x": track.x,
            "y": track.y,
            "confidence": track.confidence,
        }))
    frame = pd.concat(parts, ignore_index=True).sort_values(["frame"], kind="stable")
    _write_csv(frame, path)


def read_flows(path: Path, n_frames: int) -> FlowSamples:
    """Смещения потока для промежутков 0..n_frames-2; отсутствующие - нулевые"""
    source = str(path)
    rows = RowValidator.validate_rows(FlowRow, _read_csv(path, FLOW_COLUMNS), source)
    dx = np.zeros(n_frames - 1)
    dy = np.zeros(n_frames - 1)
    diagnostics = []
    for line, row in enumerate(rows, start=2):
        if row.frame >= n_frames - 1:
            diagnostics.append(f"line {line}: frame {row.frame} beyond the last frame gap {n_frames - 2}")
            continue
        dx[row.frame] = row.dx
        dy[row.frame] = row.dy
    if diagnostics:
        raise SchemaError(source, diagnostics)
    if len(rows) < n_frames - 1:
        logger.debug(f"{source}: {n_frames - 1 - len(rows)} frame gaps without flow, using zero")
    return FlowSamples(dx, dy)


def write_flows(flows: FlowSamples, path: Path) -> None:
    _write_csv(pd.DataFrame({"frame": np.arange(len(flows)), "dx": flows.dx, "dy": flows.dy}), path)


def read_dense_trajectories(path: Path) -> List[MotionTrajectory]:
    """Плотные траектории из CSV `traj_id,frame,x,y`; кадры траектории идут подряд"""
    source = str(path)
    records = _read_csv(path, DENSE_COLUMNS, dtype={"traj_id": str})
    rows = RowValidator.validate_rows(DenseTrajectoryRow, records, source)

    grouped: Dict[str, List[DenseTrajectoryRow]] = {}
    for row in rows:
        grouped.setdefault(row.traj_id, []).append(row)

    result = []
    diagnostics = []
    for traj_id, points in grouped.items():
        points.sort(key=lambda r: r.frame)
        frames = np.array([p.frame for p in points])
        if np.any(np.diff(frames) != 1):
            diagnostics.append(f"trajectory {traj_id!r}: frames are not consecutive")
            continue
        result.append(MotionTrajectory(
            traj_id, int(frames[0]), [p.x for p in points], [p.y for p in points]
        ))
    if diagnostics:
        raise SchemaError(source, diagnostics)
    return result


def write_dense_trajectories(trajectories: Sequence[MotionTrajectory], path: Path) -> None:
    parts = [
        pd.DataFrame({
            "traj_id": traj.traj_id,
            "frame": np.arange(traj.start_frame, traj.end_frame + 1),
            "x": traj.x,
            "y": traj.y,
        })
        for traj in trajectories
    ]
    frame = pd.concat(parts, ignore_index=True) if parts else pd.DataFrame(columns=DENSE_COLUMNS)
    _write_csv(frame, path)


# ---------------------------------------------------------------------------
# Манифест
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ManifestEntry:
    """Видео из манифеста; пути разрешены относительно каталога манифеста"""
    video_id: str
    patient_id: str
    hand: str
    gold_rating: float
    fps: float
    trajectory_path: Path
    flow_path: Optional[Path] = None
    trajectories_path: Optional[Path] = None


def read_manifest(path: Path) -> List[ManifestEntry]:
    path = Path(path)
    source = str(path)
    if not path.exists():
        raise SchemaError(source, ["manifest file not found"])
    records = _read_csv(path, MANIFEST_COLUMNS[:6], dtype={"video_id": str, "patient_id": str})
    rows = RowValidator.validate_rows(ManifestRow, records, source)
    RowValidator.require_unique([r.video_id for r in rows], "video_id", source)

    base = path.parent

    def resolve(value: Optional[str]) -> Optional[Path]:
        return None if value is None else base / value

    return [
        ManifestEntry(
            video_id=row.video_id,
            patient_id=row.patient_id,
            hand=row.hand.value,
            gold_rating=row.gold_rating,
            fps=row.fps,
            trajectory_path=resolve(row.trajectory_path),
            flow_path=resolve(row.flow_path),
            trajectories_path=resolve(row.trajectories_path),
        )
        for row in rows
    ]


def write_manifest(entries: Sequence[ManifestEntry], path: Path) -> None:
    path = Path(path)

    def relative(p: Optional[Path]) -> Optional[str]:
        if p is None:
            return None
        p = Path(p)
        try:
            return p.relative_to(path.parent).as_posix()
        except ValueError:
            return str(p)

    frame = pd.DataFrame([
        {
            "video_id": e.video_id,
            "patient_id": e.patient_id,
            "hand": e.hand,
            "gold_rating": e.gold_rating,
            "fps": e.fps,
            "trajectory_path": relative(e.trajectory_path),
            "flow_path": relative(e.flow_path),
            "trajectories_path": relative(e.trajectories_path),
        }
        for e in entries
    ], columns=MANIFEST_COLUMNS)
    _write_csv(frame, path)


def load_record(entry: ManifestEntry) -> VideoRecord:
    """Запись видео по строке манифеста"""
    tracks = read_tracks(entry.trajectory_path, entry.fps)
    background = sorted(
        (t for name, t in tracks.items() if background_index(name) is not None),
        key=lambda t: background_index(t.joint),
    )
    return VideoRecord(
        video_id=entry.video_id,
        patient_id=entry.patient_id,
        hand=entry.hand,
        gold_rating=entry.gold_rating,
        wrist=tracks["wrist"],
        head=tracks["head"],
        background=background,
    )


# ---------------------------------------------------------------------------
# Признаки, модель, прогнозы
# ---------------------------------------------------------------------------

def write_features(table: FeatureTable, path: Path) -> None:
    frame = pd.DataFrame({
        "video_id": table.video_ids,
        "patient_id": table.patient_ids,
        "hand": table.hands,
        "gold_rating": table.gold,
    })
    for j, name in enumerate(FEATURE_NAMES):
        frame[name] = table.X[:, j]
    _write_csv(frame[list(FEATURE_COLUMNS)], path)


def read_features(path: Path) -> FeatureTable:
    source = str(path)
    records = _read_csv(path, FEATURE_COLUMNS, dtype={"video_id": str, "patient_id": str})
    rows = RowValidator.validate_rows(FeatureRow, records, source)
    RowValidator.require_unique([r.video_id for r in rows], "video_id", source)
    return FeatureTable(
        video_ids=[r.video_id for r in rows],
        patient_ids=[r.patient_id for r in rows],
        hands=[r.hand.value for r in rows],
        gold=[r.gold_rating for r in rows],
        X=np.array([[getattr(r, name) for name in FEATURE_NAMES] for r in rows], dtype=float).reshape(-1, len(FEATURE_NAMES)),
    )


def write_model(model: RatingModel, path: Path) -> None:
    write_json(model.model_dump(by_alias=True), path)


def read_model(path: Path) -> RatingModel:
    """Загрузка модели; имена признаков должны совпадать с каноническими"""
    data = _read_json(path)
    if not isinstance(data, dict):
        raise SchemaError(str(path), ["model file must contain a JSON object"])
    names = data.get("feature_names")
    if names != list(FEATURE_NAMES):
        raise ModelSchemaMismatch(f"{path}: feature_names {names} do not match the canonical feature set")
    try:
        return RatingModel.model_validate(data)
    except ValidationError as e:
        raise SchemaError(str(path), [f"{'.'.join(map(str, err['loc']))}: {err['msg']}" for err in e.errors()]) from e


def write_predictions(table: FeatureTable, raw: np.ndarray, rounded: np.ndarray, path: Path) -> None:
    _write_csv(pd.DataFrame({
        "video_id": table.video_ids,
        "patient_id": table.patient_ids,
        "hand": table.hands,
        "gold_rating": table.gold,
        "predicted_raw": raw,
        "predicted_rounded": rounded,
    }, columns=PREDICTION_COLUMNS), path)


def write_errors(exclusions: Sequence[Exclusion], path: Path) -> None:
    """Файл ошибок по видео: пустой (только заголовок), если ошибок нет"""
    frame = pd.DataFrame([e.model_dump() for e in exclusions], columns=ERROR_COLUMNS)
    _write_csv(frame, path)


def write_report(report: EvaluationReport, path: Path) -> None:
    write_json(report.model_dump(by_alias=True), path)


# ---------------------------------------------------------------------------
# Оценки специалистов
# ---------------------------------------------------------------------------

def read_raters(path: Path) -> RaterMatrix:
    """Матрица оценок из CSV `video_id,rater_id,rating`; оценщик `gold` - золотая оценка"""
    source = str(path)
    records = _read_csv(path, RATER_COLUMNS, dtype={"video_id": str, "rater_id": str})
    rows = RowValidator.validate_rows(RaterRow, records, source)
    RowValidator.require_unique([f"{r.video_id}/{r.rater_id}" for r in rows], "rating", source)

    gold: Dict[str, float] = {}
    specialists: Dict[str, Dict[str, float]] = {}
    for row in rows:
        if row.rater_id == GOLD_RATER:
            gold[row.video_id] = row.rating
        else:
            specialists.setdefault(row.video_id, {})[row.rater_id] = row.rating
    return RaterMatrix(gold=gold, specialists=specialists)


def write_raters(raters: RaterMatrix, path: Path) -> None:
    rows = []
    for video_id in raters.video_ids():
        if video_id in raters.gold:
            rows.append((video_id, GOLD_RATER, raters.gold[video_id]))
        for rater_id, rating in sorted(raters.specialists.get(video_id, {}).items()):
            rows.append((video_id, rater_id, rating))
    _write_csv(pd.DataFrame(rows, columns=RATER_COLUMNS), path)


# ---------------------------------------------------------------------------
# Диагностические дампы
# ---------------------------------------------------------------------------

def transforms_dump(fits: Sequence[SimilarityFit]) -> List[Dict[str, float]]:
    return [{"frame": t, **fit.transform.as_dict(), "rms": fit.rms} for t, fit in enumerate(fits)]


def segmentation_dump(cycles: CycleSet, start_frame: int = 0) -> Dict[str, Any]:
    """Циклы и отброшенные участки в номерах кадров исходного видео

    Сегментация нумерует отсчеты сигнала после обрезки краев; `start_frame` -
    номер кадра видео для отсчета 0.
    """
    s = start_frame
    return {
        "designation": cycles.designation.value,
        "start_frame": s,
        "cycles": [{"start": c.start + s, "mid": c.mid + s, "end": c.end + s} for c in cycles.cycles],
        "discarded": [{"from": lo + s, "to": hi + s} for lo, hi in cycles.discarded_spans],
    }


# ---------------------------------------------------------------------------
# Синтетический набор
# ---------------------------------------------------------------------------

def write_synth_dataset(dataset, out_dir: Path, raters: Optional[RaterMatrix] = None) -> Path:
    """Запись синтетических видео, манифеста и (опционально) оценок специалистов"""
    out_dir = Path(out_dir)
    entries = []
    for exam in dataset.exams:
        record = exam.record
        trajectory_path = out_dir / "tracks" / f"{record.video_id}.csv"
        flow_path = out_dir / "flow" / f"{record.video_id}.csv"
        dense_path = out_dir / "dense" / f"{record.video_id}.csv"
        write_tracks(record, trajectory_path)
        write_flows(exam.flows, flow_path)
        write_dense_trajectories(exam.trajectories, dense_path)
        entries.append(ManifestEntry(
            video_id=record.video_id,
            patient_id=record.patient_id,
            hand=record.hand.value,
            gold_rating=record.gold_rating,
            fps=record.fps,
            trajectory_path=trajectory_path,
            flow_path=flow_path,
            trajectories_path=dense_path,
        ))

    manifest = out_dir / "manifest.csv"
    write_manifest(entries, manifest)
    if raters is not None:
        write_raters(raters, out_dir / "raters.csv")
    logger.info(f"Wrote {len(entries)} synthetic videos to {out_dir}")
    return manifest
