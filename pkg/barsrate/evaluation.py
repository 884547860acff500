"""
Оценка качества: кросс-валидация с исключением пациента и метрики

Модель обучается на всех пациентах, кроме одного, и проверяется на его
видео (обе руки, все визиты). Считаются MAE, корреляция Пирсона, ICC(2,1),
доля ошибок меньше балла, сравнение с диапазоном оценок специалистов и
эксперименты с переводом полуцелых оценок в целые.
"""
import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import stats

from .errors import (
    EmptyInput,
    EmptyRaters,
    EmptyResult,
    IncompleteMatrix,
    InvalidParameter,
    LengthMismatch,
    SinglePatient,
    ZeroVariance,
)
from .features import FEATURE_NAMES
from .model import ModelSettings, RatingModel, fit_rating_models, predict_raw, round_to_bars
from .monitoring import performance_profiler
from .signal_core import is_valid_rating

logger = logging.getLogger(__name__)

GOLD_RATER = "gold"
FULLPOINT_MODES = ("discard", "round")


# ---------------------------------------------------------------------------
# Данные
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FeatureTable:
    """Признаки и золотые оценки всех успешно обработанных видео"""
    video_ids: Tuple[str, ...]
    patient_ids: Tuple[str, ...]
    hands: Tuple[str, ...]
    gold: np.ndarray
    X: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "video_ids", tuple(str(v) for v in self.video_ids))
        object.__setattr__(self, "patient_ids", tuple(str(p) for p in self.patient_ids))
        object.__setattr__(self, "hands", tuple(str(h) for h in self.hands))
        object.__setattr__(self, "gold", np.asarray(self.gold, dtype=float))
        object.__setattr__(self, "X", np.asarray(self.X, dtype=float).reshape(len(self.video_ids), len(FEATURE_NAMES)))

        n = len(self.video_ids)
        if not (len(self.patient_ids) == len(self.hands) == len(self.gold) == n):
            raise LengthMismatch("feature table columns have different lengths")
        if self.X.shape[1] != len(FEATURE_NAMES):
            raise InvalidParameter(f"expected {len(FEATURE_NAMES)} features, got {self.X.shape[1]}")
        if len(set(self.video_ids)) != n:
            raise InvalidParameter("video ids must be unique")
        if not np.all(np.isfinite(self.X)):
            raise InvalidParameter("features must be finite")
        bad = [v for v, g in zip(self.video_ids, self.gold) if not is_valid_rating(g)]
        if bad:
            raise InvalidParameter(f"gold ratings outside the BARS scale for {bad[:3]}")

    def __len__(self) -> int:
        return len(self.video_ids)

    def take(self, index) -> "FeatureTable":
        index = np.asarray(index)
        if index.dtype == bool:
            index = np.flatnonzero(index)
        return FeatureTable(
            video_ids=[self.video_ids[i] for i in index],
            patient_ids=[self.patient_ids[i] for i in index],
            hands=[self.hands[i] for i in index],
            gold=self.gold[index],
            X=self.X[index],
        )

    def with_gold(self, gold) -> "FeatureTable":
        return FeatureTable(self.video_ids, self.patient_ids, self.hands, gold, self.X)


@dataclass(frozen=True, eq=False)
class Fold:
    """Фолд: индексы обучающих и тестовых видео"""
    patient_id: str
    train: np.ndarray
    test: np.ndarray


@dataclass(frozen=True)
class RaterMatrix:
    """Оценки по видео: золотая оценка и оценки специалистов"""
    gold: Dict[str, float]
    specialists: Dict[str, Dict[str, float]] = field(default_factory=dict)

    def __post_init__(self):
        for video_id, value in self.gold.items():
            if not is_valid_rating(value):
                raise InvalidParameter(f"{video_id}: gold rating {value} outside the BARS scale")
        for video_id, ratings in self.specialists.items():
            for rater_id, value in ratings.items():
                if not is_valid_rating(value):
                    raise InvalidParameter(f"{video_id}/{rater_id}: rating {value} outside the BARS scale")

    @property
    def rater_ids(self) -> List[str]:
        return sorted({r for ratings in self.specialists.values() for r in ratings})

    def video_ids(self) -> List[str]:
        return sorted(set(self.gold) | set(self.specialists))

    def ratings_for(self, video_id: str, include_gold: bool = False) -> List[float]:
        values = list(self.specialists.get(video_id, {}).values())
        if include_gold and video_id in self.gold:
            values.append(self.gold[video_id])
        return values

    def panel(self, video_ids: Sequence[str], rater_ids: Sequence[str]) -> np.ndarray:
        """Матрица видео x оценщики; отсутствующие оценки - NaN"""
        matrix = np.full((len(video_ids), len(rater_ids)), np.nan)
        for i, video_id in enumerate(video_ids):
            for j, rater_id in enumerate(rater_ids):
                if rater_id == GOLD_RATER:
                    matrix[i, j] = self.gold.get(video_id, np.nan)
                else:
                    matrix[i, j] = self.specialists.get(video_id, {}).get(rater_id, np.nan)
        return matrix


# ---------------------------------------------------------------------------
# Метрики
# ---------------------------------------------------------------------------

def _pair(pred, gold) -> Tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=float)
    gold = np.asarray(gold, dtype=float)
    if pred.shape != gold.shape:
        raise LengthMismatch(f"{pred.size} predictions vs {gold.size} gold ratings")
    if pred.size == 0:
        raise EmptyInput("no predictions")
    return pred, gold


def mae(pred, gold) -> float:
    pred, gold = _pair(pred, gold)
    return float(np.mean(np.abs(pred - gold)))


def pearson(pred, gold) -> float:
    """Коэффициент корреляции Пирсона; ZeroVariance при постоянном аргументе"""
    pred, gold = _pair(pred, gold)
    if pred.size < 2 or np.ptp(pred) == 0 or np.ptp(gold) == 0:
        raise ZeroVariance("pearson correlation is undefined for a constant argument")
    r = stats.pearsonr(pred, gold)[0]
    return float(np.clip(r, -1.0, 1.0))


def optional_pearson(pred, gold) -> Optional[float]:
    """Пирсон или None, если он не определен"""
    try:
        return pearson(pred, gold)
    except ZeroVariance:
        logger.warning("Pearson correlation undefined: zero variance")
        return None


def icc(ratings) -> float:
    """ICC(2,1): двухфакторная модель со случайными эффектами, один оценщик,
    абсолютное согласие

    Строки - объекты оценки, столбцы - оценщики.
    """
    data = np.asarray(ratings, dtype=float)
    if data.ndim != 2:
        raise InvalidParameter(f"expected an n x k matrix, got shape {data.shape}")
    if np.any(np.isnan(data)):
        raise IncompleteMatrix("rating matrix has missing entries")
    n, k = data.shape
    if n < 2 or k < 2:
        raise InvalidParameter(f"need at least 2 targets and 2 raters, got {n} x {k}")

    grand = data.mean()
    ss_total = float(((data - grand) ** 2).sum())
    ss_rows = k * float(((data.mean(axis=1) - grand) ** 2).sum())
    ss_cols = n * float(((data.mean(axis=0) - grand) ** 2).sum())
    ss_error = ss_total - ss_rows - ss_cols

    ms_rows = ss_rows / (n - 1)
    ms_cols = ss_cols / (k - 1)
    ms_error = ss_error / ((n - 1) * (k - 1))

    denominator = ms_rows + (k - 1) * ms_error + k * (ms_cols - ms_error) / n
    if denominator == 0:
        raise ZeroVariance("ICC is undefined when all ratings are equal")
    return (ms_rows - ms_error) / denominator


def optional_icc(ratings) -> Optional[float]:
    try:
        return icc(ratings)
    except (ZeroVariance, IncompleteMatrix, InvalidParameter) as e:
        logger.warning(f"ICC undefined: {e}")
        return None


def within_range_rate(predictions: Mapping[str, float], raters: RaterMatrix,
                      include_gold: bool = False, margin: float = 0.5) -> Tuple[float, float]:
    """Доля видео, где прогноз лежит в диапазоне оценок специалистов

    Вторая доля - для диапазона, расширенного на `margin` в обе стороны.
    """
    videos = [v for v in sorted(predictions) if raters.ratings_for(v, include_gold)]
    if not videos:
        raise EmptyRaters("no predicted video has specialist ratings")
    inside = 0
    relaxed = 0
    for video_id in videos:
        values = raters.ratings_for(video_id, include_gold)
        lo, hi = min(values), max(values)
        p = predictions[video_id]
        inside += lo <= p <= hi
        relaxed += lo - margin <= p <= hi + margin
    return inside / len(videos), relaxed / len(videos)


@dataclass(frozen=True)
class ErrorHistogram:
    bins: Dict[float, int]
    frac_err_lt_1: float


def error_histogram(pred, gold) -> ErrorHistogram:
    """Абсолютные ошибки по полуцелым корзинам и доля ошибок строго меньше 1"""
    pred, gold = _pair(pred, gold)
    errors = np.round(2.0 * np.abs(pred - gold)) / 2.0
    counts = Counter(float(e) for e in errors)
    return ErrorHistogram(
        bins=dict(sorted(counts.items())),
        frac_err_lt_1=float(np.mean(errors < 1.0)),
    )


def error_by_severity(pred, gold) -> Dict[float, Tuple[int, float]]:
    """MAE по каждому значению золотой оценки: {оценка: (число видео, MAE)}"""
    pred, gold = _pair(pred, gold)
    result = {}
    for rating in np.unique(gold):
        mask = gold == rating
        result[float(rating)] = (int(mask.sum()), float(np.mean(np.abs(pred[mask] - gold[mask]))))
    return result


# ---------------------------------------------------------------------------
# Отчет
# ---------------------------------------------------------------------------

class VideoPrediction(BaseModel):
    video_id: str
    patient_id: str
    gold: float
    predicted_raw: float
    predicted_rounded: float


class FoldSummary(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    patient_id: str
    n_test: int
    lambda_: float = Field(alias="lambda")
    weights: List[float]


class Exclusion(BaseModel):
    video_id: str
    stage: str
    error: str
    message: str


class HistogramBin(BaseModel):
    error: float
    count: int


class SeverityError(BaseModel):
    gold: float
    count: int
    mae: float


class FeatureWeight(BaseModel):
    feature: str
    mean_abs_weight: float
    selection_frequency: float


class RaterAgreement(BaseModel):
    rater_id: str
    n_videos: int
    mae: float
    pearson: Optional[float] = None
    pearson_defined: bool = False


class RaterSummary(BaseModel):
    """Сравнение системы со специалистами на видео с их оценками"""
    n_videos: int
    within_range_rate: float = Field(ge=0.0, le=1.0)
    within_relaxed_rate: float = Field(ge=0.0, le=1.0)
    within_range_rate_with_gold: float = Field(ge=0.0, le=1.0)
    within_relaxed_rate_with_gold: float = Field(ge=0.0, le=1.0)
    specialists: List[RaterAgreement]
    specialist_mean_mae: Optional[float] = None
    specialist_mean_pearson: Optional[float] = None
    system_mae: float
    system_pearson: Optional[float] = None
    system_pearson_defined: bool = False
    panel_icc: Optional[float] = None
    panel_icc_defined: bool = False


class FullpointSummary(BaseModel):
    mode: str
    n_videos: int
    repeats: int = 1
    seed: Optional[int] = None
    mae_mean: float
    mae_se: float = 0.0
    pearson_mean: Optional[float] = None
    pearson_se: Optional[float] = None
    pearson_defined_repeats: int = 0
    icc_mean: Optional[float] = None
    icc_se: Optional[float] = None
    icc_defined_repeats: int = 0


class EvaluationReport(BaseModel):
    """Итог кросс-валидации с исключением пациента"""
    n_videos: int
    n_patients: int
    mae: float = Field(ge=0.0)
    pearson: Optional[float] = Field(None, ge=-1.0, le=1.0)
    pearson_defined: bool = False
    icc: Optional[float] = None
    icc_defined: bool = False
    frac_err_lt_1: float = Field(ge=0.0, le=1.0)
    within_range_rate: Optional[float] = Field(None, ge=0.0, le=1.0)
    raw_mae: float = Field(ge=0.0)
    raw_pearson: Optional[float] = Field(None, ge=-1.0, le=1.0)
    raw_pearson_defined: bool = False
    error_histogram: List[HistogramBin]
    error_by_severity: List[SeverityError]
    feature_weights: List[FeatureWeight]
    folds: List[FoldSummary]
    per_video: List[VideoPrediction]
    exclusions: List[Exclusion] = Field(default_factory=list)
    raters: Optional[RaterSummary] = None
    fullpoint: Optional[FullpointSummary] = None
    config: Dict[str, Any] = Field(default_factory=dict)

    @model_validator(mode="after")
    def validate_mae(self):
        if self.per_video:
            recomputed = float(np.mean([abs(v.predicted_rounded - v.gold) for v in self.per_video]))
            if abs(recomputed - self.mae) > 1e-12:
                raise ValueError(f"mae {self.mae} does not match per-video errors ({recomputed})")
        return self


# ---------------------------------------------------------------------------
# Кросс-валидация
# ---------------------------------------------------------------------------

def lopo_folds(table: FeatureTable) -> List[Fold]:
    """Один фолд на пациента, фолды упорядочены по patient_id"""
    patients = np.asarray(table.patient_ids)
    unique = sorted(set(table.patient_ids))
    if len(unique) < 2:
        raise SinglePatient(f"need at least 2 patients, got {len(unique)}")
    folds = []
    for patient_id in unique:
        test = patients == patient_id
        folds.append(Fold(patient_id, np.flatnonzero(~test), np.flatnonzero(test)))
    return folds


@dataclass(frozen=True, eq=False)
class LopoOutcome:
    """Прогнозы одного прогона по всем фолдам"""
    table: FeatureTable
    folds: List[Fold]
    models: List[Optional[RatingModel]]
    raw: np.ndarray
    rounded: np.ndarray
    scored: np.ndarray
    exclusions: List[Exclusion]

    @property
    def gold(self) -> np.ndarray:
        return self.table.gold[self.scored]

    @property
    def predicted(self) -> np.ndarray:
        return self.rounded[self.scored]


@performance_profiler.profile("lopo")
def run_lopo_many(tables: Sequence[FeatureTable],
                  settings: ModelSettings = ModelSettings()) -> List[LopoOutcome]:
    """Кросс-валидация для нескольких таблиц с общим пакетом обучения

    Фолды, в обучающей части которых меньше двух видео, не обучаются; их
    тестовые видео попадают в исключения.
    """
    plans = []
    datasets = []
    for t, table in enumerate(tables):
        folds = lopo_folds(table)
        plans.append(folds)
        for fold in folds:
            if len(fold.train) >= 2:
                datasets.append((
                    table.X[fold.train],
                    table.gold[fold.train],
                    [table.patient_ids[i] for i in fold.train],
                ))

    trained = iter(fit_rating_models(datasets, settings))

    outcomes = []
    for table, folds in zip(tables, plans):
        raw = np.full(len(table), np.nan)
        models: List[Optional[RatingModel]] = []
        exclusions: List[Exclusion] = []
        for fold in folds:
            if len(fold.train) < 2:
                models.append(None)
                for i in fold.test:
                    exclusions.append(Exclusion(
                        video_id=table.video_ids[i], stage="model", error="TooFewRows",
                        message=f"fold {fold.patient_id} has {len(fold.train)} training videos",
                    ))
                continue
            model = next(trained)
            models.append(model)
            raw[fold.test] = predict_raw(model, table.X[fold.test])

        scored = np.isfinite(raw)
        rounded = np.full(len(table), np.nan)
        rounded[scored] = round_to_bars(raw[scored])
        outcomes.append(LopoOutcome(table, folds, models, raw, rounded, scored, exclusions))
    return outcomes


def _weight_summary(models: Sequence[Optional[RatingModel]]) -> List[FeatureWeight]:
    fitted = [m for m in models if m is not None]
    if not fitted:
        return []
    weights = np.array([m.weights for m in fitted])
    return [
        FeatureWeight(
            feature=name,
            mean_abs_weight=float(np.mean(np.abs(weights[:, j]))),
            selection_frequency=float(np.mean(weights[:, j] != 0)),
        )
        for j, name in enumerate(FEATURE_NAMES)
    ]


def specialist_agreement(raters: RaterMatrix) -> List[RaterAgreement]:
    """MAE и Пирсон каждого специалиста относительно золотой оценки"""
    result = []
    for rater_id in raters.rater_ids:
        videos = [v for v in sorted(raters.specialists)
                  if rater_id in raters.specialists[v] and v in raters.gold]
        if not videos:
            continue
        ratings = [raters.specialists[v][rater_id] for v in videos]
        gold = [raters.gold[v] for v in videos]
        r = optional_pearson(ratings, gold)
        result.append(RaterAgreement(
            rater_id=rater_id,
            n_videos=len(videos),
            mae=mae(ratings, gold),
            pearson=r,
            pearson_defined=r is not None,
        ))
    return result


def summarize_raters(predictions: Mapping[str, float], gold: Mapping[str, float],
                     raters: RaterMatrix) -> RaterSummary:
    """Сводка сравнения с панелью специалистов"""
    rate, relaxed = within_range_rate(predictions, raters)
    rate_gold, relaxed_gold = within_range_rate(predictions, raters, include_gold=True)

    rated = [v for v in sorted(predictions) if raters.ratings_for(v)]
    system_pred = [predictions[v] for v in rated]
    system_gold = [gold[v] for v in rated]
    system_r = optional_pearson(system_pred, system_gold)

    agreement = specialist_agreement(raters)
    defined = [a.pearson for a in agreement if a.pearson is not None]

    panel_ids = [GOLD_RATER] + raters.rater_ids
    complete = [v for v in rated if not np.any(np.isnan(raters.panel([v], panel_ids)))]
    panel_icc = optional_icc(raters.panel(complete, panel_ids)) if len(complete) >= 2 else None

    return RaterSummary(
        n_videos=len(rated),
        within_range_rate=rate,
        within_relaxed_rate=relaxed,
        within_range_rate_with_gold=rate_gold,
        within_relaxed_rate_with_gold=relaxed_gold,
        specialists=agreement,
        specialist_mean_mae=float(np.mean([a.mae for a in agreement])) if agreement else None,
        specialist_mean_pearson=float(np.mean(defined)) if defined else None,
        system_mae=mae(system_pred, system_gold),
        system_pearson=system_r,
        system_pearson_defined=system_r is not None,
        panel_icc=panel_icc,
        panel_icc_defined=panel_icc is not None,
    )


def build_report(outcome: LopoOutcome, raters: Optional[RaterMatrix] = None,
                 exclusions: Sequence[Exclusion] = (),
                 config: Optional[Mapping[str, Any]] = None) -> EvaluationReport:
    """Сборка отчета из прогнозов кросс-валидации"""
    table = outcome.table
    scored = np.flatnonzero(outcome.scored)
    if scored.size == 0:
        raise EmptyResult("no video received a prediction")

    gold = table.gold[scored]
    rounded = outcome.rounded[scored]
    raw = outcome.raw[scored]

    r = optional_pearson(rounded, gold)
    r_raw = optional_pearson(raw, gold)
    agreement = optional_icc(np.column_stack([rounded, gold])) if len(scored) >= 2 else None
    histogram = error_histogram(rounded, gold)

    folds = [
        FoldSummary(patient_id=fold.patient_id, n_test=len(fold.test),
                    lambda_=model.lambda_, weights=model.weights)
        for fold, model in zip(outcome.folds, outcome.models) if model is not None
    ]
    per_video = [
        VideoPrediction(
            video_id=table.video_ids[i],
            patient_id=table.patient_ids[i],
            gold=float(table.gold[i]),
            predicted_raw=float(outcome.raw[i]),
            predicted_rounded=float(outcome.rounded[i]),
        )
        for i in scored
    ]

    rater_summary = None
    if raters is not None:
        predictions = {table.video_ids[i]: float(outcome.rounded[i]) for i in scored}
        gold_by_video = {table.video_ids[i]: float(table.gold[i]) for i in scored}
        rater_summary = summarize_raters(predictions, gold_by_video, raters)

    return EvaluationReport(
        n_videos=len(scored),
        n_patients=len({table.patient_ids[i] for i in scored}),
        mae=mae(rounded, gold),
        pearson=r,
        pearson_defined=r is not None,
        icc=agreement,
        icc_defined=agreement is not None,
        frac_err_lt_1=histogram.frac_err_lt_1,
        within_range_rate=rater_summary.within_range_rate if rater_summary else None,
        raw_mae=mae(raw, gold),
        raw_pearson=r_raw,
        raw_pearson_defined=r_raw is not None,
        error_histogram=[HistogramBin(error=e, count=c) for e, c in histogram.bins.items()],
        error_by_severity=[
            SeverityError(gold=g, count=c, mae=m) for g, (c, m) in error_by_severity(rounded, gold).items()
        ],
        feature_weights=_weight_summary(outcome.models),
        folds=folds,
        per_video=per_video,
        exclusions=list(exclusions) + outcome.exclusions,
        raters=rater_summary,
        config=dict(config or {}),
    )


def run_lopo(table: FeatureTable, settings: ModelSettings = ModelSettings(),
             raters: Optional[RaterMatrix] = None, exclusions: Sequence[Exclusion] = (),
             config: Optional[Mapping[str, Any]] = None) -> EvaluationReport:
    """Кросс-валидация с исключением пациента и отчет по ней"""
    logger.info(f"Running leave-one-patient-out evaluation on {len(table)} videos")
    outcome = run_lopo_many([table], settings)[0]
    report = build_report(outcome, raters, exclusions, config)
    logger.info(f"LOPO finished: mae={report.mae:.4f}, pearson={report.pearson}, "
                f"frac_err_lt_1={report.frac_err_lt_1:.3f}")
    return report


# ---------------------------------------------------------------------------
# Эксперименты с целыми оценками
# ---------------------------------------------------------------------------

def fullpoint_discard(table: FeatureTable) -> FeatureTable:
    """Только видео с целой золотой оценкой"""
    keep = table.gold == np.floor(table.gold)
    if not keep.any():
        raise EmptyResult("no video has an integer gold rating")
    logger.info(f"Kept {int(keep.sum())} of {len(table)} videos with integer ratings")
    return table.take(keep)


def fullpoint_discard_summary(table: FeatureTable, settings: ModelSettings = ModelSettings()) -> FullpointSummary:
    """Кросс-валидация только на видео с целыми оценками"""
    report = run_lopo(fullpoint_discard(table), settings)
    return FullpointSummary(
        mode="discard",
        n_videos=report.n_videos,
        mae_mean=report.mae,
        pearson_mean=report.pearson,
        pearson_defined_repeats=int(report.pearson_defined),
        icc_mean=report.icc,
        icc_defined_repeats=int(report.icc_defined),
    )


def random_round(gold: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Каждая полуцелая оценка независимо округляется вверх или вниз с вероятностью 1/2"""
    gold = np.asarray(gold, dtype=float)
    up = rng.random(len(gold)) < 0.5
    half = gold != np.floor(gold)
    return np.where(half, np.where(up, np.ceil(gold), np.floor(gold)), gold)


def _mean_and_se(values: Sequence[float]) -> Tuple[float, float]:
    values = np.asarray(values, dtype=float)
    if np.ptp(values) == 0:
        return float(values[0]), 0.0
    return float(np.mean(values)), float(stats.sem(values))


def fullpoint_random_round(table: FeatureTable, seed: int = 0, repeats: int = 100,
                           settings: ModelSettings = ModelSettings()) -> FullpointSummary:
    """Повторы кросс-валидации со случайным округлением полуцелых оценок

    Повтор r использует генератор SeedSequence([seed, r]). Возвращаются
    среднее и стандартная ошибка MAE, Пирсона и ICC(2,1) по повторам.
    """
    if repeats < 1:
        raise InvalidParameter(f"repeats must be >= 1, got {repeats}")

    tables = [
        table.with_gold(random_round(table.gold, np.random.default_rng(np.random.SeedSequence([seed, r]))))
        for r in range(repeats)
    ]
    outcomes = run_lopo_many(tables, settings)

    maes = []
    pearsons = []
    agreements = []
    for r, outcome in enumerate(outcomes):
        if not outcome.scored.any():
            raise EmptyResult("no video received a prediction")
        maes.append(mae(outcome.predicted, outcome.gold))
        value = optional_pearson(outcome.predicted, outcome.gold)
        if value is not None:
            pearsons.append(value)
        agreement = optional_icc(np.column_stack([outcome.predicted, outcome.gold]))
        if agreement is not None:
            agreements.append(agreement)
        logger.debug(f"Rounding repeat {r}: mae={maes[-1]:.4f}", extra={"repeat": r})

    mae_mean, mae_se = _mean_and_se(maes)
    pearson_mean, pearson_se = _mean_and_se(pearsons) if pearsons else (None, None)
    icc_mean, icc_se = _mean_and_se(agreements) if agreements else (None, None)
    logger.info(f"Random rounding over {repeats} repeats: mae={mae_mean:.4f}±{mae_se:.4f}")
    return FullpointSummary(
        mode="round",
        n_videos=len(table),
        repeats=repeats,
        seed=seed,
        mae_mean=mae_mean,
        mae_se=mae_se,
        pearson_mean=pearson_mean,
        pearson_se=pearson_se,
        pearson_defined_repeats=len(pearsons),
        icc_mean=icc_mean,
        icc_se=icc_se,
        icc_defined_repeats=len(agreements),
    )
