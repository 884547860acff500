"""
Линейная модель оценки BARS

Признаки стандартизуются, LASSO решается циклическим координатным спуском
с мягким порогом, параметр регуляризации выбирается внутренней
кросс-валидацией по сетке, сырой прогноз округляется до полуцелой шкалы.

Спуск работает в ковариационной форме (матрица Грама и корреляции с
откликом) и решает пачку независимых задач одновременно: задачи внутренних
фолдов, внешних фолдов и повторов эксперимента с округлением
обрабатываются за один проход по сетке.
"""
import logging
from dataclasses import dataclass, fields
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .errors import InvalidParameter, NoConvergence, NonFinite, TooFewRows
from .features import FEATURE_NAMES, FeatureVector

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-8
DEFAULT_MAX_SWEEPS = 10_000
DEFAULT_GRID_SIZE = 50
DEFAULT_GRID_RATIO = 1e-4
DEFAULT_INNER_FOLDS = 5

BARS_MIN = 0.0
BARS_MAX = 4.0


@dataclass(frozen=True)
class ModelSettings:
    """Параметры обучения модели"""
    grid_size: int = DEFAULT_GRID_SIZE
    grid_ratio: float = DEFAULT_GRID_RATIO
    inner_folds: int = DEFAULT_INNER_FOLDS
    seed: int = 0
    tol: float = DEFAULT_TOL
    max_sweeps: int = DEFAULT_MAX_SWEEPS

    @classmethod
    def from_config(cls, config) -> "ModelSettings":
        return cls(**{f.name: getattr(config, f.name) for f in fields(cls)})


# ---------------------------------------------------------------------------
# Стандартизация
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Standardizer:
    """Средние и масштабы столбцов; у постоянных столбцов масштаб 1"""
    means: np.ndarray
    scales: np.ndarray
    constant: np.ndarray

    def transform(self, X) -> np.ndarray:
        Z = (np.asarray(X, dtype=float) - self.means) / self.scales
        Z[..., self.constant] = 0.0
        return Z


def standardize_fit(X) -> Standardizer:
    """Среднее и популяционное стандартное отклонение по столбцам"""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise InvalidParameter(f"expected a 2-D feature matrix, got shape {X.shape}")
    if X.shape[0] < 2:
        raise TooFewRows(f"need at least 2 rows to standardize, got {X.shape[0]}")
    if not np.all(np.isfinite(X)):
        raise NonFinite("feature matrix contains non-finite values")

    means = X.mean(axis=0)
    constant = np.ptp(X, axis=0) == 0
    scales = np.where(constant, 1.0, X.std(axis=0))
    return Standardizer(means=means, scales=scales, constant=constant)


# ---------------------------------------------------------------------------
# LASSO
# ---------------------------------------------------------------------------

def soft_threshold(x, t):
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def lasso_objective(X, y, weights, intercept: float, lam: float) -> float:
    """(1/2n)·||y - Xw - b||² + lam·||w||₁"""
    X = np.asarray(X, dtype=float)
    r = np.asarray(y, dtype=float) - X @ weights - intercept
    return float(r @ r / (2.0 * len(r)) + lam * np.sum(np.abs(weights)))


@dataclass(frozen=True, eq=False)
class LassoFit:
    weights: np.ndarray
    intercept: float
    lam: float
    n_sweeps: int
    converged: bool
    objective_history: Tuple[float, ...] = ()


@dataclass(frozen=True, eq=False)
class _Problem:
    """Задача LASSO в ковариационной форме по центрированным данным"""
    gram: np.ndarray
    corr: np.ndarray
    x_mean: np.ndarray
    y_mean: float
    y_energy: float

    @classmethod
    def from_data(cls, X, y) -> "_Problem":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        n = len(y)
        if X.ndim != 2 or X.shape[0] != n:
            raise InvalidParameter(f"X has shape {X.shape}, y has {n} rows")
        if n == 0:
            raise TooFewRows("empty training set")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise NonFinite("training data contains non-finite values")
        x_mean = X.mean(axis=0)
        y_mean = float(y.mean())
        Xc = X - x_mean
        yc = y - y_mean
        return cls(
            gram=Xc.T @ Xc / n,
            corr=Xc.T @ yc / n,
            x_mean=x_mean,
            y_mean=y_mean,
            y_energy=float(yc @ yc / n),
        )

    def intercept(self, weights: np.ndarray) -> float:
        return self.y_mean - float(self.x_mean @ weights)

    def objective(self, weights: np.ndarray, lam: float) -> float:
        quad = self.y_energy - 2.0 * self.corr @ weights + weights @ self.gram @ weights
        return float(0.5 * quad + lam * np.sum(np.abs(weights)))


def _descend(gram: np.ndarray, corr: np.ndarray, lam: np.ndarray, weights: np.ndarray,
             tol: float, max_sweeps: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Циклический координатный спуск для пачки задач

    gram (B, p, p), corr (B, p), lam (B,), weights (B, p) - начальная точка.
    Задача останавливается, когда максимальное изменение коэффициента за
    проход меньше `tol`, или после `max_sweeps` проходов; остановленные
    задачи дальше не меняются.
    """
    w = np.array(weights, dtype=float, copy=True)
    n_problems, p = corr.shape
    sweeps = np.zeros(n_problems, dtype=int)
    converged = np.zeros(n_problems, dtype=bool)
    if n_problems == 0 or p == 0:
        converged[:] = True
        return w, sweeps, converged

    diag = np.einsum("bjj->bj", gram)
    safe_diag = np.where(diag > 0, diag, 1.0)

    active = np.arange(n_problems)
    G, c, lm, d, sd, ww = gram, corr, lam, diag, safe_diag, w.copy()
    while active.size:
        change = np.zeros(active.size)
        for j in range(p):
            old = ww[:, j].copy()
            rho = c[:, j] - np.einsum("bk,bk->b", G[:, j, :], ww) + d[:, j] * old
            new = np.where(d[:, j] > 0, soft_threshold(rho, lm) / sd[:, j], 0.0)
            ww[:, j] = new
            np.maximum(change, np.abs(new - old), out=change)

        sweeps[active] += 1
        done = change < tol
        stop = done | (sweeps[active] >= max_sweeps)
        if stop.any():
            w[active] = ww
            converged[active[done]] = True
            keep = ~stop
            active = active[keep]
            G, c, lm, d, sd, ww = G[keep], c[keep], lm[keep], d[keep], sd[keep], ww[keep]

    return w, sweeps, converged


def lasso_fit(X, y, lam: float, tol: float = DEFAULT_TOL, max_sweeps: int = DEFAULT_MAX_SWEEPS,
              warm_start: Optional[np.ndarray] = None) -> LassoFit:
    """Решение LASSO при фиксированном lam

    Свободный член не штрафуется; для стандартизованного X он равен
    среднему y. Если спуск не сошелся, выбрасывается NoConvergence с
    последней итерацией в `fit`.
    """
    if not (lam >= 0 and np.isfinite(lam)):
        raise InvalidParameter(f"lambda must be a finite non-negative number, got {lam}")
    problem = _Problem.from_data(X, y)
    p = len(problem.corr)
    w = np.zeros(p) if warm_start is None else np.array(warm_start, dtype=float)

    history = [problem.objective(w, lam)]
    converged = False
    n_sweeps = 0
    while n_sweeps < max_sweeps and not converged:
        out, _, done = _descend(problem.gram[None], problem.corr[None], np.array([lam]), w[None], tol, 1)
        w = out[0]
        converged = bool(done[0])
        n_sweeps += 1
        history.append(problem.objective(w, lam))

    fit = LassoFit(
        weights=w,
        intercept=problem.intercept(w),
        lam=float(lam),
        n_sweeps=n_sweeps,
        converged=converged,
        objective_history=tuple(history),
    )
    if not converged:
        raise NoConvergence(f"coordinate descent did not converge in {max_sweeps} sweeps", fit=fit)
    return fit


def lambda_grid(X, y, size: int = DEFAULT_GRID_SIZE, ratio: float = DEFAULT_GRID_RATIO) -> np.ndarray:
    """Логарифмическая сетка от lambda_max до ratio·lambda_max по убыванию

    lambda_max = max_j |X_jᵀ(y - ȳ)| / n - наименьшее значение, при котором
    все веса нулевые. Если оно равно 0, сетка состоит из одного нуля.
    """
    if size < 1:
        raise InvalidParameter(f"grid size must be >= 1, got {size}")
    if not (0 < ratio <= 1):
        raise InvalidParameter(f"grid ratio must lie in (0, 1], got {ratio}")
    corr = _Problem.from_data(X, y).corr
    lam_max = float(np.max(np.abs(corr))) if corr.size else 0.0
    if lam_max <= 0:
        return np.array([0.0])
    return np.geomspace(lam_max, ratio * lam_max, size)


def _check_grid(grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise InvalidParameter("lambda grid must be a non-empty 1-D sequence")
    if not np.all(np.isfinite(grid)) or np.any(grid < 0):
        raise InvalidParameter("lambda grid values must be finite and non-negative")
    if np.any(np.diff(grid) > 0):
        raise InvalidParameter("lambda grid must be sorted in descending order")
    return grid


def _solve_paths(problems: Sequence[_Problem], grids: Sequence[np.ndarray],
                 tol: float, max_sweeps: int) -> Tuple[List[np.ndarray], List[np.ndarray]]:
    """Пути решений с теплым стартом для пачки задач

    Возвращает для каждой задачи массив весов (len(grid), p) и флаги
    сходимости по шагам сетки. Сетки разной
    длины дополняются последним значением.
    """
    if not problems:
        return [], []
    length = max(len(g) for g in grids)
    lams = np.array([np.concatenate([g, np.full(length - len(g), g[-1])]) for g in grids])
    gram = np.stack([pr.gram for pr in problems])
    corr = np.stack([pr.corr for pr in problems])

    w = np.zeros_like(corr)
    path = np.empty((len(problems), length, corr.shape[1]))
    status = np.empty((len(problems), length), dtype=bool)
    for k in range(length):
        w, _, converged = _descend(gram, corr, lams[:, k], w, tol, max_sweeps)
        path[:, k] = w
        status[:, k] = converged

    failures = int((~status).sum())
    if failures:
        logger.warning(f"Coordinate descent hit the sweep limit in {failures} path steps, "
                       "using the last iterate")
    return ([path[i, :len(g)] for i, g in enumerate(grids)],
            [status[i, :len(g)] for i, g in enumerate(grids)])


def lasso_path(X, y, grid, tol: float = DEFAULT_TOL,
               max_sweeps: int = DEFAULT_MAX_SWEEPS) -> List[LassoFit]:
    """Решения вдоль убывающей сетки lambda с теплым стартом"""
    grid = _check_grid(grid)
    problem = _Problem.from_data(X, y)
    paths, status = _solve_paths([problem], [grid], tol, max_sweeps)
    return [
        LassoFit(weights=w, intercept=problem.intercept(w), lam=float(lam), n_sweeps=0, converged=bool(ok))
        for w, lam, ok in zip(paths[0], grid, status[0])
    ]


# ---------------------------------------------------------------------------
# Выбор lambda
# ---------------------------------------------------------------------------

def assign_folds(n_rows: int, k_folds: int, seed: int = 0, groups: Optional[Sequence] = None) -> np.ndarray:
    """Номер фолда для каждой строки

    Группы (пациенты) перемешиваются генератором с данным seed и
    раскладываются по фолдам по кругу; все строки группы попадают в один
    фолд. Если групп меньше двух, фолды строятся по строкам.
    """
    if k_folds < 2:
        raise InvalidParameter(f"k_folds must be >= 2, got {k_folds}")
    if n_rows < k_folds:
        raise TooFewRows(f"{n_rows} rows cannot form {k_folds} folds")

    if groups is not None:
        groups = np.asarray([str(g) for g in groups])
        if len(groups) != n_rows:
            raise InvalidParameter(f"{len(groups)} group labels for {n_rows} rows")
        units, unit_of_row = np.unique(groups, return_inverse=True)
        if len(units) < 2:
            logger.debug("Fewer than two groups in the training set, folding by rows")
            groups = None
    if groups is None:
        units = np.arange(n_rows)
        unit_of_row = units

    k = min(k_folds, len(units))
    order = np.random.default_rng(seed).permutation(len(units))
    fold_of_unit = np.empty(len(units), dtype=int)
    fold_of_unit[order] = np.arange(len(units)) % k
    return fold_of_unit[unit_of_row]


@dataclass(frozen=True, eq=False)
class CVTask:
    """Одна задача выбора lambda: данные, сетка и разбиение на фолды"""
    X: np.ndarray
    y: np.ndarray
    grid: np.ndarray
    folds: np.ndarray


def cross_validate(tasks: Sequence[CVTask], tol: float = DEFAULT_TOL,
                   max_sweeps: int = DEFAULT_MAX_SWEEPS) -> List[np.ndarray]:
    """Средняя по фолдам валидационная MSE для каждого lambda каждой задачи"""
    problems: List[_Problem] = []
    grids: List[np.ndarray] = []
    holdouts = []
    for t, task in enumerate(tasks):
        for fold in np.unique(task.folds):
            train = task.folds != fold
            if train.sum() < 2:
                logger.debug(f"Skipping inner fold {fold} with {int(train.sum())} training rows")
                continue
            std = standardize_fit(task.X[train])
            problems.append(_Problem.from_data(std.transform(task.X[train]), task.y[train]))
            grids.append(task.grid)
            holdouts.append((t, std, ~train))

    paths, _ = _solve_paths(problems, grids, tol, max_sweeps)

    per_task: List[List[np.ndarray]] = [[] for _ in tasks]
    for problem, weights, (t, std, val) in zip(problems, paths, holdouts):
        task = tasks[t]
        Z = std.transform(task.X[val])
        intercepts = problem.y_mean - weights @ problem.x_mean
        predictions = Z @ weights.T + intercepts
        per_task[t].append(np.mean((task.y[val][:, None] - predictions) ** 2, axis=0))
    return [
        np.mean(errors, axis=0) if errors else np.zeros(len(task.grid))
        for errors, task in zip(per_task, tasks)
    ]


def _best_index(errors: np.ndarray) -> int:
    """Минимум ошибки; при равенстве побеждает меньший индекс (больший lambda)"""
    best = 0
    for i in range(1, len(errors)):
        if errors[i] < errors[best] * (1.0 - 1e-12):
            best = i
    return best


def select_lambda(X, y, grid, k_folds: int = DEFAULT_INNER_FOLDS, seed: int = 0,
                  groups: Optional[Sequence] = None, tol: float = DEFAULT_TOL,
                  max_sweeps: int = DEFAULT_MAX_SWEEPS) -> float:
    """Выбор lambda k-кратной кросс-валидацией

    Признаки стандартизуются заново на обучающей части каждого фолда.
    """
    grid = _check_grid(grid)
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    folds = assign_folds(len(y), k_folds, seed, groups)
    if len(grid) == 1:
        return float(grid[0])
    errors = cross_validate([CVTask(X, y, grid, folds)], tol, max_sweeps)[0]
    return float(grid[_best_index(errors)])


# ---------------------------------------------------------------------------
# Модель оценки
# ---------------------------------------------------------------------------

class RatingModel(BaseModel):
    """Обученная модель: статистики стандартизации, веса и lambda"""

    model_config = ConfigDict(frozen=True, populate_by_name=True)

    means: List[float]
    scales: List[float]
    weights: List[float]
    intercept: float
    lambda_: float = Field(alias="lambda", ge=0.0)
    feature_names: List[str] = Field(default_factory=lambda: list(FEATURE_NAMES))

    @model_validator(mode="after")
    def validate_shapes(self):
        p = len(self.feature_names)
        if not (len(self.means) == len(self.scales) == len(self.weights) == p):
            raise ValueError(f"means, scales and weights must all have {p} entries")
        if any(not s > 0 for s in self.scales):
            raise ValueError("scales must be strictly positive")
        values = self.means + self.scales + self.weights + [self.intercept, self.lambda_]
        if not np.all(np.isfinite(values)):
            raise ValueError("model parameters must be finite")
        return self

    def selected_features(self) -> List[str]:
        return [name for name, w in zip(self.feature_names, self.weights) if w != 0]


def _as_matrix(features) -> np.ndarray:
    if isinstance(features, FeatureVector):
        return features.as_array()
    return np.asarray(features, dtype=float)


def predict_raw(model: RatingModel, features) -> Union[float, np.ndarray]:
    """Несокращенный прогноз: intercept + Σ w·(f - mean)/scale"""
    F = _as_matrix(features)
    z = (F - np.asarray(model.means)) / np.asarray(model.scales)
    raw = z @ np.asarray(model.weights) + model.intercept
    return float(raw) if np.ndim(raw) == 0 else raw


def round_to_bars(raw) -> Union[float, np.ndarray]:
    """Ближайшее полуцелое (половина вверх), обрезанное до [0, 4]"""
    values = np.asarray(raw, dtype=float)
    if not np.all(np.isfinite(values)):
        raise NonFinite(f"cannot round non-finite prediction {raw}")
    rounded = np.clip(np.floor(2.0 * values + 0.5) / 2.0, BARS_MIN, BARS_MAX)
    return float(rounded) if rounded.ndim == 0 else rounded


def fit_rating_models(datasets: Sequence[Tuple[np.ndarray, np.ndarray, Optional[Sequence]]],
                      settings: ModelSettings = ModelSettings()) -> List[RatingModel]:
    """Обучение нескольких независимых моделей одним пакетом

    Каждый элемент `datasets` - (X, y, groups). Для каждого: стандартизация,
    сетка lambda, выбор lambda кросс-валидацией по группам, итоговое
    решение на всех строках с теплым стартом вдоль сетки.
    """
    prepared = []
    tasks: List[CVTask] = []
    for X, y, groups in datasets:
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        std = standardize_fit(X)
        Z = std.transform(X)
        grid = lambda_grid(Z, y, settings.grid_size, settings.grid_ratio)
        task_index = None
        if len(grid) > 1:
            k = min(settings.inner_folds, len(y))
            folds = assign_folds(len(y), k, settings.seed, groups)
            task_index = len(tasks)
            tasks.append(CVTask(X, y, grid, folds))
        prepared.append((std, Z, y, grid, task_index))

    errors = cross_validate(tasks, settings.tol, settings.max_sweeps)

    problems = []
    grids = []
    for std, Z, y, grid, task_index in prepared:
        best = 0 if task_index is None else _best_index(errors[task_index])
        problems.append(_Problem.from_data(Z, y))
        grids.append(grid[:best + 1])
    paths, _ = _solve_paths(problems, grids, settings.tol, settings.max_sweeps)

    models = []
    for (std, Z, y, grid, _), problem, path, used in zip(prepared, problems, paths, grids):
        weights = np.where(std.constant, 0.0, path[-1])
        models.append(RatingModel(
            means=std.means.tolist(),
            scales=std.scales.tolist(),
            weights=weights.tolist(),
            intercept=problem.intercept(weights),
            lambda_=float(used[-1]),
        ))
    return models


def fit_rating_model(X, y, groups: Optional[Sequence] = None,
                     settings: ModelSettings = ModelSettings()) -> RatingModel:
    """Обучение модели на всех строках"""
    model = fit_rating_models([(X, y, groups)], settings)[0]
    logger.info(f"Trained rating model: lambda={model.lambda_:.3g}, "
                f"{len(model.selected_features())} of {len(model.weights)} features selected")
    return model
