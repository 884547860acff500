import logging
import threading
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from functools import wraps
from typing import Any, Dict, Iterator

from .logger import log_performance

logger = logging.getLogger(__name__)


@dataclass
class StageMetrics:
    """Метрики одной стадии пайплайна"""
    calls: int = 0
    failures: int = 0
    total_time: float = 0.0
    error_counts: Dict[str, int] = field(default_factory=dict)

    @property
    def average_time(self) -> float:
        return self.total_time / self.calls if self.calls else 0.0


class RunMetrics:
    """Сборщик метрик запуска: успехи, ошибки и время по стадиям"""

    def __init__(self):
        self.stages: Dict[str, StageMetrics] = {}
        self.videos_ok = 0
        self.videos_failed = 0
        self.start_time = datetime.now()
        self._lock = threading.Lock()

    def _stage(self, name: str) -> StageMetrics:
        if name not in self.stages:
            self.stages[name] = StageMetrics()
        return self.stages[name]

    def record_stage(self, name: str, duration: float, error: Exception = None) -> None:
        """Запись результата стадии"""
        with self._lock:
            stage = self._stage(name)
            stage.calls += 1
            stage.total_time += duration
            if error is not None:
                stage.failures += 1
                error_type = type(error).__name__
                stage.error_counts[error_type] = stage.error_counts.get(error_type, 0) + 1

    def record_video(self, ok: bool) -> None:
        with self._lock:
            if ok:
                self.videos_ok += 1
            else:
                self.videos_failed += 1

    def get_uptime(self) -> timedelta:
        return datetime.now() - self.start_time

    def get_summary(self) -> Dict[str, Any]:
        """Получение сводки метрик"""
        total = self.videos_ok + self.videos_failed
        return {
            "elapsed_seconds": self.get_uptime().total_seconds(),
            "videos_total": total,
            "videos_ok": self.videos_ok,
            "videos_failed": self.videos_failed,
            "success_rate": self.videos_ok / total * 100 if total > 0 else 0,
            "stages": {
                name: {
                    "calls": m.calls,
                    "failures": m.failures,
                    "average_time": round(m.average_time, 4),
                    "errors": dict(m.error_counts),
                }
                for name, m in self.stages.items()
            },
        }


class PerformanceProfiler:
    """Профилировщик производительности"""

    def __init__(self, metrics: RunMetrics = None):
        self.metrics = metrics

    @contextmanager
    def stage(self, name: str) -> Iterator[None]:
        """Контекст замера стадии; ошибка записывается и пробрасывается дальше"""
        start = time.perf_counter()
        try:
            yield
        except Exception as e:
            if self.metrics is not None:
                self.metrics.record_stage(name, time.perf_counter() - start, e)
            raise
        if self.metrics is not None:
            self.metrics.record_stage(name, time.perf_counter() - start)

    def profile(self, name: str):
        """Декоратор для профилирования функций"""
        def decorator(func):
            @wraps(func)
            def wrapper(*args, **kwargs):
                start = time.perf_counter()
                try:
                    return func(*args, **kwargs)
                finally:
                    log_performance(name, time.perf_counter() - start)
            return wrapper
        return decorator


# Глобальный экземпляр профилировщика
performance_profiler = PerformanceProfiler()
