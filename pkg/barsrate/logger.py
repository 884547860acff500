import json
import logging
import logging.config
import os
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Optional

# Дополнительные поля, которые переносятся из `extra` в JSON-запись
EXTRA_FIELDS = (
    "video_id",
    "stage",
    "fold",
    "repeat",
    "operation",
    "duration",
    "error_type",
)


class JSONFormatter(logging.Formatter):
    """JSON форматтер для структурированного логирования"""

    def format(self, record: logging.LogRecord) -> str:
        log_entry = {
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
            "module": record.module,
            "function": record.funcName,
            "line": record.lineno,
        }

        for name in EXTRA_FIELDS:
            if hasattr(record, name):
                log_entry[name] = getattr(record, name)

        if record.exc_info:
            log_entry["exception"] = self.formatException(record.exc_info)

        return json.dumps(log_entry, ensure_ascii=False, default=str)


def _rotating_file(path: Path, level: str) -> Dict[str, Any]:
    return {
        "class": "logging.handlers.RotatingFileHandler",
        "level": level,
        "formatter": "json",
        "filename": str(path),
        "maxBytes": 10 * 1024 * 1024,
        "backupCount": 5,
        "encoding": "utf8",
    }


def setup_logging(log_level: Optional[str] = None, log_dir: Optional[Path] = None) -> None:
    """Настройка логирования

    Консоль получает текстовый формат; при заданном `log_dir` дополнительно
    пишутся ротируемые JSON-файлы barsrate.log и error.log.
    """
    log_level = (log_level or os.getenv("LOG_LEVEL", "INFO")).upper()

    handlers: Dict[str, Dict[str, Any]] = {
        "console": {
            "class": "logging.StreamHandler",
            "level": log_level,
            "formatter": "standard",
            "stream": "ext://sys.stderr",
        },
    }
    root_handlers = ["console"]

    if log_dir is not None:
        log_dir = Path(log_dir)
        log_dir.mkdir(parents=True, exist_ok=True)
        handlers["file"] = _rotating_file(log_dir / "barsrate.log", log_level)
        handlers["error_file"] = _rotating_file(log_dir / "error.log", "ERROR")
        root_handlers.append("file")

    error_handlers = ["console"] + (["error_file"] if log_dir is not None else [])

    logging_config = {
        "version": 1,
        "disable_existing_loggers": False,
        "formatters": {
            "json": {
                "()": JSONFormatter,
            },
            "standard": {
                "format": "%(asctime)s [%(levelname)s] %(name)s: %(message)s"
            },
        },
        "handlers": handlers,
        "loggers": {
            "barsrate": {
                "handlers": root_handlers,
                "level": log_level,
                "propagate": False,
            },
            "barsrate.error": {
                "handlers": error_handlers,
                "level": "ERROR",
                "propagate": False,
            },
        },
    }

    logging.config.dictConfig(logging_config)


class LoggerMixin:
    """Миксин для добавления логирования к классам"""

    @property
    def logger(self) -> logging.Logger:
        return logging.getLogger(f"barsrate.{self.__class__.__name__}")


def log_error(error: Exception, context: Optional[Dict[str, Any]] = None) -> None:
    """Логирование ошибок"""
    logger = logging.getLogger("barsrate.error")
    extra = dict(context or {})
    extra.setdefault("error_type", type(error).__name__)
    logger.error(f"Error occurred: {error}", extra=extra, exc_info=error)


def log_performance(operation: str, duration: float,
                    details: Optional[Dict[str, Any]] = None) -> None:
    """Логирование производительности"""
    logger = logging.getLogger("barsrate.performance")
    extra = {
        "operation": operation,
        "duration": duration,
    }
    if details:
        extra.update(details)
    logger.info(f"Performance: {operation} took {duration:.3f}s", extra=extra)
