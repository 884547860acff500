"""Иерархия исключений пайплайна"""
from typing import Any, List, Optional


class BarsError(Exception):
    """Базовое исключение пакета"""


class InvalidParameter(BarsError, ValueError):
    """Параметр вне допустимой области"""


class LengthMismatch(BarsError):
    pass


class FpsMismatch(BarsError):
    pass


class AllInvalid(BarsError):
    pass


class DegenerateRange(BarsError):
    pass


class DegenerateGeometry(BarsError):
    pass


class TooFewPoints(BarsError):
    pass


class WindowTooLarge(BarsError):
    pass


class EmptyInput(BarsError):
    pass


class NoEvents(BarsError):
    pass


class NoCycles(BarsError):
    pass


class ZeroDuration(BarsError):
    pass


class SeriesTooShort(BarsError):
    pass


class TooFewRows(BarsError):
    pass


class NonFinite(BarsError):
    pass


class SinglePatient(BarsError):
    pass


class ZeroVariance(BarsError):
    pass


class IncompleteMatrix(BarsError):
    pass


class EmptyRaters(BarsError):
    pass


class EmptyResult(BarsError):
    pass


class ModelSchemaMismatch(BarsError):
    """Имена признаков в файле модели не совпадают с каноническими"""


class InputUnreadable(BarsError):
    """Входной файл отсутствует или имеет неверный тип"""


class NoConvergence(BarsError):
    """Координатный спуск не сошелся; последняя итерация доступна в `fit`"""

    def __init__(self, message: str, fit: Any = None):
        super().__init__(message)
        self.fit = fit


class SchemaError(BarsError):
    """Нарушение схемы входного файла с диагностикой по строкам"""

    def __init__(self, source: str, diagnostics: List[str]):
        self.source = source
        self.diagnostics = list(diagnostics)
        super().__init__(f"{source}: " + "; ".join(self.diagnostics[:5]))


class StageFailure(BarsError):
    """Ошибка конкретной стадии обработки видео"""

    def __init__(self, stage: str, cause: Exception, video_id: Optional[str] = None):
        self.stage = stage
        self.cause = cause
        self.video_id = video_id
        super().__init__(f"{stage}: {type(cause).__name__}: {cause}")

    @property
    def error_name(self) -> str:
        return type(self.cause).__name__
