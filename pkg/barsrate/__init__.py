"""Оценка тяжести атаксии по шкале BARS из траекторий пальце-носовой пробы."""

__version__ = "1.0.0"
