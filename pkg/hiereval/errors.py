# -*- coding: utf-8 -*-
"""
Исключения hiereval. Все наследуются от RuntimeError.
"""


class HierEvalError(RuntimeError):
    """Базовая ошибка библиотеки"""


class ConfigError(HierEvalError):
    """Некорректная конфигурация запуска"""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("Ошибки конфигурации: " + "; ".join(self.problems))


class PreconditionError(HierEvalError):
    """Нарушено предусловие операции"""


class GeometryError(HierEvalError):
    """Некорректная геометрия (кольца, маски, размеры)"""


class TaxonomyError(HierEvalError):
    """Таксономия не прошла проверку; violations содержит все нарушения"""

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__(
            f"Таксономия некорректна ({len(self.violations)} нарушений): "
            + "; ".join(self.violations[:20])
        )


class DatasetError(HierEvalError):
    """Ошибки разбора датасета; issues - список (location, message)"""

    def __init__(self, issues: list[tuple[str, str]]):
        self.issues = list(issues)
        shown = "; ".join(f"{loc}: {msg}" for loc, msg in self.issues[:20])
        more = f" ... и еще {len(self.issues) - 20}" if len(self.issues) > 20 else ""
        super().__init__(f"Найдено проблем: {len(self.issues)}: {shown}{more}")


class PredictionError(DatasetError):
    """Ошибки разбора файла предсказаний или ответов"""


class DegenerateFitError(HierEvalError):
    """Регрессию невозможно построить (нулевая дисперсия log-размера)"""
