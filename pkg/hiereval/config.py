# -*- coding: utf-8 -*-
"""
Конфигурация запуска: переменные окружения (.env) + флаги командной строки.
"""

from __future__ import annotations

import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

from dotenv import load_dotenv

from hiereval.errors import ConfigError

load_dotenv()

ROOT_DIR = Path(__file__).resolve().parents[1]
DATA_DIR = ROOT_DIR / "data"

WORKERS = int(os.getenv("HIEREVAL_WORKERS", "1"))
OUT_DIR = os.getenv("HIEREVAL_OUT_DIR", "out")
LOG_LEVEL = os.getenv("HIEREVAL_LOG_LEVEL", "INFO")
TAXONOMY_FILE = os.getenv("HIEREVAL_TAXONOMY", str(DATA_DIR / "spin_taxonomy.json"))

ARTIFACT_VERSION = "1.0.0"
FORMAT_VERSION = 1

MODES = ("query", "semantic")
AVERAGING = ("per-query", "per-category")
SPECIFICITY_FILTERS = ("general", "specific", "both")
FORMATS = ("csv", "md", "svg", "xlsx")
GROUP_BY = ("level", "category", "object")


def color_enabled() -> bool:
    """ANSI-цвета только для терминала и без HIEREVAL_NO_COLOR"""
    if os.getenv("HIEREVAL_NO_COLOR"):
        return False
    return sys.stdout.isatty()


def parse_expectations(items: list[str] | None) -> dict[str, tuple[int, ...]]:
    """
    Разбор --expect k=v. Значение - одно число или список через запятую,
    например splits=8828,519,1040.
    """
    expected: dict[str, tuple[int, ...]] = {}
    problems = []
    for item in items or []:
        key, sep, raw = item.partition("=")
        key = key.strip()
        if not sep or not key or not raw.strip():
            problems.append(f"--expect '{item}': ожидается формат k=v")
            continue
        try:
            expected[key] = tuple(int(part.replace("_", "")) for part in raw.split(","))
        except ValueError:
            problems.append(f"--expect '{item}': значение должно быть целым числом или списком чисел")
    if problems:
        raise ConfigError(problems)
    return expected


@dataclass(frozen=True)
class RunConfig:
    command: str
    dataset: str | None = None
    predictions: tuple[str, ...] = ()
    mode: str = "query"
    averaging: str = "per-query"
    specificity: str = "both"
    expect: dict[str, tuple[int, ...]] = field(default_factory=dict)
    out: str = OUT_DIR
    workers: int = WORKERS
    strict: bool = False
    formats: tuple[str, ...] = ("csv", "md")
    method: str | None = None
    params: str | None = None
    group_by: str = "level"
    images: str | None = None
    taxonomy: str = TAXONOMY_FILE
    release: str | None = None

    def validate(self) -> list[str]:
        """Список нарушенных инвариантов (пустой - конфигурация корректна)"""
        problems = []
        if self.workers < 1:
            problems.append(f"--workers должно быть >= 1 (получено {self.workers})")
        if self.dataset and not Path(self.dataset).exists():
            problems.append(f"Файл датасета {self.dataset} не найден")
        for path in self.predictions:
            if not Path(path).exists():
                problems.append(f"Файл {path} не найден")
        if self.images and not Path(self.images).is_dir():
            problems.append(f"Папка изображений {self.images} не найдена")
        if self.release and not Path(self.release).is_dir():
            problems.append(f"Папка релиза {self.release} не найдена")
        if self.mode not in MODES:
            problems.append(f"Неизвестный режим {self.mode}")
        if self.averaging not in AVERAGING:
            problems.append(f"Неизвестный способ усреднения {self.averaging}")
        if self.specificity not in SPECIFICITY_FILTERS:
            problems.append(f"Неизвестная специфичность {self.specificity}")
        for fmt in self.formats:
            if fmt not in FORMATS:
                problems.append(f"Неизвестный формат {fmt}")
        return problems

    def ensure_valid(self) -> None:
        problems = self.validate()
        if problems:
            raise ConfigError(problems)

    def specificities(self) -> tuple[str, ...]:
        if self.specificity == "both":
            return ("specific", "general")
        return (self.specificity,)

    def manifest_view(self) -> dict:
        """Конфигурация для manifest.json: без числа воркеров и папки вывода"""
        view = asdict(self)
        view.pop("workers")
        view.pop("out")
        view["predictions"] = list(self.predictions)
        view["formats"] = list(self.formats)
        view["expect"] = {k: list(v) for k, v in sorted(self.expect.items())}
        return view
