# -*- coding: utf-8 -*-
"""
Статистика датасета по подчастям, сводки для boxplot и регрессия IoU ~ ln(размер региона).
"""

from __future__ import annotations

import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from functools import partial
from typing import Any, Iterable, Sequence

import numpy as np
import pandas as pd
from scipy.special import betainc

from hiereval.dataset_io import Dataset
from hiereval.errors import DegenerateFitError, GeometryError, PreconditionError
from hiereval.geometry import (
    BitMask,
    SizeBucket,
    boundary_complexity,
    count_holes,
    coverage,
    extent,
    image_coverage,
    polygon_count,
    rasterize,
    size_bucket,
)
from hiereval.metrics import QueryScore
from hiereval.parallel import map_ordered
from hiereval.taxonomy import Level, join_path

logger = logging.getLogger(__name__)

SIGNIFICANCE_LEVEL = 0.001
WHISKER_FACTOR = 1.5
PERFECT_FIT_TOLERANCE = 1e-12

# шесть факторов сложности подчастей
FACTORS = (
    "subparts_per_part",
    "boundary_complexity",
    "extent",
    "image_coverage",
    "object_coverage",
    "part_coverage",
)

SUBPART_COLUMNS = [
    "image",
    "object",
    "part",
    "subpart",
    "area",
    "bucket",
    "boundary_complexity",
    "extent",
    "image_coverage",
    "object_coverage",
    "part_coverage",
    "holes",
    "polygons",
]
PART_COLUMNS = ["image", "object", "part", "subparts_per_part"]


# --- boxplot ---------------------------------------------------------------------


@dataclass(frozen=True)
class BoxplotSummary:
    median: float
    q25: float
    q75: float
    whisker_lo: float
    whisker_hi: float
    outliers: tuple[float, ...]
    n: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "median": self.median,
            "q25": self.q25,
            "q75": self.q75,
            "whisker_lo": self.whisker_lo,
            "whisker_hi": self.whisker_hi,
            "outliers": list(self.outliers),
            "n": self.n,
        }


def boxplot(values: Iterable[float]) -> BoxplotSummary:
    """Квартили - линейная интерполяция между порядковыми статистиками; усы по Тьюки (1.5·IQR)"""
    data = np.sort(np.asarray([float(v) for v in values], dtype=np.float64))
    if data.size == 0:
        raise PreconditionError("boxplot требует хотя бы одно значение")
    q25, median, q75 = (float(q) for q in np.percentile(data, [25, 50, 75], method="linear"))
    iqr = q75 - q25
    low_fence, high_fence = q25 - WHISKER_FACTOR * iqr, q75 + WHISKER_FACTOR * iqr
    inside = data[(data >= low_fence) & (data <= high_fence)]
    outliers = data[(data < low_fence) | (data > high_fence)]
    return BoxplotSummary(
        median=median,
        q25=q25,
        q75=q75,
        whisker_lo=float(inside.min()),
        whisker_hi=float(inside.max()),
        outliers=tuple(float(v) for v in outliers),
        n=int(data.size),
    )


# --- регрессия ---------------------------------------------------------------------


@dataclass(frozen=True)
class RegressionResult:
    beta0: float
    beta1: float
    r_squared: float
    p_value: float
    n: int

    @property
    def significant(self) -> bool:
        return self.p_value < SIGNIFICANCE_LEVEL

    def to_dict(self) -> dict[str, Any]:
        return {
            "beta0": self.beta0,
            "beta1": self.beta1,
            "r_squared": self.r_squared,
            "p_value": self.p_value,
            "n": self.n,
            "significant": self.significant,
        }


def student_two_sided_p(t: float, df: int) -> float:
    """P(|T| >= |t|) для t-распределения через регуляризованную неполную бета-функцию"""
    if math.isinf(t):
        return 0.0
    return float(min(1.0, max(0.0, betainc(df / 2.0, 0.5, df / (df + t * t)))))


def fit_iou_size(points: Sequence[tuple[float, float]]) -> RegressionResult:
    """
    МНК: iou = beta1 * ln(size) + beta0. R² - квадрат корреляции Пирсона,
    p - двусторонний t-тест для beta1 с n-2 степенями свободы.
    """
    n = len(points)
    if n < 3:
        raise PreconditionError(f"Для регрессии нужно не меньше 3 точек, получено {n}")
    sizes = np.asarray([p[0] for p in points], dtype=np.float64)
    if np.any(sizes <= 0):
        raise PreconditionError("Размер региона должен быть положительным")
    x = np.log(sizes)
    y = np.asarray([float(p[1]) for p in points], dtype=np.float64)

    if np.all(x == x[0]):
        raise DegenerateFitError("Нулевая дисперсия ln(размера): регрессия не определена")
    x_mean, y_mean = math.fsum(x) / n, math.fsum(y) / n
    dx, dy = x - x_mean, y - y_mean
    sxx = math.fsum(dx * dx)
    syy = math.fsum(dy * dy)
    sxy = math.fsum(dx * dy)
    beta1 = sxy / sxx
    beta0 = y_mean - beta1 * x_mean
    df = n - 2
    if np.all(y == y[0]):
        return RegressionResult(float(y[0]), 0.0, 0.0, 1.0, n)

    r_squared = min(1.0, max(0.0, (sxy * sxy) / (sxx * syy)))
    # отклонение от прямой на уровне округления
    if 1.0 - r_squared <= PERFECT_FIT_TOLERANCE:
        return RegressionResult(beta0, beta1, 1.0, 0.0, n)
    residuals = y - (beta0 + beta1 * x)
    sse = math.fsum(residuals * residuals)
    standard_error = math.sqrt(sse / df / sxx)
    t = beta1 / standard_error
    return RegressionResult(beta0, beta1, r_squared, student_two_sided_p(t, df), n)


def regression_points(scores: Iterable[QueryScore]) -> list[QueryScore]:
    """Запросы, пригодные для регрессии: категория размечена и площадь разметки > 0"""
    return [score for score in scores if score.present and score.gt_area > 0]


def fit_grouped(scores: Sequence[QueryScore], group_by: str = "level") -> tuple[list[dict], list[dict]]:
    """
    Регрессии по группам. level - одна регрессия на уровень (все категории вместе);
    category / object - по категориям или объектам внутри уровня, сводка - медиана p.
    Возвращает (строки по группам, сводка по уровням).
    """
    if group_by not in ("level", "category", "object"):
        raise PreconditionError(f"Неизвестная группировка {group_by}")
    groups: dict[tuple[str, str, str], list[tuple[int, float]]] = defaultdict(list)
    for score in regression_points(scores):
        if group_by == "level":
            group = "all"
        elif group_by == "category":
            group = join_path(score.category)
        else:
            group = score.category[0]
        groups[(score.specificity, score.level.code, group)].append((score.gt_area, float(score.iou)))

    rows = []
    for (specificity, level_code, group), points in sorted(groups.items()):
        row: dict[str, Any] = {"specificity": specificity, "level": level_code, "group": group, "n": len(points)}
        try:
            row.update(fit_iou_size(points).to_dict())
            row["note"] = ""
        except (PreconditionError, DegenerateFitError) as exc:
            row.update({"beta0": None, "beta1": None, "r_squared": None, "p_value": None, "significant": None})
            row["note"] = str(exc)
        rows.append(row)

    summary = []
    by_level: dict[tuple[str, str], list[dict]] = defaultdict(list)
    for row in rows:
        by_level[(row["specificity"], row["level"])].append(row)
    for (specificity, level_code), level_rows in sorted(by_level.items()):
        p_values = [row["p_value"] for row in level_rows if row["p_value"] is not None]
        median_p = float(np.median(p_values)) if p_values else None
        summary.append(
            {
                "specificity": specificity,
                "level": level_code,
                "groups": len(level_rows),
                "fitted": len(p_values),
                "median_p": median_p,
                "significant": None if median_p is None else median_p < SIGNIFICANCE_LEVEL,
            }
        )
    skipped = sum(1 for row in rows if row["note"])
    if skipped:
        logger.warning(f"⚠️ Групп без регрессии (мало точек или нулевая дисперсия): {skipped}")
    return rows, summary


# --- статистика датасета ------------------------------------------------------------


@dataclass
class DatasetStats:
    """
    Строки по каждой подчасти (subparts) и по каждой части (parts); все сводки считаются из них,
    поэтому статистики шардов складываются конкатенацией (merge).
    """

    subparts: pd.DataFrame
    parts: pd.DataFrame
    skipped: int = 0
    part_labels: dict[str, int] = field(default_factory=dict)

    def merge(self, other: "DatasetStats") -> "DatasetStats":
        labels = dict(self.part_labels)
        labels.update(other.part_labels)
        return DatasetStats(
            subparts=pd.concat([self.subparts, other.subparts], ignore_index=True),
            parts=pd.concat([self.parts, other.parts], ignore_index=True),
            skipped=self.skipped + other.skipped,
            part_labels=labels,
        )

    @property
    def objects(self) -> list[str]:
        return sorted(set(self.subparts["object"]) | set(self.parts["object"]))

    def _subparts_of(self, obj: str | None) -> pd.DataFrame:
        return self.subparts if obj is None else self.subparts[self.subparts["object"] == obj]

    def _parts_of(self, obj: str | None) -> pd.DataFrame:
        return self.parts if obj is None else self.parts[self.parts["object"] == obj]

    def size_fractions(self, obj: str | None = None) -> dict[str, Fraction]:
        frame = self._subparts_of(obj)
        n = len(frame)
        counts = frame["bucket"].value_counts()
        if n == 0:
            return {bucket.value: Fraction(0) for bucket in SizeBucket}
        return {bucket.value: Fraction(int(counts.get(bucket.value, 0)), n) for bucket in SizeBucket}

    def holes_fraction(self, obj: str | None = None) -> Fraction | None:
        frame = self._subparts_of(obj)
        if frame.empty:
            return None
        return Fraction(int((frame["holes"] > 0).sum()), len(frame))

    def multi_polygon_fraction(self, obj: str | None = None) -> Fraction | None:
        frame = self._subparts_of(obj)
        if frame.empty:
            return None
        return Fraction(int((frame["polygons"] > 1).sum()), len(frame))

    def mean_holes_per_holed(self, obj: str | None = None) -> float | None:
        holed = self._subparts_of(obj)
        holed = holed[holed["holes"] > 0]
        return None if holed.empty else float(holed["holes"].mean())

    def distribution(self, factor: str, obj: str | None = None) -> np.ndarray:
        if factor not in FACTORS:
            raise PreconditionError(f"Неизвестный фактор {factor}")
        frame = self._parts_of(obj) if factor == "subparts_per_part" else self._subparts_of(obj)
        return frame[factor].dropna().to_numpy(dtype=np.float64)

    def boxplots(self, obj: str | None = None) -> dict[str, BoxplotSummary | None]:
        result: dict[str, BoxplotSummary | None] = {}
        for factor in FACTORS:
            values = self.distribution(factor, obj)
            result[factor] = boxplot(values) if values.size else None
        return result

    def subparts_per_object(self) -> pd.DataFrame:
        """Число подчастей на изображение (у каждого изображения один объект)"""
        counts = self.subparts.groupby(["object", "image"]).size().rename("subparts").reset_index()
        return counts.sort_values(["object", "image"], kind="mergesort").reset_index(drop=True)

    def polygon_split(self) -> pd.DataFrame:
        """Средние extent и сложность границы отдельно для одно- и многополигонных подчастей"""
        frame = self.subparts.assign(kind=np.where(self.subparts["polygons"] > 1, "multi", "single"))
        table = (
            frame.groupby(["object", "kind"])[["extent", "boundary_complexity"]]
            .mean()
            .reset_index()
            .sort_values(["object", "kind"], kind="mergesort")
        )
        return table.reset_index(drop=True)

    def part_table(self) -> pd.DataFrame:
        """По категориям частей: число меток подчастей в таксономии, вхождения, многополигонные вхождения"""
        rows = []
        grouped = {key: group for key, group in self.subparts.groupby("part")}
        for part in sorted(set(self.part_labels) | set(grouped)):
            group = grouped.get(part)
            rows.append(
                {
                    "part": part,
                    "subpart_labels": self.part_labels.get(part, 0),
                    "occurrences": 0 if group is None else len(group),
                    "multi_polygon_occurrences": 0 if group is None else int((group["polygons"] > 1).sum()),
                }
            )
        return pd.DataFrame(rows, columns=["part", "subpart_labels", "occurrences", "multi_polygon_occurrences"])

    def summary_table(self) -> pd.DataFrame:
        """Сводка по каждому объекту и по всему датасету; доли - в процентах"""
        rows = []
        for obj in [*self.objects, None]:
            frame = self._subparts_of(obj)
            sizes = self.size_fractions(obj)
            holes = self.holes_fraction(obj)
            multi = self.multi_polygon_fraction(obj)
            row: dict[str, Any] = {
                "object": obj or "all",
                "subparts": len(frame),
                "small_pct": float(sizes["small"]) * 100,
                "medium_pct": float(sizes["medium"]) * 100,
                "large_pct": float(sizes["large"]) * 100,
                "holes_pct": None if holes is None else float(holes) * 100,
                "multi_polygon_pct": None if multi is None else float(multi) * 100,
                "holes_per_holed": self.mean_holes_per_holed(obj),
            }
            for factor in FACTORS:
                values = self.distribution(factor, obj)
                row[f"{factor}_mean"] = float(values.mean()) if values.size else None
                row[f"{factor}_median"] = float(np.median(values)) if values.size else None
            rows.append(row)
        return pd.DataFrame(rows)

    def to_dict(self) -> dict[str, Any]:
        summary = self.summary_table()
        return {
            "kind": "stats",
            "skipped": self.skipped,
            "subpart_annotations": len(self.subparts),
            "part_entities": len(self.parts),
            "summary": _records(summary),
            "size_fractions": {
                obj or "all": {k: float(v) for k, v in self.size_fractions(obj).items()}
                for obj in [*self.objects, None]
            },
            "boxplots": {
                obj or "all": {
                    factor: None if box is None else box.to_dict() for factor, box in self.boxplots(obj).items()
                }
                for obj in [*self.objects, None]
            },
            "parts": _records(self.part_table()),
            "polygon_split": _records(self.polygon_split()),
        }


def _records(frame: pd.DataFrame) -> list[dict[str, Any]]:
    """DataFrame -> список словарей с None вместо NaN (для JSON)"""
    cleaned = frame.astype(object).where(pd.notna(frame), None)
    return cleaned.to_dict(orient="records")


def _coverage_or_none(mask: BitMask, container: BitMask | None) -> float | None:
    if container is None or container.area == 0:
        return None
    return float(coverage(mask, container))


def _stats_for_image(image_id: str, dataset: Dataset) -> tuple[list[dict], list[dict], int]:
    image = dataset.images[image_id]
    annotations = dataset.annotations_for(image_id)
    masks = dataset.ground_truth_masks(image_id)
    object_mask = masks.get(image.object_path)

    subpart_rows = []
    skipped = 0
    subparts_by_part: dict[tuple[str, ...], set[tuple[str, ...]]] = defaultdict(set)
    for annotation in annotations:
        if annotation.level is not Level.SUBPART:
            continue
        mask = rasterize(annotation.region, image.width, image.height)
        if mask.area == 0:
            skipped += 1
            continue
        try:
            shape = {
                "boundary_complexity": boundary_complexity(annotation.region),
                "extent": extent(annotation.region),
                "holes": count_holes(annotation.region),
                "polygons": polygon_count(annotation.region),
            }
        except GeometryError as exc:
            logger.warning(f"⚠️ {image_id}: {join_path(annotation.category)} пропущена: {exc}")
            skipped += 1
            continue
        part_path = annotation.category[:-1]
        subparts_by_part[part_path].add(annotation.category)
        part_mask = masks.get(part_path)
        subpart_rows.append(
            {
                "image": image_id,
                "object": image.object_path[0],
                "part": join_path(part_path),
                "subpart": join_path(annotation.category),
                "area": mask.area,
                "bucket": size_bucket(mask.area).value,
                "boundary_complexity": shape["boundary_complexity"],
                "extent": shape["extent"],
                "image_coverage": float(image_coverage(mask)),
                "object_coverage": _coverage_or_none(mask, object_mask),
                "part_coverage": _coverage_or_none(mask, part_mask),
                "holes": shape["holes"],
                "polygons": shape["polygons"],
            }
        )

    part_rows = []
    part_paths = sorted({a.category for a in annotations if a.level is Level.PART} | set(subparts_by_part))
    for part_path in part_paths:
        # части без подчастей в таксономии (хвост, крыло) не входят в распределение
        if not dataset.taxonomy.children(dataset.taxonomy.node(part_path)):
            continue
        part_rows.append(
            {
                "image": image_id,
                "object": image.object_path[0],
                "part": join_path(part_path),
                "subparts_per_part": len(subparts_by_part.get(part_path, ())),
            }
        )
    return subpart_rows, part_rows, skipped


def compute_stats(dataset: Dataset, workers: int = 1) -> DatasetStats:
    """Метрики сложности по каждой аннотации подчасти, сгруппированные по объектам"""
    image_ids = list(dataset.images)
    results = map_ordered(partial(_stats_for_image, dataset=dataset), image_ids, workers)
    subpart_rows, part_rows, skipped = [], [], 0
    for image_subparts, image_parts, image_skipped in results:
        subpart_rows.extend(image_subparts)
        part_rows.extend(image_parts)
        skipped += image_skipped
    if skipped:
        logger.warning(f"⚠️ Пропущено вырожденных подчастей (нулевая площадь): {skipped}")

    part_labels = {
        node.key: len(dataset.taxonomy.children(node)) for node in dataset.taxonomy.by_level(Level.PART)
    }
    stats = DatasetStats(
        subparts=pd.DataFrame(subpart_rows, columns=SUBPART_COLUMNS),
        parts=pd.DataFrame(part_rows, columns=PART_COLUMNS),
        skipped=skipped,
        part_labels=part_labels,
    )
    logger.info(f"📊 Статистика: {len(stats.subparts)} подчастей, {len(stats.parts)} частей")
    return stats
