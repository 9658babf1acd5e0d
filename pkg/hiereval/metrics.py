# -*- coding: utf-8 -*-
"""
Метрики иерархической сегментации: mIoU по уровням, SpCS (вложенность потомка в родителя),
SeCS (согласованность меток по пикселям), точность распознавания, доля воздержаний.

Ядра считаются по одному изображению и возвращают точные значения (целые счетчики и Fraction).
Средние собираются после gather через math.fsum, поэтому результат не зависит от числа воркеров.
"""

from __future__ import annotations

import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from functools import partial
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from hiereval.dataset_io import AnswerSet, Dataset, PredictionSet, QueryPrediction, SemanticPrediction
from hiereval.errors import GeometryError, PreconditionError, PredictionError
from hiereval.geometry import BitMask, containment_ratio, iou
from hiereval.parallel import map_ordered
from hiereval.taxonomy import Level, Taxonomy, join_path

logger = logging.getLogger(__name__)

LEVEL_ORDER = (Level.SUBPART, Level.PART, Level.OBJECT)


class Relation(str, Enum):
    S2P = "S2P"
    P2O = "P2O"

    @classmethod
    def for_child(cls, level: Level) -> "Relation":
        if level is Level.SUBPART:
            return cls.S2P
        if level is Level.PART:
            return cls.P2O
        raise PreconditionError("У объекта нет родителя")


def normalize_averaging(averaging: str) -> str:
    value = averaging.replace("_", "-")
    if value not in ("per-query", "per-category"):
        raise PreconditionError(f"Неизвестный способ усреднения {averaging}")
    return value


@dataclass(frozen=True)
class Mean:
    """Среднее вместе со знаменателем; value = None при пустом знаменателе"""

    total: float = 0.0
    count: int = 0

    @classmethod
    def of(cls, terms: Iterable[Any]) -> "Mean":
        terms = [float(term) for term in terms]
        return cls(math.fsum(terms), len(terms))

    @property
    def value(self) -> float | None:
        if self.count == 0:
            return None
        return self.total / self.count

    def percent(self) -> float | None:
        value = self.value
        return None if value is None else value * 100.0

    def to_dict(self) -> dict[str, Any]:
        return {"value": self.value, "count": self.count}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Mean":
        count = int(data.get("count", 0))
        value = data.get("value")
        return cls(0.0 if value is None else float(value) * count, count)


# --- оценка запросов ---------------------------------------------------------------


@dataclass(frozen=True)
class QueryScore:
    image_id: str
    category: tuple[str, ...]
    level: Level
    specificity: str
    iou: Fraction
    gt_area: int
    pred_area: int
    abstained: bool
    present: bool
    # категория размечена, но растр разметки пуст
    degenerate: bool = False

    @property
    def empty(self) -> bool:
        return self.abstained or self.pred_area == 0


def _score_image(
    job: tuple[str, list[QueryPrediction]], dataset: Dataset
) -> list[QueryScore]:
    image_id, queries = job
    image = dataset.images[image_id]
    gt_masks = dataset.ground_truth_masks(image_id)
    blank = BitMask.empty(image.width, image.height)
    scores = []
    for query in queries:
        gt = gt_masks.get(query.category, blank)
        pred = query.to_mask(image.width, image.height)
        if pred is None:
            # воздержание по присутствующей категории = IoU 0
            value = Fraction(0) if gt.area else Fraction(1)
            pred_area = 0
        else:
            value = iou(pred, gt)
            pred_area = pred.area
        scores.append(
            QueryScore(
                image_id=image_id,
                category=query.category,
                level=query.level,
                specificity=query.specificity,
                iou=value,
                gt_area=gt.area,
                pred_area=pred_area,
                abstained=query.abstain,
                present=gt.area > 0,
                degenerate=query.category in gt_masks and gt.area == 0,
            )
        )
    return scores


def _jobs(predictions: PredictionSet, dataset: Dataset) -> list[tuple[str, list[QueryPrediction]]]:
    grouped: dict[str, list[QueryPrediction]] = defaultdict(list)
    for query in predictions.query_records(dataset):
        grouped[query.image_id].append(query)
    return [(image_id, grouped[image_id]) for image_id in sorted(grouped)]


def score_queries(predictions: PredictionSet, dataset: Dataset, workers: int = 1) -> list[QueryScore]:
    """IoU, площади и флаги по каждому запросу; общее ядро для mIoU, воздержаний и регрессии"""
    results = map_ordered(partial(_score_image, dataset=dataset), _jobs(predictions, dataset), workers)
    scores = [score for image_scores in results for score in image_scores]
    degenerate = sum(1 for score in scores if score.degenerate)
    if degenerate:
        logger.warning(f"⚠️ Запросов к категориям с нулевой площадью разметки: {degenerate} (пропущены в mIoU)")
    absent = sum(1 for score in scores if not score.present and not score.degenerate)
    if absent:
        logger.warning(f"⚠️ Запросов к категориям без разметки на изображении: {absent} (не входят в mIoU)")
    return scores


def _select(scores: Iterable[QueryScore], level: Level | None, specificity: str | None) -> list[QueryScore]:
    return [
        score
        for score in scores
        if (level is None or score.level is level) and (specificity is None or score.specificity == specificity)
    ]


def miou_from_scores(
    scores: Sequence[QueryScore],
    level: Level,
    averaging: str = "per-query",
    specificity: str | None = None,
) -> Mean:
    selected = [score for score in _select(scores, level, specificity) if score.present]
    if normalize_averaging(averaging) == "per-query":
        return Mean.of(score.iou for score in selected)
    per_category: dict[tuple[str, ...], list[Fraction]] = defaultdict(list)
    for score in selected:
        per_category[score.category].append(score.iou)
    return Mean.of(Mean.of(values).value for _, values in sorted(per_category.items()))


def miou(
    predictions: PredictionSet,
    dataset: Dataset,
    level: Level,
    averaging: str = "per-query",
    specificity: str | None = None,
    workers: int = 1,
) -> Mean:
    """mIoU на уровне: воздержание по присутствующей категории считается как 0"""
    return miou_from_scores(score_queries(predictions, dataset, workers), level, averaging, specificity)


def abstention_from_scores(scores: Sequence[QueryScore], level: Level, specificity: str | None = None) -> Mean:
    return Mean.of(1 if score.empty else 0 for score in _select(scores, level, specificity))


def abstention_rate(
    predictions: PredictionSet,
    dataset: Dataset,
    level: Level,
    specificity: str | None = None,
    workers: int = 1,
) -> Mean:
    """Доля запросов уровня с воздержанием или пустой маской; value = None без запросов"""
    return abstention_from_scores(score_queries(predictions, dataset, workers), level, specificity)


def per_category_iou(scores: Sequence[QueryScore], specificity: str | None = None) -> list[dict[str, Any]]:
    grouped: dict[tuple[str, ...], list[QueryScore]] = defaultdict(list)
    for score in _select(scores, None, specificity):
        if score.present:
            grouped[score.category].append(score)
    rows = []
    for category, items in sorted(grouped.items()):
        mean = Mean.of(item.iou for item in items)
        rows.append(
            {
                "category": join_path(category),
                "level": items[0].level.code,
                "iou": mean.value,
                "count": mean.count,
                "abstained": sum(1 for item in items if item.empty),
            }
        )
    return rows


# --- SpCS -------------------------------------------------------------------------


@dataclass(frozen=True)
class PairRecord:
    image_id: str
    specificity: str
    child: tuple[str, ...]
    parent: tuple[str, ...]
    kind: Relation
    ratio: Fraction
    child_area: int


@dataclass
class PairSet:
    """Пары предсказаний с отношением потомок-родитель в таксономии разметки"""

    pairs: list[PairRecord] = field(default_factory=list)
    skipped: dict[Relation, int] = field(default_factory=lambda: {kind: 0 for kind in Relation})

    def __len__(self) -> int:
        return len(self.pairs)

    def by_kind(self, kind: Relation) -> list[PairRecord]:
        return [pair for pair in self.pairs if pair.kind is kind]

    def merge(self, other: "PairSet") -> "PairSet":
        return PairSet(
            self.pairs + other.pairs, {kind: self.skipped[kind] + other.skipped[kind] for kind in Relation}
        )


def _pairs_for_image(job: tuple[str, list[QueryPrediction]], dataset: Dataset) -> dict[str, PairSet]:
    image_id, queries = job
    image = dataset.images[image_id]
    taxonomy = dataset.taxonomy
    result: dict[str, PairSet] = {}
    by_specificity: dict[str, dict[tuple[str, ...], QueryPrediction]] = defaultdict(dict)
    for query in queries:
        by_specificity[query.specificity][query.category] = query

    for specificity, index in sorted(by_specificity.items()):
        pair_set = result.setdefault(specificity, PairSet())
        masks = {path: query.to_mask(image.width, image.height) for path, query in index.items()}
        for path in sorted(index):
            child = index[path]
            if child.level is Level.OBJECT:
                continue
            parent = index.get(path[:-1])
            if parent is None or not taxonomy.entails(taxonomy.node(path), taxonomy.node(parent.category)):
                continue
            kind = Relation.for_child(child.level)
            child_mask = masks[path]
            if child_mask is None or child_mask.area == 0:
                pair_set.skipped[kind] += 1
                continue
            parent_mask = masks[parent.category]
            if parent_mask is None:
                parent_mask = BitMask.empty(image.width, image.height)
            pair_set.pairs.append(
                PairRecord(
                    image_id=image_id,
                    specificity=specificity,
                    child=path,
                    parent=parent.category,
                    kind=kind,
                    ratio=containment_ratio(child_mask, parent_mask),
                    child_area=child_mask.area,
                )
            )
    return result


def collect_pairs(predictions: PredictionSet, dataset: Dataset, workers: int = 1) -> dict[str, PairSet]:
    """Пары по каждой специфичности; пропуски тоже считаются отдельно"""
    results = map_ordered(partial(_pairs_for_image, dataset=dataset), _jobs(predictions, dataset), workers)
    merged: dict[str, PairSet] = {}
    for image_pairs in results:
        for spec, pair_set in image_pairs.items():
            target = merged.setdefault(spec, PairSet())
            target.pairs.extend(pair_set.pairs)
            for kind in Relation:
                target.skipped[kind] += pair_set.skipped[kind]
    skipped = sum(sum(pair_set.skipped.values()) for pair_set in merged.values())
    if skipped:
        logger.warning(f"⚠️ Пропущено пар с пустым потомком: {skipped}")
    return merged


def build_pairs(
    predictions: PredictionSet, dataset: Dataset, specificity: str | None = None, workers: int = 1
) -> PairSet:
    """
    Пары (потомок, родитель) в пределах одного изображения и одной специфичности.
    Пустые и воздержавшиеся потомки не входят в пары, а считаются в skipped.
    """
    result = PairSet()
    for spec, pair_set in sorted(collect_pairs(predictions, dataset, workers).items()):
        if specificity is None or spec == specificity:
            result = result.merge(pair_set)
    return result


@dataclass(frozen=True)
class SpcsResult:
    avg: Mean
    s2p: Mean
    p2o: Mean
    skipped: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "avg": self.avg.to_dict(),
            "s2p": self.s2p.to_dict(),
            "p2o": self.p2o.to_dict(),
            "skipped": dict(sorted(self.skipped.items())),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "SpcsResult":
        return cls(
            Mean.from_dict(data["avg"]),
            Mean.from_dict(data["s2p"]),
            Mean.from_dict(data["p2o"]),
            dict(data.get("skipped", {})),
        )


def spcs(pairs: PairSet) -> SpcsResult:
    """avg - среднее по всем парам (взвешено числом пар), а не среднее S2P и P2O"""
    return SpcsResult(
        avg=Mean.of(pair.ratio for pair in pairs.pairs),
        s2p=Mean.of(pair.ratio for pair in pairs.by_kind(Relation.S2P)),
        p2o=Mean.of(pair.ratio for pair in pairs.by_kind(Relation.P2O)),
        skipped={kind.value: count for kind, count in pairs.skipped.items()},
    )


# --- SeCS -------------------------------------------------------------------------


@dataclass(frozen=True)
class SecsResult:
    consistent: int = 0
    pixels: int = 0

    @property
    def value(self) -> Fraction | None:
        if self.pixels == 0:
            return None
        return Fraction(self.consistent, self.pixels)

    def __add__(self, other: "SecsResult") -> "SecsResult":
        return SecsResult(self.consistent + other.consistent, self.pixels + other.pixels)

    def to_dict(self) -> dict[str, Any]:
        value = self.value
        return {
            "value": None if value is None else float(value),
            "consistent": self.consistent,
            "pixels": self.pixels,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "SecsResult":
        return cls(int(data.get("consistent", 0)), int(data.get("pixels", 0)))


def secs(pred: SemanticPrediction, taxonomy: Taxonomy) -> SecsResult:
    """
    X - пиксели, где все три карты не фон. Пиксель согласован, если подчасть входит в часть,
    а часть - в объект. Ошибка, если карты разных размеров.
    """
    s_map, p_map, o_map = pred.subpart_map, pred.part_map, pred.object_map
    if not (s_map.shape == p_map.shape == o_map.shape):
        raise GeometryError(f"Размеры карт не совпадают: {s_map.shape}, {p_map.shape}, {o_map.shape}")
    parent = taxonomy.parent_table()
    level = taxonomy.level_table()
    for label_map in (s_map, p_map, o_map):
        if label_map.size and (label_map.min() < 0 or label_map.max() > taxonomy.max_id):
            raise PreconditionError("Карта содержит id вне таксономии")

    foreground = (s_map > 0) & (p_map > 0) & (o_map > 0)
    s, p, o = s_map[foreground], p_map[foreground], o_map[foreground]
    consistent = (
        (level[s] == int(Level.SUBPART))
        & (level[p] == int(Level.PART))
        & (level[o] == int(Level.OBJECT))
        & (parent[s] == p)
        & (parent[p] == o)
    )
    return SecsResult(int(np.count_nonzero(consistent)), int(s.size))


def secs_pooled(
    predictions: PredictionSet, taxonomy: Taxonomy, specificity: str | None = None, workers: int = 1
) -> tuple[SecsResult, list[dict[str, Any]]]:
    """Сумма по пикселям всех изображений и значения по каждому изображению"""
    if predictions.mode != "semantic":
        raise PreconditionError("SeCS определен только для semantic-предсказаний")
    records = [r for r in predictions.records if specificity is None or r.specificity == specificity]
    results = map_ordered(partial(secs, taxonomy=taxonomy), records, workers)
    total = SecsResult()
    per_image = []
    for record, result in zip(records, results):
        total = total + result
        per_image.append({"image": record.image_id, "specificity": record.specificity, **result.to_dict()})
    return total, per_image


# --- распознавание ------------------------------------------------------------------


def recognition_cell(level: Level, specificity: str) -> str:
    """mACC_S, mACC_SS, mACC_P, mACC_PS, mACC_O, mACC_OS"""
    return f"mACC_{level.code}{'S' if specificity == 'specific' else ''}"


RECOGNITION_CELLS = tuple(
    recognition_cell(level, specificity) for level in LEVEL_ORDER for specificity in ("general", "specific")
)


def recognition_accuracy(answers: AnswerSet | Sequence, dataset: Dataset) -> dict[str, Mean]:
    """Доля ответов, совпавших с наличием категории в разметке, по шести ячейкам"""
    cells: dict[str, list[int]] = {cell: [] for cell in RECOGNITION_CELLS}
    unknown = []
    for answer in answers:
        if answer.image_id not in dataset.images or answer.category not in dataset.taxonomy:
            unknown.append((answer.image_id, join_path(answer.category)))
            continue
        present = answer.category in dataset.present_categories(answer.image_id)
        cells[recognition_cell(answer.level, answer.specificity)].append(int(answer.model_answer == present))
    if unknown:
        raise PredictionError([(image_id, f"неизвестная пара (изображение, {path})") for image_id, path in unknown])
    return {cell: Mean.of(values) for cell, values in cells.items()}


def recognition_yes_rate(answers: AnswerSet | Sequence) -> dict[str, Mean]:
    """Доля ответов yes по ячейкам: выявляет модели, которые всегда отвечают yes"""
    cells: dict[str, list[int]] = {cell: [] for cell in RECOGNITION_CELLS}
    for answer in answers:
        cells[recognition_cell(answer.level, answer.specificity)].append(int(answer.model_answer))
    return {cell: Mean.of(values) for cell, values in cells.items()}


# --- отчет ---------------------------------------------------------------------------


@dataclass
class SpecificityReport:
    specificity: str
    miou: dict[str, Mean]
    spcs: SpcsResult
    abstention: dict[str, Mean]
    secs: SecsResult | None = None
    per_category: list[dict[str, Any]] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "specificity": self.specificity,
            "miou": {code: mean.to_dict() for code, mean in self.miou.items()},
            "spcs": self.spcs.to_dict(),
            "abstention": {code: mean.to_dict() for code, mean in self.abstention.items()},
            "secs": None if self.secs is None else self.secs.to_dict(),
            "per_category": self.per_category,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "SpecificityReport":
        return cls(
            specificity=data["specificity"],
            miou={code: Mean.from_dict(value) for code, value in data["miou"].items()},
            spcs=SpcsResult.from_dict(data["spcs"]),
            abstention={code: Mean.from_dict(value) for code, value in data["abstention"].items()},
            secs=None if data.get("secs") is None else SecsResult.from_dict(data["secs"]),
            per_category=list(data.get("per_category", [])),
        )


@dataclass
class MetricReport:
    method: str
    params: str
    mode: str
    averaging: str
    results: dict[str, SpecificityReport] = field(default_factory=dict)
    secs_per_image: list[dict[str, Any]] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": "metrics",
            "method": self.method,
            "params": self.params,
            "mode": self.mode,
            "averaging": self.averaging,
            "results": {spec: report.to_dict() for spec, report in self.results.items()},
            "secs_per_image": self.secs_per_image,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "MetricReport":
        return cls(
            method=data.get("method") or "",
            params=data.get("params") or "",
            mode=data.get("mode", "query"),
            averaging=data.get("averaging", "per-query"),
            results={spec: SpecificityReport.from_dict(value) for spec, value in data.get("results", {}).items()},
            secs_per_image=list(data.get("secs_per_image", [])),
        )


def evaluate(
    predictions: PredictionSet,
    dataset: Dataset,
    averaging: str = "per-query",
    specificities: Sequence[str] = ("specific", "general"),
    method: str | None = None,
    params: str | None = None,
    workers: int = 1,
) -> tuple[MetricReport, list[QueryScore]]:
    """Полный набор метрик по каждой специфичности; вторым значением - оценки запросов"""
    averaging = normalize_averaging(averaging)
    scores = score_queries(predictions, dataset, workers)
    pairs = collect_pairs(predictions, dataset, workers)
    report = MetricReport(
        method=method or predictions.method or "",
        params=params or predictions.params or "",
        mode=predictions.mode,
        averaging=averaging,
    )
    for specificity in specificities:
        entry = SpecificityReport(
            specificity=specificity,
            miou={level.code: miou_from_scores(scores, level, averaging, specificity) for level in LEVEL_ORDER},
            spcs=spcs(pairs.get(specificity, PairSet())),
            abstention={level.code: abstention_from_scores(scores, level, specificity) for level in LEVEL_ORDER},
            per_category=per_category_iou(scores, specificity),
        )
        if predictions.mode == "semantic":
            entry.secs, per_image = secs_pooled(predictions, dataset.taxonomy, specificity, workers)
            report.secs_per_image.extend(per_image)
        report.results[specificity] = entry
    return report, scores


@dataclass
class RecognitionReport:
    method: str
    params: str
    accuracy: dict[str, Mean]
    yes_rate: dict[str, Mean]

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": "recognition",
            "method": self.method,
            "params": self.params,
            "accuracy": {cell: mean.to_dict() for cell, mean in self.accuracy.items()},
            "yes_rate": {cell: mean.to_dict() for cell, mean in self.yes_rate.items()},
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "RecognitionReport":
        return cls(
            method=data.get("method") or "",
            params=data.get("params") or "",
            accuracy={cell: Mean.from_dict(value) for cell, value in data.get("accuracy", {}).items()},
            yes_rate={cell: Mean.from_dict(value) for cell, value in data.get("yes_rate", {}).items()},
        )


def evaluate_recognition(
    answers: AnswerSet, dataset: Dataset, method: str | None = None, params: str | None = None
) -> RecognitionReport:
    return RecognitionReport(
        method=method or answers.method or "",
        params=params or answers.params or "",
        accuracy=recognition_accuracy(answers, dataset),
        yes_rate=recognition_yes_rate(answers),
    )
