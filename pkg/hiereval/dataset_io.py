# -*- coding: utf-8 -*-
"""
Канонические форматы: датасет (разметка), предсказания (query / semantic),
ответы распознавания. Загрузка, сохранение и проверка датасета.

Все документы - JSON с полем version. Ошибки собираются целиком и выбрасываются
одним DatasetError / PredictionError со списком (место, сообщение).
"""

from __future__ import annotations

import json
import logging
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np
from PIL import Image

from hiereval.config import FORMAT_VERSION, TAXONOMY_FILE
from hiereval.errors import DatasetError, GeometryError, HierEvalError, PredictionError, PreconditionError
from hiereval.geometry import (
    BBox,
    BitMask,
    Region,
    boxes_to_mask,
    decode_label_rle,
    decode_rle,
    encode_label_rle,
    encode_rle,
    rasterize,
    shape_problem,
)
from hiereval.parallel import map_ordered
from hiereval.taxonomy import (
    Level,
    Taxonomy,
    join_path,
    load_taxonomy,
    load_taxonomy_file,
    serialize_taxonomy,
)

logger = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")
SPECIFICITIES = ("general", "specific")
PROMPT_KINDS = ("box", "mask")

DATASET_KEYS = {"version", "taxonomy", "images", "annotations", "meta"}
IMAGE_KEYS = {"id", "width", "height", "split", "object", "specific", "file"}
ANNOTATION_KEYS = {"image", "category", "rings"}
QUERY_FILE_KEYS = {"version", "mode", "predictions", "method", "params"}
QUERY_KEYS = {"image", "category", "specificity", "mask", "box", "abstain"}
SEMANTIC_KEYS = {"image", "specificity", "object_map", "part_map", "subpart_map"}
LABEL_MAP_KEYS = {"palette", "rle"}
ANSWER_FILE_KEYS = {"version", "answers", "method", "params"}
ANSWER_KEYS = {"image", "category", "specificity", "prompt_kind", "answer"}

MAP_LEVELS = {"object_map": Level.OBJECT, "part_map": Level.PART, "subpart_map": Level.SUBPART}
YES_WORD = re.compile(r"\byes\b")


@dataclass(frozen=True)
class ImageRecord:
    image_id: str
    width: int
    height: int
    split: str
    object_path: tuple[str, ...]
    specific: str | None = None
    file: str | None = None


@dataclass(frozen=True)
class AnnotationRecord:
    image_id: str
    category: tuple[str, ...]
    level: Level
    region: Region


class Dataset:
    """Разметка: таксономия, изображения и аннотации. Неизменяема после загрузки"""

    def __init__(
        self,
        taxonomy: Taxonomy,
        images: Iterable[ImageRecord],
        annotations: Iterable[AnnotationRecord],
        taxonomy_ref: str | None = None,
        version: int = FORMAT_VERSION,
        meta: Mapping[str, Any] | None = None,
    ):
        self.taxonomy = taxonomy
        self.images: dict[str, ImageRecord] = {image.image_id: image for image in images}
        self.annotations: tuple[AnnotationRecord, ...] = tuple(annotations)
        self.taxonomy_ref = taxonomy_ref
        self.version = version
        self.meta = dict(meta or {})
        self._by_image: dict[str, list[AnnotationRecord]] = defaultdict(list)
        for annotation in self.annotations:
            self._by_image[annotation.image_id].append(annotation)

    def annotations_for(self, image_id: str) -> list[AnnotationRecord]:
        return list(self._by_image.get(image_id, ()))

    def present_categories(self, image_id: str) -> set[tuple[str, ...]]:
        """Категории с хотя бы одной аннотацией на изображении (наличие для распознавания)"""
        return {annotation.category for annotation in self._by_image.get(image_id, ())}

    def ground_truth_masks(self, image_id: str) -> dict[tuple[str, ...], BitMask]:
        """Маска категории = объединение растеризованных аннотаций этой категории"""
        image = self.images[image_id]
        masks: dict[tuple[str, ...], np.ndarray] = {}
        for annotation in self._by_image.get(image_id, ()):
            bits = rasterize(annotation.region, image.width, image.height).bits
            if annotation.category in masks:
                masks[annotation.category] = masks[annotation.category] | bits
            else:
                masks[annotation.category] = bits
        return {path: BitMask(bits) for path, bits in masks.items()}

    def ground_truth_mask(self, image_id: str, path: str | Sequence[str]) -> BitMask:
        image = self.images[image_id]
        key = self.taxonomy.resolve(path).path
        bits = np.zeros((image.height, image.width), dtype=bool)
        for annotation in self._by_image.get(image_id, ()):
            if annotation.category == key:
                bits |= rasterize(annotation.region, image.width, image.height).bits
        return BitMask(bits)


@dataclass(frozen=True, eq=False)
class QueryPrediction:
    image_id: str
    category: tuple[str, ...]
    level: Level
    specificity: str
    mask: BitMask | None = None
    boxes: tuple[BBox, ...] | None = None
    abstain: bool = False

    def to_mask(self, width: int, height: int) -> BitMask | None:
        """Маска предсказания; боксы объединяются в одну маску; воздержание -> None"""
        if self.abstain:
            return None
        if self.mask is not None:
            return self.mask
        return boxes_to_mask(self.boxes or (), width, height)

    def __eq__(self, other) -> bool:
        if not isinstance(other, QueryPrediction):
            return NotImplemented
        return (
            self.image_id == other.image_id
            and self.category == other.category
            and self.level == other.level
            and self.specificity == other.specificity
            and self.mask == other.mask
            and self.boxes == other.boxes
            and self.abstain == other.abstain
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class SemanticPrediction:
    """Три карты меток (id узлов таксономии, 0 - фон)"""

    image_id: str
    object_map: np.ndarray
    part_map: np.ndarray
    subpart_map: np.ndarray
    specificity: str = "general"

    def maps(self) -> dict[Level, np.ndarray]:
        return {Level.OBJECT: self.object_map, Level.PART: self.part_map, Level.SUBPART: self.subpart_map}

    def to_queries(self, dataset: Dataset) -> list[QueryPrediction]:
        """Бинарные маски для каждой категории разметки изображения (для mIoU и SpCS)"""
        taxonomy = dataset.taxonomy
        queries = []
        for path in sorted(dataset.present_categories(self.image_id)):
            node = taxonomy.node(path)
            label_map = self.maps()[node.level]
            queries.append(
                QueryPrediction(
                    image_id=self.image_id,
                    category=node.path,
                    level=node.level,
                    specificity=self.specificity,
                    mask=BitMask(label_map == node.id),
                )
            )
        return queries

    def __eq__(self, other) -> bool:
        if not isinstance(other, SemanticPrediction):
            return NotImplemented
        return (
            self.image_id == other.image_id
            and self.specificity == other.specificity
            and all(np.array_equal(a, b) for a, b in zip(self.maps().values(), other.maps().values()))
        )

    __hash__ = None


@dataclass(frozen=True)
class PredictionSet:
    mode: str
    records: tuple = ()
    method: str | None = None
    params: str | None = None

    @property
    def abstain_count(self) -> int:
        if self.mode != "query":
            return 0
        return sum(1 for record in self.records if record.abstain)

    def by_image(self) -> dict[str, list]:
        grouped: dict[str, list] = defaultdict(list)
        for record in self.records:
            grouped[record.image_id].append(record)
        return dict(grouped)

    def query_records(self, dataset: Dataset) -> list[QueryPrediction]:
        """Запросы в единой форме: для semantic-режима - производные маски по категориям"""
        if self.mode == "query":
            return list(self.records)
        queries: list[QueryPrediction] = []
        for record in self.records:
            queries.extend(record.to_queries(dataset))
        return queries


@dataclass(frozen=True)
class RecognitionAnswer:
    image_id: str
    category: tuple[str, ...]
    level: Level
    specificity: str
    prompt_kind: str
    model_answer: bool
    ground_truth_present: bool

    @property
    def correct(self) -> bool:
        return self.model_answer == self.ground_truth_present


@dataclass(frozen=True)
class AnswerSet:
    answers: tuple[RecognitionAnswer, ...]
    method: str | None = None
    params: str | None = None

    def __len__(self) -> int:
        return len(self.answers)

    def __iter__(self):
        return iter(self.answers)


# --- чтение -------------------------------------------------------------------------


def read_json(path: str | Path, error_cls: type[DatasetError] = DatasetError) -> Any:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Файл {path} не найден")
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise error_cls([(f"{path}:{exc.lineno}:{exc.colno}", f"JSON не разбирается: {exc.msg}")]) from exc


def write_json(payload: Any, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, ensure_ascii=False, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _unknown_keys(record: Mapping, allowed: set[str], where: str, issues: list) -> None:
    for key in sorted(set(record) - allowed):
        issues.append((where, f"неизвестный ключ '{key}'"))


def _positive_int(value: Any) -> int | None:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value or value <= 0:
        return None
    return int(value)


def _resolve_taxonomy(ref: Any, base_dir: Path, strict: bool) -> tuple[Taxonomy, str | None]:
    if ref is None or ref == "spin":
        return load_taxonomy_file(TAXONOMY_FILE, strict=strict), "spin"
    if isinstance(ref, str):
        path = Path(ref)
        if not path.is_absolute():
            path = base_dir / path
        return load_taxonomy_file(path, strict=strict), ref
    if isinstance(ref, Mapping):
        return load_taxonomy(ref, strict=strict), None
    raise DatasetError([("taxonomy", "ожидается 'spin', путь к файлу или вложенный документ")])


def _read_image_size(images_dir: Path, record: ImageRecord) -> tuple[int, int] | None:
    """Размер файла изображения через Pillow (читается только заголовок)"""
    candidates = [images_dir / record.file] if record.file else sorted(images_dir.glob(f"{record.image_id}.*"))
    for candidate in candidates:
        if candidate.is_file():
            with Image.open(candidate) as image:
                return image.width, image.height
    return None


def parse_dataset(
    document: Mapping[str, Any],
    base_dir: Path = Path("."),
    strict: bool = False,
    images_dir: str | Path | None = None,
) -> Dataset:
    issues: list[tuple[str, str]] = []
    if not isinstance(document, Mapping):
        raise DatasetError([("$", "документ датасета должен быть объектом")])
    if strict:
        _unknown_keys(document, DATASET_KEYS, "$", issues)
    if "version" not in document:
        issues.append(("version", "отсутствует поле version"))

    taxonomy, taxonomy_ref = _resolve_taxonomy(document.get("taxonomy"), base_dir, strict)

    images: dict[str, ImageRecord] = {}
    for i, raw in enumerate(document.get("images") or []):
        where = f"images[{i}]"
        if not isinstance(raw, Mapping):
            issues.append((where, "ожидается объект"))
            continue
        if strict:
            _unknown_keys(raw, IMAGE_KEYS, where, issues)
        image_id = raw.get("id")
        if image_id is None or str(image_id) == "":
            issues.append((f"{where}.id", "отсутствует id"))
            continue
        image_id = str(image_id)
        width, height = _positive_int(raw.get("width")), _positive_int(raw.get("height"))
        if width is None or height is None:
            issues.append((where, f"размеры должны быть положительными целыми: {raw.get('width')}x{raw.get('height')}"))
            continue
        split = raw.get("split")
        if split not in SPLITS:
            issues.append((f"{where}.split", f"неизвестная выборка '{split}'"))
            continue
        try:
            node = taxonomy.resolve(raw.get("object") or "")
        except PreconditionError as exc:
            issues.append((f"{where}.object", str(exc)))
            continue
        if node.level is not Level.OBJECT:
            issues.append((f"{where}.object", f"{node.key} не является объектом"))
            continue
        specific = raw.get("specific") or node.specific_object_name
        if specific is not None and specific not in taxonomy.specifics:
            message = f"специфичное имя '{specific}' отсутствует в таксономии"
            if strict:
                issues.append((f"{where}.specific", message))
            else:
                logger.warning(f"⚠️ {where}: {message}")
        if image_id in images:
            issues.append((f"{where}.id", f"дублирующийся id изображения '{image_id}'"))
            continue
        images[image_id] = ImageRecord(image_id, width, height, split, node.path, specific, raw.get("file"))

    if images_dir is not None:
        images_dir = Path(images_dir)
        missing = 0
        for i, record in enumerate(images.values()):
            size = _read_image_size(images_dir, record)
            if size is None:
                missing += 1
                continue
            if size != (record.width, record.height):
                issues.append(
                    (f"images[{i}]", f"размер файла {size[0]}x{size[1]} не совпадает с {record.width}x{record.height}")
                )
        if missing:
            logger.warning(f"⚠️ Не найдено файлов изображений: {missing}")

    annotations: list[AnnotationRecord] = []
    for i, raw in enumerate(document.get("annotations") or []):
        where = f"annotations[{i}]"
        if not isinstance(raw, Mapping):
            issues.append((where, "ожидается объект"))
            continue
        if strict:
            _unknown_keys(raw, ANNOTATION_KEYS, where, issues)
        image_id = str(raw.get("image"))
        if image_id not in images:
            issues.append((f"{where}.image", f"неизвестное изображение '{image_id}'"))
            continue
        try:
            node = taxonomy.resolve(raw.get("category") or "")
        except PreconditionError as exc:
            issues.append((f"{where}.category", str(exc)))
            continue
        if node.general_object_name != images[image_id].object_path[0]:
            issues.append(
                (f"{where}.category", f"{node.key} не относится к объекту изображения '{images[image_id].object_path[0]}'")
            )
            continue
        try:
            region = Region.from_coordinates(raw.get("rings") or [])
        except (GeometryError, TypeError, ValueError) as exc:
            issues.append((f"{where}.rings", str(exc)))
            continue
        annotations.append(AnnotationRecord(image_id, node.path, node.level, region))

    if issues:
        raise DatasetError(issues)
    return Dataset(
        taxonomy,
        images.values(),
        annotations,
        taxonomy_ref=taxonomy_ref,
        version=document.get("version", FORMAT_VERSION),
        meta=document.get("meta"),
    )


def load_dataset(path: str | Path, strict: bool = False, images_dir: str | Path | None = None) -> Dataset:
    """Загрузка датасета; все нарушения схемы и ссылок - одним DatasetError"""
    path = Path(path)
    document = read_json(path)
    dataset = parse_dataset(document, base_dir=path.parent, strict=strict, images_dir=images_dir)
    logger.info(f"✅ Датасет {path.name}: {len(dataset.images)} изображений, {len(dataset.annotations)} аннотаций")
    return dataset


def dataset_to_document(dataset: Dataset) -> dict[str, Any]:
    taxonomy: Any = dataset.taxonomy_ref if dataset.taxonomy_ref else serialize_taxonomy(dataset.taxonomy)
    images = []
    for image in dataset.images.values():
        entry: dict[str, Any] = {
            "id": image.image_id,
            "width": image.width,
            "height": image.height,
            "split": image.split,
            "object": join_path(image.object_path),
        }
        if image.specific:
            entry["specific"] = image.specific
        if image.file:
            entry["file"] = image.file
        images.append(entry)
    document: dict[str, Any] = {
        "version": dataset.version,
        "taxonomy": taxonomy,
        "images": images,
        "annotations": [
            {"image": a.image_id, "category": join_path(a.category), "rings": a.region.to_coordinates()}
            for a in dataset.annotations
        ],
    }
    if dataset.meta:
        document["meta"] = dataset.meta
    return document


def save_dataset(dataset: Dataset, path: str | Path) -> Path:
    return write_json(dataset_to_document(dataset), path)


# --- проверка датасета ---------------------------------------------------------------

EXPECTATION_KEYS = (
    "images",
    "splits",
    "objects",
    "parts",
    "subparts",
    "specifics",
    "object_annotations",
    "part_annotations",
    "subpart_annotations",
)


@dataclass
class ValidationReport:
    image_count: int
    split_counts: dict[str, int]
    category_counts: dict[str, int]
    annotation_counts: dict[str, int]
    category_histogram: dict[str, int]
    checks: list[dict[str, Any]] = field(default_factory=list)
    issues: list[dict[str, str]] = field(default_factory=list)
    warnings: list[dict[str, str]] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.issues and all(check["passed"] for check in self.checks)

    def failed_checks(self) -> list[dict[str, Any]]:
        return [check for check in self.checks if not check["passed"]]

    def to_dict(self) -> dict[str, Any]:
        return {
            "passed": self.passed,
            "image_count": self.image_count,
            "split_counts": self.split_counts,
            "category_counts": self.category_counts,
            "annotation_counts": self.annotation_counts,
            "category_histogram": self.category_histogram,
            "checks": self.checks,
            "issues": self.issues,
            "warnings": self.warnings,
            "notes": self.notes,
        }


def _check_annotation(args: tuple[AnnotationRecord, int, int]) -> tuple[int, str | None]:
    """Площадь растра и причина, по которой у региона не определены дескрипторы формы"""
    annotation, width, height = args
    area = rasterize(annotation.region, width, height).area
    return area, (shape_problem(annotation.region) if area > 0 else None)


def validate_dataset(
    dataset: Dataset,
    expected: Mapping[str, Sequence[int]] | None = None,
    strict: bool = False,
    workers: int = 1,
) -> ValidationReport:
    """
    Счетчики по уровням, выборкам и категориям + сверка с ожидаемыми значениями.
    Нарушения не выбрасываются, а попадают в отчет.
    """
    taxonomy = dataset.taxonomy
    split_counts = {split: 0 for split in SPLITS}
    for image in dataset.images.values():
        split_counts[image.split] += 1
    annotation_levels = Counter(annotation.level for annotation in dataset.annotations)
    # одна сущность на (изображение, категорию): несколько полигонов одной категории не дублируют счет
    entities = {(a.image_id, a.category): a.level for a in dataset.annotations}
    entity_levels = Counter(entities.values())
    histogram = Counter(join_path(category) for _, category in entities)

    report = ValidationReport(
        image_count=len(dataset.images),
        split_counts=split_counts,
        category_counts={
            "objects": taxonomy.counts[Level.OBJECT],
            "parts": taxonomy.counts[Level.PART],
            "subparts": taxonomy.counts[Level.SUBPART],
            "specifics": len(taxonomy.specifics),
        },
        annotation_counts={
            "object_annotations": entity_levels[Level.OBJECT],
            "part_annotations": entity_levels[Level.PART],
            "subpart_annotations": entity_levels[Level.SUBPART],
            "annotation_records": sum(annotation_levels.values()),
        },
        category_histogram=dict(sorted(histogram.items())),
        notes=list(taxonomy.notes),
    )

    jobs = [(a, dataset.images[a.image_id].width, dataset.images[a.image_id].height) for a in dataset.annotations]
    checked = map_ordered(_check_annotation, jobs, workers)
    for idx, (area, problem) in enumerate(checked):
        category = join_path(dataset.annotations[idx].category)
        if area == 0:
            message = f"{category}: нулевая площадь после растеризации"
        elif problem:
            message = f"{category}: форма не определена ({problem})"
        else:
            continue
        entry = {"location": f"annotations[{idx}]", "message": message}
        (report.issues if strict else report.warnings).append(entry)

    actual = {
        "images": (report.image_count,),
        "splits": tuple(split_counts[split] for split in SPLITS),
        **{key: (value,) for key, value in report.category_counts.items()},
        **{key: (value,) for key, value in report.annotation_counts.items()},
    }
    for key, values in sorted((expected or {}).items()):
        values = tuple(values)
        if key not in actual:
            report.checks.append(
                {"name": key, "expected": list(values), "actual": None, "passed": False, "delta": None}
            )
            continue
        got = actual[key]
        passed = got == values
        delta = [g - v for g, v in zip(got, values)] if len(got) == len(values) else None
        report.checks.append(
            {"name": key, "expected": list(values), "actual": list(got), "passed": passed, "delta": delta}
        )
    return report


# --- предсказания -------------------------------------------------------------------


def _check_mode(document: Mapping, mode: str, issues: list) -> None:
    declared = document.get("mode")
    if declared != mode:
        issues.append(("mode", f"заголовок файла '{declared}' не совпадает с режимом '{mode}'"))


def _parse_query(raw: Mapping, where: str, dataset: Dataset, strict: bool, issues: list) -> QueryPrediction | None:
    if any(key in raw for key in MAP_LEVELS):
        issues.append((where, "запись semantic-режима в query-файле (смешанные режимы)"))
        return None
    if strict:
        _unknown_keys(raw, QUERY_KEYS, where, issues)
    image_id = str(raw.get("image"))
    image = dataset.images.get(image_id)
    if image is None:
        issues.append((f"{where}.image", f"неизвестное изображение '{image_id}'"))
        return None
    try:
        node = dataset.taxonomy.resolve(raw.get("category") or "")
    except PreconditionError as exc:
        issues.append((f"{where}.category", str(exc)))
        return None
    specificity = raw.get("specificity")
    if specificity not in SPECIFICITIES:
        issues.append((f"{where}.specificity", f"неизвестная специфичность '{specificity}'"))
        return None

    payload = [key for key in ("mask", "box", "abstain") if key in raw and raw[key] not in (None, False)]
    if len(payload) != 1:
        issues.append((where, f"нужно ровно одно из mask|box|abstain, получено {payload or 'ничего'}"))
        return None
    kind = payload[0]
    try:
        if kind == "abstain":
            if raw["abstain"] is not True:
                raise GeometryError("abstain должен быть true")
            return QueryPrediction(image_id, node.path, node.level, specificity, abstain=True)
        if kind == "mask":
            counts = raw["mask"]["rle"] if isinstance(raw["mask"], Mapping) else raw["mask"]
            mask = decode_rle(counts, image.width, image.height)
            return QueryPrediction(image_id, node.path, node.level, specificity, mask=mask)
        boxes_raw = raw["box"]
        if boxes_raw and isinstance(boxes_raw[0], (int, float)):
            boxes_raw = [boxes_raw]
        boxes = tuple(BBox.from_list(box) for box in boxes_raw)
        return QueryPrediction(image_id, node.path, node.level, specificity, boxes=boxes)
    except (GeometryError, TypeError, ValueError, KeyError) as exc:
        issues.append((f"{where}.{kind}", str(exc)))
        return None


def _parse_label_map(
    raw: Any, level: Level, image: ImageRecord, dataset: Dataset, where: str, strict: bool, issues: list
) -> np.ndarray | None:
    if not isinstance(raw, Mapping):
        issues.append((where, "ожидается объект {palette, rle}"))
        return None
    if strict:
        _unknown_keys(raw, LABEL_MAP_KEYS, where, issues)
    lookup = [0]
    ok = True
    for k, entry in enumerate(raw.get("palette") or []):
        try:
            node = dataset.taxonomy.resolve(entry)
        except PreconditionError as exc:
            issues.append((f"{where}.palette[{k}]", str(exc)))
            ok = False
            continue
        if node.level is not level:
            issues.append((f"{where}.palette[{k}]", f"{node.key} имеет уровень {node.level.name}, ожидается {level.name}"))
            ok = False
            continue
        lookup.append(node.id)
    try:
        raster = decode_label_rle(raw.get("rle") or [], image.width, image.height)
    except GeometryError as exc:
        issues.append((f"{where}.rle", str(exc)))
        return None
    if not ok:
        return None
    if raster.size and (raster.min() < 0 or raster.max() >= len(lookup)):
        issues.append((f"{where}.rle", f"значение вне палитры (размер палитры {len(lookup) - 1})"))
        return None
    return np.asarray(lookup, dtype=np.int64)[raster]


def _parse_semantic(raw: Mapping, where: str, dataset: Dataset, strict: bool, issues: list) -> SemanticPrediction | None:
    if any(key in raw for key in ("mask", "box", "abstain", "category")):
        issues.append((where, "запись query-режима в semantic-файле (смешанные режимы)"))
        return None
    if strict:
        _unknown_keys(raw, SEMANTIC_KEYS, where, issues)
    image_id = str(raw.get("image"))
    image = dataset.images.get(image_id)
    if image is None:
        issues.append((f"{where}.image", f"неизвестное изображение '{image_id}'"))
        return None
    specificity = raw.get("specificity", "general")
    if specificity not in SPECIFICITIES:
        issues.append((f"{where}.specificity", f"неизвестная специфичность '{specificity}'"))
        return None
    maps = {}
    for key, level in MAP_LEVELS.items():
        maps[key] = _parse_label_map(raw.get(key), level, image, dataset, f"{where}.{key}", strict, issues)
    if any(value is None for value in maps.values()):
        return None
    return SemanticPrediction(image_id, specificity=specificity, **maps)


def parse_predictions(document: Mapping[str, Any], mode: str, dataset: Dataset, strict: bool = False) -> PredictionSet:
    issues: list[tuple[str, str]] = []
    if not isinstance(document, Mapping):
        raise PredictionError([("$", "документ предсказаний должен быть объектом")])
    _check_mode(document, mode, issues)
    if issues:
        raise PredictionError(issues)
    if strict:
        _unknown_keys(document, QUERY_FILE_KEYS, "$", issues)

    records = []
    seen: set[tuple] = set()
    for i, raw in enumerate(document.get("predictions") or []):
        where = f"predictions[{i}]"
        if not isinstance(raw, Mapping):
            issues.append((where, "ожидается объект"))
            continue
        if mode == "query":
            record = _parse_query(raw, where, dataset, strict, issues)
            key = None if record is None else (record.image_id, record.category, record.specificity)
        else:
            record = _parse_semantic(raw, where, dataset, strict, issues)
            key = None if record is None else (record.image_id, record.specificity)
        if record is None:
            continue
        if key in seen:
            issues.append((where, f"повторное предсказание для {key}"))
            continue
        seen.add(key)
        records.append(record)

    if issues:
        raise PredictionError(issues)
    return PredictionSet(mode, tuple(records), method=document.get("method"), params=document.get("params"))


def load_predictions(path: str | Path, mode: str, dataset: Dataset, strict: bool = False) -> PredictionSet:
    document = read_json(path, PredictionError)
    predictions = parse_predictions(document, mode, dataset, strict=strict)
    logger.info(
        f"✅ Предсказания {Path(path).name}: {len(predictions.records)} записей ({mode}), "
        f"воздержаний: {predictions.abstain_count}"
    )
    return predictions


def _label_map_document(label_map: np.ndarray, taxonomy: Taxonomy) -> dict[str, Any]:
    ids = [int(v) for v in np.unique(label_map) if v != 0]
    palette = [taxonomy.node_by_id(node_id).key for node_id in ids]
    index = np.zeros(taxonomy.max_id + 1, dtype=np.int64)
    for k, node_id in enumerate(ids, 1):
        index[node_id] = k
    return {"palette": palette, "rle": encode_label_rle(index[label_map])}


def predictions_to_document(predictions: PredictionSet, dataset: Dataset) -> dict[str, Any]:
    entries = []
    for record in predictions.records:
        if predictions.mode == "query":
            entry: dict[str, Any] = {
                "image": record.image_id,
                "category": join_path(record.category),
                "specificity": record.specificity,
            }
            if record.abstain:
                entry["abstain"] = True
            elif record.mask is not None:
                entry["mask"] = encode_rle(record.mask)
            else:
                entry["box"] = [box.to_list() for box in record.boxes or ()]
        else:
            entry = {"image": record.image_id, "specificity": record.specificity}
            for key, level in MAP_LEVELS.items():
                entry[key] = _label_map_document(record.maps()[level], dataset.taxonomy)
        entries.append(entry)
    document: dict[str, Any] = {"version": FORMAT_VERSION, "mode": predictions.mode, "predictions": entries}
    if predictions.method:
        document["method"] = predictions.method
    if predictions.params:
        document["params"] = predictions.params
    return document


def save_predictions(predictions: PredictionSet, dataset: Dataset, path: str | Path) -> Path:
    return write_json(predictions_to_document(predictions, dataset), path)


# --- ответы распознавания ------------------------------------------------------------


def _parse_answer_text(value: Any, strict: bool) -> bool | None:
    if isinstance(value, bool):
        return value
    if not isinstance(value, str):
        return None
    text = value.strip().lower()
    if text in ("yes", "no"):
        return text == "yes"
    if strict:
        return None
    # свободный текст модели: ответ "yes", если в нем есть отдельное слово "yes"
    return YES_WORD.search(text) is not None


def parse_answers(document: Mapping[str, Any], dataset: Dataset, strict: bool = False) -> AnswerSet:
    issues: list[tuple[str, str]] = []
    if not isinstance(document, Mapping):
        raise PredictionError([("$", "документ ответов должен быть объектом")])
    if strict:
        _unknown_keys(document, ANSWER_FILE_KEYS, "$", issues)
    answers = []
    for i, raw in enumerate(document.get("answers") or []):
        where = f"answers[{i}]"
        if not isinstance(raw, Mapping):
            issues.append((where, "ожидается объект"))
            continue
        if strict:
            _unknown_keys(raw, ANSWER_KEYS, where, issues)
        image_id = str(raw.get("image"))
        if image_id not in dataset.images:
            issues.append((f"{where}.image", f"неизвестное изображение '{image_id}'"))
            continue
        try:
            node = dataset.taxonomy.resolve(raw.get("category") or "")
        except PreconditionError as exc:
            issues.append((f"{where}.category", str(exc)))
            continue
        specificity = raw.get("specificity")
        if specificity not in SPECIFICITIES:
            issues.append((f"{where}.specificity", f"неизвестная специфичность '{specificity}'"))
            continue
        prompt_kind = raw.get("prompt_kind")
        if prompt_kind not in PROMPT_KINDS:
            issues.append((f"{where}.prompt_kind", f"неизвестный тип подсказки '{prompt_kind}'"))
            continue
        answer = _parse_answer_text(raw.get("answer"), strict)
        if answer is None:
            issues.append((f"{where}.answer", f"ответ должен быть yes или no, получено {raw.get('answer')!r}"))
            continue
        present = node.path in dataset.present_categories(image_id)
        answers.append(RecognitionAnswer(image_id, node.path, node.level, specificity, prompt_kind, answer, present))
    if issues:
        raise PredictionError(issues)
    return AnswerSet(tuple(answers), method=document.get("method"), params=document.get("params"))


def load_answers(path: str | Path, dataset: Dataset, strict: bool = False) -> AnswerSet:
    document = read_json(path, PredictionError)
    answers = parse_answers(document, dataset, strict=strict)
    logger.info(f"✅ Ответы {Path(path).name}: {len(answers)} записей")
    return answers


def answers_to_document(answers: AnswerSet) -> dict[str, Any]:
    document: dict[str, Any] = {
        "version": FORMAT_VERSION,
        "answers": [
            {
                "image": a.image_id,
                "category": join_path(a.category),
                "specificity": a.specificity,
                "prompt_kind": a.prompt_kind,
                "answer": "yes" if a.model_answer else "no",
            }
            for a in answers
        ],
    }
    if answers.method:
        document["method"] = answers.method
    if answers.params:
        document["params"] = answers.params
    return document


def save_answers(answers: AnswerSet, path: str | Path) -> Path:
    return write_json(answers_to_document(answers), path)


def detect_kind(document: Mapping[str, Any]) -> str:
    """Тип документа по ключам: dataset | query | semantic | answers"""
    if "answers" in document:
        return "answers"
    if "mode" in document:
        return str(document["mode"])
    if "images" in document:
        return "dataset"
    raise HierEvalError("Не удалось определить тип документа")
