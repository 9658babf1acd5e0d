# -*- coding: utf-8 -*-
"""
Импорт опубликованного релиза SPIN (COCO-подобные JSON по выборкам) в канонический формат.

Ожидаемая раскладка релиза:
    <release_dir>/{train,val,test}.json   (или любые *train*.json / *val*.json / *test*.json)

Каждый файл: images[{id, file_name, width?, height?, specific?}],
categories[{id, name, supercategory, path?}],
annotations[{image_id, category_id, segmentation}].
Путь категории - `path`, если есть, иначе supercategory + "/" + name (в нижнем регистре).
Сегментации в виде COCO-полигонов (плоские списки x1,y1,x2,y2,...); RLE-сегментации пропускаются.
"""

from __future__ import annotations

import logging
from collections import Counter
from pathlib import Path
from typing import Any, Mapping

from PIL import Image

from hiereval.dataset_io import SPLITS, AnnotationRecord, Dataset, ImageRecord, read_json
from hiereval.errors import DatasetError, GeometryError, PreconditionError, TaxonomyError
from hiereval.geometry import Region
from hiereval.taxonomy import Level, Taxonomy, split_path

logger = logging.getLogger(__name__)


def find_split_files(release_dir: str | Path) -> dict[str, Path]:
    release_dir = Path(release_dir)
    if not release_dir.is_dir():
        raise FileNotFoundError(f"Папка релиза {release_dir} не найдена")
    found: dict[str, Path] = {}
    for split in SPLITS:
        exact = release_dir / f"{split}.json"
        if exact.is_file():
            found[split] = exact
            continue
        candidates = sorted(release_dir.glob(f"*{split}*.json"))
        if candidates:
            found[split] = candidates[0]
    if not found:
        raise DatasetError([(str(release_dir), "не найдено ни одного файла выборки (train/val/test)")])
    return found


def category_path(category: Mapping[str, Any]) -> tuple[str, ...]:
    if category.get("path"):
        return split_path(str(category["path"]).lower())
    name = str(category.get("name", "")).strip().lower()
    parent = str(category.get("supercategory") or "").strip().lower()
    if not parent:
        return split_path(name)
    # "Quadruped Head" при supercategory "Quadruped"
    prefix = parent.split("/")[-1] + " "
    if name.startswith(prefix):
        name = name[len(prefix) :]
    return split_path(f"{parent}/{name}")


def coco_rings(segmentation: Any) -> list[list[list[float]]]:
    """COCO-полигоны [[x1, y1, x2, y2, ...], ...] -> кольца [[x, y], ...]"""
    if not isinstance(segmentation, list):
        raise GeometryError("RLE-сегментация не поддерживается импортом")
    rings = []
    for flat in segmentation:
        if len(flat) % 2:
            raise GeometryError(f"Нечетное число координат в полигоне: {len(flat)}")
        rings.append([[float(flat[k]), float(flat[k + 1])] for k in range(0, len(flat), 2)])
    return rings


def read_image_size(images_dir: Path, file_name: str) -> tuple[int, int] | None:
    path = images_dir / file_name
    if not path.is_file():
        return None
    with Image.open(path) as image:
        return image.width, image.height


def _import_split(
    split: str,
    document: Mapping[str, Any],
    taxonomy: Taxonomy,
    images_dir: Path | None,
    issues: list[tuple[str, str]],
    skipped: Counter,
) -> tuple[list[ImageRecord], list[AnnotationRecord], dict[str, str]]:
    categories: dict[Any, tuple[str, ...]] = {}
    for i, category in enumerate(document.get("categories") or []):
        try:
            path = category_path(category)
        except PreconditionError as exc:
            issues.append((f"{split}.categories[{i}]", str(exc)))
            continue
        if path not in taxonomy:
            issues.append((f"{split}.categories[{i}]", f"категория '{'/'.join(path)}' отсутствует в таксономии"))
            continue
        categories[category["id"]] = taxonomy.node(path).path

    raw_images: dict[Any, Mapping[str, Any]] = {}
    for image in document.get("images") or []:
        raw_images[image["id"]] = image

    by_image: dict[Any, list[tuple[tuple[str, ...], list]]] = {}
    for i, annotation in enumerate(document.get("annotations") or []):
        where = f"{split}.annotations[{i}]"
        category = categories.get(annotation.get("category_id"))
        if category is None:
            issues.append((where, f"неизвестный category_id {annotation.get('category_id')}"))
            continue
        if annotation.get("image_id") not in raw_images:
            issues.append((where, f"неизвестный image_id {annotation.get('image_id')}"))
            continue
        try:
            rings = coco_rings(annotation.get("segmentation"))
        except GeometryError:
            skipped["rle"] += 1
            continue
        if not rings:
            skipped["empty"] += 1
            continue
        by_image.setdefault(annotation["image_id"], []).append((category, rings))

    images: list[ImageRecord] = []
    annotations: list[AnnotationRecord] = []
    specifics: dict[str, str] = {}
    for coco_id, raw in raw_images.items():
        where = f"{split}.images[{coco_id}]"
        file_name = str(raw.get("file_name") or coco_id)
        image_id = Path(file_name).stem
        entries = by_image.get(coco_id, [])
        roots = {category[0] for category, _ in entries}
        if len(roots) != 1:
            issues.append((where, f"ожидается ровно один объект на изображении, найдено {sorted(roots) or 'ни одного'}"))
            continue
        root = roots.pop()

        width, height = raw.get("width"), raw.get("height")
        if not width or not height:
            size = read_image_size(images_dir, file_name) if images_dir else None
            if size is None:
                issues.append((where, "размеры не указаны и файл изображения не найден"))
                continue
            width, height = size

        specific = raw.get("specific")
        if specific:
            specifics[str(specific)] = root
        images.append(ImageRecord(image_id, int(width), int(height), split, (root,), specific, file_name))
        for category, rings in entries:
            try:
                region = Region.from_coordinates(rings)
            except GeometryError as exc:
                issues.append((where, str(exc)))
                continue
            node = taxonomy.node(category)
            annotations.append(AnnotationRecord(image_id, node.path, node.level, region))
    return images, annotations, specifics


def import_spin(
    release_dir: str | Path,
    taxonomy: Taxonomy,
    images_dir: str | Path | None = None,
    taxonomy_ref: str | None = "spin",
) -> Dataset:
    """Собрать канонический датасет из файлов релиза; специфичные имена дополняют таксономию"""
    images_dir = Path(images_dir) if images_dir else None
    issues: list[tuple[str, str]] = []
    skipped: Counter = Counter()
    images: list[ImageRecord] = []
    annotations: list[AnnotationRecord] = []
    specifics: dict[str, str] = {}

    for split, path in find_split_files(release_dir).items():
        logger.info(f"📥 Импорт выборки {split}: {path.name}")
        split_images, split_annotations, split_specifics = _import_split(
            split, read_json(path), taxonomy, images_dir, issues, skipped
        )
        images.extend(split_images)
        annotations.extend(split_annotations)
        specifics.update(split_specifics)

    seen: set[str] = set()
    for image in images:
        if image.image_id in seen:
            issues.append((image.image_id, "дублирующийся id изображения между выборками"))
        seen.add(image.image_id)
    if issues:
        raise DatasetError(issues)
    if skipped:
        logger.warning(f"⚠️ Пропущено аннотаций без полигонов: {dict(skipped)}")

    # ссылка на файл таксономии остается верной, только если она не дополнялась
    new_specifics = {name: general for name, general in specifics.items() if name not in taxonomy.specifics}
    if new_specifics:
        try:
            taxonomy = taxonomy.with_specifics(new_specifics)
        except (PreconditionError, TaxonomyError) as exc:
            raise DatasetError([("specific", str(exc))]) from exc
        taxonomy_ref = None

    levels = Counter(annotation.level for annotation in annotations)
    logger.info(
        f"✅ Импортировано {len(images)} изображений; аннотаций: "
        f"O={levels[Level.OBJECT]}, P={levels[Level.PART]}, S={levels[Level.SUBPART]}"
    )
    return Dataset(taxonomy, images, annotations, taxonomy_ref=taxonomy_ref)
