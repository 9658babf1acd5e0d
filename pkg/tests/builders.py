# -*- coding: utf-8 -*-
"""
Построители тестовых документов: игрушечная таксономия, датасеты, предсказания "разметка против себя".
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from hiereval.geometry import encode_label_rle, encode_rle
from hiereval.taxonomy import Level, join_path, load_taxonomy

TOY_TAXONOMY = {
    "version": 1,
    "objects": [
        {
            "general": "quadruped",
            "specifics": ["tiger"],
            "parts": [
                {"name": "head", "subparts": ["eyes", "ear"]},
                {"name": "torso", "subparts": []},
            ],
        },
        {
            "general": "aeroplane",
            "specifics": [],
            "parts": [{"name": "body", "subparts": ["windshield"]}],
        },
    ],
}


def square(x0: float, y0: float, x1: float, y1: float) -> list[list[float]]:
    """Прямоугольное кольцо по углам (x0, y0) и (x1, y1)"""
    return [[x0, y0], [x1, y0], [x1, y1], [x0, y1]]


def toy_dataset_document() -> dict:
    return {
        "version": 1,
        "taxonomy": TOY_TAXONOMY,
        "images": [
            {"id": "img1", "width": 16, "height": 16, "split": "train", "object": "quadruped", "specific": "tiger"},
            {"id": "img2", "width": 10, "height": 10, "split": "val", "object": "aeroplane"},
        ],
        "annotations": [
            {"image": "img1", "category": "quadruped", "rings": [square(0, 0, 12, 12)]},
            {"image": "img1", "category": "quadruped/head", "rings": [square(0, 0, 6, 6)]},
            {"image": "img1", "category": "quadruped/head/eyes", "rings": [square(1, 1, 3, 3)]},
            {"image": "img1", "category": "quadruped/head/ear", "rings": [square(4, 4, 6, 6)]},
            {"image": "img1", "category": "quadruped/torso", "rings": [square(6, 6, 12, 12)]},
            {"image": "img2", "category": "aeroplane", "rings": [square(0, 0, 8, 8)]},
            {"image": "img2", "category": "aeroplane/body", "rings": [square(0, 0, 8, 4)]},
            {"image": "img2", "category": "aeroplane/body/windshield", "rings": [square(1, 1, 3, 3)]},
        ],
    }


def write_json(document, path: Path) -> Path:
    path.write_text(json.dumps(document, ensure_ascii=False, indent=2), encoding="utf-8")
    return path


def self_query_document(dataset, specificities=("general", "specific"), method="self", params="gt") -> dict:
    """Query-предсказания, равные разметке: маска каждой размеченной категории"""
    predictions = []
    for image_id in sorted(dataset.images):
        for path, mask in sorted(dataset.ground_truth_masks(image_id).items()):
            for specificity in specificities:
                predictions.append(
                    {
                        "image": image_id,
                        "category": join_path(path),
                        "specificity": specificity,
                        "mask": encode_rle(mask),
                    }
                )
    return {"version": 1, "mode": "query", "method": method, "params": params, "predictions": predictions}


def abstain_query_document(dataset, specificities=("general", "specific")) -> dict:
    predictions = [
        {"image": image_id, "category": join_path(path), "specificity": specificity, "abstain": True}
        for image_id in sorted(dataset.images)
        for path in sorted(dataset.present_categories(image_id))
        for specificity in specificities
    ]
    return {"version": 1, "mode": "query", "method": "abstainer", "params": "-", "predictions": predictions}


def label_maps(dataset, image_id: str) -> dict[Level, np.ndarray]:
    """Карты меток из разметки; более крупные регионы рисуются раньше"""
    image = dataset.images[image_id]
    taxonomy = dataset.taxonomy
    maps = {level: np.zeros((image.height, image.width), dtype=np.int64) for level in Level}
    masks = dataset.ground_truth_masks(image_id)
    for path, mask in sorted(masks.items(), key=lambda item: -item[1].area):
        node = taxonomy.node(path)
        maps[node.level][mask.bits] = node.id
    return maps


def label_map_document(raster: np.ndarray, taxonomy) -> dict:
    ids = [int(v) for v in np.unique(raster) if v != 0]
    index = np.zeros(taxonomy.max_id + 1, dtype=np.int64)
    for k, node_id in enumerate(ids, 1):
        index[node_id] = k
    return {"palette": [taxonomy.node_by_id(i).key for i in ids], "rle": encode_label_rle(index[raster])}


def self_semantic_document(dataset, specificity="general") -> dict:
    predictions = []
    for image_id in sorted(dataset.images):
        maps = label_maps(dataset, image_id)
        predictions.append(
            {
                "image": image_id,
                "specificity": specificity,
                "object_map": label_map_document(maps[Level.OBJECT], dataset.taxonomy),
                "part_map": label_map_document(maps[Level.PART], dataset.taxonomy),
                "subpart_map": label_map_document(maps[Level.SUBPART], dataset.taxonomy),
            }
        )
    return {"version": 1, "mode": "semantic", "method": "self-semantic", "predictions": predictions}


# --- случайные данные -------------------------------------------------------------


def random_taxonomy_document(rng: np.random.Generator) -> dict:
    """Случайная трехуровневая таксономия: 1-3 объекта, 1-3 части, 0-3 подчасти"""
    objects = []
    for o in range(int(rng.integers(1, 4))):
        parts = [
            {"name": f"p{p}", "subparts": [f"s{s}" for s in range(int(rng.integers(0, 4)))]}
            for p in range(int(rng.integers(1, 4)))
        ]
        objects.append({"general": f"o{o}", "specifics": [], "parts": parts})
    return {"version": 1, "objects": objects}


def random_dataset_document(rng: np.random.Generator, images: int = 3) -> dict:
    """
    Случайный корректный датасет из прямоугольников с целыми вершинами:
    части - вертикальные полосы объекта, подчасти - горизонтальные полосы части.
    Потомки лежат внутри родителей, соседи не пересекаются.
    """
    taxonomy_document = random_taxonomy_document(rng)
    taxonomy = load_taxonomy(taxonomy_document)
    objects = taxonomy.by_level(Level.OBJECT)
    image_entries, annotations = [], []
    for i in range(images):
        obj = objects[int(rng.integers(0, len(objects)))]
        parts = taxonomy.children(obj)
        part_w = int(rng.integers(2, 5))
        sub_h = int(rng.integers(1, 4))
        max_subs = max(len(taxonomy.children(part)) for part in parts)
        x0, y0 = int(rng.integers(0, 3)), int(rng.integers(0, 3))
        obj_w = part_w * len(parts)
        obj_h = sub_h * max(max_subs, 1) + int(rng.integers(0, 3))
        width, height = x0 + obj_w + int(rng.integers(0, 4)), y0 + obj_h + int(rng.integers(0, 4))
        image_id = f"r{i}"
        image_entries.append(
            {"id": image_id, "width": width, "height": height, "split": "train", "object": obj.key}
        )
        annotations.append({"image": image_id, "category": obj.key, "rings": [square(x0, y0, x0 + obj_w, y0 + obj_h)]})
        for k, part in enumerate(parts):
            px0 = x0 + k * part_w
            annotations.append(
                {"image": image_id, "category": part.key, "rings": [square(px0, y0, px0 + part_w, y0 + obj_h)]}
            )
            for m, sub in enumerate(taxonomy.children(part)):
                sy0 = y0 + m * sub_h
                annotations.append(
                    {"image": image_id, "category": sub.key, "rings": [square(px0, sy0, px0 + part_w, sy0 + sub_h)]}
                )
    return {"version": 1, "taxonomy": taxonomy_document, "images": image_entries, "annotations": annotations}


