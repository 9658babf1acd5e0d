# -*- coding: utf-8 -*-
"""
Иерархия объект -> часть -> подчасть (SPIN), специфичные/общие имена объектов
и проверка вхождения (entailment) для SeCS и построения пар SpCS.

Идентичность узла - полный путь: имена вроде "eyes" повторяются у разных родителей.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from enum import IntEnum
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from hiereval.errors import PreconditionError, TaxonomyError

logger = logging.getLogger(__name__)

PATH_SEPARATOR = "/"
DOCUMENT_KEYS = {"version", "objects", "nodes", "notes"}
OBJECT_KEYS = {"general", "specifics", "parts"}
PART_KEYS = {"name", "subparts"}


class Level(IntEnum):
    """Уровень детализации; порядок Subpart < Part < Object"""

    SUBPART = 1
    PART = 2
    OBJECT = 3

    @property
    def path_length(self) -> int:
        return 4 - int(self)

    @property
    def code(self) -> str:
        return {Level.SUBPART: "S", Level.PART: "P", Level.OBJECT: "O"}[self]

    @classmethod
    def from_path_length(cls, length: int) -> "Level":
        if length not in (1, 2, 3):
            raise PreconditionError(f"Длина пути {length} не соответствует ни одному уровню")
        return cls(4 - length)

    @classmethod
    def from_code(cls, code: str) -> "Level":
        for level in cls:
            if level.code == code.upper() or level.name.lower() == code.lower():
                return level
        raise PreconditionError(f"Неизвестный уровень '{code}'")


def split_path(path: str | Sequence[str]) -> tuple[str, ...]:
    """'quadruped/head/eyes' или ['quadruped', 'head', 'eyes'] -> кортеж имен"""
    if isinstance(path, str):
        parts = path.split(PATH_SEPARATOR)
    else:
        parts = list(path)
    return tuple(" ".join(str(p).strip().split()) for p in parts)


def join_path(path: Sequence[str]) -> str:
    return PATH_SEPARATOR.join(path)


@dataclass(frozen=True)
class CategoryNode:
    path: tuple[str, ...]
    level: Level
    id: int = field(default=0, compare=False)
    specific_object_name: str | None = field(default=None, compare=False)

    def __post_init__(self):
        if len(self.path) != self.level.path_length:
            raise PreconditionError(
                f"Путь {join_path(self.path)} не соответствует уровню {self.level.name}"
            )

    @property
    def general_object_name(self) -> str:
        return self.path[0]

    @property
    def name(self) -> str:
        return self.path[-1]

    @property
    def key(self) -> str:
        return join_path(self.path)

    def __str__(self) -> str:
        return self.key


class Taxonomy:
    """Неизменяемый лес категорий; безопасен для чтения из любого числа потоков"""

    def __init__(
        self,
        paths: Iterable[tuple[str, ...]],
        specifics: Mapping[str, str] | None = None,
        version: int = 1,
        notes: Sequence[str] = (),
    ):
        self.version = version
        self.notes = tuple(notes)
        self._specifics: dict[str, str] = dict(specifics or {})
        self._by_path: dict[tuple[str, ...], CategoryNode] = {}
        self._by_id: dict[int, CategoryNode] = {}
        for idx, path in enumerate(paths, 1):
            node = CategoryNode(path=tuple(path), level=Level.from_path_length(len(path)), id=idx)
            self._by_path[node.path] = node
            self._by_id[idx] = node

        self.parent_edges: dict[int, int] = {}
        self._children: dict[int, list[CategoryNode]] = {node_id: [] for node_id in self._by_id}
        for node in self._by_id.values():
            if node.level is Level.OBJECT:
                continue
            parent = self._by_path[node.path[:-1]]
            self.parent_edges[node.id] = parent.id
            self._children[parent.id].append(node)

        self.nodes = frozenset(self._by_path.values())
        self.counts = {level: 0 for level in Level}
        for node in self.nodes:
            self.counts[node.level] += 1

        max_id = max(self._by_id, default=0)
        self._parent_table = np.zeros(max_id + 1, dtype=np.int64)
        self._level_table = np.zeros(max_id + 1, dtype=np.int64)
        for node_id, node in self._by_id.items():
            self._parent_table[node_id] = self.parent_edges.get(node_id, 0)
            self._level_table[node_id] = int(node.level)

    def __len__(self) -> int:
        return len(self._by_id)

    def __contains__(self, path) -> bool:
        try:
            return split_path(path) in self._by_path
        except PreconditionError:
            return False

    @property
    def specifics(self) -> dict[str, str]:
        return dict(self._specifics)

    @property
    def max_id(self) -> int:
        return len(self._parent_table) - 1

    def iter_nodes(self) -> list[CategoryNode]:
        """Узлы в порядке id (порядок документа)"""
        return [self._by_id[node_id] for node_id in sorted(self._by_id)]

    def by_level(self, level: Level) -> list[CategoryNode]:
        return [node for node in self.iter_nodes() if node.level is level]

    def node_by_id(self, node_id: int) -> CategoryNode:
        try:
            return self._by_id[int(node_id)]
        except KeyError:
            raise PreconditionError(f"Неизвестный id категории {node_id}") from None

    def node(self, path: str | Sequence[str]) -> CategoryNode:
        key = split_path(path)
        try:
            return self._by_path[key]
        except KeyError:
            raise PreconditionError(f"Неизвестная категория {join_path(key)}") from None

    def resolve(self, path: str | Sequence[str]) -> CategoryNode:
        """
        Найти узел по общему пути или по пути, где объект назван специфичным именем
        ('box turtle/head' -> 'reptile/head' с specific_object_name='box turtle').
        """
        key = split_path(path)
        if key in self._by_path:
            return self._by_path[key]
        if key and key[0] in self._specifics:
            general_key = (self._specifics[key[0]],) + key[1:]
            if general_key in self._by_path:
                return replace(self._by_path[general_key], specific_object_name=key[0])
        raise PreconditionError(f"Неизвестная категория {join_path(key)}")

    def parent(self, node: CategoryNode) -> CategoryNode | None:
        parent_id = self.parent_edges.get(self._own(node).id)
        return self._by_id[parent_id] if parent_id else None

    def children(self, node: CategoryNode) -> list[CategoryNode]:
        return list(self._children[self._own(node).id])

    def _own(self, node: CategoryNode) -> CategoryNode:
        try:
            return self._by_path[node.path]
        except KeyError:
            raise PreconditionError(f"Категория {node.key} не входит в таксономию") from None

    def entails(self, child: CategoryNode, parent: CategoryNode) -> bool:
        """Индикатор вхождения: child - непосредственный потомок parent в этой таксономии"""
        if int(child.level) != int(parent.level) - 1:
            raise PreconditionError(
                f"entails требует соседние уровни: {child.level.name} и {parent.level.name}"
            )
        own_child = self._by_path.get(child.path)
        own_parent = self._by_path.get(parent.path)
        if own_child is None or own_parent is None:
            return False
        return self.parent_edges.get(own_child.id) == own_parent.id

    def general_of(self, specific_object_name: str) -> str:
        """Специфичное имя (158 классов WordNet) -> имя суперкатегории"""
        try:
            return self._specifics[specific_object_name]
        except KeyError:
            raise PreconditionError(f"Неизвестное специфичное имя объекта '{specific_object_name}'") from None

    def parent_table(self) -> np.ndarray:
        """parent_table()[id] = id родителя (0 для объектов); индекс 0 - фон"""
        return self._parent_table.copy()

    def level_table(self) -> np.ndarray:
        """level_table()[id] = int(Level); 0 для фона"""
        return self._level_table.copy()

    def with_specifics(self, extra: Mapping[str, str]) -> "Taxonomy":
        """Копия с дополнительными специфичными именами (например, из релиза датасета)"""
        merged = dict(self._specifics)
        merged.update(extra)
        document = serialize_taxonomy(self)
        document["objects"] = [
            {**obj, "specifics": [name for name, general in merged.items() if general == obj["general"]]}
            for obj in document["objects"]
        ]
        return load_taxonomy(document)


def _collect(document: Mapping[str, Any], strict: bool) -> tuple[list[tuple[str, ...]], dict[str, str], list[str]]:
    violations: list[str] = []
    paths: list[tuple[str, ...]] = []
    specifics: dict[str, str] = {}

    def check_name(value: Any, where: str) -> str | None:
        if not isinstance(value, str) or not value.strip():
            violations.append(f"{where}: пустое имя")
            return None
        name = " ".join(value.strip().split())
        if PATH_SEPARATOR in name:
            violations.append(f"{where}: имя '{name}' содержит '{PATH_SEPARATOR}'")
            return None
        return name

    if strict:
        for key in sorted(set(document) - DOCUMENT_KEYS):
            violations.append(f"неизвестный ключ '{key}'")
    if "version" not in document:
        violations.append("отсутствует поле version")

    objects = document.get("objects") or []
    if not isinstance(objects, list):
        violations.append("objects должен быть списком")
        objects = []
    for i, obj in enumerate(objects):
        where = f"objects[{i}]"
        if not isinstance(obj, Mapping):
            violations.append(f"{where}: ожидается объект")
            continue
        if strict:
            for key in sorted(set(obj) - OBJECT_KEYS):
                violations.append(f"{where}: неизвестный ключ '{key}'")
        general = check_name(obj.get("general"), f"{where}.general")
        if general is None:
            continue
        paths.append((general,))
        for j, specific in enumerate(obj.get("specifics") or []):
            name = check_name(specific, f"{where}.specifics[{j}]")
            if name is None:
                continue
            if name in specifics and specifics[name] != general:
                violations.append(f"{where}.specifics[{j}]: '{name}' уже относится к '{specifics[name]}'")
            specifics[name] = general
        for j, part in enumerate(obj.get("parts") or []):
            part_where = f"{where}.parts[{j}]"
            if not isinstance(part, Mapping):
                violations.append(f"{part_where}: ожидается объект")
                continue
            if strict:
                for key in sorted(set(part) - PART_KEYS):
                    violations.append(f"{part_where}: неизвестный ключ '{key}'")
            part_name = check_name(part.get("name"), f"{part_where}.name")
            if part_name is None:
                continue
            paths.append((general, part_name))
            for k, subpart in enumerate(part.get("subparts") or []):
                sub_name = check_name(subpart, f"{part_where}.subparts[{k}]")
                if sub_name is not None:
                    paths.append((general, part_name, sub_name))

    flat = document.get("nodes") or []
    if not isinstance(flat, list):
        violations.append("nodes должен быть списком")
        flat = []
    for i, raw in enumerate(flat):
        where = f"nodes[{i}]"
        names = split_path(raw) if isinstance(raw, (str, list, tuple)) else ()
        if not 1 <= len(names) <= 3:
            violations.append(f"{where}: путь должен содержать от 1 до 3 имен")
            continue
        cleaned = [check_name(name, f"{where}[{k}]") for k, name in enumerate(names)]
        if any(name is None for name in cleaned):
            continue
        paths.append(tuple(cleaned))

    known = set(paths)
    for name, general in specifics.items():
        if (name,) in known and name != general:
            violations.append(f"специфичное имя '{name}' совпадает с общим именем объекта")
    return paths, specifics, violations


def _find_cycles(paths: list[tuple[str, ...]]) -> list[str]:
    """Проверка, что ребра потомок -> родитель образуют лес (без циклов)"""
    parent_of = {path: path[:-1] for path in paths if len(path) > 1}
    violations = []
    for start in parent_of:
        seen = {start}
        current = start
        while current in parent_of:
            current = parent_of[current]
            if current in seen:
                violations.append(f"обнаружен цикл через {join_path(start)}")
                break
            seen.add(current)
    return violations


def load_taxonomy(document: str | Mapping[str, Any], strict: bool = False) -> Taxonomy:
    """
    Разбор и проверка документа таксономии.
    Ошибка TaxonomyError перечисляет все нарушения сразу.
    """
    if isinstance(document, str):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise TaxonomyError([f"документ не разбирается как JSON: {exc}"]) from exc
    if not isinstance(document, Mapping):
        raise TaxonomyError(["документ таксономии должен быть объектом"])

    paths, specifics, violations = _collect(document, strict)

    seen: set[tuple[str, ...]] = set()
    unique: list[tuple[str, ...]] = []
    for path in paths:
        if path in seen:
            violations.append(f"дублирующийся путь {join_path(path)}")
            continue
        seen.add(path)
        unique.append(path)
    for path in unique:
        if len(path) > 1 and path[:-1] not in seen:
            violations.append(f"{join_path(path)}: нет родителя {join_path(path[:-1])}")
    violations.extend(_find_cycles(unique))

    if violations:
        raise TaxonomyError(violations)

    # родители раньше потомков, чтобы id шли в порядке обхода дерева
    position = {path: idx for idx, path in enumerate(unique)}
    unique.sort(key=lambda path: [position[path[: n + 1]] for n in range(len(path))])
    version = document.get("version", 1)
    taxonomy = Taxonomy(unique, specifics, version=version, notes=document.get("notes") or ())
    logger.debug(
        f"Таксономия загружена: {taxonomy.counts[Level.OBJECT]} объектов, "
        f"{taxonomy.counts[Level.PART]} частей, {taxonomy.counts[Level.SUBPART]} подчастей"
    )
    return taxonomy


def load_taxonomy_file(path: str | Path, strict: bool = False) -> Taxonomy:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Файл {path} не найден")
    with open(path, "r", encoding="utf-8") as fh:
        return load_taxonomy(fh.read(), strict=strict)


def serialize_taxonomy(taxonomy: Taxonomy) -> dict[str, Any]:
    """Вложенный документ; повторная загрузка дает тот же набор узлов и ребер"""
    objects = []
    for obj in taxonomy.by_level(Level.OBJECT):
        parts = []
        for part in taxonomy.children(obj):
            parts.append({"name": part.name, "subparts": [sub.name for sub in taxonomy.children(part)]})
        objects.append(
            {
                "general": obj.name,
                "specifics": [name for name, general in taxonomy.specifics.items() if general == obj.name],
                "parts": parts,
            }
        )
    document: dict[str, Any] = {"version": taxonomy.version, "objects": objects}
    if taxonomy.notes:
        document["notes"] = list(taxonomy.notes)
    return document
