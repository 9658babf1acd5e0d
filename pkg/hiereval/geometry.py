# -*- coding: utf-8 -*-
"""
Геометрия разметки: кольца и регионы (векторные), бинарные маски (растровые),
точный подсчет пикселей, дескрипторы формы и RLE.

Дескрипторы формы (площадь, периметр, extent, изопериметрическое отношение) считаются
по векторной геометрии; покрытие и IoU - по растру.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from hiereval.errors import GeometryError, PreconditionError

SMALL_AREA_MAX = 32**2
MEDIUM_AREA_MAX = 96**2


@dataclass(frozen=True)
class Ring:
    """Замкнутая ломаная (последняя вершина соединяется с первой)"""

    vertices: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if len(self.vertices) < 3:
            raise GeometryError(f"Кольцо должно содержать не менее 3 вершин (получено {len(self.vertices)})")
        for x, y in self.vertices:
            if not (math.isfinite(x) and math.isfinite(y)):
                raise GeometryError(f"Нечисловая координата вершины ({x}, {y})")
        for i, vertex in enumerate(self.vertices):
            if vertex == self.vertices[i - 1]:
                raise GeometryError(f"Повторяющаяся соседняя вершина {vertex}")

    @classmethod
    def from_points(cls, points: Iterable[Sequence[float]]) -> "Ring":
        """Из списка [x, y]: убирает повторы соседних вершин и замыкающую вершину"""
        cleaned: list[tuple[float, float]] = []
        for point in points:
            if len(point) != 2:
                raise GeometryError(f"Вершина должна быть парой [x, y], получено {list(point)}")
            vertex = (float(point[0]), float(point[1]))
            if not cleaned or cleaned[-1] != vertex:
                cleaned.append(vertex)
        while len(cleaned) > 1 and cleaned[0] == cleaned[-1]:
            cleaned.pop()
        return cls(tuple(cleaned))

    def signed_area(self) -> float:
        xs = [v[0] for v in self.vertices]
        ys = [v[1] for v in self.vertices]
        n = len(xs)
        return 0.5 * math.fsum(xs[i] * ys[(i + 1) % n] - xs[(i + 1) % n] * ys[i] for i in range(n))

    def area(self) -> float:
        return abs(self.signed_area())

    def perimeter(self) -> float:
        n = len(self.vertices)
        return math.fsum(
            math.hypot(self.vertices[(i + 1) % n][0] - x, self.vertices[(i + 1) % n][1] - y)
            for i, (x, y) in enumerate(self.vertices)
        )

    def bounds(self) -> tuple[float, float, float, float]:
        xs = [v[0] for v in self.vertices]
        ys = [v[1] for v in self.vertices]
        return min(xs), min(ys), max(xs), max(ys)

    def edges(self) -> np.ndarray:
        """Массив (n, 4): x0, y0, x1, y1 для каждого ребра"""
        start = np.asarray(self.vertices, dtype=np.float64)
        end = np.roll(start, -1, axis=0)
        return np.hstack([start, end])

    def contains_point(self, x: float, y: float) -> bool:
        """Четно-нечетный тест лучом в направлении +x"""
        inside = False
        n = len(self.vertices)
        for i in range(n):
            x0, y0 = self.vertices[i]
            x1, y1 = self.vertices[(i + 1) % n]
            if (y0 > y) != (y1 > y) and x < x0 + (y - y0) * (x1 - x0) / (y1 - y0):
                inside = not inside
        return inside

    def on_boundary(self, x: float, y: float) -> bool:
        n = len(self.vertices)
        for i in range(n):
            x0, y0 = self.vertices[i]
            x1, y1 = self.vertices[(i + 1) % n]
            cross = (x1 - x0) * (y - y0) - (y1 - y0) * (x - x0)
            if cross == 0 and min(x0, x1) <= x <= max(x0, x1) and min(y0, y1) <= y <= max(y0, y1):
                return True
        return False


@dataclass(frozen=True)
class Region:
    """Набор колец с правилом заливки even-odd (дырки и несколько полигонов)"""

    rings: tuple[Ring, ...]

    def __post_init__(self):
        if not self.rings:
            raise GeometryError("Регион должен содержать хотя бы одно кольцо")

    @classmethod
    def from_coordinates(cls, rings: Iterable[Iterable[Sequence[float]]]) -> "Region":
        return cls(tuple(Ring.from_points(ring) for ring in rings))

    def to_coordinates(self) -> list[list[list[float]]]:
        return [[[x, y] for x, y in ring.vertices] for ring in self.rings]

    def bounds(self) -> tuple[float, float, float, float]:
        boxes = [ring.bounds() for ring in self.rings]
        return (
            min(b[0] for b in boxes),
            min(b[1] for b in boxes),
            max(b[2] for b in boxes),
            max(b[3] for b in boxes),
        )

    def contains_point(self, x: float, y: float) -> bool:
        inside = False
        for ring in self.rings:
            if ring.contains_point(x, y):
                inside = not inside
        return inside


class BitMask:
    """Бинарная маска (height, width), площадь - точное целое число пикселей"""

    __slots__ = ("bits",)

    def __init__(self, bits: np.ndarray):
        bits = np.array(bits, dtype=bool, copy=True)
        if bits.ndim != 2 or bits.size == 0:
            raise GeometryError(f"Маска должна быть двумерной и непустой, получено {bits.shape}")
        bits.setflags(write=False)
        self.bits = bits

    @classmethod
    def empty(cls, width: int, height: int) -> "BitMask":
        if width <= 0 or height <= 0:
            raise GeometryError(f"Размеры маски должны быть положительными: {width}x{height}")
        return cls(np.zeros((height, width), dtype=bool))

    @property
    def width(self) -> int:
        return int(self.bits.shape[1])

    @property
    def height(self) -> int:
        return int(self.bits.shape[0])

    @property
    def area(self) -> int:
        return int(np.count_nonzero(self.bits))

    def __or__(self, other: "BitMask") -> "BitMask":
        _check_same_shape(self, other)
        return BitMask(self.bits | other.bits)

    def __and__(self, other: "BitMask") -> "BitMask":
        _check_same_shape(self, other)
        return BitMask(self.bits & other.bits)

    def __eq__(self, other) -> bool:
        if not isinstance(other, BitMask):
            return NotImplemented
        return self.bits.shape == other.bits.shape and bool(np.array_equal(self.bits, other.bits))

    def __hash__(self):
        return hash((self.bits.shape, self.bits.tobytes()))

    def __repr__(self) -> str:
        return f"BitMask({self.width}x{self.height}, area={self.area})"


@dataclass(frozen=True)
class BBox:
    """Включительные пиксельные координаты [x_min, y_min, x_max, y_max]"""

    x_min: int
    y_min: int
    x_max: int
    y_max: int

    def __post_init__(self):
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise GeometryError(f"Некорректный бокс {self.to_list()}")

    @classmethod
    def from_list(cls, values: Sequence[float]) -> "BBox":
        if len(values) != 4:
            raise GeometryError(f"Бокс должен содержать 4 числа, получено {list(values)}")
        return cls(*(int(round(v)) for v in values))

    def to_list(self) -> list[int]:
        return [self.x_min, self.y_min, self.x_max, self.y_max]

    def within(self, width: int, height: int) -> bool:
        return self.x_min >= 0 and self.y_min >= 0 and self.x_max < width and self.y_max < height

    @property
    def area(self) -> int:
        return (self.x_max - self.x_min + 1) * (self.y_max - self.y_min + 1)


class SizeBucket(Enum):
    SMALL = "small"
    MEDIUM = "medium"
    LARGE = "large"


def _check_same_shape(a: BitMask, b: BitMask) -> None:
    if a.bits.shape != b.bits.shape:
        raise GeometryError(f"Размеры масок не совпадают: {a.width}x{a.height} и {b.width}x{b.height}")


def rasterize(region: Region, width: int, height: int) -> BitMask:
    """
    Пиксель (i, j) закрашен, если его центр (j + 0.5, i + 0.5) внутри региона по правилу even-odd.

    Пересечения считаются построчно: ребро пересекает луч +x из центра пикселя,
    если концы лежат по разные стороны строки и точка пересечения правее центра.
    Вершины за пределами изображения обрезаются самим выбором центров.
    """
    if width <= 0 or height <= 0:
        raise GeometryError(f"Размеры изображения должны быть положительными: {width}x{height}")
    edges = np.vstack([ring.edges() for ring in region.rings])
    x0, y0, x1, y1 = (edges[:, k] for k in range(4))
    centers_x = np.arange(width, dtype=np.float64) + 0.5
    centers_y = np.arange(height, dtype=np.float64) + 0.5

    straddle = (y0[:, None] > centers_y[None, :]) != (y1[:, None] > centers_y[None, :])
    edge_idx, rows = np.nonzero(straddle)
    py = centers_y[rows]
    ex0, ey0, ex1, ey1 = x0[edge_idx], y0[edge_idx], x1[edge_idx], y1[edge_idx]
    crossings = ex0 + (py - ey0) * (ex1 - ex0) / (ey1 - ey0)
    # сколько центров строго левее точки пересечения
    counts = np.searchsorted(centers_x, crossings, side="left")

    hist = np.zeros((height, width + 1), dtype=np.int64)
    np.add.at(hist, (rows, counts), 1)
    tail = np.cumsum(hist[:, ::-1], axis=1)[:, ::-1]
    toggles = tail[:, 1:]
    return BitMask((toggles % 2).astype(bool))


def intersection_area(a: BitMask, b: BitMask) -> int:
    _check_same_shape(a, b)
    return int(np.count_nonzero(a.bits & b.bits))


def union_area(a: BitMask, b: BitMask) -> int:
    _check_same_shape(a, b)
    return int(np.count_nonzero(a.bits | b.bits))


def iou(a: BitMask, b: BitMask) -> Fraction:
    """|a∩b| / |a∪b|; для двух пустых масок - 1"""
    union = union_area(a, b)
    if union == 0:
        return Fraction(1)
    return Fraction(intersection_area(a, b), union)


def containment_ratio(child: BitMask, parent: BitMask) -> Fraction:
    """|child∩parent| / |child| - слагаемое SpCS"""
    _check_same_shape(child, parent)
    child_area = child.area
    if child_area == 0:
        raise GeometryError("Доля вхождения не определена для пустой маски потомка")
    return Fraction(intersection_area(child, parent), child_area)


def coverage(child: BitMask, container: BitMask) -> Fraction:
    _check_same_shape(child, container)
    container_area = container.area
    if container_area == 0:
        raise GeometryError("Покрытие не определено для пустого контейнера")
    return Fraction(child.area, container_area)


def image_coverage(child: BitMask) -> Fraction:
    return Fraction(child.area, child.width * child.height)


def size_bucket(area: int) -> SizeBucket:
    """Пороги COCO 32² и 96², нижняя граница включительно"""
    if area < 0:
        raise PreconditionError(f"Площадь не может быть отрицательной: {area}")
    if area < SMALL_AREA_MAX:
        return SizeBucket.SMALL
    if area < MEDIUM_AREA_MAX:
        return SizeBucket.MEDIUM
    return SizeBucket.LARGE


def bbox_from_mask(mask: BitMask) -> BBox:
    rows = np.flatnonzero(mask.bits.any(axis=1))
    cols = np.flatnonzero(mask.bits.any(axis=0))
    if rows.size == 0:
        raise GeometryError("Нельзя построить бокс по пустой маске")
    return BBox(int(cols[0]), int(rows[0]), int(cols[-1]), int(rows[-1]))


def boxes_to_mask(boxes: Iterable[BBox], width: int, height: int) -> BitMask:
    """Объединение залитых боксов; части за границами изображения отсекаются"""
    bits = np.zeros((height, width), dtype=bool)
    for box in boxes:
        x0, y0 = max(box.x_min, 0), max(box.y_min, 0)
        x1, y1 = min(box.x_max, width - 1), min(box.y_max, height - 1)
        if x0 > x1 or y0 > y1:
            continue
        bits[y0 : y1 + 1, x0 : x1 + 1] = True
    return BitMask(bits)


# --- вложенность колец -----------------------------------------------------------


def _orientation(ax, ay, bx, by, cx, cy):
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


def _rings_cross(a: Ring, b: Ring) -> bool:
    """Есть ли собственное пересечение ребер двух колец (касание не считается)"""
    ea = a.edges()[:, None, :]
    eb = b.edges()[None, :, :]
    d1 = _orientation(ea[..., 0], ea[..., 1], ea[..., 2], ea[..., 3], eb[..., 0], eb[..., 1])
    d2 = _orientation(ea[..., 0], ea[..., 1], ea[..., 2], ea[..., 3], eb[..., 2], eb[..., 3])
    d3 = _orientation(eb[..., 0], eb[..., 1], eb[..., 2], eb[..., 3], ea[..., 0], ea[..., 1])
    d4 = _orientation(eb[..., 0], eb[..., 1], eb[..., 2], eb[..., 3], ea[..., 2], ea[..., 3])
    return bool(np.any((d1 * d2 < 0) & (d3 * d4 < 0)))


def _ring_inside(inner: Ring, outer: Ring) -> bool:
    for x, y in inner.vertices:
        if not outer.on_boundary(x, y):
            return outer.contains_point(x, y)
    return False


def ring_depths(region: Region) -> list[int]:
    """Глубина вложенности каждого кольца; пересекающиеся кольца - ошибка"""
    rings = region.rings
    n = len(rings)
    for i in range(n):
        for j in range(i + 1, n):
            if _rings_cross(rings[i], rings[j]):
                raise GeometryError(f"Кольца {i} и {j} пересекаются")
    return [sum(1 for j in range(n) if j != i and _ring_inside(rings[i], rings[j])) for i in range(n)]


def polygons(region: Region) -> list[tuple[Ring, list[Ring]]]:
    """
    Разбиение на полигоны: кольца четной глубины - внешние границы,
    нечетной - дырки ближайшего внешнего кольца.
    """
    depths = ring_depths(region)
    rings = region.rings
    result: dict[int, list[Ring]] = {i: [] for i, d in enumerate(depths) if d % 2 == 0}
    for i, depth in enumerate(depths):
        if depth % 2 == 0:
            continue
        owners = [j for j in result if depths[j] == depth - 1 and _ring_inside(rings[i], rings[j])]
        if owners:
            result[owners[0]].append(rings[i])
    return [(rings[i], holes) for i, holes in result.items()]


def count_holes(region: Region) -> int:
    return sum(1 for depth in ring_depths(region) if depth % 2 == 1)


def polygon_count(region: Region) -> int:
    return sum(1 for depth in ring_depths(region) if depth % 2 == 0)


def _polygon_area(outer: Ring, holes: list[Ring]) -> float:
    return outer.area() - math.fsum(hole.area() for hole in holes)


def geometric_area(region: Region) -> float:
    """|shoelace(внешние)| − |shoelace(дырки)| по всем полигонам"""
    return math.fsum(_polygon_area(outer, holes) for outer, holes in polygons(region))


def perimeter(region: Region) -> float:
    return math.fsum(ring.perimeter() for ring in region.rings)


def _quotient(area: float, length: float) -> float:
    if length <= 0:
        raise GeometryError("Нулевой периметр")
    return min(max(4.0 * math.pi * area / (length * length), 0.0), 1.0)


def boundary_complexity(region: Region, per_polygon: bool = True) -> float:
    """
    Нормированное изопериметрическое отношение 4πA/P² в [0, 1]: 1 - круг, ближе к 0 - изрезанная
    или вытянутая граница. Для нескольких полигонов - среднее по полигонам.
    """
    parts = polygons(region)
    areas = [_polygon_area(outer, holes) for outer, holes in parts]
    if math.fsum(areas) <= 0:
        raise GeometryError("Регион должен иметь положительную площадь")
    if not per_polygon:
        return _quotient(math.fsum(areas), perimeter(region))
    values = [
        _quotient(area, outer.perimeter() + math.fsum(h.perimeter() for h in holes))
        for area, (outer, holes) in zip(areas, parts)
    ]
    return math.fsum(values) / len(values)


def _extent(area: float, bounds: tuple[float, float, float, float]) -> float:
    box_area = (bounds[2] - bounds[0]) * (bounds[3] - bounds[1])
    if box_area <= 0:
        raise GeometryError("Нулевая площадь ограничивающего прямоугольника")
    return area / box_area


def extent(region: Region, per_polygon: bool = True) -> float:
    """Площадь / площадь осевого ограничивающего прямоугольника вершин"""
    parts = polygons(region)
    areas = [_polygon_area(outer, holes) for outer, holes in parts]
    if math.fsum(areas) <= 0:
        raise GeometryError("Регион должен иметь положительную площадь")
    if not per_polygon:
        return _extent(math.fsum(areas), region.bounds())
    values = [_extent(area, outer.bounds()) for area, (outer, _) in zip(areas, parts)]
    return math.fsum(values) / len(values)


def shape_problem(region: Region) -> str | None:
    """Почему дескрипторы формы не определены (самопересечение, пересекающиеся кольца); None - все в порядке"""
    try:
        boundary_complexity(region)
        extent(region)
    except GeometryError as exc:
        return str(exc)
    return None


# --- RLE ---------------------------------------------------------------------------


def encode_rle(mask: BitMask) -> list[int]:
    """Длины серий построчно, начиная с серии нулей (может быть 0)"""
    flat = mask.bits.ravel()
    changes = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate([[0], changes, [flat.size]])
    runs = np.diff(bounds).tolist()
    if flat[0]:
        runs.insert(0, 0)
    return [int(r) for r in runs]


def decode_rle(counts: Sequence[int], width: int, height: int) -> BitMask:
    if width <= 0 or height <= 0:
        raise GeometryError(f"Размеры маски должны быть положительными: {width}x{height}")
    runs = np.asarray(list(counts), dtype=np.int64)
    if runs.size and runs.min() < 0:
        raise GeometryError("Длины серий RLE не могут быть отрицательными")
    total = int(runs.sum()) if runs.size else 0
    if total != width * height:
        raise GeometryError(f"Сумма длин RLE {total} не равна {width}x{height}={width * height}")
    values = np.arange(runs.size) % 2 == 1
    return BitMask(np.repeat(values, runs).reshape(height, width))


def encode_label_rle(raster: np.ndarray) -> list[int]:
    """Карта меток -> плоский список пар (значение, длина серии)"""
    flat = np.asarray(raster).ravel()
    if flat.size == 0:
        return []
    changes = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    starts = np.concatenate([[0], changes])
    lengths = np.diff(np.concatenate([starts, [flat.size]]))
    pairs = np.empty(starts.size * 2, dtype=np.int64)
    pairs[0::2] = flat[starts]
    pairs[1::2] = lengths
    return [int(v) for v in pairs]


def decode_label_rle(pairs: Sequence[int], width: int, height: int) -> np.ndarray:
    values = np.asarray(list(pairs), dtype=np.int64)
    if values.size % 2:
        raise GeometryError("RLE карты меток должен состоять из пар (значение, длина)")
    labels, lengths = values[0::2], values[1::2]
    if lengths.size and lengths.min() < 0:
        raise GeometryError("Длины серий RLE не могут быть отрицательными")
    total = int(lengths.sum()) if lengths.size else 0
    if total != width * height:
        raise GeometryError(f"Сумма длин RLE {total} не равна {width}x{height}={width * height}")
    return np.repeat(labels, lengths).reshape(height, width)
