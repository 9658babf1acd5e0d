# -*- coding: utf-8 -*-
"""
Независимые эталоны: попиксельные циклы на чистом Python без векторизации.
Используются только в тестах для сверки точных значений.
"""

from __future__ import annotations

import math
from fractions import Fraction

from scipy import stats


def point_in_rings(rings, x: float, y: float) -> bool:
    """Правило even-odd: луч в +x, четность пересечений по всем кольцам"""
    inside = False
    for ring in rings:
        n = len(ring)
        for i in range(n):
            x0, y0 = ring[i]
            x1, y1 = ring[(i + 1) % n]
            if (y0 > y) != (y1 > y):
                crossing = x0 + (y - y0) * (x1 - x0) / (y1 - y0)
                if x < crossing:
                    inside = not inside
    return inside


def raster(rings, width: int, height: int) -> list[list[bool]]:
    return [[point_in_rings(rings, j + 0.5, i + 0.5) for j in range(width)] for i in range(height)]


def count(grid) -> int:
    return sum(1 for row in grid for value in row if value)


def intersection(a, b) -> int:
    return sum(1 for ra, rb in zip(a, b) for va, vb in zip(ra, rb) if va and vb)


def union(a, b) -> int:
    return sum(1 for ra, rb in zip(a, b) for va, vb in zip(ra, rb) if va or vb)


def iou(a, b) -> Fraction:
    u = union(a, b)
    return Fraction(1) if u == 0 else Fraction(intersection(a, b), u)


def containment(child, parent) -> Fraction:
    return Fraction(intersection(child, parent), count(child))


def coverage(child, container) -> Fraction:
    return Fraction(count(child), count(container))


def secs(subpart_map, part_map, object_map, parent_of: dict[int, int], level_of: dict[int, int]) -> tuple[int, int]:
    """(согласованные пиксели, пиксели где все три карты не фон)"""
    consistent = total = 0
    for srow, prow, orow in zip(subpart_map, part_map, object_map):
        for s, p, o in zip(srow, prow, orow):
            if not (s and p and o):
                continue
            total += 1
            if (
                level_of.get(s) == 1
                and level_of.get(p) == 2
                and level_of.get(o) == 3
                and parent_of.get(s) == p
                and parent_of.get(p) == o
            ):
                consistent += 1
    return consistent, total


def ols(points) -> tuple[float, float, float, float]:
    """Учебный МНК по ln(size) и t-тест для наклона; (beta0, beta1, r², p)"""
    xs = [math.log(size) for size, _ in points]
    ys = [float(value) for _, value in points]
    n = len(xs)
    mx, my = sum(xs) / n, sum(ys) / n
    sxx = sum((x - mx) ** 2 for x in xs)
    sxy = sum((x - mx) * (y - my) for x, y in zip(xs, ys))
    syy = sum((y - my) ** 2 for y in ys)
    beta1 = sxy / sxx
    beta0 = my - beta1 * mx
    r2 = sxy * sxy / (sxx * syy)
    sse = sum((y - beta0 - beta1 * x) ** 2 for x, y in zip(xs, ys))
    t = beta1 / math.sqrt(sse / (n - 2) / sxx)
    p = 2 * stats.t.sf(abs(t), n - 2)
    return beta0, beta1, r2, float(p)
