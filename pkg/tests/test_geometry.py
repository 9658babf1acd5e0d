# -*- coding: utf-8 -*-
"""
Тесты геометрии: растеризация против попиксельного эталона, площади пересечений,
дескрипторы формы на аналитических фигурах, корзины размеров, RLE.
"""

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from builders import square
from hiereval.errors import GeometryError, PreconditionError
from hiereval.geometry import (
    BBox,
    BitMask,
    Region,
    Ring,
    SizeBucket,
    bbox_from_mask,
    boundary_complexity,
    boxes_to_mask,
    containment_ratio,
    count_holes,
    coverage,
    decode_label_rle,
    decode_rle,
    encode_label_rle,
    encode_rle,
    extent,
    geometric_area,
    image_coverage,
    intersection_area,
    iou,
    perimeter,
    polygon_count,
    polygons,
    rasterize,
    shape_problem,
    size_bucket,
    union_area,
)


def region(*rings) -> Region:
    return Region.from_coordinates(rings)


def regular_polygon(n: int, radius: float = 10.0, cx: float = 0.0, cy: float = 0.0) -> Region:
    return region([[cx + radius * math.cos(2 * math.pi * k / n), cy + radius * math.sin(2 * math.pi * k / n)] for k in range(n)])


def block(width, height, x0, y0, x1, y1) -> BitMask:
    bits = np.zeros((height, width), dtype=bool)
    bits[y0:y1, x0:x1] = True
    return BitMask(bits)


# --- растеризация ------------------------------------------------------------------


def test_rasterize_rectangle():
    assert rasterize(region(square(0, 0, 4, 3)), 10, 10).area == 12


def test_rasterize_square_with_hole():
    mask = rasterize(region(square(0, 0, 10, 10), square(2, 2, 8, 8)), 10, 10)
    assert mask.area == 100 - 36
    assert not mask.bits[5, 5]
    assert mask.bits[0, 0]


def test_rasterize_clips_to_image():
    mask = rasterize(region(square(-5, -5, 3, 2)), 6, 6)
    assert mask.area == 3 * 2


def test_rasterize_rejects_empty_image():
    with pytest.raises(GeometryError):
        rasterize(region(square(0, 0, 1, 1)), 0, 4)


def test_rasterize_matches_pixel_oracle(rng):
    for _ in range(500):
        width, height = (int(v) for v in rng.integers(4, 65, size=2))
        rings = []
        for _ in range(int(rng.integers(1, 4))):
            n = int(rng.integers(3, 13))
            xs = rng.uniform(-2, width + 2, size=n)
            ys = rng.uniform(-2, height + 2, size=n)
            rings.append([[float(x), float(y)] for x, y in zip(xs, ys)])
        expected = np.array(oracles.raster(rings, width, height), dtype=bool)
        np.testing.assert_array_equal(rasterize(Region.from_coordinates(rings), width, height).bits, expected)


def test_random_twelve_gon_area_matches_oracle(rng):
    angles = np.sort(rng.uniform(0, 2 * math.pi, size=12))
    radii = rng.uniform(4, 14, size=12)
    ring = [[16 + r * math.cos(a), 16 + r * math.sin(a)] for r, a in zip(radii, angles)]
    assert rasterize(region(ring), 32, 32).area == oracles.count(oracles.raster([ring], 32, 32))


# --- площади и отношения ------------------------------------------------------------


def test_iou_examples():
    a = block(8, 8, 0, 0, 2, 2)
    assert iou(a, a) == 1
    assert iou(a, block(8, 8, 4, 4, 6, 6)) == 0
    assert iou(a, block(8, 8, 1, 0, 3, 2)) == Fraction(2, 6)
    empty = BitMask.empty(8, 8)
    assert iou(empty, empty) == 1


def test_iou_shape_mismatch():
    with pytest.raises(GeometryError):
        iou(BitMask.empty(4, 4), BitMask.empty(5, 4))


def test_containment_examples():
    parent = block(8, 8, 0, 0, 6, 6)
    assert containment_ratio(block(8, 8, 1, 1, 3, 3), parent) == 1
    assert containment_ratio(block(8, 8, 7, 7, 8, 8), parent) == 0
    assert containment_ratio(block(8, 8, 5, 0, 7, 2), parent) == Fraction(1, 2)
    with pytest.raises(GeometryError):
        containment_ratio(BitMask.empty(8, 8), parent)


def test_coverage_examples():
    container = block(10, 10, 0, 0, 5, 5)
    assert coverage(container, container) == 1
    assert coverage(BitMask.empty(10, 10), container) == 0
    assert image_coverage(block(10, 10, 0, 0, 4, 3)) == Fraction(12, 100)
    with pytest.raises(GeometryError):
        coverage(container, BitMask.empty(10, 10))


def test_mask_ratios_match_pixel_oracle(rng):
    for _ in range(200):
        width, height = (int(v) for v in rng.integers(1, 33, size=2))
        a_bits = rng.random((height, width)) < rng.uniform(0.05, 0.9)
        b_bits = rng.random((height, width)) < rng.uniform(0.05, 0.9)
        a, b = BitMask(a_bits), BitMask(b_bits)
        a_grid, b_grid = a_bits.tolist(), b_bits.tolist()
        assert iou(a, b) == oracles.iou(a_grid, b_grid)
        if a.area:
            assert containment_ratio(a, b) == oracles.containment(a_grid, b_grid)
        if b.area:
            assert coverage(a, b) == oracles.coverage(a_grid, b_grid)


@st.composite
def mask_pairs(draw):
    width, height = draw(st.integers(1, 12)), draw(st.integers(1, 12))
    cells = st.lists(st.booleans(), min_size=width * height, max_size=width * height)
    return (
        BitMask(np.array(draw(cells), dtype=bool).reshape(height, width)),
        BitMask(np.array(draw(cells), dtype=bool).reshape(height, width)),
    )


@settings(max_examples=200, deadline=None)
@given(mask_pairs())
def test_mask_pair_invariants(pair):
    a, b = pair
    assert iou(a, b) == iou(b, a)
    assert 0 <= iou(a, b) <= 1
    assert iou(a, a) == 1
    assert intersection_area(a, b) + union_area(a, b) == a.area + b.area
    assert intersection_area(a, b) <= min(a.area, b.area)
    if a.area:
        assert containment_ratio(a, a | b) == 1


# --- дескрипторы формы --------------------------------------------------------------


@pytest.mark.parametrize("side", [1.0, 3.5, 40.0])
def test_square_boundary_complexity(side):
    assert boundary_complexity(region(square(0, 0, side, side))) == pytest.approx(math.pi / 4, abs=1e-12)


def test_regular_polygon_boundary_complexity():
    for n in range(3, 129):
        expected = (math.pi / n) / math.tan(math.pi / n)
        assert boundary_complexity(regular_polygon(n)) == pytest.approx(expected, abs=1e-12)


def test_elongated_rectangle_boundary_complexity():
    value = boundary_complexity(region(square(0, 0, 100, 1)))
    assert value == pytest.approx(4 * math.pi * 100 / 202**2, abs=1e-12)


def test_extent_examples():
    assert extent(region(square(2, 3, 9, 5))) == pytest.approx(1.0, abs=1e-12)
    assert extent(region([[5, 0], [10, 5], [5, 10], [0, 5]])) == pytest.approx(0.5, abs=1e-12)
    assert extent(region([[0, 0], [6, 0], [0, 4]])) == pytest.approx(0.5, abs=1e-12)


def test_boundary_complexity_zero_area():
    with pytest.raises(GeometryError):
        boundary_complexity(region([[0, 0], [1, 1], [2, 2]]))


def test_hole_counting():
    outer, middle, inner = square(0, 0, 30, 30), square(5, 5, 25, 25), square(10, 10, 20, 20)
    assert (count_holes(region(outer)), polygon_count(region(outer))) == (0, 1)
    assert (count_holes(region(outer, middle)), polygon_count(region(outer, middle))) == (1, 1)
    nested = region(outer, middle, inner)
    assert (count_holes(nested), polygon_count(nested)) == (1, 2)
    assert geometric_area(nested) == pytest.approx(900 - 400 + 100)


def test_two_separate_polygons():
    pair = region(square(0, 0, 2, 2), square(5, 5, 7, 7))
    assert (count_holes(pair), polygon_count(pair)) == (0, 2)


def test_crossing_rings_rejected():
    with pytest.raises(GeometryError):
        count_holes(region(square(0, 0, 4, 4), square(2, 2, 6, 6)))


def star_ring(radii) -> list[list[int]]:
    """Звездный многоугольник с целыми вершинами: равные углы, свой радиус у каждой вершины"""
    n = len(radii)
    return [
        [round(r * math.cos(2 * math.pi * k / n)), round(r * math.sin(2 * math.pi * k / n))]
        for k, r in enumerate(radii)
    ]


stars = st.lists(st.integers(20, 60), min_size=3, max_size=12).map(star_ring)


@settings(max_examples=100, deadline=None)
@given(stars, st.integers(-500, 500), st.integers(-500, 500))
def test_shape_descriptors_translation_invariant(ring, dx, dy):
    moved = [[x + dx, y + dy] for x, y in ring]
    assert boundary_complexity(region(moved)) == pytest.approx(boundary_complexity(region(ring)), abs=1e-12)
    assert extent(region(moved)) == pytest.approx(extent(region(ring)), abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(stars, st.integers(1, 20))
def test_shape_descriptors_scale_invariant(ring, factor):
    scaled = [[factor * x, factor * y] for x, y in ring]
    assert boundary_complexity(region(scaled)) == pytest.approx(boundary_complexity(region(ring)), abs=1e-12)
    assert extent(region(scaled)) == pytest.approx(extent(region(ring)), abs=1e-12)
    assert 0 < boundary_complexity(region(ring)) <= 1
    assert 0 < extent(region(ring)) <= 1


@settings(max_examples=50, deadline=None)
@given(stars)
def test_star_polygons_have_defined_shape(ring):
    assert shape_problem(region(ring)) is None


def test_shape_problem_reasons():
    assert "площадь" in shape_problem(region([[0, 0], [4, 4], [4, 0], [0, 4]]))
    assert "пересекаются" in shape_problem(region(square(0, 0, 4, 4), square(2, 2, 6, 6)))
    assert shape_problem(region(square(0, 0, 4, 4), square(1, 1, 2, 2))) is None


def test_ring_cleanup():
    ring = Ring.from_points([[0, 0], [4, 0], [4, 0], [4, 4], [0, 0]])
    assert ring.vertices == ((0.0, 0.0), (4.0, 0.0), (4.0, 4.0))
    with pytest.raises(GeometryError):
        Ring.from_points([[0, 0], [1, 1], [0, 0]])
    with pytest.raises(GeometryError):
        Ring.from_points([[0, 0], [1, float("nan")], [2, 0]])


# --- корзины размеров и боксы --------------------------------------------------------


@pytest.mark.parametrize(
    "area, bucket",
    [(0, SizeBucket.SMALL), (900, SizeBucket.SMALL), (1023, SizeBucket.SMALL), (1024, SizeBucket.MEDIUM),
     (9215, SizeBucket.MEDIUM), (9216, SizeBucket.LARGE)],
)
def test_size_bucket_thresholds(area, bucket):
    assert size_bucket(area) is bucket


def test_size_bucket_negative():
    with pytest.raises(PreconditionError):
        size_bucket(-1)


def test_bbox_from_mask():
    bits = np.zeros((10, 10), dtype=bool)
    bits[7, 3] = True
    assert bbox_from_mask(BitMask(bits)) == BBox(3, 7, 3, 7)
    assert bbox_from_mask(BitMask(np.ones((5, 8), dtype=bool))) == BBox(0, 0, 7, 4)
    bits = np.zeros((10, 10), dtype=bool)
    bits[1, 1] = bits[2, 5] = True
    assert bbox_from_mask(BitMask(bits)).to_list() == [1, 1, 5, 2]
    with pytest.raises(GeometryError):
        bbox_from_mask(BitMask.empty(3, 3))


def test_boxes_to_mask():
    assert boxes_to_mask([BBox(0, 0, 1, 1)], 8, 8).area == 4
    assert boxes_to_mask([BBox(0, 0, 1, 1), BBox(0, 0, 1, 1)], 8, 8).area == 4
    assert boxes_to_mask([BBox(0, 0, 2, 2), BBox(1, 1, 3, 3)], 8, 8).area == 14
    assert boxes_to_mask([], 8, 8).area == 0
    assert boxes_to_mask([BBox(6, 6, 20, 20)], 8, 8).area == 4


# --- RLE --------------------------------------------------------------------------


def test_rle_runs_start_with_zeros():
    bits = np.array([[False, True, True], [False, False, True]])
    assert encode_rle(BitMask(bits)) == [1, 2, 2, 1]
    assert encode_rle(BitMask(np.ones((2, 2), dtype=bool))) == [0, 4]
    assert decode_rle([1, 2, 2, 1], 3, 2) == BitMask(bits)


def test_rle_rejects_wrong_length():
    with pytest.raises(GeometryError):
        decode_rle([1, 2], 3, 2)
    with pytest.raises(GeometryError):
        decode_rle([7, -1], 3, 2)


def test_label_rle():
    raster = np.array([[0, 0, 3], [3, 3, 1]])
    pairs = encode_label_rle(raster)
    assert pairs == [0, 2, 3, 3, 1, 1]
    np.testing.assert_array_equal(decode_label_rle(pairs, 3, 2), raster)
    with pytest.raises(GeometryError):
        decode_label_rle([0, 2, 3], 3, 2)


def test_exact_area_counts():
    a, b = block(8, 8, 0, 0, 4, 4), block(8, 8, 2, 2, 6, 6)
    assert intersection_area(a, b) == 4
    assert union_area(a, b) == 28


def test_polygons_split_holes_by_depth():
    outer, hole, island = square(0, 0, 30, 30), square(5, 5, 25, 25), square(10, 10, 20, 20)
    parts = polygons(region(outer, hole, island))
    assert len(parts) == 2
    ring_sets = sorted((len(holes), ring.area()) for ring, holes in parts)
    assert ring_sets == [(0, 100.0), (1, 900.0)]
    assert perimeter(region(outer, hole)) == pytest.approx(120 + 80)
