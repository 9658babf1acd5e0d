# -*- coding: utf-8 -*-
"""
Тесты анализа: boxplot, регрессия IoU ~ ln(размер), статистика подчастей и графики.
"""

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as scipy_stats

import oracles
from builders import self_query_document, square, toy_dataset_document, write_json
from hiereval.analysis import (
    FACTORS,
    boxplot,
    compute_stats,
    fit_grouped,
    fit_iou_size,
    student_two_sided_p,
)
from hiereval.dataset_io import load_dataset, parse_predictions
from hiereval.errors import DegenerateFitError, PreconditionError
from hiereval.metrics import score_queries
from hiereval.plots import EMPTY_NOTE, boxplot_frame, emit_regression_plots, emit_stats_plots


# --- boxplot ----------------------------------------------------------------------


def test_boxplot_symmetric():
    box = boxplot([1, 2, 3, 4, 5])
    assert (box.median, box.q25, box.q75) == (3, 2, 4)
    assert (box.whisker_lo, box.whisker_hi) == (1, 5)
    assert box.outliers == ()
    assert box.n == 5


def test_boxplot_constant():
    box = boxplot([0.4] * 7)
    assert {box.median, box.q25, box.q75, box.whisker_lo, box.whisker_hi} == {0.4}
    assert box.outliers == ()


def test_boxplot_outlier():
    box = boxplot([*range(1, 100), 1000])
    assert box.outliers == (1000.0,)
    assert box.whisker_hi == 99
    assert box.whisker_lo == 1


def test_boxplot_empty():
    with pytest.raises(PreconditionError):
        boxplot([])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(min_value=-1e6, max_value=1e6, allow_nan=False), min_size=1, max_size=60), st.randoms())
def test_boxplot_invariants(values, random):
    box = boxplot(values)
    shuffled = list(values)
    random.shuffle(shuffled)
    assert boxplot(shuffled) == box
    assert box.q25 <= box.median <= box.q75
    assert min(values) <= box.whisker_lo <= box.whisker_hi <= max(values)
    iqr = box.q75 - box.q25
    for value in box.outliers:
        assert value < box.q25 - 1.5 * iqr or value > box.q75 + 1.5 * iqr


# --- регрессия ---------------------------------------------------------------------


def test_perfect_linear_fit():
    points = [(size, 0.1 * math.log(size) + 0.2) for size in (4, 20, 90, 400, 1600, 9000)]
    result = fit_iou_size(points)
    assert result.beta1 == pytest.approx(0.1, abs=1e-12)
    assert result.beta0 == pytest.approx(0.2, abs=1e-12)
    assert result.r_squared == 1.0
    assert result.p_value == 0.0
    assert result.significant


def test_constant_iou():
    result = fit_iou_size([(10, 0.3), (100, 0.3), (1000, 0.3), (5, 0.3)])
    assert (result.beta1, result.r_squared, result.p_value) == (0.0, 0.0, 1.0)
    assert result.beta0 == 0.3
    assert not result.significant


def test_degenerate_fit():
    with pytest.raises(DegenerateFitError):
        fit_iou_size([(50, 0.1), (50, 0.5), (50, 0.9)])
    with pytest.raises(PreconditionError):
        fit_iou_size([(10, 0.1), (20, 0.2)])
    with pytest.raises(PreconditionError):
        fit_iou_size([(10, 0.1), (0, 0.2), (30, 0.4)])


def synthetic_points(rng, n):
    sizes = np.exp(rng.uniform(1, 11, size=n))
    ious = np.clip(0.04 * np.log(sizes) + rng.normal(0, rng.uniform(0.01, 0.4), size=n), 0, 1)
    return [(float(s), float(v)) for s, v in zip(sizes, ious)]


def test_fixed_twenty_point_fixture():
    points = synthetic_points(np.random.default_rng(7), 20)
    result = fit_iou_size(points)
    beta0, beta1, r2, p = oracles.ols(points)
    assert result.beta0 == pytest.approx(beta0, abs=1e-9)
    assert result.beta1 == pytest.approx(beta1, abs=1e-9)
    assert result.r_squared == pytest.approx(r2, abs=1e-9)
    assert result.p_value == pytest.approx(p, abs=1e-9)
    assert result.n == 20


def test_regression_matches_oracles(rng):
    for _ in range(50):
        points = synthetic_points(rng, int(rng.integers(3, 200)))
        result = fit_iou_size(points)
        beta0, beta1, r2, p = oracles.ols(points)
        reference = scipy_stats.linregress([math.log(s) for s, _ in points], [v for _, v in points])
        assert result.beta0 == pytest.approx(beta0, abs=1e-9)
        assert result.beta1 == pytest.approx(beta1, abs=1e-9)
        assert result.r_squared == pytest.approx(r2, abs=1e-9)
        assert result.p_value == pytest.approx(p, abs=1e-9)
        assert result.r_squared == pytest.approx(reference.rvalue**2, abs=1e-9)
        assert result.p_value == pytest.approx(reference.pvalue, abs=1e-9)
        assert result.significant == (result.p_value < 0.001)


def test_rescaling_invariance(rng):
    points = synthetic_points(rng, 40)
    base = fit_iou_size(points)
    scaled = fit_iou_size([(s * 7.5, 0.5 * v + 0.1) for s, v in points])
    assert scaled.r_squared == pytest.approx(base.r_squared, abs=1e-9)
    assert scaled.p_value == pytest.approx(base.p_value, abs=1e-9)
    resized = fit_iou_size([(s * 3, v) for s, v in points])
    assert resized.beta1 == pytest.approx(base.beta1, abs=1e-9)
    assert resized.beta0 == pytest.approx(base.beta0 - base.beta1 * math.log(3), abs=1e-9)


def test_student_p_value():
    assert student_two_sided_p(0.0, 10) == pytest.approx(1.0)
    assert student_two_sided_p(2.228138851986, 10) == pytest.approx(0.05, abs=1e-9)
    assert student_two_sided_p(float("inf"), 5) == 0.0


def test_fit_grouped(toy_dataset):
    predictions = parse_predictions(self_query_document(toy_dataset, ("general",)), "query", toy_dataset)
    scores = score_queries(predictions, toy_dataset)
    rows, summary = fit_grouped(scores, "level")
    assert [(row["level"], row["group"]) for row in rows] == [("O", "all"), ("P", "all"), ("S", "all")]
    by_level = {row["level"]: row for row in rows}
    # два объекта - меньше трех точек
    assert by_level["O"]["beta1"] is None and by_level["O"]["note"]
    # все IoU = 1: константа
    assert by_level["P"]["r_squared"] == 0.0
    # у подчастей площади 4, 4, 4: нулевая дисперсия ln(размера)
    assert by_level["S"]["p_value"] is None
    assert [row["fitted"] for row in summary] == [0, 1, 0]
    category_rows, _ = fit_grouped(scores, "category")
    assert len(category_rows) == 8
    with pytest.raises(PreconditionError):
        fit_grouped(scores, "image")


# --- статистика датасета ------------------------------------------------------------


def test_stats_toy_dataset(toy_dataset):
    stats = compute_stats(toy_dataset)
    assert len(stats.subparts) == 3
    assert stats.skipped == 0
    assert stats.objects == ["aeroplane", "quadruped"]
    eyes = stats.subparts[stats.subparts["subpart"] == "quadruped/head/eyes"].iloc[0]
    assert eyes["area"] == 4
    assert eyes["bucket"] == "small"
    assert eyes["extent"] == pytest.approx(1.0)
    assert eyes["boundary_complexity"] == pytest.approx(math.pi / 4)
    assert eyes["image_coverage"] == pytest.approx(4 / 256)
    assert eyes["object_coverage"] == pytest.approx(4 / 144)
    assert eyes["part_coverage"] == pytest.approx(4 / 36)
    # torso не делится на подчасти и в распределение не входит
    assert sorted(stats.parts["part"]) == ["aeroplane/body", "quadruped/head"]
    assert sorted(stats.parts["subparts_per_part"]) == [1, 2]


def test_size_fractions_sum_to_one(toy_dataset):
    stats = compute_stats(toy_dataset)
    for obj in [*stats.objects, None]:
        assert sum(stats.size_fractions(obj).values()) == 1
    assert stats.size_fractions() == {"small": Fraction(1), "medium": Fraction(0), "large": Fraction(0)}


def stats_document():
    document = toy_dataset_document()
    document["images"].append({"id": "img3", "width": 120, "height": 120, "split": "test", "object": "quadruped"})
    document["annotations"] += [
        {"image": "img3", "category": "quadruped", "rings": [square(0, 0, 120, 120)]},
        {"image": "img3", "category": "quadruped/head", "rings": [square(0, 0, 110, 110)]},
        # глаза с дыркой, 100² − 10² пикселей
        {"image": "img3", "category": "quadruped/head/eyes", "rings": [square(0, 0, 100, 100), square(40, 40, 50, 50)]},
        # ухо из двух полигонов, 2·400 пикселей
        {"image": "img3", "category": "quadruped/head/ear", "rings": [square(100, 0, 110, 40), square(100, 60, 110, 100)]},
        # вырожденная подчасть
        {"image": "img3", "category": "quadruped/head/ear", "rings": [square(0.6, 0, 0.9, 5)]},
    ]
    return document


def test_stats_holes_and_polygons(tmp_path):
    stats = compute_stats(load_dataset(write_json(stats_document(), tmp_path / "d.json")), workers=4)
    assert stats.skipped == 1
    assert len(stats.subparts) == 5
    assert stats.size_fractions() == {"small": Fraction(4, 5), "medium": Fraction(0), "large": Fraction(1, 5)}
    assert stats.holes_fraction() == Fraction(1, 5)
    assert stats.holes_fraction("quadruped") == Fraction(1, 4)
    assert stats.multi_polygon_fraction() == Fraction(1, 5)
    assert stats.mean_holes_per_holed() == 1.0
    assert stats.holes_fraction("aeroplane") == 0
    split = stats.polygon_split()
    assert set(split["kind"]) == {"single", "multi"}
    parts = stats.part_table().set_index("part")
    assert parts.loc["quadruped/head", "subpart_labels"] == 2
    assert parts.loc["quadruped/head", "occurrences"] == 4
    assert parts.loc["quadruped/head", "multi_polygon_occurrences"] == 1
    assert parts.loc["quadruped/torso", "occurrences"] == 0
    per_object = stats.subparts_per_object()
    assert per_object.set_index("image").loc["img3", "subparts"] == 2


@pytest.mark.parametrize(
    "rings",
    [
        # восьмерка: площадь по shoelace равна нулю, растр непуст
        [[[0, 0], [4, 4], [4, 0], [0, 4]]],
        [square(0, 0, 4, 4), square(2, 2, 6, 6)],
    ],
    ids=["bowtie", "crossing-rings"],
)
def test_stats_skips_undefined_shapes(tmp_path, rings):
    document = toy_dataset_document()
    eyes = next(a for a in document["annotations"] if a["category"] == "quadruped/head/eyes")
    eyes["rings"] = rings
    stats = compute_stats(load_dataset(write_json(document, tmp_path / "d.json")), workers=2)
    assert stats.skipped == 1
    assert sorted(stats.subparts["subpart"]) == ["aeroplane/body/windshield", "quadruped/head/ear"]
    parts = stats.parts.set_index("part")
    assert parts.loc["quadruped/head", "subparts_per_part"] == 1


def test_stats_merge_is_additive(tmp_path):
    dataset = load_dataset(write_json(stats_document(), tmp_path / "d.json"))
    whole = compute_stats(dataset)
    first = compute_stats(load_dataset(write_json(toy_dataset_document(), tmp_path / "a.json")))
    document = stats_document()
    document["images"] = [image for image in document["images"] if image["id"] == "img3"]
    document["annotations"] = [a for a in document["annotations"] if a["image"] == "img3"]
    second = compute_stats(load_dataset(write_json(document, tmp_path / "b.json")))
    merged = first.merge(second)
    assert merged.skipped == whole.skipped
    assert merged.size_fractions() == whole.size_fractions()
    assert merged.holes_fraction() == whole.holes_fraction()
    assert merged.to_dict() == whole.to_dict()


def test_stats_boxplots(toy_dataset):
    stats = compute_stats(toy_dataset)
    boxes = stats.boxplots()
    assert set(boxes) == set(FACTORS)
    assert boxes["subparts_per_part"].median == 1.5
    frame = boxplot_frame(stats)
    assert set(frame["object"]) == {"aeroplane", "quadruped", "all"}
    assert not (frame["note"] == EMPTY_NOTE).any()
    with pytest.raises(PreconditionError):
        stats.distribution("colour")


def test_empty_panel_gets_note_row(tmp_path):
    document = toy_dataset_document()
    # у самолета остается корпус без размеченных подчастей
    document["annotations"] = [a for a in document["annotations"] if a["category"] != "aeroplane/body/windshield"]
    stats = compute_stats(load_dataset(write_json(document, tmp_path / "d.json")))
    frame = boxplot_frame(stats)
    aeroplane = frame[frame["object"] == "aeroplane"].set_index("factor")
    assert aeroplane.loc["subparts_per_part", "n"] == 1
    assert aeroplane.loc["subparts_per_part", "median"] == 0
    empty = aeroplane.drop(index="subparts_per_part")
    assert len(empty) == 5
    assert (empty["note"] == EMPTY_NOTE).all()
    assert (empty["n"] == 0).all()


# --- графики ---------------------------------------------------------------------------


def test_stats_plots_are_deterministic(toy_dataset, tmp_path):
    stats = compute_stats(toy_dataset)
    first = emit_stats_plots(stats, tmp_path / "a", ["csv", "svg"])
    second = emit_stats_plots(stats, tmp_path / "b", ["csv", "svg"])
    names = sorted(path.name for path in first)
    assert names == sorted(path.name for path in second)
    assert "boxplot_extent.svg" in names and "size_buckets.svg" in names
    for a, b in zip(sorted(first), sorted(second)):
        assert a.read_bytes() == b.read_bytes()


def test_csv_only_without_svg(toy_dataset, tmp_path):
    written = emit_stats_plots(compute_stats(toy_dataset), tmp_path, ["csv"])
    assert sorted(path.name for path in written) == ["boxplots.csv", "size_buckets.csv"]


def test_regression_plots(toy_dataset, tmp_path):
    predictions = parse_predictions(self_query_document(toy_dataset, ("general",)), "query", toy_dataset)
    scores = score_queries(predictions, toy_dataset)
    rows, _ = fit_grouped(scores)
    written = emit_regression_plots(scores, rows, tmp_path, ["svg"])
    names = sorted(path.name for path in written)
    assert names == [
        "regression_general_O.svg",
        "regression_general_P.svg",
        "regression_general_S.svg",
        "regression_points.csv",
    ]
