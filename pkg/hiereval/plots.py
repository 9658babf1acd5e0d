# -*- coding: utf-8 -*-
"""
Графики статистики и регрессии: CSV всегда, SVG по запросу (--format svg).
SVG без даты и со своим hashsalt: одинаковые входы дают одинаковые байты.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Iterable, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

from hiereval.analysis import FACTORS, BoxplotSummary, DatasetStats, regression_points  # noqa: E402
from hiereval.geometry import SizeBucket  # noqa: E402
from hiereval.metrics import QueryScore  # noqa: E402
from hiereval.taxonomy import join_path  # noqa: E402

logger = logging.getLogger(__name__)

FIGSIZE = (8.0, 4.5)
SVG_PARAMS = {"svg.hashsalt": "hiereval", "svg.fonttype": "none", "font.family": "DejaVu Sans"}
BOXPLOT_COLUMNS = ["object", "factor", "n", "median", "q25", "q75", "whisker_lo", "whisker_hi", "outliers", "note"]
EMPTY_NOTE = "нет данных: панель пропущена"


def _save_svg(fig, path: Path) -> Path:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    logger.info(f"🖼️ {path}")
    return path


def boxplot_frame(stats: DatasetStats) -> pd.DataFrame:
    """Сводки boxplot по объектам и факторам; пустые панели - строкой с пометкой"""
    rows = []
    for obj in [*stats.objects, None]:
        for factor, box in stats.boxplots(obj).items():
            base = {"object": obj or "all", "factor": factor}
            if box is None:
                rows.append({**base, "n": 0, "note": EMPTY_NOTE})
                continue
            rows.append(
                {
                    **base,
                    "n": box.n,
                    "median": box.median,
                    "q25": box.q25,
                    "q75": box.q75,
                    "whisker_lo": box.whisker_lo,
                    "whisker_hi": box.whisker_hi,
                    "outliers": len(box.outliers),
                    "note": "",
                }
            )
    return pd.DataFrame(rows, columns=BOXPLOT_COLUMNS)


def size_bucket_frame(stats: DatasetStats) -> pd.DataFrame:
    rows = []
    for obj in [*stats.objects, None]:
        fractions = stats.size_fractions(obj)
        rows.append({"object": obj or "all", **{bucket: float(value) for bucket, value in fractions.items()}})
    return pd.DataFrame(rows, columns=["object", *(bucket.value for bucket in SizeBucket)])


def _bxp_stats(label: str, box: BoxplotSummary) -> dict:
    return {
        "label": label,
        "med": box.median,
        "q1": box.q25,
        "q3": box.q75,
        "whislo": box.whisker_lo,
        "whishi": box.whisker_hi,
        "fliers": list(box.outliers),
    }


def emit_stats_plots(stats: DatasetStats, out_dir: str | Path, formats: Iterable[str]) -> list[Path]:
    """boxplots.csv и size_buckets.csv; для svg - панель на фактор и гистограмма размеров"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    formats = set(formats)
    boxes = boxplot_frame(stats)
    buckets = size_bucket_frame(stats)
    written = [out_dir / "boxplots.csv", out_dir / "size_buckets.csv"]
    boxes.to_csv(written[0], index=False, lineterminator="\n")
    buckets.to_csv(written[1], index=False, lineterminator="\n")
    if "svg" not in formats:
        return written

    with plt.rc_context(SVG_PARAMS):
        for factor in FACTORS:
            panels = []
            for obj in stats.objects:
                box = stats.boxplots(obj)[factor]
                if box is not None:
                    panels.append(_bxp_stats(obj, box))
            if not panels:
                logger.warning(f"⚠️ Нет данных для панели {factor}")
                continue
            fig, ax = plt.subplots(figsize=FIGSIZE)
            ax.bxp(panels, showfliers=True)
            ax.set_title(factor)
            ax.tick_params(axis="x", labelrotation=45)
            fig.tight_layout()
            written.append(_save_svg(fig, out_dir / f"boxplot_{factor}.svg"))

        fig, ax = plt.subplots(figsize=FIGSIZE)
        bottom = np.zeros(len(buckets))
        for bucket in SizeBucket:
            values = buckets[bucket.value].to_numpy(dtype=np.float64) * 100
            ax.bar(buckets["object"], values, bottom=bottom, label=bucket.value)
            bottom += values
        ax.set_ylabel("%")
        ax.legend()
        ax.tick_params(axis="x", labelrotation=45)
        fig.tight_layout()
        written.append(_save_svg(fig, out_dir / "size_buckets.svg"))
    return written


def regression_frame(scores: Sequence[QueryScore]) -> pd.DataFrame:
    rows = [
        {
            "specificity": score.specificity,
            "level": score.level.code,
            "category": join_path(score.category),
            "size": score.gt_area,
            "iou": float(score.iou),
        }
        for score in regression_points(scores)
    ]
    return pd.DataFrame(rows, columns=["specificity", "level", "category", "size", "iou"])


def emit_regression_plots(
    scores: Sequence[QueryScore], fits: Sequence[dict], out_dir: str | Path, formats: Iterable[str]
) -> list[Path]:
    """Точки (размер, IoU) в CSV; для svg - диаграмма рассеяния с прямой на (специфичность, уровень)"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    points = regression_frame(scores)
    path = out_dir / "regression_points.csv"
    points.to_csv(path, index=False, lineterminator="\n")
    written = [path]
    if "svg" not in set(formats):
        return written

    with plt.rc_context(SVG_PARAMS):
        for (specificity, level_code), group in points.groupby(["specificity", "level"], sort=True):
            fig, ax = plt.subplots(figsize=FIGSIZE)
            ax.scatter(group["size"], group["iou"], s=4, alpha=0.4)
            ax.set_xscale("log")
            for fit in fits:
                if fit["specificity"] != specificity or fit["level"] != level_code or fit["group"] != "all":
                    continue
                if fit["beta1"] is None:
                    continue
                xs = np.geomspace(group["size"].min(), group["size"].max(), 50)
                ax.plot(xs, fit["beta1"] * np.log(xs) + fit["beta0"], color="#D32F2F")
                ax.set_title(f"{specificity} {level_code}: R²={fit['r_squared']:.3f}")
            ax.set_xlabel("size, px²")
            ax.set_ylabel("IoU")
            fig.tight_layout()
            written.append(_save_svg(fig, out_dir / f"regression_{specificity}_{level_code}.svg"))
    return written
