# -*- coding: utf-8 -*-
"""
Таблицы результатов (CSV, Markdown, Excel), JSON-документы и manifest.json.

Проценты выводятся с двумя знаками, отсутствующие значения - как "—".
"""

from __future__ import annotations

import hashlib
import logging
from datetime import datetime
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import pandas as pd
from openpyxl import Workbook
from openpyxl.styles import Alignment, Font, PatternFill
from openpyxl.utils import get_column_letter

from hiereval.config import ARTIFACT_VERSION
from hiereval.dataset_io import ValidationReport, write_json
from hiereval.metrics import LEVEL_ORDER, RECOGNITION_CELLS, Mean, MetricReport, RecognitionReport

logger = logging.getLogger(__name__)

NULL = "—"
HEADER_COLOR = "D32F2F"
MAX_COLUMN_WIDTH = 50
# фиксированная дата свойств книги Excel
WORKBOOK_EPOCH = datetime(2000, 1, 1)

SPCS_COLUMNS = (("SpCS-Avg", "avg"), ("SpCS-S2P", "s2p"), ("SpCS-P2O", "p2o"))


def fmt_percent(value: float | None) -> str:
    if value is None:
        return NULL
    return f"{value * 100:.2f}"


def fmt_mean(mean: Mean | None) -> str:
    return NULL if mean is None else fmt_percent(mean.value)


def fmt_number(value: Any, digits: int = 4) -> Any:
    if value is None:
        return NULL
    if isinstance(value, float):
        return f"{value:.{digits}f}"
    return value


# --- таблицы метрик ------------------------------------------------------------------


def table2_wide(reports: Sequence[MetricReport], specificities: Sequence[str] = ("specific", "general")) -> pd.DataFrame:
    """Одна строка на метод: mIoU_S/P/O и SpCS-Avg/S2P/P2O для каждой специфичности"""
    columns = ["method", "params"]
    for specificity in specificities:
        columns += [f"mIoU_{level.code} ({specificity})" for level in LEVEL_ORDER]
        columns += [f"{name} ({specificity})" for name, _ in SPCS_COLUMNS]
    rows = []
    for report in reports:
        row: dict[str, Any] = {"method": report.method, "params": report.params}
        for specificity in specificities:
            entry = report.results.get(specificity)
            for level in LEVEL_ORDER:
                row[f"mIoU_{level.code} ({specificity})"] = fmt_mean(entry.miou.get(level.code) if entry else None)
            for name, attr in SPCS_COLUMNS:
                row[f"{name} ({specificity})"] = fmt_mean(getattr(entry.spcs, attr) if entry else None)
        rows.append(row)
    return pd.DataFrame(rows, columns=columns)


def table2_long(reports: Sequence[MetricReport]) -> pd.DataFrame:
    """Одна строка на (метод, специфичность), у каждого среднего - его знаменатель"""
    rows = []
    for report in reports:
        for specificity, entry in report.results.items():
            row: dict[str, Any] = {
                "method": report.method,
                "params": report.params,
                "specificity": specificity,
                "mode": report.mode,
                "averaging": report.averaging,
            }
            for level in LEVEL_ORDER:
                mean = entry.miou.get(level.code, Mean())
                row[f"mIoU_{level.code}"] = fmt_mean(mean)
                row[f"n_{level.code}"] = mean.count
            for name, attr in SPCS_COLUMNS:
                mean = getattr(entry.spcs, attr)
                row[name] = fmt_mean(mean)
                row[f"n_{name}"] = mean.count
            row["skipped_S2P"] = entry.spcs.skipped.get("S2P", 0)
            row["skipped_P2O"] = entry.spcs.skipped.get("P2O", 0)
            row["SeCS"] = NULL if entry.secs is None else fmt_percent(
                None if entry.secs.value is None else float(entry.secs.value)
            )
            row["n_SeCS"] = 0 if entry.secs is None else entry.secs.pixels
            for level in LEVEL_ORDER:
                mean = entry.abstention.get(level.code, Mean())
                row[f"abstain_{level.code}"] = fmt_mean(mean)
            rows.append(row)
    return pd.DataFrame(rows)


def per_category_table(report: MetricReport) -> pd.DataFrame:
    rows = []
    for specificity, entry in report.results.items():
        for item in entry.per_category:
            rows.append(
                {
                    "specificity": specificity,
                    "category": item["category"],
                    "level": item["level"],
                    "IoU": fmt_percent(item["iou"]),
                    "n": item["count"],
                    "abstained": item["abstained"],
                }
            )
    return pd.DataFrame(rows, columns=["specificity", "category", "level", "IoU", "n", "abstained"])


def table3(reports: Sequence[RecognitionReport]) -> pd.DataFrame:
    """mACC по шести ячейкам (уровень × специфичность)"""
    rows = []
    for report in reports:
        row: dict[str, Any] = {"method": report.method, "params": report.params}
        for cell in RECOGNITION_CELLS:
            row[cell] = fmt_mean(report.accuracy.get(cell))
        rows.append(row)
    return pd.DataFrame(rows, columns=["method", "params", *RECOGNITION_CELLS])


def table3_long(reports: Sequence[RecognitionReport]) -> pd.DataFrame:
    rows = []
    for report in reports:
        for cell in RECOGNITION_CELLS:
            accuracy = report.accuracy.get(cell, Mean())
            yes_rate = report.yes_rate.get(cell, Mean())
            rows.append(
                {
                    "method": report.method,
                    "params": report.params,
                    "cell": cell,
                    "accuracy": fmt_mean(accuracy),
                    "yes_rate": fmt_mean(yes_rate),
                    "n": accuracy.count,
                }
            )
    return pd.DataFrame(rows, columns=["method", "params", "cell", "accuracy", "yes_rate", "n"])


# --- таблицы проверки и статистики --------------------------------------------------


def validation_tables(report: ValidationReport) -> dict[str, pd.DataFrame]:
    counts = [{"name": "images", "value": report.image_count}]
    counts += [{"name": f"split:{split}", "value": value} for split, value in report.split_counts.items()]
    counts += [{"name": name, "value": value} for name, value in report.category_counts.items()]
    counts += [{"name": name, "value": value} for name, value in report.annotation_counts.items()]
    checks = [
        {
            "name": check["name"],
            "expected": ",".join(str(v) for v in check["expected"]),
            "actual": NULL if check["actual"] is None else ",".join(str(v) for v in check["actual"]),
            "delta": NULL if check["delta"] is None else ",".join(f"{v:+d}" for v in check["delta"]),
            "passed": check["passed"],
        }
        for check in report.checks
    ]
    return {
        "validation_counts": pd.DataFrame(counts, columns=["name", "value"]),
        "validation_checks": pd.DataFrame(checks, columns=["name", "expected", "actual", "delta", "passed"]),
        "category_histogram": pd.DataFrame(
            [{"category": k, "entities": v} for k, v in report.category_histogram.items()],
            columns=["category", "entities"],
        ),
    }


def format_frame(frame: pd.DataFrame, digits: int = 4) -> pd.DataFrame:
    """Числа с плавающей точкой - строкой с фиксированным числом знаков, NaN/None - как '—'"""
    formatted = frame.astype(object).where(pd.notna(frame), None)
    return formatted.apply(lambda column: column.map(lambda value: fmt_number(value, digits)))


# --- запись --------------------------------------------------------------------------


def _write_csv(frame: pd.DataFrame, path: Path) -> Path:
    frame.to_csv(path, index=False, lineterminator="\n")
    return path


def _write_markdown(frame: pd.DataFrame, path: Path) -> Path:
    text = frame.to_markdown(index=False) if len(frame.columns) else ""
    path.write_text(text + "\n", encoding="utf-8")
    return path


def write_workbook(frames: Mapping[str, pd.DataFrame], path: Path) -> Path:
    """Книга Excel: лист на таблицу, заголовок - белый жирный на красном, автоширина колонок"""
    wb = Workbook()
    wb.remove(wb.active)
    for name, frame in frames.items():
        ws = wb.create_sheet(title=name[:31])
        headers = [str(column) for column in frame.columns]
        for col, header in enumerate(headers, 1):
            cell = ws.cell(row=1, column=col, value=header)
            cell.font = Font(bold=True, color="FFFFFF")
            cell.fill = PatternFill(start_color=HEADER_COLOR, end_color=HEADER_COLOR, fill_type="solid")
            cell.alignment = Alignment(horizontal="center")
        for row_idx, values in enumerate(frame.itertuples(index=False), 2):
            for col, value in enumerate(values, 1):
                ws.cell(row=row_idx, column=col, value=None if pd.isna(value) else value)

        for col in range(1, len(headers) + 1):
            column = get_column_letter(col)
            max_length = max(
                (len(str(ws[f"{column}{row}"].value)) for row in range(1, len(frame) + 2) if ws[f"{column}{row}"].value),
                default=0,
            )
            ws.column_dimensions[column].width = min((max_length + 2) * 1.2, MAX_COLUMN_WIDTH)
    wb.properties.created = WORKBOOK_EPOCH
    wb.properties.modified = WORKBOOK_EPOCH
    wb.save(path)
    return path


def write_tables(frames: Mapping[str, pd.DataFrame], out_dir: str | Path, formats: Iterable[str]) -> list[Path]:
    """Записать таблицы во всех запрошенных форматах; svg относится к графикам и здесь пропускается"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    formats = list(dict.fromkeys(formats))
    written: list[Path] = []
    for name, frame in frames.items():
        if "csv" in formats:
            written.append(_write_csv(frame, out_dir / f"{name}.csv"))
        if "md" in formats:
            written.append(_write_markdown(frame, out_dir / f"{name}.md"))
    if "xlsx" in formats and frames:
        written.append(write_workbook(frames, out_dir / "tables.xlsx"))
    for path in written:
        logger.info(f"💾 {path}")
    return written


def write_document(payload: Any, path: str | Path) -> Path:
    path = write_json(payload, path)
    logger.info(f"💾 {path}")
    return path


def sha256_file(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(
    out_dir: str | Path,
    command: str,
    config: Mapping[str, Any],
    inputs: Iterable[str | Path],
    outputs: Iterable[str | Path],
) -> Path:
    """Команда, конфигурация, sha256 входных файлов, список выходных файлов и версия артефакта"""
    out_dir = Path(out_dir)
    manifest = {
        "artifact_version": ARTIFACT_VERSION,
        "command": command,
        "config": dict(config),
        "inputs": {str(p): sha256_file(p) for p in inputs if Path(p).is_file()},
        "outputs": sorted(Path(p).name for p in outputs),
    }
    return write_json(manifest, out_dir / "manifest.json")
