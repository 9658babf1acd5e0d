# -*- coding: utf-8 -*-
"""
Командная строка: validate, stats, eval, recog, regress, report, import-spin.

Коды выхода: 0 - успех, 1 - проверка не пройдена, 2 - ошибка использования или разбора.
Результаты пишутся в файлы (--out), в stdout - одна строка итога.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Callable, Sequence

import pandas as pd

from hiereval import analysis, metrics, plots, reports
from hiereval.config import (
    AVERAGING,
    FORMATS,
    GROUP_BY,
    LOG_LEVEL,
    MODES,
    OUT_DIR,
    SPECIFICITY_FILTERS,
    TAXONOMY_FILE,
    WORKERS,
    RunConfig,
    color_enabled,
    parse_expectations,
)
from hiereval.dataset_io import (
    load_answers,
    load_dataset,
    load_predictions,
    read_json,
    save_dataset,
    validate_dataset,
)
from hiereval.errors import ConfigError, DatasetError, HierEvalError
from hiereval.spin_import import find_split_files, import_spin
from hiereval.taxonomy import load_taxonomy_file

logger = logging.getLogger("hiereval")

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2

GREEN = "\033[32m"
RED = "\033[31m"
RESET = "\033[0m"


class UsageError(HierEvalError):
    """Не хватает обязательных аргументов команды"""


def setup_logging(level: str = LOG_LEVEL) -> None:
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format="%(asctime)s - %(levelname)s - %(message)s",
        stream=sys.stderr,
        force=True,
    )


def summary(text: str, ok: bool = True) -> None:
    """Одна строка итога в stdout"""
    if color_enabled():
        text = f"{GREEN if ok else RED}{text}{RESET}"
    print(text)


def _require(config: RunConfig, dataset: bool = True, predictions: int | None = None) -> None:
    problems = []
    if dataset and not config.dataset:
        problems.append(f"{config.command}: требуется --dataset")
    if predictions is not None:
        if predictions == 1 and len(config.predictions) != 1:
            problems.append(f"{config.command}: требуется ровно один --predictions")
        if predictions > 1 and not config.predictions:
            problems.append(f"{config.command}: требуется хотя бы один --predictions")
    if problems:
        raise UsageError("; ".join(problems))


def _out(config: RunConfig) -> Path:
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _inputs(config: RunConfig) -> list[str]:
    items = [config.dataset] if config.dataset else []
    return items + list(config.predictions)


# --- команды -------------------------------------------------------------------------


def cmd_validate(config: RunConfig) -> int:
    """Проверка датасета: счетчики, структура, ожидаемые значения (--expect)"""
    _require(config)
    out = _out(config)
    dataset = load_dataset(config.dataset, strict=config.strict, images_dir=config.images)
    report = validate_dataset(dataset, config.expect, strict=config.strict, workers=config.workers)
    written = [reports.write_document(report.to_dict(), out / "validation.json")]
    written += reports.write_tables(reports.validation_tables(report), out, config.formats)
    reports.write_manifest(out, config.command, config.manifest_view(), _inputs(config), written)

    for issue in report.issues:
        logger.error(f"❌ {issue['location']}: {issue['message']}")
    for check in report.failed_checks():
        logger.error(f"❌ {check['name']}: ожидалось {check['expected']}, получено {check['actual']} (Δ {check['delta']})")
    if report.warnings:
        logger.warning(f"⚠️ Предупреждений: {len(report.warnings)}")
    splits = "/".join(str(v) for v in report.split_counts.values())
    summary(
        f"{'✅' if report.passed else '❌'} validate: {report.image_count} изображений ({splits}), "
        f"проверок {len(report.checks) - len(report.failed_checks())}/{len(report.checks)}",
        report.passed,
    )
    return EXIT_OK if report.passed else EXIT_FAILED


def cmd_stats(config: RunConfig) -> int:
    """Статистика подчастей: размеры, дыры, многополигонность, шесть факторов сложности"""
    _require(config)
    out = _out(config)
    dataset = load_dataset(config.dataset, strict=config.strict, images_dir=config.images)
    stats = analysis.compute_stats(dataset, workers=config.workers)
    written = [reports.write_document(stats.to_dict(), out / "stats.json")]
    tables = {
        "stats_summary": reports.format_frame(stats.summary_table()),
        "stats_parts": stats.part_table(),
        "stats_polygons": reports.format_frame(stats.polygon_split()),
        "stats_subparts_per_object": stats.subparts_per_object(),
    }
    written += reports.write_tables(tables, out, config.formats)
    written += plots.emit_stats_plots(stats, out, config.formats)
    reports.write_manifest(out, config.command, config.manifest_view(), _inputs(config), written)

    sizes = stats.size_fractions()
    summary(
        f"📊 stats: {len(stats.subparts)} подчастей, small/medium/large = "
        + "/".join(f"{float(v) * 100:.2f}%" for v in sizes.values())
        + f", пропущено {stats.skipped}"
    )
    return EXIT_OK


def cmd_eval(config: RunConfig) -> int:
    """mIoU, SpCS, SeCS и доля воздержаний для одного файла предсказаний"""
    _require(config, predictions=1)
    out = _out(config)
    dataset = load_dataset(config.dataset, strict=config.strict, images_dir=config.images)
    predictions = load_predictions(config.predictions[0], config.mode, dataset, strict=config.strict)
    report, _ = metrics.evaluate(
        predictions,
        dataset,
        averaging=config.averaging,
        specificities=config.specificities(),
        method=config.method,
        params=config.params,
        workers=config.workers,
    )
    written = [reports.write_document(report.to_dict(), out / "report.json")]
    tables = {
        "table2": reports.table2_wide([report], config.specificities()),
        "table2_long": reports.table2_long([report]),
        "per_category": reports.per_category_table(report),
    }
    written += reports.write_tables(tables, out, config.formats)
    reports.write_manifest(out, config.command, config.manifest_view(), _inputs(config), written)

    parts = []
    for specificity, entry in report.results.items():
        miou = "/".join(reports.fmt_mean(entry.miou[level.code]) for level in metrics.LEVEL_ORDER)
        parts.append(f"{specificity}: mIoU S/P/O {miou}, SpCS {reports.fmt_mean(entry.spcs.avg)}")
    summary(f"✅ eval ({report.averaging}): " + "; ".join(parts))
    return EXIT_OK


def cmd_recog(config: RunConfig) -> int:
    """Точность распознавания yes/no по шести ячейкам"""
    _require(config, predictions=1)
    out = _out(config)
    dataset = load_dataset(config.dataset, strict=config.strict, images_dir=config.images)
    answers = load_answers(config.predictions[0], dataset, strict=config.strict)
    report = metrics.evaluate_recognition(answers, dataset, method=config.method, params=config.params)
    written = [reports.write_document(report.to_dict(), out / "recognition.json")]
    tables = {"table3": reports.table3([report]), "table3_long": reports.table3_long([report])}
    written += reports.write_tables(tables, out, config.formats)
    reports.write_manifest(out, config.command, config.manifest_view(), _inputs(config), written)

    cells = ", ".join(f"{cell} {reports.fmt_mean(mean)}" for cell, mean in report.accuracy.items())
    summary(f"✅ recog: {len(answers)} ответов; {cells}")
    return EXIT_OK


def cmd_regress(config: RunConfig) -> int:
    """Регрессия IoU на ln(площади разметки)"""
    _require(config, predictions=1)
    out = _out(config)
    dataset = load_dataset(config.dataset, strict=config.strict, images_dir=config.images)
    predictions = load_predictions(config.predictions[0], config.mode, dataset, strict=config.strict)
    scores = metrics.score_queries(predictions, dataset, workers=config.workers)
    specificities = set(config.specificities())
    scores = [score for score in scores if score.specificity in specificities]
    rows, level_summary = analysis.fit_grouped(scores, config.group_by)
    payload = {
        "kind": "regression",
        "method": config.method or predictions.method or "",
        "params": config.params or predictions.params or "",
        "group_by": config.group_by,
        "fits": rows,
        "summary": level_summary,
    }
    written = [reports.write_document(payload, out / "regression.json")]
    tables = {
        "regression": reports.format_frame(pd.DataFrame(rows), digits=6),
        "regression_summary": reports.format_frame(pd.DataFrame(level_summary), digits=6),
    }
    written += reports.write_tables(tables, out, config.formats)
    written += plots.emit_regression_plots(scores, rows, out, config.formats)
    reports.write_manifest(out, config.command, config.manifest_view(), _inputs(config), written)

    significant = sum(1 for row in level_summary if row["significant"])
    summary(f"✅ regress ({config.group_by}): групп {len(rows)}, значимых уровней {significant}/{len(level_summary)}")
    return EXIT_OK


def cmd_report(config: RunConfig) -> int:
    """Сводные таблицы по нескольким report.json / recognition.json"""
    _require(config, dataset=False, predictions=2)
    out = _out(config)
    metric_reports: list[metrics.MetricReport] = []
    recognition_reports: list[metrics.RecognitionReport] = []
    for path in config.predictions:
        document = read_json(path)
        kind = document.get("kind")
        if kind == "metrics":
            metric_reports.append(metrics.MetricReport.from_dict(document))
        elif kind == "recognition":
            recognition_reports.append(metrics.RecognitionReport.from_dict(document))
        else:
            raise DatasetError([(str(path), f"ожидается report.json или recognition.json, получено kind={kind!r}")])

    tables = {}
    if metric_reports:
        tables["table2"] = reports.table2_wide(metric_reports, config.specificities())
        tables["table2_long"] = reports.table2_long(metric_reports)
    if recognition_reports:
        tables["table3"] = reports.table3(recognition_reports)
        tables["table3_long"] = reports.table3_long(recognition_reports)
    written = reports.write_tables(tables, out, config.formats)
    reports.write_manifest(out, config.command, config.manifest_view(), _inputs(config), written)
    summary(f"✅ report: методов в table2: {len(metric_reports)}, в table3: {len(recognition_reports)}")
    return EXIT_OK


def cmd_import_spin(config: RunConfig) -> int:
    """Импорт релиза SPIN в канонический формат"""
    if not config.release:
        raise UsageError("import-spin: требуется --release")
    out = _out(config)
    taxonomy = load_taxonomy_file(config.taxonomy, strict=config.strict)
    ref = "spin" if Path(config.taxonomy).resolve() == Path(TAXONOMY_FILE).resolve() else str(config.taxonomy)
    dataset = import_spin(config.release, taxonomy, images_dir=config.images, taxonomy_ref=ref)
    written = [save_dataset(dataset, out / "dataset.json")]
    release_files = list(find_split_files(config.release).values())
    reports.write_manifest(out, config.command, config.manifest_view(), release_files, written)
    summary(f"✅ import-spin: {len(dataset.images)} изображений, {len(dataset.annotations)} аннотаций")
    return EXIT_OK


COMMANDS: dict[str, Callable[[RunConfig], int]] = {
    "validate": cmd_validate,
    "stats": cmd_stats,
    "eval": cmd_eval,
    "recog": cmd_recog,
    "regress": cmd_regress,
    "report": cmd_report,
    "import-spin": cmd_import_spin,
}


# --- аргументы -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--dataset", help="файл датасета (JSON)")
    common.add_argument(
        "--predictions",
        action="extend",
        nargs="+",
        default=[],
        help="файл предсказаний / ответов / report.json (для report можно несколько)",
    )
    common.add_argument("--mode", choices=MODES, default="query")
    common.add_argument("--averaging", choices=AVERAGING, default="per-query")
    common.add_argument("--specificity", choices=SPECIFICITY_FILTERS, default="both")
    common.add_argument("--expect", action="append", default=[], metavar="K=V", help="ожидаемые счетчики, например splits=8828,519,1040")
    common.add_argument("--out", default=OUT_DIR, metavar="DIR")
    common.add_argument("--workers", type=int, default=WORKERS, metavar="N")
    common.add_argument("--strict", action="store_true", help="предупреждения считаются ошибками, неизвестные ключи запрещены")
    common.add_argument("--format", dest="formats", action="append", choices=FORMATS, help="csv | md | svg | xlsx (можно повторять)")
    common.add_argument("--method", help="название метода (строка таблицы)")
    common.add_argument("--params", help="параметры метода (строка таблицы)")
    common.add_argument("--group-by", choices=GROUP_BY, default="level", help="группировка регрессии")
    common.add_argument("--images", metavar="DIR", help="папка изображений для проверки размеров")
    common.add_argument("--taxonomy", default=TAXONOMY_FILE, help="файл таксономии для import-spin")
    common.add_argument("--release", metavar="DIR", help="папка релиза SPIN для import-spin")
    common.add_argument("--log-level", default=LOG_LEVEL)

    parser = argparse.ArgumentParser(prog="hiereval", description="Оценка иерархической сегментации объект/часть/подчасть")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name, func in COMMANDS.items():
        subparsers.add_parser(name, parents=[common], help=(func.__doc__ or name).strip().splitlines()[0])
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    config = RunConfig(
        command=args.command,
        dataset=args.dataset,
        predictions=tuple(args.predictions),
        mode=args.mode,
        averaging=args.averaging,
        specificity=args.specificity,
        expect=parse_expectations(args.expect),
        out=args.out,
        workers=args.workers,
        strict=args.strict,
        formats=tuple(args.formats or ("csv", "md")),
        method=args.method,
        params=args.params,
        group_by=args.group_by,
        images=args.images,
        taxonomy=args.taxonomy,
        release=args.release,
    )
    config.ensure_valid()
    return config


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.log_level)
    try:
        config = config_from_args(args)
        return COMMANDS[config.command](config)
    except ConfigError as exc:
        for problem in exc.problems:
            logger.error(f"❌ {problem}")
        summary(f"❌ {args.command}: ошибка конфигурации", ok=False)
        return EXIT_USAGE
    except DatasetError as exc:
        for location, message in exc.issues:
            logger.error(f"❌ {location}: {message}")
        summary(f"❌ {args.command}: ошибка разбора ({len(exc.issues)})", ok=False)
        return EXIT_USAGE
    except (HierEvalError, FileNotFoundError) as exc:
        logger.error(f"❌ {exc}")
        summary(f"❌ {args.command}: {exc}", ok=False)
        return EXIT_USAGE
    except Exception:
        logger.exception("❌ Непредвиденная ошибка")
        summary(f"❌ {args.command}: непредвиденная ошибка", ok=False)
        return EXIT_USAGE
