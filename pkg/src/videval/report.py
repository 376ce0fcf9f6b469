"""Aggregation of per-dataset results into per-model tables.

Tables group metric reports by task, order datasets canonically, and
append an unweighted Average row computed on unrounded values. Rendering
(CSV, Markdown, structured JSON) is byte-deterministic; values are
rounded half-up only at render time, at the precision each metric is
conventionally reported with.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Iterable, Sequence

__all__ = [
    "MetricReport",
    "ModelTable",
    "ReportError",
    "TableBlock",
    "TASK_METRICS",
    "aggregate",
    "dump_metric_reports",
    "load_metric_reports",
    "render",
]

# fixed metric registry per task (table column order)
TASK_METRICS: dict[str, tuple[str, ...]] = {
    "qa": ("acc", "mat"),
    "caption": ("prec", "cov"),
    "ngram": ("C", "B4", "M", "R"),
    "t2v": ("acc1", "acc5"),
    "v2t": ("acc1", "acc5"),
    "action": ("acc1", "acc5"),
}

TASK_ORDER = ("qa", "caption", "ngram", "t2v", "v2t", "action")

# render precision: accuracy percents 1 decimal, 1-5 judge scores 2,
# conventional caption metrics 1
_DECIMALS = {
    "acc": 1,
    "acc1": 1,
    "acc5": 1,
    "mat": 2,
    "prec": 2,
    "cov": 2,
    "C": 1,
    "B4": 1,
    "M": 1,
    "R": 1,
}

# percent-style display of raw metric values: CIDEr-D arrives on its
# 10-point scale and is shown x10; BLEU/METEOR/ROUGE arrive in [0, 1]
# and are shown x100
_NGRAM_DISPLAY_SCALE = {"C": 10.0, "B4": 100.0, "M": 100.0, "R": 100.0}

ABSENT_MARKDOWN = "–"


class ReportError(ValueError):
    pass


@dataclass(slots=True)
class MetricReport:
    model_id: str
    task: str
    dataset_id: str
    metrics: dict[str, float]
    provenance: dict = field(default_factory=dict)


@dataclass(slots=True)
class TableBlock:
    task: str
    columns: tuple[str, ...]
    rows: list[tuple[str, dict[str, float | None]]]
    average: dict[str, float | None]
    incomplete: bool


@dataclass(slots=True)
class ModelTable:
    model_id: str
    blocks: list[TableBlock]


def _validate_report(report: MetricReport) -> None:
    if report.task not in TASK_METRICS:
        raise ReportError(f"unknown task '{report.task}' (expected one of {sorted(TASK_METRICS)})")
    registry = TASK_METRICS[report.task]
    unknown = sorted(set(report.metrics) - set(registry))
    if unknown:
        raise ReportError(
            f"metrics {unknown} not in the '{report.task}' registry {list(registry)}"
        )
    for name, value in report.metrics.items():
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ReportError(f"metric '{name}' must be numeric, got {value!r}")


def _dataset_sort_key(dataset_order: Sequence[str]):
    position = {d: i for i, d in enumerate(dataset_order)}

    def key(dataset_id: str):
        return (0, position[dataset_id]) if dataset_id in position else (1, dataset_id)

    return key


def aggregate(reports: Iterable[MetricReport], dataset_order: Sequence[str] | None = None) -> dict[str, ModelTable]:
    """Group reports into one table per model.

    Datasets follow ``dataset_order`` where listed (unlisted ones sort
    alphabetically after), so the result is invariant to input report
    order. Identical duplicate reports are merged; conflicting duplicates
    for the same (model, task, dataset) are an error. Cells missing from
    a report stay absent and are excluded from the Average row, which
    flags the block as incomplete.
    """
    dataset_order = tuple(dataset_order or ())
    merged: dict[tuple[str, str, str], dict[str, float]] = {}
    for report in reports:
        _validate_report(report)
        key = (report.model_id, report.task, report.dataset_id)
        if key in merged:
            if merged[key] != report.metrics:
                raise ReportError(f"conflicting duplicate reports for {key}")
            continue
        merged[key] = dict(report.metrics)

    tables: dict[str, ModelTable] = {}
    sort_key = _dataset_sort_key(dataset_order)
    for model_id in sorted({key[0] for key in merged}):
        blocks: list[TableBlock] = []
        for task in TASK_ORDER:
            datasets = sorted(
                {key[2] for key in merged if key[0] == model_id and key[1] == task}, key=sort_key
            )
            if not datasets:
                continue
            columns = TASK_METRICS[task]
            rows: list[tuple[str, dict[str, float | None]]] = []
            incomplete = False
            for dataset_id in datasets:
                metrics = merged[(model_id, task, dataset_id)]
                cells = {col: metrics.get(col) for col in columns}
                if any(v is None for v in cells.values()):
                    incomplete = True
                rows.append((dataset_id, cells))
            average: dict[str, float | None] = {}
            for col in columns:
                present = [cells[col] for _, cells in rows if cells[col] is not None]
                average[col] = sum(present) / len(present) if present else None
            blocks.append(
                TableBlock(task=task, columns=columns, rows=rows, average=average, incomplete=incomplete)
            )
        tables[model_id] = ModelTable(model_id=model_id, blocks=blocks)
    return tables


def _format_value(value: float | None, metric: str, scale_ngram: bool) -> str | None:
    if value is None:
        return None
    if scale_ngram and metric in _NGRAM_DISPLAY_SCALE:
        value = value * _NGRAM_DISPLAY_SCALE[metric]
    quantum = Decimal(1).scaleb(-_DECIMALS[metric])
    return str(Decimal(str(value)).quantize(quantum, rounding=ROUND_HALF_UP))


def render(table: ModelTable, fmt: str, *, scale_ngram: bool = True) -> str:
    """Render one model table as ``csv``, ``markdown``, or ``structured``
    (JSON) text. Identical tables render to identical bytes."""
    if fmt == "csv":
        return _render_csv(table, scale_ngram)
    if fmt == "markdown":
        return _render_markdown(table, scale_ngram)
    if fmt == "structured":
        return _render_structured(table, scale_ngram)
    raise ReportError(f"unknown render format '{fmt}'")


def _block_lines(block: TableBlock, scale_ngram: bool):
    for dataset_id, cells in block.rows:
        yield dataset_id, [_format_value(cells[c], c, scale_ngram) for c in block.columns]
    yield "Average", [_format_value(block.average[c], c, scale_ngram) for c in block.columns]


def _render_csv(table: ModelTable, scale_ngram: bool) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["model_id", table.model_id])
    for block in table.blocks:
        writer.writerow([])
        writer.writerow(["task", "dataset", *block.columns])
        for dataset_id, rendered in _block_lines(block, scale_ngram):
            writer.writerow([block.task, dataset_id, *[v if v is not None else "" for v in rendered]])
    return buf.getvalue()


def _render_markdown(table: ModelTable, scale_ngram: bool) -> str:
    lines = [f"# Results: {table.model_id}", ""]
    for block in table.blocks:
        lines.append(f"## {block.task}")
        lines.append("")
        lines.append("| dataset | " + " | ".join(block.columns) + " |")
        lines.append("| --- |" + " ---: |" * len(block.columns))
        for dataset_id, rendered in _block_lines(block, scale_ngram):
            cells = [v if v is not None else ABSENT_MARKDOWN for v in rendered]
            lines.append(f"| {dataset_id} | " + " | ".join(cells) + " |")
        if block.incomplete:
            lines.append("")
            lines.append(
                f"Cells marked {ABSENT_MARKDOWN} are missing and excluded from the Average row."
            )
        lines.append("")
    return "\n".join(lines)


def _render_structured(table: ModelTable, scale_ngram: bool) -> str:
    blocks = []
    for block in table.blocks:
        rows = []
        for dataset_id, rendered in _block_lines(block, scale_ngram):
            rows.append(
                {"dataset": dataset_id, "cells": dict(zip(block.columns, rendered))}
            )
        blocks.append(
            {
                "task": block.task,
                "columns": list(block.columns),
                "rows": rows,
                "incomplete": block.incomplete,
            }
        )
    return json.dumps(
        {"model_id": table.model_id, "blocks": blocks},
        ensure_ascii=False,
        sort_keys=True,
        indent=2,
    ) + "\n"


def dump_metric_reports(reports: Iterable[MetricReport], path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for report in reports:
            fh.write(
                json.dumps(
                    {
                        "model_id": report.model_id,
                        "task": report.task,
                        "dataset_id": report.dataset_id,
                        "metrics": report.metrics,
                        "provenance": report.provenance,
                    },
                    ensure_ascii=False,
                    sort_keys=True,
                )
            )
            fh.write("\n")


def load_metric_reports(path) -> list[MetricReport]:
    path = Path(path)
    reports = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                report = MetricReport(
                    model_id=obj["model_id"],
                    task=obj["task"],
                    dataset_id=obj["dataset_id"],
                    metrics=dict(obj["metrics"]),
                    provenance=dict(obj.get("provenance", {})),
                )
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ReportError(f"{path}:{lineno}: malformed metric report: {exc}") from exc
            _validate_report(report)
            reports.append(report)
    return reports
