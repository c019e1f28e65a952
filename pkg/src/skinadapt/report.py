"""Result tables and prediction overlays."""
from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import Sequence

import numpy as np

from .adapt.config import APPROACH_TITLES
from .adapt.experiment import ResultTable
from .data.io import to_uint8, write_image_file
from .data.types import ImageSample
from .errors import DataError
from .metrics import CSV_FIELDS, MetricReport

RESULT_COLUMNS = ("source", "target", "approach", "budget", "seed", "mean_f1", "acc", "iou", "prec", "rec")
DASH = "-"


def pct(x: float) -> str:
    return f"{100.0 * x:.2f}"


def budget_label(b: float) -> str:
    return f"{100.0 * b:g}%"


def results_csv(table: ResultTable) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(RESULT_COLUMNS)
    for key in table.row_keys():
        for b in table.budgets:
            c = table.cell(*key, b)
            if c is None:
                continue
            r = c.report
            wr.writerow([c.source or "", c.target, c.approach, f"{c.budget:g}", c.seed,
                         repr(r.f1), repr(r.acc), repr(r.iou), repr(r.prec), repr(r.rec)])
    return buf.getvalue()


def results_markdown(table: ResultTable) -> str:
    head = ["Source", "Target", "Approach"] + [budget_label(b) for b in table.budgets]
    lines = ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
    for source, target, approach in table.row_keys():
        cells = []
        for b in table.budgets:
            c = table.cell(source, target, approach, b)
            cells.append(DASH if c is None else pct(c.mean_f1))
        src = "Target only" if source is None else source
        lines.append("| " + " | ".join([src, target, APPROACH_TITLES[approach]] + cells) + " |")
    notes = sorted({f"{c.approach}/{budget_label(c.budget)}: {c.note}" for c in table.cells if c.note})
    out = "\n".join(lines) + "\n"
    if notes:
        out += "\n" + "\n".join(f"- {n}" for n in notes) + "\n"
    out += f"\nCells: mean F1 (%) over target test images ({table.aggregation}).\n"
    return out


def emit_report_table(table: ResultTable, fmt: str, path) -> Path:
    """Write ``table`` as "csv" (full precision fractions) or "markdown" (percent, 2 dp)."""
    if not len(table):
        raise ValueError("result table is empty")
    if fmt == "csv":
        text = results_csv(table)
    elif fmt in ("markdown", "md"):
        text = results_markdown(table)
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    path = Path(path)
    try:
        path.write_text(text)
    except OSError as exc:
        raise DataError(f"cannot write report {path}: {exc}") from exc
    return path


def write_metric_csv(reports: Sequence[MetricReport], path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(CSV_FIELDS)
        for r in reports:
            wr.writerow(r.csv_row())
    return path


def overlay_strip(sample: ImageSample, maps: Sequence[np.ndarray], tau: float = 0.5) -> np.ndarray:
    h, w = sample.shape
    panels = [to_uint8(sample.pixels)]
    if sample.mask is not None:
        panels.append(np.repeat((sample.mask * 255).astype(np.uint8)[:, :, None], 3, axis=2))
    for m in maps:
        m = np.asarray(m)
        if m.shape != (h, w):
            raise DataError(f"prediction map {m.shape} does not match image {h}x{w}")
        panels.append(np.repeat(np.where(m >= tau, 255, 0).astype(np.uint8)[:, :, None], 3, axis=2))
    return np.concatenate(panels, axis=1)


def emit_overlay(sample: ImageSample, maps: Sequence[np.ndarray], path, tau: float = 0.5) -> Path:
    """Left to right: image, ground truth (if any), each thresholded prediction."""
    path = Path(path)
    write_image_file(path, overlay_strip(sample, maps, tau))
    return path
