"""Report emitters: Table-1-shaped markdown, lossless CSV, and result overlays."""

from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import Sequence

from PIL import Image, ImageDraw

from scanloc.bench.metrics import EvalReport, hit
from scanloc.geometry import GridSpec, RectPx, partition_grid
from scanloc.pipeline import GroundingResult
from scanloc.tasks import CATEGORIES, UI_TYPES, GroundingTask

CSV_COLUMNS = (
    "label", "fingerprint", "scanner_calls", "locator_calls", "failures",
    "category", "ui_type", "hits", "n", "accuracy",
)


def _pct(value: float | None) -> str:
    return "-" if value is None else f"{100 * value:.1f}"


def markdown_table(reports: Sequence[EvalReport]) -> str:
    """One row per report: text/icon/avg for each category, then the overall average."""
    blocks = list(CATEGORIES) + ["Average"]
    header = ["Run"] + [f"{b} {col}" for b in blocks for col in ("text", "icon", "avg")]
    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    for report in reports:
        row = [report.label or report.fingerprint or "-"]
        for block in blocks:
            cat = None if block == "Average" else block
            row += [_pct(report.accuracy(cat, "text")), _pct(report.accuracy(cat, "icon")),
                    _pct(report.accuracy(cat))]
        lines.append("| " + " | ".join(row) + " |")
    return "\n".join(lines) + "\n"


def _cell_keys(report: EvalReport) -> list[tuple[str, str]]:
    keys = [(c, u) for c in CATEGORIES for u in UI_TYPES]
    return keys + sorted(k for k in report.cells if k not in keys)


def report_to_csv(reports: Sequence[EvalReport]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for report in reports:
        for category, ui_type in _cell_keys(report):
            hits, n = report.cells.get((category, ui_type), (0, 0))
            writer.writerow([
                report.label, report.fingerprint, report.scanner_calls, report.locator_calls,
                report.failures, category, ui_type, hits, n, f"{hits / n:.6f}" if n else "",
            ])
    return buf.getvalue()


def reports_from_csv(text: str) -> list[EvalReport]:
    """Inverse of :func:`report_to_csv`; reports keep their file order.

    Raises:
        ValueError: on a missing column or inconsistent metadata within one label.
    """
    reader = csv.DictReader(io.StringIO(text))
    missing = set(CSV_COLUMNS) - set(reader.fieldnames or ())
    if missing:
        raise ValueError(f"CSV lacks columns {sorted(missing)}")
    reports: dict[tuple[str, str], EvalReport] = {}
    for row in reader:
        key = (row["label"], row["fingerprint"])
        meta = (int(row["scanner_calls"]), int(row["locator_calls"]), int(row["failures"]))
        report = reports.get(key)
        if report is None:
            report = reports[key] = EvalReport(row["label"], row["fingerprint"], {}, *meta)
        elif (report.scanner_calls, report.locator_calls, report.failures) != meta:
            raise ValueError(f"inconsistent totals for report {row['label']!r}")
        hits, n = int(row["hits"]), int(row["n"])
        if n:
            report.cells[(row["category"], row["ui_type"])] = (hits, n)
    return list(reports.values())


def emit_report(reports: Sequence[EvalReport], path: str | Path, fmt: str = "markdown") -> Path:
    """Write reports as ``markdown`` or ``csv``; returns the path written."""
    if fmt == "markdown":
        text = markdown_table(reports)
    elif fmt == "csv":
        text = report_to_csv(reports)
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    path = Path(path)
    path.write_text(text, encoding="utf-8")
    return path


HIT_COLOR = (0, 200, 0)
MISS_COLOR = (230, 0, 0)


def render_overlay(
    task: GroundingTask,
    result: GroundingResult,
    max_side: int = 2048,
    image: Image.Image | None = None,
) -> Image.Image:
    """Screenshot annotated with the search, the candidates, the truth and the answer.

    Stage-1 grid in grey, expanded regions in yellow, candidate crops in
    green (verified) or orange, the ground-truth box in blue and the final
    point in green for a hit or red for a miss.
    """
    base = (image if image is not None else task.screenshot().pixels()).convert("RGB")
    f = min(1.0, max_side / max(base.size))
    canvas = base.resize((max(1, round(base.width * f)), max(1, round(base.height * f))))
    draw = ImageDraw.Draw(canvas)

    def box(r: RectPx | tuple[float, float, float, float], color, width=2) -> None:
        x1, y1, x2, y2 = (r.x1, r.y1, r.x2 - 1, r.y2 - 1) if isinstance(r, RectPx) else r
        draw.rectangle((x1 * f, y1 * f, x2 * f, y2 * f), outline=color, width=width)

    for tile in partition_grid(task.image_size.as_rect(), GridSpec(3, 3)):
        box(tile, (150, 150, 150), 1)
    for node in result.explored:
        box(node.rect, (240, 200, 0), 2)
    for cand in result.candidates:
        box(cand.crop, (0, 170, 0) if cand.verdict else (255, 140, 0), 2)
    g = task.gt_bbox
    box((g.x1, g.y1, g.x2, g.y2), (0, 90, 255), 3)
    p = result.final_point
    color = HIT_COLOR if hit(p, task.gt_bbox) else MISS_COLOR
    rad = max(5, round(12 * max(f, 0.5)))
    draw.ellipse((p.x * f - rad, p.y * f - rad, p.x * f + rad, p.y * f + rad), outline=color, width=3)
    draw.line((p.x * f - 2 * rad, p.y * f, p.x * f + 2 * rad, p.y * f), fill=color, width=2)
    draw.line((p.x * f, p.y * f - 2 * rad, p.x * f, p.y * f + 2 * rad), fill=color, width=2)
    return canvas


def emit_overlay(task: GroundingTask, result: GroundingResult, path: str | Path, max_side: int = 2048) -> Path:
    path = Path(path)
    render_overlay(task, result, max_side).save(path, format="PNG")
    return path
