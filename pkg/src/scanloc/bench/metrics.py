"""Closed-box hit indicator and Table-1-shaped accuracy aggregation."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from scanloc.geometry import PointPx
from scanloc.tasks import CATEGORIES, UI_TYPES, ClosedBox, GroundingTask


def hit(p: PointPx, bbox: ClosedBox) -> int:
    """1 iff ``x1 <= x <= x2`` and ``y1 <= y <= y2`` (both edges inclusive)."""
    return int(bbox.x1 <= p.x <= bbox.x2 and bbox.y1 <= p.y <= bbox.y2)


@dataclass
class EvalReport:
    """Hit counts per (category, ui_type) cell plus run metadata.

    Only counts are stored; every accuracy is derived, so cell-weighted
    recombination equals the overall figure by construction.
    """

    label: str = ""
    fingerprint: str = ""
    cells: dict[tuple[str, str], tuple[int, int]] = field(default_factory=dict)
    scanner_calls: int = 0
    locator_calls: int = 0
    failures: int = 0

    def add(self, category: str, ui_type: str, hit_value: int) -> None:
        hits, n = self.cells.get((category, ui_type), (0, 0))
        self.cells[(category, ui_type)] = (hits + hit_value, n + 1)

    def counts(self, category: str | None = None, ui_type: str | None = None) -> tuple[int, int]:
        hits = n = 0
        for (cat, ui), (h, k) in self.cells.items():
            if (category is None or cat == category) and (ui_type is None or ui == ui_type):
                hits, n = hits + h, n + k
        return hits, n

    def accuracy(self, category: str | None = None, ui_type: str | None = None) -> float | None:
        """Accuracy over the matching cells, or None when they hold no tasks."""
        hits, n = self.counts(category, ui_type)
        return hits / n if n else None

    @property
    def n(self) -> int:
        return self.counts()[1]

    @property
    def overall(self) -> float:
        value = self.accuracy()
        return 0.0 if value is None else value

    def categories(self) -> list[str]:
        known = [c for c in CATEGORIES if any(cat == c for cat, _ in self.cells)]
        extra = sorted({cat for cat, _ in self.cells} - set(CATEGORIES))
        return known + extra


def accuracy(
    points: Sequence[PointPx],
    tasks: Sequence[GroundingTask],
    label: str = "",
    fingerprint: str = "",
    call_counts: Sequence[dict[str, int]] = (),
) -> EvalReport:
    """Aggregate one final point per task into an :class:`EvalReport`.

    Raises:
        ValueError: if the number of points and tasks differ.
    """
    if len(points) != len(tasks):
        raise ValueError(f"{len(points)} results for {len(tasks)} tasks")
    report = EvalReport(label=label, fingerprint=fingerprint)
    for p, task in zip(points, tasks):
        report.add(task.category, task.ui_type, hit(p, task.gt_bbox))
    for counts in call_counts:
        report.scanner_calls += counts.get("scanner", 0)
        report.locator_calls += counts.get("locator", 0)
    return report


__all__ = ["CATEGORIES", "EvalReport", "UI_TYPES", "accuracy", "hit"]
