"""Benchmark task records and the closed-interval ground-truth box."""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from PIL import Image

from scanloc.geometry import ImageSize, PointPx, RectPx

CATEGORIES = ("Development", "Creative", "CAD", "Scientific", "Office", "OS")
UI_TYPES = ("text", "icon")
SPECIAL_SUBSETS = frozenset({"common_linux", "common_windows", "common_macos"})


@dataclass(frozen=True)
class ClosedBox:
    """Ground-truth box, closed on both edges: ``[x1, x2] x [y1, y2]``.

    Kept apart from :class:`RectPx` (half-open) on purpose; use
    :meth:`to_rect` to convert.
    """

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self) -> None:
        if self.x1 > self.x2 or self.y1 > self.y2:
            raise ValueError(f"inverted bbox [{self.x1}, {self.y1}, {self.x2}, {self.y2}]")

    def contains(self, p: PointPx) -> bool:
        return self.x1 <= p.x <= self.x2 and self.y1 <= p.y <= self.y2

    def to_rect(self) -> RectPx:
        """Smallest half-open pixel rect covering every integer point of the box."""
        return RectPx(
            math.ceil(self.x1), math.ceil(self.y1),
            math.floor(self.x2) + 1, math.floor(self.y2) + 1,
        )

    def as_list(self) -> list[float]:
        return [self.x1, self.y1, self.x2, self.y2]


class Screenshot:
    """A screen image whose size is known up front and whose pixels load lazily."""

    def __init__(self, size: ImageSize, loader: Callable[[], Image.Image]) -> None:
        self.size = size
        self._loader = loader
        self._pixels: Image.Image | None = None
        self._lock = threading.Lock()

    @classmethod
    def from_path(cls, path: str | Path) -> Screenshot:
        with Image.open(path) as im:
            size = ImageSize(*im.size)

        def load() -> Image.Image:
            with Image.open(path) as im:
                return im.convert("RGB")

        return cls(size, load)

    @classmethod
    def from_image(cls, image: Image.Image) -> Screenshot:
        rgb = image.convert("RGB")
        return cls(ImageSize(*rgb.size), lambda: rgb)

    def pixels(self) -> Image.Image:
        with self._lock:
            if self._pixels is None:
                self._pixels = self._loader()
            return self._pixels


@dataclass
class GroundingTask:
    task_id: str
    instruction: str
    application_name: str
    system_name: str
    gt_bbox: ClosedBox
    category: str
    ui_type: str
    subset_id: str
    image_size: ImageSize
    image_path: Path | None = None
    available: bool = True
    # synthetic tasks render their pixels on demand instead of reading a file
    renderer: Callable[[], Image.Image] | None = field(default=None, repr=False, compare=False)
    extra: dict[str, Any] = field(default_factory=dict, repr=False, compare=False)

    @property
    def special(self) -> bool:
        return self.subset_id in SPECIAL_SUBSETS

    @property
    def variant(self) -> str:
        return "special" if self.special else "normal"

    def screenshot(self) -> Screenshot:
        if self.renderer is not None:
            return Screenshot(self.image_size, self.renderer)
        if self.image_path is None:
            raise FileNotFoundError(f"task {self.task_id} has no image")
        return Screenshot.from_path(self.image_path)
