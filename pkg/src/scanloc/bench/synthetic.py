"""Seeded synthetic high-resolution screens with one small labelled target each.

Pixels are rendered only on demand, so oracle-mode runs over hundreds of
5K screens cost nothing beyond the layout draw.
"""

from __future__ import annotations

import numpy as np
from PIL import Image, ImageDraw

from scanloc.geometry import ImageSize
from scanloc.tasks import CATEGORIES, UI_TYPES, ClosedBox, GroundingTask

SCREEN_SIZES = ((2560, 1440), (3840, 2160), (3600, 2400), (5120, 2880), (3072, 1920))

_APPS = {
    "Development": ("vscode", "pycharm", "android_studio"),
    "Creative": ("photoshop", "blender", "premiere"),
    "CAD": ("autocad", "solidworks", "inventor"),
    "Scientific": ("matlab", "origin", "stata"),
    "Office": ("word", "excel", "powerpoint"),
    "OS": ("common",),
}
_SYSTEMS = ("windows", "macos", "linux")
_LABELS = (
    "Save", "Export", "Undo", "Redo", "Zoom", "Filter", "Layers", "Insert", "Render",
    "Settings", "Search", "Run", "Debug", "Bold", "Align", "Crop", "Share", "Print",
)


def _renderer(size: ImageSize, box: ClosedBox, label: str, layout_seed: list[int]):
    def render() -> Image.Image:
        rng = np.random.default_rng(layout_seed)
        image = Image.new("RGB", (size.width, size.height), (236, 236, 240))
        draw = ImageDraw.Draw(image)
        for _ in range(60):
            w, h = int(rng.integers(20, 300)), int(rng.integers(12, 120))
            x, y = int(rng.integers(0, size.width - w)), int(rng.integers(0, size.height - h))
            shade = tuple(int(c) for c in rng.integers(150, 220, size=3))
            draw.rectangle((x, y, x + w, y + h), fill=shade, outline=(120, 120, 120))
        x1, y1, x2, y2 = (int(v) for v in box.as_list())
        draw.rectangle((x1, y1, x2, y2), fill=(40, 110, 220), outline=(10, 40, 90))
        draw.text((x1 + 2, y1 + 1), label[:3], fill=(255, 255, 255))
        return image

    return render


def synthetic_task(
    index: int,
    seed: int = 0,
    size: tuple[int, int] | None = None,
    target_side: tuple[int, int] = (10, 40),
) -> GroundingTask:
    """Task ``index`` of the stream for ``seed``; identical inputs give identical tasks."""
    rng = np.random.default_rng([seed, index, 0x5C4A])
    width, height = size if size is not None else SCREEN_SIZES[int(rng.integers(len(SCREEN_SIZES)))]
    category = CATEGORIES[index % len(CATEGORIES)]
    ui_type = UI_TYPES[int(rng.integers(2))]
    lo, hi = target_side
    tw, th = int(rng.integers(lo, hi + 1)), int(rng.integers(lo, hi + 1))
    if ui_type == "text":
        tw = min(tw * 3, hi * 3)
    x1 = int(rng.integers(0, width - tw))
    y1 = int(rng.integers(0, height - th))
    box = ClosedBox(x1, y1, x1 + tw - 1, y1 + th - 1)
    app = _APPS[category][int(rng.integers(len(_APPS[category])))]
    system = _SYSTEMS[int(rng.integers(len(_SYSTEMS)))]
    label = _LABELS[int(rng.integers(len(_LABELS)))]
    image_size = ImageSize(width, height)
    return GroundingTask(
        task_id=f"synth-{seed}-{index:05d}",
        instruction=f"click the {label} {'button' if ui_type == 'text' else 'icon'}",
        application_name=app,
        system_name=system,
        gt_bbox=box,
        category=category,
        ui_type=ui_type,
        subset_id=f"{app}_{system}",
        image_size=image_size,
        renderer=_renderer(image_size, box, label, [seed, index, 0xD4A3]),
    )


def synthetic_tasks(n: int, seed: int = 0, size: tuple[int, int] | None = None) -> list[GroundingTask]:
    if n < 0:
        raise ValueError("n must be >= 0")
    return [synthetic_task(i, seed, size) for i in range(n)]
