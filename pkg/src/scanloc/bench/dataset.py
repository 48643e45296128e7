"""Benchmark manifest loading with an explicit skip report."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from PIL import Image, UnidentifiedImageError

from scanloc.geometry import ImageSize
from scanloc.tasks import CATEGORIES, UI_TYPES, ClosedBox, GroundingTask

REQUIRED_FIELDS = ("img_filename", "instruction", "bbox", "application", "platform", "ui_type")

GROUP_ALIASES = {
    "dev": "Development",
    "development": "Development",
    "creative": "Creative",
    "cad": "CAD",
    "scientific": "Scientific",
    "office": "Office",
    "os": "OS",
}


class EntryError(ValueError):
    """A manifest entry cannot become a task."""


@dataclass(frozen=True)
class SkippedEntry:
    line: int
    reason: str


@dataclass
class LoadedDataset:
    tasks: list[GroundingTask]
    skipped: list[SkippedEntry] = field(default_factory=list)
    total: int = 0

    @property
    def unavailable(self) -> list[GroundingTask]:
        return [t for t in self.tasks if not t.available]


def _read_entries(manifest: Path) -> list[tuple[int, Any]]:
    text = manifest.read_text(encoding="utf-8")
    stripped = text.lstrip()
    if stripped.startswith("["):
        data = json.loads(text)
        return list(enumerate(data, start=1))
    entries: list[tuple[int, Any]] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            entries.append((lineno, json.loads(line)))
        except json.JSONDecodeError as exc:
            entries.append((lineno, EntryError(f"invalid JSON: {exc.msg}")))
    return entries


def _category(entry: dict[str, Any]) -> str:
    raw = entry.get("group", entry.get("category"))
    if raw is None:
        raise EntryError("missing required field 'group'")
    name = GROUP_ALIASES.get(str(raw).strip().lower())
    if name is None:
        raise EntryError(f"unknown group {raw!r}; expected one of {list(CATEGORIES)}")
    return name


def _bbox(raw: Any) -> ClosedBox:
    if not isinstance(raw, (list, tuple)) or len(raw) != 4:
        raise EntryError("bbox must be [x1, y1, x2, y2]")
    try:
        x1, y1, x2, y2 = (float(v) for v in raw)
    except (TypeError, ValueError):
        raise EntryError("bbox values must be numbers") from None
    if x1 > x2 or y1 > y2:
        raise EntryError("inverted bbox")
    return ClosedBox(x1, y1, x2, y2)


def _image(root: Path, name: str, declared: Any) -> tuple[Path, ImageSize | None, bool]:
    """Resolved path, image size (read, else declared) and whether the file decodes."""
    path = root / name
    if not path.exists() and (root / "images" / name).exists():
        path = root / "images" / name
    try:
        with Image.open(path) as im:
            return path, ImageSize(*im.size), True
    except (OSError, UnidentifiedImageError):
        if isinstance(declared, (list, tuple)) and len(declared) == 2:
            return path, ImageSize(int(declared[0]), int(declared[1])), False
        return path, None, False


def parse_entry(entry: Any, root: Path, index: int) -> GroundingTask:
    """Build one task from a manifest record.

    Raises:
        EntryError: on a missing field, bad value or a bbox outside the image.
    """
    if isinstance(entry, EntryError):
        raise entry
    if not isinstance(entry, dict):
        raise EntryError("entry is not an object")
    for name in REQUIRED_FIELDS:
        if entry.get(name) in (None, ""):
            raise EntryError(f"missing required field {name!r}")
    ui_type = str(entry["ui_type"]).lower()
    if ui_type not in UI_TYPES:
        raise EntryError(f"ui_type must be text or icon, got {entry['ui_type']!r}")
    category = _category(entry)
    box = _bbox(entry["bbox"])
    path, size, available = _image(root, str(entry["img_filename"]), entry.get("img_size"))
    if size is not None and (box.x1 < 0 or box.y1 < 0 or box.x2 > size.width or box.y2 > size.height):
        raise EntryError("bbox outside image")
    application, platform = str(entry["application"]), str(entry["platform"])
    return GroundingTask(
        task_id=str(entry.get("id", f"task-{index:05d}")),
        instruction=str(entry["instruction"]),
        application_name=application,
        system_name=platform,
        gt_bbox=box,
        category=category,
        ui_type=ui_type,
        subset_id=str(entry.get("subset") or f"{application}_{platform}"),
        # unreadable and undeclared size: placeholder; the task is never run
        image_size=size if size is not None else ImageSize(1, 1),
        image_path=path,
        available=available,
    )


def load_dataset(root: str | Path, manifest: str | Path) -> LoadedDataset:
    """Load every manifest entry; malformed ones land in ``skipped``.

    ``manifest`` is JSON lines or a JSON array; a relative manifest path is
    resolved against ``root``. Unreadable images yield tasks marked
    unavailable rather than skips.
    """
    root = Path(root)
    manifest = Path(manifest)
    if not manifest.is_absolute() and not manifest.exists():
        manifest = root / manifest
    entries = _read_entries(manifest)
    tasks: list[GroundingTask] = []
    skipped: list[SkippedEntry] = []
    for index, entry in entries:
        try:
            tasks.append(parse_entry(entry, root, index))
        except EntryError as exc:
            skipped.append(SkippedEntry(index, str(exc)))
    return LoadedDataset(tasks, skipped, len(entries))
