"""Integer pixel geometry: rects, grids, crops, frame transforms and zones.

Rects are half-open: ``[x1, x2) x [y1, y2)``. All rounding is floor.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum


class GeometryError(ValueError):
    """Raised when a geometric operation receives an invalid input."""


@dataclass(frozen=True)
class PointPx:
    x: int
    y: int

    def as_tuple(self) -> tuple[int, int]:
        return (self.x, self.y)


@dataclass(frozen=True)
class RectPx:
    x1: int
    y1: int
    x2: int
    y2: int

    def __post_init__(self) -> None:
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise GeometryError(f"invalid rect [{self.x1},{self.y1},{self.x2},{self.y2}]")

    @property
    def width(self) -> int:
        return self.x2 - self.x1

    @property
    def height(self) -> int:
        return self.y2 - self.y1

    @property
    def area(self) -> int:
        return self.width * self.height

    def contains(self, p: PointPx) -> bool:
        return self.x1 <= p.x < self.x2 and self.y1 <= p.y < self.y2

    def contains_rect(self, other: RectPx) -> bool:
        return (
            self.x1 <= other.x1 and self.y1 <= other.y1
            and other.x2 <= self.x2 and other.y2 <= self.y2
        )

    def intersection(self, other: RectPx) -> RectPx | None:
        x1, y1 = max(self.x1, other.x1), max(self.y1, other.y1)
        x2, y2 = min(self.x2, other.x2), min(self.y2, other.y2)
        if x1 < x2 and y1 < y2:
            return RectPx(x1, y1, x2, y2)
        return None

    def intersects(self, other: RectPx) -> bool:
        return self.intersection(other) is not None

    def center(self) -> PointPx:
        """Integer center, ``floor((x1 + x2 - 1) / 2)`` on each axis."""
        return PointPx((self.x1 + self.x2 - 1) // 2, (self.y1 + self.y2 - 1) // 2)

    def as_list(self) -> list[int]:
        return [self.x1, self.y1, self.x2, self.y2]


@dataclass(frozen=True)
class ImageSize:
    width: int
    height: int

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise GeometryError(f"invalid image size {self.width}x{self.height}")

    def as_rect(self) -> RectPx:
        return RectPx(0, 0, self.width, self.height)


@dataclass(frozen=True)
class GridSpec:
    rows: int
    cols: int

    def __post_init__(self) -> None:
        if self.rows < 1 or self.cols < 1:
            raise GeometryError(f"invalid grid {self.rows}x{self.cols}")

    @property
    def cells(self) -> int:
        return self.rows * self.cols


class ZoneId(Enum):
    TOP_LEFT = "top left"
    TOP_CENTER = "top center"
    TOP_RIGHT = "top right"
    CENTER_LEFT = "center left"
    CENTER = "center"
    CENTER_RIGHT = "center right"
    BOTTOM_LEFT = "bottom left"
    BOTTOM_CENTER = "bottom center"
    BOTTOM_RIGHT = "bottom right"

    @property
    def row(self) -> int:
        return _ZONE_ORDER.index(self) // 3

    @property
    def col(self) -> int:
        return _ZONE_ORDER.index(self) % 3

    @classmethod
    def from_row_col(cls, row: int, col: int) -> ZoneId:
        if not (0 <= row < 3 and 0 <= col < 3):
            raise GeometryError(f"zone position out of range: ({row}, {col})")
        return _ZONE_ORDER[row * 3 + col]


_ZONE_ORDER = list(ZoneId)


def _split(start: int, length: int, parts: int) -> list[int]:
    # leading parts absorb the remainder, one pixel each
    base, rem = divmod(length, parts)
    edges = [start]
    for i in range(parts):
        edges.append(edges[-1] + base + (1 if i < rem else 0))
    return edges


def partition_grid(rect: RectPx, grid: GridSpec) -> list[RectPx]:
    """Split ``rect`` into ``grid.rows * grid.cols`` disjoint tiles.

    Tiles are ordered left to right, then top to bottom. When the extent is
    not divisible, the leading columns/rows are one pixel larger.

    Raises:
        GeometryError: if the rect is smaller than the grid on either axis.
    """
    if rect.width < grid.cols or rect.height < grid.rows:
        raise GeometryError(
            f"region too small to partition: {rect.width}x{rect.height} "
            f"into {grid.rows}x{grid.cols}"
        )
    xs = _split(rect.x1, rect.width, grid.cols)
    ys = _split(rect.y1, rect.height, grid.rows)
    return [
        RectPx(xs[c], ys[r], xs[c + 1], ys[r + 1])
        for r in range(grid.rows)
        for c in range(grid.cols)
    ]


def to_global(p_local: PointPx, crop: RectPx) -> PointPx:
    if not (0 <= p_local.x < crop.width and 0 <= p_local.y < crop.height):
        raise GeometryError(
            f"locator point outside crop: ({p_local.x}, {p_local.y}) "
            f"not in {crop.width}x{crop.height}"
        )
    return PointPx(crop.x1 + p_local.x, crop.y1 + p_local.y)


def to_local(p_global: PointPx, crop: RectPx) -> PointPx:
    if not crop.contains(p_global):
        raise GeometryError(f"point ({p_global.x}, {p_global.y}) outside crop {crop.as_list()}")
    return PointPx(p_global.x - crop.x1, p_global.y - crop.y1)


def clamp_point(p: PointPx, rect: RectPx) -> PointPx:
    """Nearest point of ``rect`` (pixel-wise) to ``p``."""
    return PointPx(
        min(max(p.x, rect.x1), rect.x2 - 1),
        min(max(p.y, rect.y1), rect.y2 - 1),
    )


def _place(center: int, side: int, extent: int) -> tuple[int, int]:
    side = min(side, extent)
    lo = center - side // 2
    lo = max(0, min(lo, extent - side))
    return lo, lo + side


def crop_centered(center: PointPx, side: int, bounds: ImageSize) -> RectPx:
    """A ``side`` x ``side`` window around ``center`` that stays inside ``bounds``.

    The window starts at ``center - side // 2``. Windows that overflow an
    edge are shifted back inside, never shrunk; a side larger than the image
    is clamped to the full extent on that axis.
    """
    if side < 1:
        raise GeometryError(f"crop side must be >= 1, got {side}")
    if not bounds.as_rect().contains(center):
        raise GeometryError(f"crop center ({center.x}, {center.y}) outside image")
    x1, x2 = _place(center.x, side, bounds.width)
    y1, y2 = _place(center.y, side, bounds.height)
    return RectPx(x1, y1, x2, y2)


def _check_factor(factor: int) -> None:
    if factor < 1:
        raise GeometryError(f"scale factor must be >= 1, got {factor}")


def scale_rect(rect: RectPx, factor: int) -> RectPx:
    _check_factor(factor)
    return RectPx(rect.x1 * factor, rect.y1 * factor, rect.x2 * factor, rect.y2 * factor)


def scale_point_up(p: PointPx, factor: int) -> PointPx:
    _check_factor(factor)
    return PointPx(p.x * factor, p.y * factor)


def scale_point_down(p: PointPx, factor: int) -> PointPx:
    _check_factor(factor)
    return PointPx(p.x // factor, p.y // factor)


def zone_tile(cell: RectPx, zone: ZoneId) -> RectPx:
    if cell.width < 3 or cell.height < 3:
        raise GeometryError(f"cell too small for zones: {cell.width}x{cell.height}")
    return partition_grid(cell, GridSpec(3, 3))[zone.row * 3 + zone.col]


def zone_center(cell: RectPx, zone: ZoneId) -> PointPx:
    """Center of one of the nine 3x3 sub-tiles of ``cell``."""
    return zone_tile(cell, zone).center()


def locate_zone(cell: RectPx, p: PointPx) -> ZoneId:
    """Zone of ``cell`` whose sub-tile contains ``p`` (clamped into the cell)."""
    p = clamp_point(p, cell)
    tiles = partition_grid(cell, GridSpec(3, 3))
    for i, tile in enumerate(tiles):
        if tile.contains(p):
            return _ZONE_ORDER[i]
    raise AssertionError("partition does not cover cell")


def locate_cell(rect: RectPx, grid: GridSpec, p: PointPx) -> int:
    """1-based index of the grid tile of ``rect`` containing ``p`` (clamped)."""
    p = clamp_point(p, rect)
    for i, tile in enumerate(partition_grid(rect, grid), start=1):
        if tile.contains(p):
            return i
    raise AssertionError("partition does not cover rect")
