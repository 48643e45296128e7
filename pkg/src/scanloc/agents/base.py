"""Agent interfaces and the image payload passed to them."""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Protocol, Sequence

from PIL import Image, ImageDraw, ImageFont

from scanloc.geometry import GridSpec, ImageSize, PointPx, RectPx, partition_grid
from scanloc.tasks import Screenshot


class AgentError(RuntimeError):
    """Base class for agent failures surfaced to the pipeline."""


class ConfigurationError(AgentError):
    """An agent cannot be constructed from the given configuration."""


class BackendError(AgentError):
    """A remote call failed for transport reasons or exhausted its retries."""

    def __init__(self, message: str, status: int | None = None) -> None:
        super().__init__(message)
        self.status = status


class LocatorError(AgentError):
    """The locator replied, but no usable point could be read from the reply."""


@dataclass(frozen=True)
class ImagePayload:
    """A view of the screenshot: a global-frame region, upscaled by ``scale``.

    The payload's own pixel frame is ``region`` shifted to the origin and
    multiplied by ``scale``. ``grid`` draws numbered tile outlines over the
    rendered pixels and ``marks`` draws labelled points (payload frame).
    Pixels are only produced by :meth:`render`, so agents that reason from
    the frame metadata never pay for image work.
    """

    screen: Screenshot
    region: RectPx
    scale: int = 1
    grid: GridSpec | None = None
    marks: tuple[tuple[str, PointPx], ...] = ()

    @property
    def size(self) -> ImageSize:
        return ImageSize(self.region.width * self.scale, self.region.height * self.scale)

    @property
    def frame(self) -> RectPx:
        return RectPx(0, 0, self.size.width, self.size.height)

    def describe(self) -> dict:
        return {
            "region": self.region.as_list(),
            "scale": self.scale,
            "grid": [self.grid.rows, self.grid.cols] if self.grid else None,
            "marks": [[label, p.x, p.y] for label, p in self.marks],
        }

    def render(self) -> Image.Image:
        r = self.region
        image = self.screen.pixels().crop((r.x1, r.y1, r.x2, r.y2))
        if self.scale > 1:
            image = image.resize((self.size.width, self.size.height), Image.Resampling.NEAREST)
        if self.grid is None and not self.marks:
            return image
        image = image.copy()
        draw = ImageDraw.Draw(image)
        font_size = max(10, min(self.size.width, self.size.height) // 30)
        font = ImageFont.load_default(size=font_size)
        if self.grid is not None:
            for i, tile in enumerate(partition_grid(self.frame, self.grid), start=1):
                draw.rectangle((tile.x1, tile.y1, tile.x2 - 1, tile.y2 - 1), outline=(255, 0, 0), width=2)
                draw.text((tile.x1 + 4, tile.y1 + 2), str(i), fill=(255, 0, 0), font=font)
        for label, p in self.marks:
            rad = max(4, font_size // 2)
            draw.ellipse((p.x - rad, p.y - rad, p.x + rad, p.y + rad), outline=(0, 90, 255), width=3)
            draw.text((p.x + rad + 2, p.y - rad), label, fill=(0, 90, 255), font=font)
        return image

    def png_bytes(self, image: Image.Image | None = None) -> bytes:
        buf = io.BytesIO()
        (self.render() if image is None else image).save(buf, format="PNG")
        return buf.getvalue()


class ScannerAgent(Protocol):
    """Generalist vision-language agent: prompt text plus images in, text out."""

    def complete(self, prompt: str, images: Sequence[ImagePayload]) -> str: ...


class LocatorAgent(Protocol):
    """Specialist grounding agent: returns a point in the payload's pixel frame."""

    def ground(self, instruction: str, image: ImagePayload) -> PointPx: ...
