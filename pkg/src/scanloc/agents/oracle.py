"""Ground-truth oracle agents with tunable, seeded noise.

The oracle scanner recognises which protocol stage it is being asked about
from the prompt wording and answers in that stage's reply format, so the
pipeline's own parsers are exercised exactly as with a real model. Frame
metadata (which region of the screenshot each image shows) comes from the
:class:`ImagePayload`; the ground-truth box is bound at construction.

Noise model:

* region scores: 90 for tiles touching the target, 10 otherwise, plus
  Gaussian noise; candidate scores are graded by the fraction of the target
  each crop covers. Score noise grows with how far the image exceeds
  ``native_side`` (a model sees large inputs downscaled), and, when several
  candidate crops are compared in one call, with the square root of their
  number (attention split across them).
* yes/no verdicts, cell/zone picks and the final decision flip with
  ``scanner_flip_prob``.
* locator: target center plus isotropic Gaussian error (again scaled by the
  input's downscale factor), or a uniform decoy with ``locator_miss_prob``
  or when the target is not visible in the image at all.

Random streams are derived from ``(seed, task_key, call content)``, so
answers do not depend on call order, concurrency or how much of the search
tree was explored.
"""

from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from scanloc.agents.base import AgentError, ImagePayload
from scanloc.geometry import (
    GridSpec,
    ImageSize,
    PointPx,
    RectPx,
    clamp_point,
    locate_cell,
    locate_zone,
    partition_grid,
    scale_point_down,
)
from scanloc.tasks import ClosedBox


class OracleError(AgentError):
    """The oracle was asked something it cannot recognise."""


@dataclass(frozen=True)
class OracleConfig:
    scanner_score_noise: float = 0.0
    scanner_flip_prob: float = 0.0
    locator_sigma: float = 0.0
    locator_miss_prob: float = 0.0
    seed: int = 0
    native_side: int | None = None

    def __post_init__(self) -> None:
        for name in ("scanner_flip_prob", "locator_miss_prob"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")
        for name in ("scanner_score_noise", "locator_sigma"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.native_side is not None and self.native_side < 1:
            raise ValueError("native_side must be >= 1")

    def downscale_factor(self, size: ImageSize) -> float:
        if self.native_side is None:
            return 1.0
        return max(1.0, max(size.width, size.height) / self.native_side)


# "moderate" is the regime the property tests and `simulate` use by default
ORACLE_PRESETS: dict[str, dict[str, float | int]] = {
    "perfect": {},
    "moderate": {
        "scanner_score_noise": 20.0,
        "scanner_flip_prob": 0.04,
        "locator_sigma": 8.0,
        "locator_miss_prob": 0.3,
        "native_side": 512,
    },
}


def _rng(config: OracleConfig, task_key: str, *parts: object) -> np.random.Generator:
    digest = hashlib.blake2b(repr((task_key, *parts)).encode(), digest_size=16).digest()
    words = [int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4)]
    return np.random.default_rng([config.seed, *words])


def _key(image: ImagePayload) -> tuple:
    return (tuple(image.region.as_list()), image.scale)


class _TruthBound:
    def __init__(self, truth: ClosedBox, config: OracleConfig, task_key: str = "") -> None:
        self.truth = truth
        self.truth_rect = truth.to_rect()
        self.config = config
        self.task_key = task_key
        self.calls = 0

    def _visible_target(self, region: RectPx) -> PointPx | None:
        part = self.truth_rect.intersection(region)
        return None if part is None else part.center()

    def _to_payload(self, p: PointPx, image: ImagePayload) -> PointPx:
        s = image.scale
        return PointPx((p.x - image.region.x1) * s + s // 2, (p.y - image.region.y1) * s + s // 2)

    def _to_global(self, p: PointPx, image: ImagePayload) -> PointPx:
        local = scale_point_down(clamp_point(p, image.frame), image.scale)
        return PointPx(image.region.x1 + local.x, image.region.y1 + local.y)


_MARKERS = (
    ("selection", "Provide the possibilities for each region"),
    ("crossmodal_verify", "<relevance>yes/no</relevance>"),
    ("region_verify", "<answer>yes/no</answer>"),
    ("consensus_select", "candidate regions cropped from my desktop screenshot"),
    ("resolution_enhance", "smaller regions (numbered 1 to"),
    ("final_decide", "two proposed click points"),
)
_OPTIONS = re.compile(r"A at \((-?\d+), (-?\d+)\) and B at \((-?\d+), (-?\d+)\)")


def detect_stage(prompt: str) -> str:
    for stage, marker in _MARKERS:
        if marker in prompt:
            return stage
    raise OracleError("unrecognised prompt template")


class OracleScanner(_TruthBound):
    """Scanner stand-in that knows where the target is."""

    def complete(self, prompt: str, images: Sequence[ImagePayload]) -> str:
        stage = detect_stage(prompt)
        if not images:
            raise OracleError(f"{stage} prompt without images")
        self.calls += 1
        handler = getattr(self, f"_{stage}")
        return handler(prompt, list(images))

    def _flip(self, rng: np.random.Generator) -> bool:
        return bool(rng.random() < self.config.scanner_flip_prob)

    def _noisy(self, base: float, rng: np.random.Generator, size: ImageSize, crowd: int = 1) -> int:
        sigma = self.config.scanner_score_noise * self.config.downscale_factor(size) * math.sqrt(crowd)
        value = base + (rng.normal(0.0, sigma) if sigma > 0 else 0.0)
        return int(min(max(round(value), 0), 100))

    def _selection(self, prompt: str, images: list[ImagePayload]) -> str:
        image = images[-1]
        grid = image.grid or GridSpec(3, 3)
        rng = _rng(self.config, self.task_key, "select", prompt, _key(image))
        lines = []
        for i, tile in enumerate(partition_grid(image.region, grid), start=1):
            hit = tile.intersects(self.truth_rect)
            score = self._noisy(90 if hit else 10, rng, image.size)
            note = "the target appears to be here" if hit else "no matching element"
            lines.append(f"Region {i}: {score} ({note})")
        return "\n".join(lines)

    def _verdict(self, image: ImagePayload, prompt: str) -> tuple[bool, str]:
        rng = _rng(self.config, self.task_key, "verify", prompt, _key(image))
        yes = image.region.intersects(self.truth_rect)
        if self._flip(rng):
            yes = not yes
        reason = "the crop shows the requested element" if yes else "the crop shows unrelated content"
        return yes, reason

    def _crossmodal_verify(self, prompt: str, images: list[ImagePayload]) -> str:
        yes, reason = self._verdict(images[-1], prompt)
        return f"<reasoning>{reason}</reasoning>\n<relevance>{'yes' if yes else 'no'}</relevance>"

    def _region_verify(self, prompt: str, images: list[ImagePayload]) -> str:
        yes, reason = self._verdict(images[-1], prompt)
        return f"Looking at the region, {reason}.\n<answer>{'yes' if yes else 'no'}</answer>"

    def _consensus_select(self, prompt: str, images: list[ImagePayload]) -> str:
        rng = _rng(self.config, self.task_key, "consensus", prompt, tuple(_key(im) for im in images))
        best, best_score = 1, -1
        for i, image in enumerate(images, start=1):
            part = self.truth_rect.intersection(image.region)
            covered = 0.0 if part is None else part.area / self.truth_rect.area
            score = self._noisy(10 + 80 * covered, rng, image.size, crowd=len(images))
            if score > best_score:
                best, best_score = i, score
        return f"Candidate {best} matches the instruction best.\n<index>{best}</index>"

    def _resolution_enhance(self, prompt: str, images: list[ImagePayload]) -> str:
        image = images[-1]
        grid = image.grid or GridSpec(5, 5)
        rng = _rng(self.config, self.task_key, "enhance", prompt, _key(image))
        target = self._visible_target(image.region)
        guess = target is None or self._flip(rng)
        if guess:
            index = int(rng.integers(1, grid.cells + 1))
            cell = partition_grid(image.frame, grid)[index - 1]
            zone = locate_zone(cell, PointPx(
                cell.x1 + int(rng.integers(0, cell.width)), cell.y1 + int(rng.integers(0, cell.height))
            ))
        else:
            local = self._to_payload(target, image)
            index = locate_cell(image.frame, grid, local)
            zone = locate_zone(partition_grid(image.frame, grid)[index - 1], local)
        return f"The target sits in region {index}.\n<index>{index}</index>\n<location>{zone.value}</location>"

    def _final_decide(self, prompt: str, images: list[ImagePayload]) -> str:
        match = _OPTIONS.search(prompt)
        if match is None:
            raise OracleError("decide prompt without two options")
        a = PointPx(int(match.group(1)), int(match.group(2)))
        b = PointPx(int(match.group(3)), int(match.group(4)))
        image = images[-1]
        rng = _rng(self.config, self.task_key, "decide", prompt, _key(image))
        target = self._visible_target(image.region) or self.truth_rect.center()

        def badness(p: PointPx) -> tuple[bool, float]:
            g = self._to_global(p, image)
            return (not self.truth.contains(g), math.hypot(g.x - target.x, g.y - target.y))

        chosen = a if badness(a) < badness(b) else b
        if self._flip(rng):
            chosen = b if chosen == a else a
        return f"({chosen.x}, {chosen.y})"


class OracleLocator(_TruthBound):
    """Locator stand-in: noisy target center, or a decoy."""

    def ground(self, instruction: str, image: ImagePayload) -> PointPx:
        self.calls += 1
        rng = _rng(self.config, self.task_key, "locate", instruction, _key(image))
        frame = image.frame
        miss = rng.random() < self.config.locator_miss_prob
        offset = rng.normal(0.0, 1.0, size=2)
        decoy = PointPx(int(rng.integers(0, frame.width)), int(rng.integers(0, frame.height)))
        target = self._visible_target(image.region)
        if target is None or miss:
            return decoy
        sigma = self.config.locator_sigma * self.config.downscale_factor(image.size)
        local = self._to_payload(target, image)
        p = PointPx(round(local.x + sigma * offset[0]), round(local.y + sigma * offset[1]))
        return clamp_point(p, frame)


def oracle_agents(truth: ClosedBox, config: OracleConfig, task_key: str = "") -> tuple[OracleScanner, OracleLocator]:
    return OracleScanner(truth, config, task_key), OracleLocator(truth, config, task_key)
