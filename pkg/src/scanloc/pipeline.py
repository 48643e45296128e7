"""Five-stage scanner/locator grounding controller.

Stages, in order:

1. allocate: the scanner scores a 3x3 partition of the whole screen and the
   top-k regions form the frontier.
2. refine: score-ordered depth-first subdivision until a region is smaller
   than ``stop_threshold_px`` on either side (or ``max_depth`` is reached).
3. verify: for each leaf the locator proposes a point; a small crop around
   it is judged by the scanner against the full screenshot.
4. consensus: the scanner picks one crop among the verified candidates.
5. enhance: the chosen crop is upscaled with a 5x5 grid; the scanner's
   cell/zone estimate and the locator's point are arbitrated by the scanner.

Depth convention: the full screenshot is depth 0, its tiles depth 1.
All points in results and traces are in the global screenshot frame unless a
trace field says ``upscaled``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from typing import Any, Iterator

from scanloc.agents.base import AgentError, ImagePayload, LocatorAgent, ScannerAgent
from scanloc.geometry import (
    GeometryError,
    GridSpec,
    PointPx,
    RectPx,
    clamp_point,
    crop_centered,
    partition_grid,
    scale_point_down,
    to_global,
    zone_center,
)
from scanloc.protocol import (
    ParseError,
    PromptKind,
    parse_index_location,
    parse_point_detailed,
    parse_region_scores,
    parse_tagged_index,
    parse_tagged_yes_no,
    render_prompt,
)
from scanloc.tasks import GroundingTask, Screenshot
from scanloc.trace import Trace


class Ablation(str, Enum):
    FULL = "full"
    NO_VERIFY = "no_verify"
    NO_CONSENSUS = "no_consensus"
    NO_ENHANCE = "no_enhance"


class FallbackLevel(str, Enum):
    """How much of the pipeline produced the final point, best first."""

    FULL_PIPELINE = "full_pipeline"
    CONSENSUS_SKIPPED = "consensus_skipped"
    LOCATOR_ONLY = "locator_only"
    SCANNER_ONLY = "scanner_only"
    CENTER_OF_BEST_REGION = "center_of_best_region"

    @property
    def severity(self) -> int:
        return list(FallbackLevel).index(self)


@dataclass(frozen=True)
class PipelineConfig:
    top_k: int = 3
    stop_threshold_px: int = 600
    crop_side_px: int = 125
    upscale_factor: int = 5
    coarse_grid: GridSpec = GridSpec(3, 3)
    enhance_grid: GridSpec = GridSpec(5, 5)
    max_depth: int = 6
    max_scanner_calls: int = 256
    max_candidates: int = 128
    ablation: Ablation = Ablation.FULL

    def __post_init__(self) -> None:
        object.__setattr__(self, "ablation", Ablation(self.ablation))
        if not 1 <= self.top_k <= self.coarse_grid.cells:
            raise ValueError(f"top_k must be in [1, {self.coarse_grid.cells}], got {self.top_k}")
        if self.crop_side_px < 1:
            raise ValueError("crop_side_px must be >= 1")
        if self.stop_threshold_px < self.crop_side_px:
            raise ValueError("stop_threshold_px must be >= crop_side_px")
        if self.upscale_factor < 1:
            raise ValueError("upscale_factor must be >= 1")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        # zero scanner calls is a legal degenerate budget: it yields an immediate fallback
        if self.max_scanner_calls < 0:
            raise ValueError("max_scanner_calls must be >= 0")
        if self.max_candidates < 1:
            raise ValueError("max_candidates must be >= 1")

    def to_dict(self) -> dict[str, Any]:
        raw = asdict(self)
        raw["coarse_grid"] = [self.coarse_grid.rows, self.coarse_grid.cols]
        raw["enhance_grid"] = [self.enhance_grid.rows, self.enhance_grid.cols]
        raw["ablation"] = self.ablation.value
        return raw

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> PipelineConfig:
        values = dict(raw)
        for name in ("coarse_grid", "enhance_grid"):
            if name in values and not isinstance(values[name], GridSpec):
                rows, cols = values[name]
                values[name] = GridSpec(int(rows), int(cols))
        unknown = set(values) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown pipeline settings: {sorted(unknown)}")
        return cls(**values)

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]

    @property
    def tail_reserve(self) -> int:
        """Scanner calls held back from the search for consensus, enhance and decide."""
        return min(3, self.max_scanner_calls // 2)


def _pt(p: PointPx | None) -> list[int] | None:
    return None if p is None else [p.x, p.y]


@dataclass(frozen=True)
class SearchNode:
    rect: RectPx
    depth: int
    score: int
    path: tuple[int, ...] = ()


@dataclass(frozen=True)
class CandidateCrop:
    crop: RectPx
    locator_point: PointPx
    verdict: bool | None
    score: int
    path: tuple[int, ...]
    leaf: RectPx

    def to_dict(self) -> dict[str, Any]:
        return {
            "crop": self.crop.as_list(),
            "locator_point": list(self.locator_point.as_tuple()),
            "verdict": self.verdict,
            "score": self.score,
            "path": list(self.path),
            "leaf": self.leaf.as_list(),
        }


@dataclass
class GroundingResult:
    final_point: PointPx
    p_scanner: PointPx | None
    p_locator: PointPx | None
    chosen_candidate: CandidateCrop | None
    trace: Trace
    call_counts: dict[str, int]
    fallback_level: FallbackLevel
    candidates: list[CandidateCrop] = field(default_factory=list)
    explored: list[SearchNode] = field(default_factory=list)

    def summary(self) -> dict[str, Any]:
        return {
            "final_point": _pt(self.final_point),
            "p_scanner": _pt(self.p_scanner),
            "p_locator": _pt(self.p_locator),
            "chosen_candidate": None if self.chosen_candidate is None else self.chosen_candidate.to_dict(),
            "call_counts": dict(self.call_counts),
            "fallback_level": self.fallback_level.value,
            "candidates": len(self.candidates),
        }


class _Halt(Exception):
    """Internal: the search budget is spent."""


class GroundingSession:
    """State for grounding one task; call :meth:`run` once."""

    def __init__(
        self,
        task: GroundingTask,
        config: PipelineConfig,
        scanner: ScannerAgent,
        locator: LocatorAgent,
        screen: Screenshot | None = None,
    ) -> None:
        self.task = task
        self.config = config
        self.scanner = scanner
        self.locator = locator
        self.screen = screen if screen is not None else task.screenshot()
        self.image_rect = task.image_size.as_rect()
        self.trace = Trace()
        self.scanner_calls = 0
        self.locator_calls = 0
        self.leaves = 0
        self.explored: list[SearchNode] = []
        self.consensus_skipped = False
        self._context = {
            "instruction": task.instruction,
            "application_name": task.application_name,
            "system_name": task.system_name,
        }

    # -- agent calls -------------------------------------------------------

    def _prompt(self, stage: str, **extra: Any) -> str:
        kind = PromptKind(stage, self.task.variant)
        return render_prompt(kind, {**self._context, **extra})

    def _search_budget_left(self) -> int:
        return self.config.max_scanner_calls - self.config.tail_reserve - self.scanner_calls

    def _ask(self, stage: str, prompt: str, images: list[ImagePayload]) -> str | None:
        """One scanner call; None on agent failure or when the total budget is spent."""
        described = [im.describe() for im in images]
        if self.scanner_calls >= self.config.max_scanner_calls:
            self.trace.emit(stage, "budget_exhausted", budget="scanner")
            return None
        self.scanner_calls += 1
        try:
            reply = self.scanner.complete(prompt, images)
        except AgentError as exc:
            self.trace.emit(stage, "scanner_call", prompt=prompt, images=described, error=str(exc))
            return None
        self.trace.emit(stage, "scanner_call", prompt=prompt, images=described, reply=reply)
        return reply

    def _locate(self, stage: str, image: ImagePayload) -> PointPx | None:
        """Locator point in ``image``'s payload frame, clamped; None on failure."""
        self.locator_calls += 1
        described = image.describe()
        try:
            raw = self.locator.ground(self.task.instruction, image)
        except AgentError as exc:
            self.trace.emit(stage, "locator_call", image=described, error=str(exc))
            return None
        point = clamp_point(raw, image.frame)
        self.trace.emit(
            stage, "locator_call", image=described, raw_point=[raw.x, raw.y],
            point=[point.x, point.y], clamped=point != raw,
        )
        return point

    def _payload_to_global(self, p: PointPx, image: ImagePayload) -> PointPx:
        return to_global(scale_point_down(p, image.scale), image.region)

    # -- stages 1 and 2 ----------------------------------------------------

    def _score_children(self, node: SearchNode, stage: str) -> list[SearchNode] | None:
        grid = self.config.coarse_grid
        tiles = partition_grid(node.rect, grid)
        kind = PromptKind.selection(node.depth, self.task.special)
        prompt = render_prompt(kind, self._context)
        reply = self._ask(stage, prompt, [ImagePayload(self.screen, node.rect, grid=grid)])
        if reply is None:
            return None
        try:
            scores = parse_region_scores(reply, grid.cells)
        except ParseError as exc:
            self.trace.emit(stage, "parse_error", parser="region_scores", error=str(exc))
            return None
        if scores.warnings:
            self.trace.emit(stage, "parse_warning", warnings=list(scores.warnings))
        ranked = scores.ranked()[: self.config.top_k]
        children = [
            SearchNode(tiles[i - 1], node.depth + 1, scores.scores[i], node.path + (i,)) for i in ranked
        ]
        self.trace.emit(
            stage, "expand", rect=node.rect.as_list(), depth=node.depth, scores=scores.scores,
            selected=[list(c.path) for c in children],
        )
        return children

    def stage1_allocate(self) -> list[SearchNode]:
        """Top-k stage-1 regions; retries once, then admits all regions at score 0."""
        root = SearchNode(self.image_rect, 0, 100)
        for attempt in range(2):
            if self._search_budget_left() < 1:
                break
            children = self._score_children(root, "allocate")
            if children is not None:
                self.explored.append(root)
                return children
            self.trace.emit("allocate", "retry", attempt=attempt + 1)
        tiles = partition_grid(self.image_rect, self.config.coarse_grid)
        self.trace.emit("allocate", "fallback", reason="selection unparseable", regions=len(tiles))
        return [SearchNode(t, 1, 0, (i,)) for i, t in enumerate(tiles, start=1)]

    def is_leaf(self, node: SearchNode) -> bool:
        thr, grid = self.config.stop_threshold_px, self.config.coarse_grid
        r = node.rect
        return (
            r.width < thr or r.height < thr or node.depth >= self.config.max_depth
            or r.width < grid.cols or r.height < grid.rows
        )

    def stage2_refine(self, frontier: list[SearchNode]) -> Iterator[SearchNode]:
        """Yield leaves in depth-first, best-score-first order until a budget runs out."""
        stack = list(reversed(frontier))
        while stack:
            if self.leaves >= self.config.max_candidates:
                self.trace.emit("refine", "halt", budget="max_candidates")
                return
            node = stack.pop()
            if self.is_leaf(node):
                yield node
                continue
            if self._search_budget_left() < 1:
                self.trace.emit("refine", "halt", budget="max_scanner_calls")
                return
            children = self._score_children(node, "refine")
            if children is None:
                self.trace.emit("refine", "forced_leaf", rect=node.rect.as_list(), path=list(node.path))
                yield node
                continue
            self.explored.append(node)
            stack.extend(reversed(children))

    # -- stage 3 -----------------------------------------------------------

    def stage3_verify(self, leaf: SearchNode) -> CandidateCrop | None:
        verify = self.config.ablation is not Ablation.NO_VERIFY
        if verify and self._search_budget_left() < 1:
            raise _Halt()
        self.explored.append(leaf)
        payload = ImagePayload(self.screen, leaf.rect)
        local = self._locate("verify", payload)
        if local is None:
            self.trace.emit("verify", "skip_leaf", rect=leaf.rect.as_list(), reason="locator failed")
            return None
        point = self._payload_to_global(local, payload)
        crop = crop_centered(point, self.config.crop_side_px, self.task.image_size)
        verdict: bool | None = None
        if verify:
            prompt = self._prompt("crossmodal_verify")
            images = [ImagePayload(self.screen, self.image_rect), ImagePayload(self.screen, crop)]
            reply = self._ask("verify", prompt, images)
            if reply is None:
                verdict = False
            else:
                parsed = parse_tagged_yes_no(reply, "relevance")
                verdict = parsed.value
                if parsed.warnings:
                    self.trace.emit("verify", "parse_warning", warnings=list(parsed.warnings))
        candidate = CandidateCrop(crop, point, verdict, leaf.score, leaf.path, leaf.rect)
        self.trace.emit("verify", "candidate", **candidate.to_dict())
        return candidate

    # -- stage 4 -----------------------------------------------------------

    def stage4_consensus(self, candidates: list[CandidateCrop]) -> CandidateCrop:
        if not candidates:
            raise ValueError("consensus needs at least one candidate")
        if self.config.ablation is Ablation.NO_VERIFY:
            eligible = list(candidates)
        else:
            eligible = [c for c in candidates if c.verdict]
            if not eligible:
                eligible = list(candidates)
                self.consensus_skipped = True
                self.trace.emit("consensus", "fallback", reason="no verified candidate")
        # highest leaf score, earliest found on ties
        best_scored = max(eligible, key=lambda c: c.score)
        if len(eligible) == 1:
            chosen, how = eligible[0], "single"
        elif self.config.ablation is Ablation.NO_CONSENSUS:
            chosen, how = best_scored, "highest_score"
        else:
            prompt = self._prompt("consensus_select", count=len(eligible))
            reply = self._ask("consensus", prompt, [ImagePayload(self.screen, c.crop) for c in eligible])
            chosen, how = best_scored, "highest_score_fallback"
            if reply is not None:
                try:
                    chosen, how = eligible[parse_tagged_index(reply, len(eligible)) - 1], "scanner"
                except ParseError as exc:
                    self.trace.emit("consensus", "parse_error", parser="tagged_index", error=str(exc))
        self.trace.emit("consensus", "choice", how=how, eligible=len(eligible), crop=chosen.crop.as_list())
        return chosen

    # -- stage 5 -----------------------------------------------------------

    def _scanner_estimate(self, grid_view: ImagePayload) -> tuple[PointPx, PointPx] | None:
        """(upscaled-local, global) point from the cell/zone answer, or None."""
        grid = self.config.enhance_grid
        reply = self._ask("enhance", self._prompt("resolution_enhance"), [grid_view])
        if reply is None:
            return None
        try:
            choice = parse_index_location(reply, grid.cells)
            cell = partition_grid(grid_view.frame, grid)[choice.index - 1]
            local = zone_center(cell, choice.zone)
        except (ParseError, GeometryError) as exc:
            self.trace.emit("enhance", "parse_error", parser="index_location", error=str(exc))
            return None
        return local, self._payload_to_global(local, grid_view)

    def _decide(self, a: PointPx, b: PointPx, view: ImagePayload) -> str | None:
        """'A' or 'B' from the scanner, snapped to the nearer option; None if unusable."""
        prompt = self._prompt("final_decide", point_a=f"({a.x}, {a.y})", point_b=f"({b.x}, {b.y})")
        marked = replace(view, marks=(("A", a), ("B", b)))
        reply = self._ask("decide", prompt, [marked])
        if reply is None:
            return None
        try:
            p = parse_point_detailed(reply).point
        except ParseError as exc:
            self.trace.emit("decide", "parse_error", parser="point", error=str(exc))
            return None
        da = (p.x - a.x) ** 2 + (p.y - a.y) ** 2
        db = (p.x - b.x) ** 2 + (p.y - b.y) ** 2
        if da == db:
            self.trace.emit("decide", "tie", reply_point=[p.x, p.y])
            return "B"
        return "A" if da < db else "B"

    def stage5_enhance(self, best: CandidateCrop) -> tuple[PointPx, PointPx | None, PointPx | None, FallbackLevel]:
        s = self.config.upscale_factor
        view = ImagePayload(self.screen, best.crop, scale=s)
        estimate = self._scanner_estimate(replace(view, grid=self.config.enhance_grid))
        loc_local = self._locate("enhance", view)
        p_locator = None if loc_local is None else self._payload_to_global(loc_local, view)
        p_scanner = None if estimate is None else estimate[1]
        self.trace.emit("enhance", "estimates", p_scanner=_pt(p_scanner), p_locator=_pt(p_locator))
        if estimate is not None and loc_local is not None:
            if estimate[0] == loc_local:
                return p_locator, p_scanner, p_locator, FallbackLevel.FULL_PIPELINE
            pick = self._decide(estimate[0], loc_local, view)
            if pick is None:
                return p_locator, p_scanner, p_locator, FallbackLevel.LOCATOR_ONLY
            final = p_scanner if pick == "A" else p_locator
            self.trace.emit("decide", "choice", pick=pick, final=_pt(final))
            return final, p_scanner, p_locator, FallbackLevel.FULL_PIPELINE
        if p_locator is not None:
            return p_locator, p_scanner, p_locator, FallbackLevel.LOCATOR_ONLY
        if p_scanner is not None:
            return p_scanner, p_scanner, p_locator, FallbackLevel.SCANNER_ONLY
        return best.crop.center(), None, None, FallbackLevel.CENTER_OF_BEST_REGION

    # -- driver ------------------------------------------------------------

    def _result(self, final: PointPx, level: FallbackLevel, **kw: Any) -> GroundingResult:
        final = clamp_point(final, self.image_rect)
        self.trace.emit("result", "final", point=[final.x, final.y], fallback_level=level.value)
        return GroundingResult(
            final_point=final,
            p_scanner=kw.get("p_scanner"),
            p_locator=kw.get("p_locator"),
            chosen_candidate=kw.get("chosen"),
            trace=self.trace,
            call_counts={"scanner": self.scanner_calls, "locator": self.locator_calls},
            fallback_level=level,
            candidates=kw.get("candidates", []),
            explored=list(self.explored),
        )

    def _fallback(self, reason: str, candidates: list[CandidateCrop] | None = None) -> GroundingResult:
        scored = [n for n in self.explored if n.depth > 0]
        point = max(scored, key=lambda n: n.score).rect.center() if scored else self.image_rect.center()
        self.trace.emit("result", "fallback", reason=reason)
        return self._result(point, FallbackLevel.CENTER_OF_BEST_REGION, candidates=candidates or [])

    def run(self) -> GroundingResult:
        cfg = self.config
        self.trace.emit(
            "setup", "config", task_id=self.task.task_id, config=cfg.to_dict(),
            fingerprint=cfg.fingerprint(), image_size=[self.task.image_size.width, self.task.image_size.height],
        )
        candidates: list[CandidateCrop] = []
        try:
            if cfg.max_scanner_calls == 0:
                return self._fallback("scanner budget is zero")
            frontier = self.stage1_allocate()
            try:
                for leaf in self.stage2_refine(frontier):
                    candidate = self.stage3_verify(leaf)
                    self.leaves += 1
                    if candidate is not None:
                        candidates.append(candidate)
            except _Halt:
                self.trace.emit("verify", "halt", budget="max_scanner_calls")
            if not candidates:
                return self._fallback("no candidates", candidates)
            best = self.stage4_consensus(candidates)
            if cfg.ablation is Ablation.NO_ENHANCE:
                final, p_scanner, p_locator = best.locator_point, None, best.locator_point
                level = FallbackLevel.FULL_PIPELINE
            else:
                final, p_scanner, p_locator, level = self.stage5_enhance(best)
            if self.consensus_skipped and level.severity < FallbackLevel.CONSENSUS_SKIPPED.severity:
                level = FallbackLevel.CONSENSUS_SKIPPED
            return self._result(
                final, level, p_scanner=p_scanner, p_locator=p_locator, chosen=best, candidates=candidates
            )
        except Exception as exc:  # a single task must never take down a batch
            self.trace.emit("result", "error", error=f"{type(exc).__name__}: {exc}")
            return self._fallback("unrecoverable error", candidates)


def run(
    task: GroundingTask,
    config: PipelineConfig,
    scanner: ScannerAgent,
    locator: LocatorAgent,
    screen: Screenshot | None = None,
) -> GroundingResult:
    """Ground ``task`` with the given agents; never raises for task-level failures."""
    return GroundingSession(task, config, scanner, locator, screen).run()
