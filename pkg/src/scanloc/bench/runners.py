"""Batch, ablation, sweep and direct-locator evaluation runners."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

from scanloc.agents.base import ImagePayload, LocatorAgent, ScannerAgent
from scanloc.agents.oracle import OracleConfig, oracle_agents
from scanloc.bench.metrics import EvalReport, accuracy
from scanloc.geometry import PointPx, clamp_point
from scanloc.pipeline import Ablation, GroundingResult, PipelineConfig, run
from scanloc.tasks import GroundingTask

log = logging.getLogger(__name__)

AgentFactory = Callable[[GroundingTask], tuple[ScannerAgent, LocatorAgent]]


def oracle_factory(config: OracleConfig) -> AgentFactory:
    """Fresh truth-bound oracle agents per task, keyed by task id."""

    def make(task: GroundingTask) -> tuple[ScannerAgent, LocatorAgent]:
        return oracle_agents(task.gt_bbox, config, task.task_id)

    return make


def shared_factory(scanner: ScannerAgent, locator: LocatorAgent) -> AgentFactory:
    """The same (thread-safe) agents for every task, as with remote backends."""
    return lambda task: (scanner, locator)


@dataclass
class TaskOutcome:
    task: GroundingTask
    point: PointPx
    result: GroundingResult | None = None
    error: str | None = None
    call_counts: dict[str, int] = field(default_factory=dict)


@dataclass
class BatchRun:
    label: str
    fingerprint: str
    outcomes: list[TaskOutcome]
    report: EvalReport
    interrupted: bool = False
    skipped: list[str] = field(default_factory=list)

    @property
    def failures(self) -> int:
        return sum(o.error is not None for o in self.outcomes)


def _run_many(
    tasks: Sequence[GroundingTask],
    work: Callable[[GroundingTask], TaskOutcome],
    parallelism: int,
    label: str,
    fingerprint: str,
    on_outcome: Callable[[TaskOutcome], None] | None,
) -> BatchRun:
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")
    done: dict[int, TaskOutcome] = {}
    interrupted = False
    pool = ThreadPoolExecutor(max_workers=parallelism)
    try:
        futures = {pool.submit(work, task): i for i, task in enumerate(tasks)}
        for future in as_completed(futures):
            outcome = future.result()
            done[futures[future]] = outcome
            if on_outcome is not None:
                on_outcome(outcome)
    except KeyboardInterrupt:
        interrupted = True
        log.warning("interrupted; reporting %d of %d tasks", len(done), len(tasks))
        for f in futures:
            f.cancel()
    finally:
        pool.shutdown(wait=not interrupted, cancel_futures=True)
    outcomes = [done[i] for i in sorted(done)]
    report = accuracy(
        [o.point for o in outcomes],
        [o.task for o in outcomes],
        label=label,
        fingerprint=fingerprint,
        call_counts=[o.call_counts for o in outcomes],
    )
    report.failures = sum(o.error is not None for o in outcomes)
    skipped = [t.task_id for i, t in enumerate(tasks) if i not in done]
    return BatchRun(label, fingerprint, outcomes, report, interrupted, skipped)


def _failed(task: GroundingTask, error: str) -> TaskOutcome:
    return TaskOutcome(task, task.image_size.as_rect().center(), None, error)


def run_batch(
    tasks: Sequence[GroundingTask],
    config: PipelineConfig,
    factory: AgentFactory,
    parallelism: int = 1,
    label: str | None = None,
    on_outcome: Callable[[TaskOutcome], None] | None = None,
) -> BatchRun:
    """Run the pipeline on every task; results come back in task order.

    Tasks whose image is unavailable count as misses and as failures. On
    Ctrl-C the tasks finished so far are still reported (``interrupted``).
    """

    def work(task: GroundingTask) -> TaskOutcome:
        if not task.available:
            return _failed(task, "image unavailable")
        try:
            scanner, locator = factory(task)
            result = run(task, config, scanner, locator)
        except Exception as exc:  # pipeline.run is total; this guards image loading and factories
            return _failed(task, f"{type(exc).__name__}: {exc}")
        return TaskOutcome(task, result.final_point, result, call_counts=result.call_counts)

    return _run_many(
        tasks, work, parallelism, label or config.ablation.value, config.fingerprint(), on_outcome
    )


def run_ablation(
    tasks: Sequence[GroundingTask],
    config: PipelineConfig,
    variant: Ablation | str,
    factory: AgentFactory,
    parallelism: int = 1,
) -> BatchRun:
    variant = Ablation(variant)
    return run_batch(tasks, replace(config, ablation=variant), factory, parallelism, label=variant.value)


SWEEP_AXES = {"top_k": "top_k", "threshold": "stop_threshold_px"}


@dataclass
class SweepRow:
    axis: str
    value: int
    run: BatchRun

    @property
    def scanner_calls(self) -> int:
        return self.run.report.scanner_calls


def run_sweep(
    tasks: Sequence[GroundingTask],
    config: PipelineConfig,
    axis: str,
    values: Iterable[int],
    factory: AgentFactory,
    parallelism: int = 1,
) -> list[SweepRow]:
    """One batch per setting of ``axis`` (``top_k`` or ``threshold``).

    Raises:
        ValueError: for an unknown axis or a value the config rejects.
    """
    if axis not in SWEEP_AXES:
        raise ValueError(f"unknown sweep axis {axis!r}; expected one of {sorted(SWEEP_AXES)}")
    configs = [(int(v), replace(config, **{SWEEP_AXES[axis]: int(v)})) for v in values]
    return [
        SweepRow(axis, v, run_batch(tasks, cfg, factory, parallelism, label=f"{axis}={v}"))
        for v, cfg in configs
    ]


def run_direct_baseline(
    tasks: Sequence[GroundingTask],
    factory: AgentFactory,
    parallelism: int = 1,
) -> BatchRun:
    """Locator alone on the full screenshot: the reference the pipeline must beat."""

    def work(task: GroundingTask) -> TaskOutcome:
        if not task.available:
            return _failed(task, "image unavailable")
        try:
            _, locator = factory(task)
            payload = ImagePayload(task.screenshot(), task.image_size.as_rect())
            point = clamp_point(locator.ground(task.instruction, payload), payload.frame)
        except Exception as exc:
            return _failed(task, f"{type(exc).__name__}: {exc}")
        return TaskOutcome(task, point, call_counts={"scanner": 0, "locator": 1})

    return _run_many(tasks, work, parallelism, "direct_locator", "direct", None)
