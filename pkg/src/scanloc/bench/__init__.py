"""Benchmark harness: datasets, metrics, runners and report emitters."""

from scanloc.bench.dataset import EntryError, LoadedDataset, SkippedEntry, load_dataset
from scanloc.bench.metrics import EvalReport, accuracy, hit
from scanloc.bench.report import (
    emit_overlay,
    emit_report,
    markdown_table,
    render_overlay,
    report_to_csv,
    reports_from_csv,
)
from scanloc.bench.runners import (
    BatchRun,
    SweepRow,
    TaskOutcome,
    oracle_factory,
    run_ablation,
    run_batch,
    run_direct_baseline,
    run_sweep,
    shared_factory,
)
from scanloc.bench.synthetic import SCREEN_SIZES, synthetic_task, synthetic_tasks

__all__ = [
    "BatchRun",
    "EntryError",
    "EvalReport",
    "LoadedDataset",
    "SCREEN_SIZES",
    "SkippedEntry",
    "SweepRow",
    "TaskOutcome",
    "accuracy",
    "emit_overlay",
    "emit_report",
    "hit",
    "load_dataset",
    "markdown_table",
    "oracle_factory",
    "render_overlay",
    "report_to_csv",
    "reports_from_csv",
    "run_ablation",
    "run_batch",
    "run_direct_baseline",
    "run_sweep",
    "shared_factory",
    "synthetic_task",
    "synthetic_tasks",
]
