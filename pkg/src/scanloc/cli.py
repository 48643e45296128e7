"""Command-line entry point: ``scanloc {run,sweep,ablate,simulate,report,viz}``.

Exit codes: 0 success, 1 evaluation finished with task-level failures (or was
interrupted), 2 configuration error. Every file goes under ``--out``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Sequence

from scanloc import __version__
from scanloc.agents.base import ConfigurationError
from scanloc.agents.remote import RemoteLocator, RemoteScanner
from scanloc.bench.dataset import load_dataset
from scanloc.bench.metrics import EvalReport, hit
from scanloc.bench.report import emit_overlay, emit_report, reports_from_csv
from scanloc.bench.runners import (
    SWEEP_AXES,
    AgentFactory,
    BatchRun,
    oracle_factory,
    run_ablation,
    run_direct_baseline,
    run_sweep,
    shared_factory,
)
from scanloc.bench.synthetic import synthetic_tasks
from scanloc.config import AppConfig, load_config, with_pipeline
from scanloc.pipeline import Ablation
from scanloc.tasks import GroundingTask

log = logging.getLogger("scanloc")

ABLATIONS = [a.value for a in Ablation]


class UsageError(ConfigurationError):
    """Flag combination that cannot work."""


def _int_list(text: str) -> list[int]:
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("expected at least one value")
    return values


def _add_common(p: argparse.ArgumentParser, dataset: bool = True) -> None:
    p.add_argument("--config", type=Path, help="TOML config file (sections: pipeline, "
                   "scanner-backend, locator-backend, oracle)")
    if dataset:
        p.add_argument("--dataset", type=Path, help="task manifest (JSON lines or JSON array); "
                       "without it, synthetic tasks are generated")
        p.add_argument("--image-root", type=Path, help="directory holding the screenshots "
                       "(default: the manifest's directory)")
        p.add_argument("--subset", action="append", default=[], metavar="NAME",
                       help="only tasks of this subset id (repeatable or comma-separated)")
        p.add_argument("--tasks", type=int, default=200, metavar="N",
                       help="number of synthetic tasks when no dataset is given (default: 200)")
    p.add_argument("--out", type=Path, required=True, help="output directory (created if missing)")
    p.add_argument("--mode", choices=["oracle", "live"], default="oracle",
                   help="oracle agents from ground truth, or remote models (default: oracle)")
    p.add_argument("--seed", type=int, default=0, help="oracle and synthetic-data seed (default: 0)")
    p.add_argument("--top-k", type=int, help="regions kept per search level")
    p.add_argument("--threshold", type=int, help="stop subdividing below this side length in pixels")
    p.add_argument("--parallelism", type=int, default=1, help="tasks run concurrently (default: 1)")
    p.add_argument("--traces", action="store_true", help="also write one JSON-lines trace per task")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scanloc",
        description="Training-free GUI grounding: a generalist scanner model narrows the "
                    "screen, a specialist locator model points.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("run", help="evaluate the pipeline on a task set")
    _add_common(p)
    p.add_argument("--ablation", choices=ABLATIONS, default="full", help="pipeline variant (default: full)")
    p.set_defaults(handler=cmd_run)

    p = sub.add_parser("sweep", help="evaluate across values of top-k or the stop threshold")
    _add_common(p)
    p.add_argument("--axis", choices=sorted(SWEEP_AXES), required=True, help="setting to vary")
    p.add_argument("--values", type=_int_list, required=True, help="comma-separated values, e.g. 3,5,7,9")
    p.add_argument("--ablation", choices=ABLATIONS, default="full", help="pipeline variant (default: full)")
    p.set_defaults(handler=cmd_sweep)

    p = sub.add_parser("ablate", help="evaluate the full pipeline and its ablated variants")
    _add_common(p)
    p.add_argument("--ablation", action="append", choices=ABLATIONS, default=[],
                   help="variant to include (repeatable; default: all four)")
    p.set_defaults(handler=cmd_ablate)

    p = sub.add_parser("simulate", help="oracle run on synthetic tasks, with the direct-locator baseline")
    _add_common(p)
    p.add_argument("--ablation", choices=ABLATIONS, default="full", help="pipeline variant (default: full)")
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("report", help="render CSV reports as a markdown table")
    p.add_argument("--input", type=Path, action="append", required=True, help="report CSV (repeatable)")
    p.add_argument("--out", type=Path, required=True, help="output directory (created if missing)")
    p.set_defaults(handler=cmd_report)

    p = sub.add_parser("viz", help="run tasks and draw result overlays")
    _add_common(p)
    p.add_argument("--ablation", choices=ABLATIONS, default="full", help="pipeline variant (default: full)")
    p.add_argument("--limit", type=int, default=5, help="number of tasks to draw (default: 5)")
    p.set_defaults(handler=cmd_viz)
    return parser


@dataclass
class Setup:
    app: AppConfig
    tasks: list[GroundingTask]
    factory: AgentFactory
    out: Path


def _subsets(raw: Sequence[str]) -> set[str]:
    return {s.strip() for item in raw for s in item.split(",") if s.strip()}


def _load_tasks(args: argparse.Namespace, out: Path) -> list[GroundingTask]:
    if args.dataset is None:
        if args.tasks < 0:
            raise UsageError("--tasks must be >= 0")
        tasks = synthetic_tasks(args.tasks, args.seed)
    else:
        if not args.dataset.exists():
            raise UsageError(f"dataset manifest not found: {args.dataset}")
        loaded = load_dataset(args.image_root or args.dataset.parent, args.dataset)
        if loaded.skipped:
            log.warning("%d of %d manifest entries skipped", len(loaded.skipped), loaded.total)
            _write_json(out / "skipped.json", [{"entry": s.line, "reason": s.reason} for s in loaded.skipped])
        tasks = loaded.tasks
    wanted = _subsets(args.subset)
    if wanted:
        tasks = [t for t in tasks if t.subset_id in wanted]
    return tasks


def _factory(args: argparse.Namespace, app: AppConfig) -> AgentFactory:
    if args.mode == "oracle":
        return oracle_factory(replace(app.oracle, seed=args.seed))
    if app.scanner_backend is None or app.locator_backend is None:
        raise UsageError("live mode needs [scanner-backend] and [locator-backend] in --config")
    return shared_factory(RemoteScanner(app.scanner_backend), RemoteLocator(app.locator_backend))


def _setup(args: argparse.Namespace) -> Setup:
    if args.parallelism < 1:
        raise UsageError("--parallelism must be >= 1")
    app = with_pipeline(load_config(args.config), top_k=args.top_k, stop_threshold_px=args.threshold)
    factory = _factory(args, app)
    args.out.mkdir(parents=True, exist_ok=True)
    return Setup(app, _load_tasks(args, args.out), factory, args.out)


def _write_json(path: Path, data: object) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _safe_name(text: str) -> str:
    return "".join(c if c.isalnum() or c in "-_.=" else "_" for c in text)


def _write_run(out: Path, batch: BatchRun, traces: bool) -> None:
    name = _safe_name(batch.label)
    lines = []
    for o in batch.outcomes:
        record = {
            "task_id": o.task.task_id,
            "point": [o.point.x, o.point.y],
            "hit": hit(o.point, o.task.gt_bbox),
            "error": o.error,
        }
        if o.result is not None:
            record.update(fallback_level=o.result.fallback_level.value, call_counts=o.result.call_counts)
            if traces:
                trace_dir = out / "traces" / name
                trace_dir.mkdir(parents=True, exist_ok=True)
                o.result.trace.write(trace_dir / f"{_safe_name(o.task.task_id)}.jsonl")
        lines.append(json.dumps(record, sort_keys=True))
    (out / f"results-{name}.jsonl").write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def _finish(out: Path, runs: Sequence[BatchRun], traces: bool) -> int:
    for batch in runs:
        _write_run(out, batch, traces)
    reports = [b.report for b in runs]
    emit_report(reports, out / "report.md", "markdown")
    emit_report(reports, out / "report.csv", "csv")
    for report in reports:
        print(f"{report.label}: accuracy {report.overall:.3f} over {report.n} tasks "
              f"({report.scanner_calls} scanner / {report.locator_calls} locator calls)")
    failures = sum(b.failures for b in runs)
    if any(b.interrupted for b in runs):
        print("interrupted: partial results written", file=sys.stderr)
        return 1
    if failures:
        print(f"{failures} task-level failures (see results-*.jsonl)", file=sys.stderr)
        return 1
    return 0


def cmd_run(args: argparse.Namespace) -> int:
    s = _setup(args)
    return _finish(s.out, [run_ablation(s.tasks, s.app.pipeline, args.ablation, s.factory, args.parallelism)],
                   args.traces)


def cmd_sweep(args: argparse.Namespace) -> int:
    s = _setup(args)
    try:
        rows = run_sweep(s.tasks, replace(s.app.pipeline, ablation=Ablation(args.ablation)),
                         args.axis, args.values, s.factory, args.parallelism)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    table = ["| {} | accuracy | scanner calls | locator calls | tasks |".format(args.axis), "|---|---|---|---|---|"]
    for row in rows:
        r = row.run.report
        table.append(f"| {row.value} | {r.overall:.4f} | {r.scanner_calls} | {r.locator_calls} | {r.n} |")
    (s.out / "sweep.md").write_text("\n".join(table) + "\n", encoding="utf-8")
    return _finish(s.out, [row.run for row in rows], args.traces)


def cmd_ablate(args: argparse.Namespace) -> int:
    s = _setup(args)
    variants = args.ablation or ABLATIONS
    runs = [run_ablation(s.tasks, s.app.pipeline, v, s.factory, args.parallelism) for v in variants]
    return _finish(s.out, runs, args.traces)


def cmd_simulate(args: argparse.Namespace) -> int:
    if args.mode != "oracle":
        raise UsageError("simulate runs oracle agents only; use `run --mode live` for real models")
    s = _setup(args)
    baseline = run_direct_baseline(s.tasks, s.factory, args.parallelism)
    pipeline = run_ablation(s.tasks, s.app.pipeline, args.ablation, s.factory, args.parallelism)
    return _finish(s.out, [baseline, pipeline], args.traces)


def cmd_report(args: argparse.Namespace) -> int:
    reports: list[EvalReport] = []
    for path in args.input:
        try:
            reports += reports_from_csv(path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise UsageError(f"cannot read {path}: {exc.strerror}") from None
        except (ValueError, KeyError) as exc:
            raise UsageError(f"{path} is not a report CSV: {exc}") from None
    args.out.mkdir(parents=True, exist_ok=True)
    emit_report(reports, args.out / "report.md", "markdown")
    print((args.out / "report.md").read_text(encoding="utf-8"), end="")
    return 0


def cmd_viz(args: argparse.Namespace) -> int:
    s = _setup(args)
    tasks = s.tasks[: max(args.limit, 0)]
    batch = run_ablation(tasks, s.app.pipeline, args.ablation, s.factory, args.parallelism)
    overlay_dir = s.out / "overlays"
    overlay_dir.mkdir(exist_ok=True)
    for o in batch.outcomes:
        if o.result is not None:
            emit_overlay(o.task, o.result, overlay_dir / f"{_safe_name(o.task.task_id)}.png")
    return _finish(s.out, [batch], args.traces)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )
    handler: Callable[[argparse.Namespace], int] = args.handler
    try:
        return handler(args)
    except ConfigurationError as exc:
        print(f"scanloc: configuration error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
