import json
import random
from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from scanloc.agents import OracleConfig, oracle_agents
from scanloc.bench import (
    EvalReport,
    accuracy,
    hit,
    load_dataset,
    markdown_table,
    oracle_factory,
    render_overlay,
    report_to_csv,
    reports_from_csv,
    run_ablation,
    run_batch,
    run_direct_baseline,
    run_sweep,
    synthetic_task,
    synthetic_tasks,
)
from scanloc.bench.report import HIT_COLOR, MISS_COLOR
from scanloc.bench.runners import TaskOutcome, _run_many
from scanloc.geometry import ImageSize, PointPx
from scanloc.pipeline import PipelineConfig, run
from scanloc.tasks import CATEGORIES, SPECIAL_SUBSETS, UI_TYPES, ClosedBox, GroundingTask

# hit


@pytest.mark.parametrize(
    "point, expected",
    [((50, 50), 1), ((60, 60), 1), ((40, 40), 1), ((61, 60), 0), ((39, 50), 0), ((50, 61), 0)],
    ids=["inside", "max_corner_inclusive", "min_corner_inclusive", "right_of_max", "left_of_min", "below_max"],
)
def test_hit_closed_box(point, expected):
    assert hit(PointPx(*point), ClosedBox(40, 40, 60, 60)) == expected


def test_hit_matches_brute_force_membership():
    box = ClosedBox(30, 45, 62, 70)
    members = {(x, y) for x in range(30, 63) for y in range(45, 71)}
    for x in range(100):
        for y in range(100):
            assert hit(PointPx(x, y), box) == ((x, y) in members)


def test_closed_box_rejects_inversion():
    with pytest.raises(ValueError, match="inverted bbox"):
        ClosedBox(10, 0, 5, 5)


@pytest.mark.parametrize(
    "box, rect",
    [((10, 10, 20, 20), (10, 10, 21, 21)), ((10.5, 10.2, 20.7, 20.0), (11, 11, 21, 21))],
    ids=["integer", "fractional"],
)
def test_closed_box_to_rect_covers_integer_points(box, rect):
    r = ClosedBox(*box).to_rect()
    assert r.as_list() == list(rect)


# accuracy and report


def _task(i, category="Office", ui_type="text"):
    return GroundingTask(f"t{i}", "x", "word", "windows", ClosedBox(0, 0, 9, 9), category, ui_type, "word_windows", ImageSize(100, 100))


def test_three_of_four():
    tasks = [_task(i) for i in range(4)]
    points = [PointPx(1, 1), PointPx(9, 9), PointPx(0, 5), PointPx(10, 10)]
    assert accuracy(points, tasks).overall == 0.75


def test_all_miss_is_zero_everywhere():
    tasks = [_task(i, c, u) for i, (c, u) in enumerate((c, u) for c in CATEGORIES for u in UI_TYPES)]
    report = accuracy([PointPx(50, 50)] * len(tasks), tasks)
    assert report.overall == 0.0
    assert all(report.accuracy(c, u) == 0.0 for c in CATEGORIES for u in UI_TYPES)


def test_length_mismatch_raises():
    with pytest.raises(ValueError):
        accuracy([PointPx(0, 0)], [])


def _random_report(rng):
    report = EvalReport(label=f"r{rng.randint(0, 9)}", fingerprint="abc", scanner_calls=rng.randint(0, 999))
    for _ in range(rng.randint(1, 300)):
        report.add(rng.choice(CATEGORIES), rng.choice(UI_TYPES), rng.randint(0, 1))
    return report


@pytest.mark.parametrize("seed", range(20), ids=lambda s: f"seed{s}")
def test_cell_recombination_equals_overall(seed):
    report = _random_report(random.Random(seed))
    total = sum(report.accuracy(c, u) * report.counts(c, u)[1] for c in CATEGORIES for u in UI_TYPES if report.counts(c, u)[1])
    assert total / report.n == pytest.approx(report.overall, abs=1e-12)
    by_cat = sum(report.accuracy(c) * report.counts(c)[1] for c in CATEGORIES if report.counts(c)[1])
    assert by_cat / report.n == pytest.approx(report.overall, abs=1e-12)


@pytest.mark.parametrize("seed", range(10), ids=lambda s: f"seed{s}")
def test_csv_round_trip(seed):
    rng = random.Random(seed)
    reports = [_random_report(rng) for _ in range(3)]
    for i, r in enumerate(reports):
        r.label = f"run{i}"
    back = reports_from_csv(report_to_csv(reports))
    assert back == reports
    assert report_to_csv(back) == report_to_csv(reports)


def test_csv_missing_column():
    with pytest.raises(ValueError, match="lacks columns"):
        reports_from_csv("label,hits\nx,1\n")


def test_markdown_has_six_categories_and_average():
    report = _random_report(random.Random(1))
    lines = markdown_table([report]).splitlines()
    header = [h.strip() for h in lines[0].strip("|").split("|")]
    blocks = list(CATEGORIES) + ["Average"]
    assert header == ["Run"] + [f"{b} {c}" for b in blocks for c in ("text", "icon", "avg")]
    assert len(lines) == 3
    assert lines[2].split("|")[-2].strip() == f"{100 * report.overall:.1f}"


def test_markdown_marks_empty_cells():
    report = EvalReport("only_office")
    report.add("Office", "text", 1)
    row = markdown_table([report]).splitlines()[2]
    assert "| 100.0 | - | 100.0 |" in row and row.count("-") >= 15


# dataset


def _write_image(path, size=(200, 100)):
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.new("RGB", size).save(path)


def _entry(**kw):
    base = {
        "img_filename": "a.png", "instruction": "click save", "bbox": [10, 10, 30, 20],
        "application": "word", "platform": "windows", "ui_type": "icon", "group": "Office",
    }
    base.update(kw)
    return {k: v for k, v in base.items() if v is not None}


def _manifest(tmp_path, entries, array=False):
    path = tmp_path / "manifest.json"
    if array:
        path.write_text(json.dumps(entries))
    else:
        path.write_text("".join((e if isinstance(e, str) else json.dumps(e)) + "\n" for e in entries))
    return path


def test_three_entry_manifest(tmp_path):
    _write_image(tmp_path / "a.png")
    loaded = load_dataset(tmp_path, _manifest(tmp_path, [_entry(), _entry(ui_type="text"), _entry(group="dev")]))
    assert len(loaded.tasks) == 3 and not loaded.skipped and loaded.total == 3
    assert loaded.tasks[2].category == "Development"
    assert loaded.tasks[0].image_size == ImageSize(200, 100)


def test_json_array_manifest(tmp_path):
    _write_image(tmp_path / "images" / "a.png")
    loaded = load_dataset(tmp_path, _manifest(tmp_path, [_entry(), _entry()], array=True))
    assert len(loaded.tasks) == 2 and all(t.available for t in loaded.tasks)


@pytest.mark.parametrize(
    "entry, reason",
    [
        (_entry(bbox=[30, 10, 10, 20]), "inverted bbox"),
        (_entry(bbox=[10, 10, 300, 20]), "bbox outside image"),
        (_entry(instruction=None), "missing required field 'instruction'"),
        (_entry(ui_type="widget"), "ui_type"),
        (_entry(group="games"), "unknown group"),
        (_entry(bbox=[1, 2, 3]), "bbox must be"),
        ("{not json", "invalid JSON"),
        ("[1, 2]", "not an object"),
    ],
    ids=["inverted", "outside", "missing_field", "bad_ui_type", "bad_group", "short_bbox", "bad_json", "not_object"],
)
def test_bad_entries_reported_not_dropped(tmp_path, entry, reason):
    _write_image(tmp_path / "a.png")
    loaded = load_dataset(tmp_path, _manifest(tmp_path, [_entry(), entry, _entry()]))
    assert len(loaded.tasks) + len(loaded.skipped) == loaded.total == 3
    assert [s.line for s in loaded.skipped] == [2]
    assert reason in loaded.skipped[0].reason


def test_unreadable_image_marks_task_unavailable(tmp_path):
    (tmp_path / "broken.png").write_bytes(b"not a png")
    loaded = load_dataset(tmp_path, _manifest(tmp_path, [_entry(img_filename="broken.png", img_size=[200, 100])]))
    assert len(loaded.tasks) == 1 and not loaded.tasks[0].available
    assert loaded.unavailable == loaded.tasks


@pytest.mark.parametrize(
    "subset, special",
    [("common_macos", True), ("common_linux", True), ("common_windows", True), ("word_windows", False)],
    ids=["macos", "linux", "windows", "app_subset"],
)
def test_common_subsets_use_special_variant(tmp_path, subset, special):
    _write_image(tmp_path / "a.png")
    task = load_dataset(tmp_path, _manifest(tmp_path, [_entry(subset=subset)])).tasks[0]
    assert task.special is special and task.variant == ("special" if special else "normal")


def test_default_subset_from_application_and_platform(tmp_path):
    _write_image(tmp_path / "a.png")
    task = load_dataset(tmp_path, _manifest(tmp_path, [_entry(application="common", platform="linux")])).tasks[0]
    assert task.subset_id == "common_linux" and task.special


def test_special_subsets_are_the_three_common_ones():
    assert SPECIAL_SUBSETS == {"common_linux", "common_windows", "common_macos"}


# synthetic data


def test_synthetic_tasks_are_deterministic_and_valid():
    a, b = synthetic_tasks(30, seed=4), synthetic_tasks(30, seed=4)
    assert a == b
    for t in a:
        r = t.gt_bbox.to_rect()
        assert t.image_size.as_rect().contains_rect(r)
        assert t.category in CATEGORIES and t.ui_type in UI_TYPES
    assert {t.category for t in a} == set(CATEGORIES)
    assert any(t.special for t in a)


def test_synthetic_render_draws_target():
    task = synthetic_task(0, seed=1, size=(640, 360))
    image = task.screenshot().pixels()
    assert image.size == (640, 360)
    r = task.gt_bbox.to_rect()
    assert image.getpixel((r.x1 + r.width // 2, r.y2 - 2)) == (40, 110, 220)


# runners


def test_batch_results_in_task_order_with_parallelism():
    tasks = synthetic_tasks(12, seed=3)
    factory = oracle_factory(OracleConfig(scanner_score_noise=20, locator_sigma=8, seed=3))
    serial = run_batch(tasks, PipelineConfig(), factory, parallelism=1)
    parallel = run_batch(tasks, PipelineConfig(), factory, parallelism=4)
    assert [o.task.task_id for o in parallel.outcomes] == [t.task_id for t in tasks]
    assert [o.point for o in serial.outcomes] == [o.point for o in parallel.outcomes]
    assert serial.report == parallel.report


def test_unavailable_task_counts_as_failure():
    tasks = synthetic_tasks(2, seed=0)
    tasks[1].available = False
    batch = run_batch(tasks, PipelineConfig(), oracle_factory(OracleConfig()))
    assert batch.failures == 1 and batch.report.n == 2 and batch.report.failures == 1


def test_perfect_oracle_ablations_are_perfect():
    tasks = synthetic_tasks(12, seed=6)
    for variant in ("full", "no_verify", "no_consensus", "no_enhance"):
        assert run_ablation(tasks, PipelineConfig(), variant, oracle_factory(OracleConfig())).report.overall == 1.0


def test_ablation_variant_in_fingerprint():
    tasks = synthetic_tasks(2, seed=6)
    prints = {run_ablation(tasks, PipelineConfig(), v, oracle_factory(OracleConfig())).fingerprint
              for v in ("full", "no_verify", "no_consensus", "no_enhance")}
    assert len(prints) == 4


def test_direct_baseline_counts_one_locator_call_per_task():
    tasks = synthetic_tasks(5, seed=1)
    batch = run_direct_baseline(tasks, oracle_factory(OracleConfig()))
    assert batch.report.overall == 1.0
    assert (batch.report.scanner_calls, batch.report.locator_calls) == (0, 5)


def test_sweep_threshold_call_counts_strictly_increase():
    task = synthetic_task(0, seed=0, size=(3600, 2400))
    rows = run_sweep([task], PipelineConfig(), "threshold", [1024, 448], oracle_factory(OracleConfig()))
    assert rows[0].scanner_calls < rows[1].scanner_calls


def test_sweep_rejects_unknown_axis_and_bad_values():
    with pytest.raises(ValueError, match="axis"):
        run_sweep([], PipelineConfig(), "depth", [1], oracle_factory(OracleConfig()))
    with pytest.raises(ValueError):
        run_sweep([], PipelineConfig(), "top_k", [12], oracle_factory(OracleConfig()))


def test_interrupt_reports_partial_results():
    tasks = synthetic_tasks(6, seed=0)

    def work(task):
        if task.task_id.endswith("3"):
            raise KeyboardInterrupt
        return TaskOutcome(task, PointPx(0, 0))

    batch = _run_many(tasks, work, 1, "x", "fp", None)
    assert batch.interrupted and batch.skipped
    assert len(batch.outcomes) + len(batch.skipped) == len(tasks)


# overlay


def test_overlay_point_colour_differs_for_hit_and_miss():
    task = synthetic_task(0, seed=0, size=(400, 300))
    scanner, locator = oracle_agents(task.gt_bbox, OracleConfig(), task.task_id)
    result = run(task, PipelineConfig(stop_threshold_px=125, crop_side_px=60), scanner, locator)
    assert hit(result.final_point, task.gt_bbox)
    p = result.final_point
    far = PointPx(0 if p.x > 200 else 380, 0 if p.y > 150 else 299)
    missed = replace(result, final_point=far)
    # the crosshair's horizontal arm passes 20 px right of the point
    assert render_overlay(task, result).getpixel((p.x + 20, p.y)) == HIT_COLOR
    assert render_overlay(task, missed).getpixel((far.x + 20, far.y)) == MISS_COLOR


def test_overlay_downscales_large_screens():
    task = synthetic_task(1, seed=0, size=(5120, 2880))
    result = run(task, PipelineConfig(), *oracle_agents(task.gt_bbox, OracleConfig(), task.task_id))
    assert max(render_overlay(task, result, max_side=1024).size) == 1024


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.sampled_from(CATEGORIES), st.sampled_from(UI_TYPES), st.integers(0, 1)), min_size=1))
def test_recombination_property(entries):
    report = EvalReport()
    for c, u, h in entries:
        report.add(c, u, h)
    assert report.n == len(entries)
    assert report.overall == pytest.approx(sum(h for *_, h in entries) / len(entries))
