import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from surprisal.errors import DimensionMismatchError, EmptyRangeError, SurprisalError
from surprisal.guide import (
    SaRange,
    four_range_plan,
    sa_order_curve,
    sample_by_range,
    write_curve_csv,
    write_plan_json,
)
from surprisal.report import SurpriseReport


def report_of(values, flags=None, ids=None):
    values = np.asarray(values, dtype=np.float64)
    n = len(values)
    return SurpriseReport(
        kind="lsa",
        selection="all-neurons",
        ids=tuple(ids) if ids else tuple(str(i) for i in range(n)),
        values=values,
        class_used=tuple(0 for _ in range(n)),
        flags=tuple(flags) if flags else ("",) * n,
    )


# ---------------------------------------------------------------- sample_by_range


def test_sample_membership():
    report = report_of([1.0, 2.0, 3.0, 4.0])
    result = sample_by_range(report, SaRange(0.0, 2.0, "2/4"), count=2, seed=0)
    assert result.ids == ("0", "1")
    assert result.qualifying == 2
    assert not result.shortfall


def test_sample_is_deterministic_and_report_ordered():
    rng = np.random.default_rng(0)
    report = report_of(rng.uniform(0.0, 10.0, size=50))
    a = sample_by_range(report, SaRange(0.0, 8.0, "r"), count=10, seed=3)
    b = sample_by_range(report, SaRange(0.0, 8.0, "r"), count=10, seed=3)
    assert a == b
    positions = [int(i) for i in a.ids]
    assert positions == sorted(positions)
    assert all(report.values[p] <= 8.0 for p in positions)


def test_sample_shortfall():
    report = report_of([1.0, 2.0, 9.0])
    result = sample_by_range(report, SaRange(0.0, 3.0, "r"), count=5, seed=0)
    assert result.ids == ("0", "1")
    assert result.shortfall
    assert result.qualifying == 2


def test_sample_empty_range_raises():
    report = report_of([5.0, 6.0])
    with pytest.raises(EmptyRangeError):
        sample_by_range(report, SaRange(0.0, 1.0, "r"), count=1, seed=0)


def test_sample_rejects_bad_count_and_range():
    report = report_of([1.0])
    with pytest.raises(SurprisalError):
        sample_by_range(report, SaRange(0.0, 1.0, "r"), count=0)
    with pytest.raises(SurprisalError):
        SaRange(2.0, 1.0, "backwards")
    with pytest.raises(SurprisalError):
        SaRange(-1.0, 1.0, "negative")


def test_sample_skips_flagged_rows():
    report = report_of([1.0, 1.0, 1.0], flags=("", "unknown_class:9", ""))
    result = sample_by_range(report, SaRange(0.0, 2.0, "r"), count=5, seed=0)
    assert result.ids == ("0", "2")


def test_sample_range_bounds_are_closed():
    report = report_of([0.0, 2.0, 2.000001])
    result = sample_by_range(report, SaRange(0.0, 2.0, "r"), count=5, seed=0)
    assert result.ids == ("0", "1")


# ---------------------------------------------------------------- four_range_plan


def test_four_range_plan_nested_and_labeled():
    rng = np.random.default_rng(4)
    report = report_of(rng.uniform(0.0, 10.0, size=200))
    plan = four_range_plan(report, upper_bound=10.0, count=20, seed=0)
    assert list(plan) == ["1/4", "2/4", "3/4", "4/4"]
    counts = [plan[label].qualifying for label in plan]
    assert counts == sorted(counts)
    # qualifying sets are nested by construction; check via direct recomputation
    for q in range(1, 4):
        inner = set(np.nonzero(report.values <= 10.0 * q / 4.0)[0])
        outer = set(np.nonzero(report.values <= 10.0 * (q + 1) / 4.0)[0])
        assert inner <= outer


def test_four_range_plan_deterministic():
    rng = np.random.default_rng(9)
    report = report_of(rng.uniform(0.0, 4.0, size=120))
    a = four_range_plan(report, upper_bound=4.0, count=15, seed=2)
    b = four_range_plan(report, upper_bound=4.0, count=15, seed=2)
    assert a == b


def test_four_range_plan_shortfall_flag():
    report = report_of([0.5, 3.9, 3.8, 3.7])
    plan = four_range_plan(report, upper_bound=4.0, count=3, seed=0)
    assert plan["1/4"].shortfall           # only one input below 1.0
    assert plan["1/4"].ids == ("0",)
    assert not plan["4/4"].shortfall


def test_four_range_plan_bad_upper_bound():
    report = report_of([1.0])
    with pytest.raises(SurprisalError):
        four_range_plan(report, upper_bound=0.0)


def test_four_range_plan_propagates_empty_range():
    report = report_of([9.5, 9.9])
    with pytest.raises(EmptyRangeError):
        four_range_plan(report, upper_bound=10.0, count=1, seed=0)


def test_write_plan_json(tmp_path):
    report = report_of([0.5, 1.5, 2.5, 3.5])
    plan = four_range_plan(report, upper_bound=4.0, count=2, seed=0)
    out = tmp_path / "plan.json"
    write_plan_json(plan, out)
    doc = json.loads(out.read_text())
    assert [entry["range_label"] for entry in doc] == ["1/4", "2/4", "3/4", "4/4"]
    assert doc[0] == {
        "range_label": "1/4",
        "ids": ["0"],
        "qualifying": 1,
        "shortfall": True,
    }


# ---------------------------------------------------------------- sa_order_curve


def test_curve_all_correct_everywhere():
    report = report_of([3.0, 1.0, 2.0])
    for direction in ("ascending", "descending", "random"):
        points = sa_order_curve(report, [1, 1, 1], direction=direction, steps=3)
        assert [p.accuracy for p in points] == [1.0, 1.0, 1.0]


def test_curve_hand_example():
    report = report_of([1.0, 2.0, 3.0])
    ascending = sa_order_curve(report, [1, 1, 0], direction="ascending", steps=3)
    descending = sa_order_curve(report, [1, 1, 0], direction="descending", steps=3)
    assert ascending[1].fraction == 2 / 3 and ascending[1].accuracy == 1.0
    assert descending[0].fraction == 1 / 3 and descending[0].accuracy == 0.0
    assert ascending[2].accuracy == descending[2].accuracy == 2 / 3


def test_curve_full_fraction_direction_independent():
    rng = np.random.default_rng(1)
    report = report_of(rng.uniform(0.0, 5.0, size=37))
    outcome = rng.integers(0, 2, size=37)
    finals = [
        sa_order_curve(report, outcome, direction=d, steps=7)[-1].accuracy
        for d in ("ascending", "descending", "random")
    ]
    overall = float(outcome.mean())
    assert finals == [overall, overall, overall]


def test_curve_prefix_sizes_cover_all_rows():
    report = report_of(np.linspace(0.0, 1.0, 11))
    points = sa_order_curve(report, [1] * 11, direction="ascending", steps=4)
    assert [p.included for p in points] == [3, 6, 9, 11]
    assert [p.fraction for p in points] == [0.25, 0.5, 0.75, 1.0]


def test_curve_ties_resolve_by_report_position():
    report = report_of([5.0, 5.0], ids=["first", "second"])
    up = sa_order_curve(report, [1, 0], direction="ascending", steps=2)
    down = sa_order_curve(report, [1, 0], direction="descending", steps=2)
    assert up[0].accuracy == 1.0
    assert down[0].accuracy == 1.0


def test_curve_skips_flagged_rows():
    report = report_of([1.0, 50.0, 2.0], flags=("", "unknown_class:3", ""))
    points = sa_order_curve(report, [1, 0, 1], direction="ascending", steps=2)
    assert points[-1].included == 2
    assert points[-1].accuracy == 1.0


def test_curve_random_mode_is_seeded_mean():
    rng = np.random.default_rng(5)
    report = report_of(rng.uniform(0.0, 3.0, size=30))
    outcome = rng.integers(0, 2, size=30)
    a = sa_order_curve(report, outcome, direction="random", steps=5, seed=8)
    b = sa_order_curve(report, outcome, direction="random", steps=5, seed=8)
    assert a == b
    assert all(0.0 <= p.accuracy <= 1.0 for p in a)


def test_curve_validation_errors():
    report = report_of([1.0, 2.0])
    with pytest.raises(DimensionMismatchError):
        sa_order_curve(report, [1], direction="ascending")
    with pytest.raises(SurprisalError):
        sa_order_curve(report, [1, 1], direction="sideways")
    with pytest.raises(SurprisalError):
        sa_order_curve(report, [1, 1], steps=0)
    all_flagged = report_of([1.0], flags=("unknown_class:1",))
    with pytest.raises(EmptyRangeError):
        sa_order_curve(all_flagged, [1])


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31), steps=st.integers(1, 30))
def test_curve_sizes_are_monotone_and_end_at_m(seed, steps):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(1, 60))
    report = report_of(rng.uniform(0.0, 1.0, size=m))
    points = sa_order_curve(report, rng.integers(0, 2, size=m), steps=steps)
    sizes = [p.included for p in points]
    assert sizes == sorted(sizes)
    assert sizes[-1] == m
    assert all(s >= 1 for s in sizes)


def test_write_curve_csv(tmp_path):
    report = report_of([1.0, 2.0])
    points = sa_order_curve(report, [1, 0], direction="ascending", steps=2)
    out = tmp_path / "curve.csv"
    write_curve_csv(points, out)
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "fraction,included,accuracy"
    assert lines[1] == "0.5,1,1.0"
    assert lines[2] == "1.0,2,0.5"
