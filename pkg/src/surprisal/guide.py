"""Surprise-guided input selection.

Two selection tools: sampling inputs whose surprise falls in nested
[0, high] ranges (for building retraining sets of graded difficulty), and
accuracy-versus-surprise order curves that include inputs cumulatively from
the least or the most surprising end.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DimensionMismatchError, EmptyRangeError, SurprisalError
from .report import SurpriseReport

DEFAULT_SAMPLE_COUNT = 100
RANDOM_REPETITIONS = 20


@dataclass(frozen=True)
class SaRange:
    """Closed surprise interval [low, high]; low stays 0 in the nested plan."""

    low: float
    high: float
    label: str

    def __post_init__(self):
        if not (0.0 <= self.low <= self.high):
            raise SurprisalError(f"range {self.label!r} needs 0 <= low <= high, got [{self.low}, {self.high}]")


@dataclass(frozen=True)
class SampleResult:
    label: str
    ids: tuple[str, ...]
    qualifying: int
    shortfall: bool


def sample_by_range(
    report: SurpriseReport,
    sa_range: SaRange,
    count: int = DEFAULT_SAMPLE_COUNT,
    seed: int = 0,
) -> SampleResult:
    """Sample up to count input ids whose surprise lies in the range.

    Uniform without replacement; when fewer than count inputs qualify, all of
    them come back with the shortfall flag set. Flagged report rows never
    qualify. Output order follows the report, so a fixed seed gives a fixed
    sample.
    """
    if count < 1:
        raise SurprisalError(f"sample count must be >= 1, got {count}")
    clean = report.clean_mask()
    values = report.values
    qualifying = np.nonzero(clean & (values >= sa_range.low) & (values <= sa_range.high))[0]
    if len(qualifying) == 0:
        raise EmptyRangeError(
            f"no input has surprise in [{sa_range.low}, {sa_range.high}] ({sa_range.label})"
        )
    if len(qualifying) <= count:
        chosen = qualifying
        shortfall = len(qualifying) < count
    else:
        rng = np.random.default_rng(seed)
        chosen = np.sort(rng.choice(qualifying, size=count, replace=False))
        shortfall = False
    return SampleResult(
        label=sa_range.label,
        ids=tuple(report.ids[i] for i in chosen),
        qualifying=len(qualifying),
        shortfall=shortfall,
    )


def four_range_plan(
    report: SurpriseReport,
    upper_bound: float,
    count: int = DEFAULT_SAMPLE_COUNT,
    seed: int = 0,
) -> dict[str, SampleResult]:
    """Sample from four nested ranges [0, U/4], [0, U/2], [0, 3U/4], [0, U].

    Ranges share the lower end, so each qualifying set contains the previous
    one. Errors from individual ranges propagate.
    """
    if not upper_bound > 0:
        raise SurprisalError(f"upper bound must be > 0, got {upper_bound}")
    plan = {}
    for quarter in range(1, 5):
        label = f"{quarter}/4"
        sa_range = SaRange(low=0.0, high=upper_bound * quarter / 4.0, label=label)
        # Distinct per-range seeds keep the four draws independent.
        plan[label] = sample_by_range(report, sa_range, count, seed=seed * 4 + quarter)
    return plan


def write_plan_json(plan: dict[str, SampleResult], path: str | Path) -> None:
    doc = [
        {
            "range_label": result.label,
            "ids": list(result.ids),
            "qualifying": result.qualifying,
            "shortfall": result.shortfall,
        }
        for result in plan.values()
    ]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


@dataclass(frozen=True)
class CurvePoint:
    fraction: float
    included: int
    accuracy: float


def sa_order_curve(
    report: SurpriseReport,
    correctness: Sequence[int] | np.ndarray,
    direction: str = "ascending",
    steps: int = 20,
    seed: int = 0,
) -> list[CurvePoint]:
    """Accuracy of growing input sets ordered by surprise.

    Ascending starts from the least surprising input, descending from the
    most surprising; ties resolve by report position. Random direction
    averages the curve over 20 reseeded shuffles. Flagged report rows are
    left out. The fraction-1.0 point always covers the full set, so it is
    direction-independent.
    """
    correctness = np.asarray(correctness, dtype=np.float64).reshape(-1)
    if len(correctness) != report.num_rows:
        raise DimensionMismatchError(
            f"{len(correctness)} correctness entries for {report.num_rows} report rows"
        )
    if steps < 1:
        raise SurprisalError(f"steps must be >= 1, got {steps}")
    clean = report.clean_mask()
    values = report.values[clean]
    outcome = correctness[clean]
    m = len(values)
    if m == 0:
        raise EmptyRangeError("report holds no cleanly scored rows")

    def prefix_sizes():
        # ceil(j*m/steps) in exact integer arithmetic; the last step is m
        return [(j * m + steps - 1) // steps for j in range(1, steps + 1)]

    def curve_for(order: np.ndarray) -> list[float]:
        ordered = outcome[order]
        sums = np.cumsum(ordered)
        return [float(sums[size - 1] / size) for size in prefix_sizes()]

    if direction in ("ascending", "descending"):
        keys = values if direction == "ascending" else -values
        order = np.argsort(keys, kind="stable")
        accuracies = curve_for(order)
    elif direction == "random":
        runs = []
        for repetition in range(RANDOM_REPETITIONS):
            rng = np.random.default_rng((seed, repetition))
            runs.append(curve_for(rng.permutation(m)))
        per_step = list(zip(*runs))
        # Identical repetition values (always true at fraction 1.0) pass
        # through untouched instead of picking up averaging error.
        accuracies = [
            run[0] if min(run) == max(run) else float(np.mean(run)) for run in per_step
        ]
    else:
        raise SurprisalError(f"unknown direction {direction!r}; use ascending, descending, or random")

    sizes = prefix_sizes()
    return [
        CurvePoint(fraction=j / steps, included=sizes[j - 1], accuracy=accuracies[j - 1])
        for j in range(1, steps + 1)
    ]


def write_curve_csv(points: Sequence[CurvePoint], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["fraction", "included", "accuracy"])
        for point in points:
            writer.writerow([repr(float(point.fraction)), point.included, repr(float(point.accuracy))])
