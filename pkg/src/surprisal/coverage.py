"""Coverage criteria over surprise scores and raw activations.

Surprise coverage buckets the interval (0, U] and asks which buckets the
observed scores occupy. The activation-level criteria (neuron coverage,
k-section coverage, boundary and strong-boundary coverage) are included as
comparison baselines. Every criterion reduces to a boolean occupancy map, so
set union is a plain OR and coverage growth over input batches is monotone.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import SurprisalError
from .lsa import TrainingProfile
from .traces import TraceSet

DEFAULT_NC_THRESHOLD = 0.5
DEFAULT_SECTIONS = 1000


@dataclass(frozen=True)
class BucketConfig:
    """n equal buckets partitioning (0, U]: bucket i is (U*(i-1)/n, U*i/n]."""

    upper_bound: float
    bucket_count: int

    def __post_init__(self):
        if not (math.isfinite(self.upper_bound) and self.upper_bound > 0):
            raise SurprisalError(f"upper_bound must be finite and > 0, got {self.upper_bound}")
        if int(self.bucket_count) != self.bucket_count or self.bucket_count < 1:
            raise SurprisalError(f"bucket_count must be a positive integer, got {self.bucket_count}")


@dataclass(frozen=True)
class CoverageResult:
    criterion: str
    covered: int
    total: int
    occupancy: np.ndarray  # boolean map; shape depends on the criterion

    def __post_init__(self):
        self.occupancy.setflags(write=False)
        if self.covered != int(np.count_nonzero(self.occupancy)):
            raise SurprisalError("covered count disagrees with the occupancy map")

    @property
    def ratio(self) -> float:
        return self.covered / self.total if self.total else 0.0


def _result(criterion: str, occupancy: np.ndarray, total: int | None = None) -> CoverageResult:
    occupancy = np.asarray(occupancy, dtype=bool)
    return CoverageResult(
        criterion=criterion,
        covered=int(np.count_nonzero(occupancy)),
        total=int(occupancy.size if total is None else total),
        occupancy=occupancy,
    )


def suggest_upper_bound(sa_values, percentile: float = 99.0) -> float:
    """Percentile-based upper-bound suggestion for bucketed coverage.

    A convenience only: principled upper bounds come from inspecting the
    training set's surprise distribution for the model and layer at hand.
    """
    values = np.asarray(sa_values, dtype=np.float64).reshape(-1)
    values = values[np.isfinite(values) & (values > 0)]
    if values.size == 0:
        raise SurprisalError("no positive finite surprise values to take a percentile of")
    return float(np.percentile(values, percentile))


def bucket_of(value: float, cfg: BucketConfig) -> int | None:
    """1-based bucket holding a score, or None for values outside (0, U].

    Index arithmetic instead of an interval scan: ceil(v*n/U) clamped into
    [1, n]. The range checks are exact, so 0 and anything above U never cover.
    """
    if not (value > 0.0 and value <= cfg.upper_bound):
        return None
    raw = math.ceil(value * cfg.bucket_count / cfg.upper_bound)
    return min(max(raw, 1), cfg.bucket_count)


def surprise_coverage(sa_values: Sequence[float] | np.ndarray, cfg: BucketConfig) -> CoverageResult:
    """Fraction of buckets of (0, U] occupied by the given surprise scores."""
    occupancy = np.zeros(cfg.bucket_count, dtype=bool)
    for value in np.asarray(sa_values, dtype=np.float64).reshape(-1):
        bucket = bucket_of(float(value), cfg)
        if bucket is not None:
            occupancy[bucket - 1] = True
    return _result("sc", occupancy)


def neuron_coverage(
    traces: TraceSet,
    threshold: float = DEFAULT_NC_THRESHOLD,
    scaling: str = "minmax",
) -> CoverageResult:
    """Fraction of neurons whose activation exceeds the threshold on any input.

    ``minmax`` rescales each input's activations to [0, 1] within each layer
    before thresholding; a constant layer rescales to all zeros. ``raw``
    compares unscaled activations.
    """
    if scaling not in ("minmax", "raw"):
        raise SurprisalError(f"unknown scaling {scaling!r}; use 'minmax' or 'raw'")
    occupancy = np.zeros(traces.total_neurons, dtype=bool)
    if traces.num_inputs == 0:
        return _result("nc", occupancy)
    if scaling == "raw":
        return _result("nc", np.any(traces.values > threshold, axis=0))
    for spec in traces.layers:
        block = traces.values[:, spec.columns]
        lo = block.min(axis=1, keepdims=True)
        span = block.max(axis=1, keepdims=True) - lo
        safe = span > 0
        scaled = np.where(safe, (block - lo) / np.where(safe, span, 1.0), 0.0)
        occupancy[spec.columns] = np.any(scaled > threshold, axis=0)
    return _result("nc", occupancy)


def _section_bounds(lo: float, width: float, k: int) -> np.ndarray:
    return lo + width * np.arange(k + 1)


def kmnc(profile: TrainingProfile, traces: TraceSet, k: int = DEFAULT_SECTIONS) -> CoverageResult:
    """k-section coverage: each neuron's training range [min, max] is split
    into k equal sections; a section counts once some test activation lands in
    it. Activations outside the training range cover nothing. The last section
    is closed at max; a zero-width range leaves only section 1 coverable, by
    exact match.
    """
    if int(k) != k or k < 1:
        raise SurprisalError(f"section count must be a positive integer, got {k}")
    k = int(k)
    selected = profile.select(traces)
    m = profile.num_selected
    occupancy = np.zeros((m, k), dtype=bool)
    for j in range(m):
        lo = float(profile.minimum[j])
        hi = float(profile.maximum[j])
        values = selected[:, j]
        in_range = values[(values >= lo) & (values <= hi)]
        if in_range.size == 0:
            continue
        if hi == lo:
            occupancy[j, 0] = bool(np.any(in_range == lo))
            continue
        width = (hi - lo) / k
        sections = np.searchsorted(_section_bounds(lo, width, k), in_range, side="right") - 1
        occupancy[j, np.clip(sections, 0, k - 1)] = True
    return _result("kmnc", occupancy)


def nbc_snac(profile: TrainingProfile, traces: TraceSet) -> tuple[CoverageResult, CoverageResult]:
    """Boundary coverage (corners beyond the training range, both ends) and
    strong-boundary coverage (upper corners only)."""
    selected = profile.select(traces)
    if traces.num_inputs == 0:
        below = np.zeros(profile.num_selected, dtype=bool)
        above = below.copy()
    else:
        below = np.any(selected < profile.minimum, axis=0)
        above = np.any(selected > profile.maximum, axis=0)
    nbc = _result("nbc", np.stack([below, above], axis=1))
    snac = _result("snac", above)
    return nbc, snac


@dataclass(frozen=True)
class GrowthRow:
    step: int
    criterion: str
    covered: int
    total: int
    ratio: float


def cumulative_coverage(
    steps: Sequence,
    criterion: str,
    *,
    bucket_config: BucketConfig | None = None,
    profile: TrainingProfile | None = None,
    threshold: float = DEFAULT_NC_THRESHOLD,
    scaling: str = "minmax",
    k: int = DEFAULT_SECTIONS,
) -> list[GrowthRow]:
    """Coverage over growing unions of input batches, one row per step.

    ``steps`` holds score arrays for criterion 'sc' and trace sets otherwise.
    Step i's figure covers the union of steps 0..i; the union of occupancy
    maps is their OR, so the sequence is non-decreasing by construction.
    """
    if not steps:
        raise SurprisalError("cumulative coverage needs at least one step")

    def compute(batch) -> CoverageResult:
        if criterion == "sc":
            if bucket_config is None:
                raise SurprisalError("criterion 'sc' needs a bucket_config")
            return surprise_coverage(batch, bucket_config)
        if criterion == "nc":
            return neuron_coverage(batch, threshold, scaling)
        if profile is None:
            raise SurprisalError(f"criterion {criterion!r} needs a training profile")
        if criterion == "kmnc":
            return kmnc(profile, batch, k)
        if criterion == "nbc":
            return nbc_snac(profile, batch)[0]
        if criterion == "snac":
            return nbc_snac(profile, batch)[1]
        raise SurprisalError(f"unknown criterion {criterion!r}")

    rows = []
    union: np.ndarray | None = None
    for i, batch in enumerate(steps):
        result = compute(batch)
        union = result.occupancy if union is None else union | result.occupancy
        covered = int(np.count_nonzero(union))
        rows.append(
            GrowthRow(
                step=i,
                criterion=criterion,
                covered=covered,
                total=result.total,
                ratio=covered / result.total if result.total else 0.0,
            )
        )
    return rows


def write_growth_csv(rows: Sequence[GrowthRow], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "criterion", "ratio"])
        for row in rows:
            writer.writerow([row.step, row.criterion, repr(float(row.ratio))])
