"""Likelihood-based surprise scoring.

A query's surprise is the negative log density of its activation trace under
a Gaussian kernel density estimate fitted to the training traces of its own
class. Low-variance neurons are filtered out first; the bandwidth follows
the multivariate Scott rule. All density math stays in log space.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import (
    BandwidthFactorizationError,
    DimensionMismatchError,
    InsufficientClassRowsError,
    NoNeuronsRetainedError,
    TraceValidationError,
    UnknownClassError,
)
from .report import SurpriseReport
from .traces import NeuronSelector, TraceSet, partition_by_class

DEFAULT_VARIANCE_THRESHOLD = 1e-5

UNCONDITIONED = "unconditioned"


@dataclass(frozen=True)
class TrainingProfile:
    """Per-neuron training statistics over one column selection.

    The variance mask is computed once on the full training set and shared
    by every class model, so per-class scores stay comparable. Population
    variance (divisor n) decides retention; the KDE bandwidth uses the
    unbiased covariance separately.
    """

    selection: str
    column_indices: np.ndarray   # resolved columns into the full trace matrix
    mean: np.ndarray
    variance: np.ndarray
    minimum: np.ndarray
    maximum: np.ndarray
    retained_mask: np.ndarray
    threshold_t: float

    def __post_init__(self):
        for name in ("column_indices", "mean", "variance", "minimum", "maximum", "retained_mask"):
            getattr(self, name).setflags(write=False)

    @property
    def num_selected(self) -> int:
        return len(self.column_indices)

    @property
    def num_retained(self) -> int:
        return int(np.count_nonzero(self.retained_mask))

    def select(self, traces: TraceSet) -> np.ndarray:
        """The selected columns of a trace matrix, before variance masking."""
        if traces.total_neurons <= int(self.column_indices.max(initial=-1)):
            raise DimensionMismatchError(
                f"profile columns reach index {int(self.column_indices.max())} but traces "
                f"have {traces.total_neurons} neurons"
            )
        return traces.values[:, self.column_indices]

    def restrict(self, selected: np.ndarray) -> np.ndarray:
        """Drop masked-out columns from an already-selected matrix."""
        if selected.shape[-1] != self.num_selected:
            raise DimensionMismatchError(
                f"expected {self.num_selected} selected columns, got {selected.shape[-1]}"
            )
        return selected[..., self.retained_mask]


def build_profile(
    train: TraceSet,
    sel: NeuronSelector | None = None,
    t: float = DEFAULT_VARIANCE_THRESHOLD,
) -> TrainingProfile:
    """Compute per-neuron statistics and the variance-retention mask."""
    if train.num_inputs == 0:
        raise TraceValidationError("cannot profile an empty training set")
    sel = sel or NeuronSelector.all_neurons()
    columns = sel.resolve(train)
    selected = train.values[:, columns]
    variance = selected.var(axis=0)  # population variance; {0,1} gives 0.25
    mask = variance > t
    if not mask.any():
        raise NoNeuronsRetainedError(
            f"no neurons retained at variance threshold {t}; lower t"
        )
    return TrainingProfile(
        selection=sel.describe(),
        column_indices=columns,
        mean=selected.mean(axis=0),
        variance=variance,
        minimum=selected.min(axis=0),
        maximum=selected.max(axis=0),
        retained_mask=mask,
        threshold_t=float(t),
    )


@dataclass(frozen=True)
class DensityModel:
    """Gaussian KDE state for one class: kernels, bandwidth factor, log-det."""

    class_label: object          # int, or UNCONDITIONED
    retained_traces: np.ndarray  # (n, d) kernel centers
    chol_lower: np.ndarray       # L with H = L @ L.T
    log_det_h: float
    scott_factor: float

    def __post_init__(self):
        self.retained_traces.setflags(write=False)
        self.chol_lower.setflags(write=False)

    @property
    def num_points(self) -> int:
        return self.retained_traces.shape[0]

    @property
    def dim(self) -> int:
        return self.retained_traces.shape[1]


def scott_factor(n: int, d: int) -> float:
    return float(n) ** (-1.0 / (d + 4))


def scott_bandwidth(points: np.ndarray) -> np.ndarray:
    """Multivariate Scott-rule bandwidth: n^(-2/(d+4)) times unbiased covariance."""
    n, d = points.shape
    cov = np.cov(points, rowvar=False, ddof=1).reshape(d, d)
    return scott_factor(n, d) ** 2 * cov


def _factorize(
    h: np.ndarray, context: str, ridge_base: float | None = None
) -> tuple[np.ndarray, float]:
    """Cholesky-factorize a bandwidth, ridging the diagonal on singularity.

    A clean factorization is tried first.  On failure the ridge starts at
    ridge_base (1e-12 * mean diagonal mass of the covariance the bandwidth
    was scaled from, or of h itself when none is known) and escalates
    tenfold at most eight times; a bandwidth that still fails is reported,
    not patched.
    """
    d = h.shape[0]
    base = 1e-12 * float(np.trace(h)) / d if ridge_base is None else ridge_base
    ridges = [0.0] + [base * 10.0 ** k for k in range(9)]
    for ridge in ridges:
        try:
            chol = np.linalg.cholesky(h + ridge * np.eye(d))
        except np.linalg.LinAlgError:
            continue
        log_det = 2.0 * float(np.sum(np.log(np.diagonal(chol))))
        if np.isfinite(log_det):
            return chol, log_det
    raise BandwidthFactorizationError(
        f"bandwidth for {context} is not positive definite even after ridge "
        f"escalation up to {ridges[-1]:g}; the data may be constant"
    )


def fit_density_model(
    points: np.ndarray,
    class_label: object = UNCONDITIONED,
    bandwidth: np.ndarray | None = None,
) -> DensityModel:
    """Fit one KDE over kernel centers; pass an explicit bandwidth to skip Scott."""
    points = np.ascontiguousarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise DimensionMismatchError(f"kernel centers must be 2-D, got shape {points.shape}")
    n, d = points.shape
    if d < 1:
        raise NoNeuronsRetainedError("cannot fit a density over zero neurons")
    ridge_base = None
    if bandwidth is None:
        if n < 2:
            raise InsufficientClassRowsError(
                f"class {class_label!r} has {n} training rows; "
                "at least 2 are needed to estimate a bandwidth"
            )
        cov = np.cov(points, rowvar=False, ddof=1).reshape(d, d)
        h = scott_factor(n, d) ** 2 * cov
        ridge_base = 1e-12 * float(np.trace(cov)) / d
    else:
        h = np.asarray(bandwidth, dtype=np.float64).reshape(d, d)
        if n < 1:
            raise InsufficientClassRowsError(f"class {class_label!r} has no training rows")
    chol, log_det = _factorize(h, f"class {class_label!r}", ridge_base)
    return DensityModel(
        class_label=class_label,
        retained_traces=points,
        chol_lower=chol,
        log_det_h=log_det,
        scott_factor=scott_factor(n, d),
    )


def fit_kde(
    train: TraceSet,
    profile: TrainingProfile,
    per_class: bool = True,
    label_source: str = "predicted",
) -> list[DensityModel]:
    """Fit one density model per class (or a single unconditioned one)."""
    retained = profile.restrict(profile.select(train))
    if not per_class:
        return [fit_density_model(retained, UNCONDITIONED)]
    models = []
    for label, rows in sorted(partition_by_class(train, label_source).items()):
        if len(rows) < 2:
            raise InsufficientClassRowsError(
                f"class {label} has {len(rows)} training rows; at least 2 are needed"
            )
        models.append(fit_density_model(retained[rows], int(label)))
    return models


def _sorted_logsumexp(exponents: np.ndarray) -> float:
    # Ascending sort fixes the summation order, making the result invariant
    # to any permutation of the kernel centers.
    ordered = np.sort(exponents)
    peak = ordered[-1]
    if not np.isfinite(peak):
        return float(peak)
    return float(peak + np.log(np.sum(np.exp(ordered - peak))))


def log_density(model: DensityModel, query: np.ndarray) -> float:
    """log f-hat(query) via logsumexp; never forms the density in linear space."""
    query = np.asarray(query, dtype=np.float64).reshape(-1)
    if len(query) != model.dim:
        raise DimensionMismatchError(
            f"query has {len(query)} dimensions; model expects {model.dim}"
        )
    delta = model.retained_traces - query
    z = np.linalg.solve(model.chol_lower, delta.T)
    sq_mahalanobis = np.sum(z * z, axis=0)
    return (
        _sorted_logsumexp(-0.5 * sq_mahalanobis)
        - math.log(model.num_points)
        - 0.5 * model.dim * math.log(2.0 * math.pi)
        - 0.5 * model.log_det_h
    )


def lsa_score(model: DensityModel, query_trace: np.ndarray, profile: TrainingProfile | None = None) -> float:
    """Surprise of one query: negative log density under its class model.

    The query may come masked already (length = retained neurons) or over the
    profile's full selection, in which case the retention mask is applied.
    """
    query = np.asarray(query_trace, dtype=np.float64).reshape(-1)
    if profile is not None and len(query) == profile.num_selected != model.dim:
        query = query[profile.retained_mask]
    return -log_density(model, query)


def lsa_batch(
    models: list[DensityModel],
    queries: TraceSet,
    profile: TrainingProfile,
    class_of_query: str = "predicted",
    workers: int | None = None,
) -> SurpriseReport:
    """Score every query against the model of its own class.

    Rows whose class has no fitted model are flagged and skipped; the batch
    never aborts on a routing miss.
    """
    by_label = {m.class_label: m for m in models}
    retained = profile.restrict(profile.select(queries))
    n = queries.num_inputs

    if class_of_query == UNCONDITIONED:
        if UNCONDITIONED not in by_label:
            raise UnknownClassError("no unconditioned model was fitted")
        labels = None
    else:
        labels = queries.labels(class_of_query)

    def route(i: int):
        label = UNCONDITIONED if labels is None else int(labels[i])
        model = by_label.get(label)
        if model is None:
            return math.nan, None, f"unknown_class:{label}"
        return -log_density(model, retained[i]), label, ""

    rows = _map_rows(route, n, workers)
    return SurpriseReport(
        kind="lsa",
        selection=profile.selection,
        ids=queries.row_ids(),
        values=np.array([r[0] for r in rows], dtype=np.float64),
        class_used=tuple(r[1] for r in rows),
        flags=tuple(r[2] for r in rows),
        config={
            "class_of_query": class_of_query,
            "variance_threshold": profile.threshold_t,
            "retained_neurons": profile.num_retained,
        },
    )


def _map_rows(fn, n: int, workers: int | None):
    if not workers or workers <= 1 or n == 0:
        return [fn(i) for i in range(n)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(n)))
