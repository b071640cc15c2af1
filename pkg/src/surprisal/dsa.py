"""Distance-based surprise scoring.

A query's surprise is the ratio of two Euclidean distances: to its nearest
same-class training trace, and from that trace to its nearest trace in any
other class. Queries near a class boundary score high, queries deep inside
their class score low. Classification only; the search is an exact linear
scan, so results match a brute-force reference bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateReferenceError,
    DimensionMismatchError,
    InsufficientClassRowsError,
    SingleClassError,
    UnknownClassError,
)
from .lsa import _map_rows
from .report import SurpriseReport
from .traces import NeuronSelector, TraceSet, partition_by_class

# Rows scanned per distance block. Any value gives bitwise-identical results;
# this only bounds the size of the temporary difference matrix.
BLOCK_ROWS = 8192


@dataclass(frozen=True)
class ClassIndex:
    """Training traces over the selected columns, partitioned by class.

    Per-class matrices keep rows in ascending original order, so argmin's
    first-hit rule doubles as the lowest-original-index tie-break.
    """

    selection: str
    column_indices: np.ndarray
    label_source: str
    matrices: dict[int, np.ndarray]
    row_maps: dict[int, np.ndarray]  # class -> original training-row indices

    def __post_init__(self):
        self.column_indices.setflags(write=False)
        for m in self.matrices.values():
            m.setflags(write=False)
        for r in self.row_maps.values():
            r.setflags(write=False)

    @property
    def class_labels(self) -> tuple[int, ...]:
        return tuple(sorted(self.matrices))

    @property
    def num_rows(self) -> int:
        return sum(m.shape[0] for m in self.matrices.values())

    @property
    def dim(self) -> int:
        return len(self.column_indices)


def build_class_index(
    train: TraceSet,
    sel: NeuronSelector | None = None,
    label_source: str = "predicted",
) -> ClassIndex:
    """Partition the training traces by class over the selected columns."""
    sel = sel or NeuronSelector.all_neurons()
    columns = sel.resolve(train)
    selected = train.values[:, columns]
    partition = partition_by_class(train, label_source)
    if len(partition) < 2:
        raise SingleClassError(
            f"training set has {len(partition)} class(es); distance surprise "
            "is undefined without class boundaries"
        )
    matrices = {}
    row_maps = {}
    for label, rows in sorted(partition.items()):
        matrices[int(label)] = np.ascontiguousarray(selected[rows])
        row_maps[int(label)] = rows.astype(np.int64)
    return ClassIndex(
        selection=sel.describe(),
        column_indices=columns,
        label_source=label_source,
        matrices=matrices,
        row_maps=row_maps,
    )


@dataclass(frozen=True)
class DsaScore:
    value: float
    dist_a: float
    dist_b: float
    ref_same_id: int   # original training row of the same-class neighbor
    ref_other_id: int  # original training row of the cross-class neighbor


def _nearest(
    matrix: np.ndarray,
    row_map: np.ndarray,
    query: np.ndarray,
    exclude_orig: int | None = None,
) -> tuple[float, int, int] | None:
    """Scan one class matrix for the row nearest to query.

    Returns (squared distance, original row id, local row) or None when every
    candidate is excluded. Ascending scan order makes the first minimum the
    lowest-original-index one.
    """
    best_sq = math.inf
    best_orig = -1
    best_local = -1
    n = matrix.shape[0]
    for start in range(0, n, BLOCK_ROWS):
        block = matrix[start : start + BLOCK_ROWS]
        sq = np.sum((block - query) ** 2, axis=1)
        if exclude_orig is not None:
            hits = np.nonzero(row_map[start : start + BLOCK_ROWS] == exclude_orig)[0]
            if len(hits):
                sq[hits] = math.inf
        local = int(np.argmin(sq))
        cand = float(sq[local])
        if cand < best_sq:
            best_sq = cand
            best_local = start + local
            best_orig = int(row_map[best_local])
    if not math.isfinite(best_sq):
        return None
    return best_sq, best_orig, best_local


def dsa_score(
    index: ClassIndex,
    query_trace: np.ndarray,
    query_class: int,
    exclude_self: int | None = None,
) -> DsaScore:
    """Score one query of a known class against the index.

    ``exclude_self`` names an original training row to skip in the same-class
    search, for scoring training inputs against their own set.
    """
    query_class = int(query_class)
    if query_class not in index.matrices:
        raise UnknownClassError(
            f"class {query_class} has no rows in the index; classes present: "
            f"{list(index.class_labels)}"
        )
    query = np.asarray(query_trace, dtype=np.float64).reshape(-1)
    if len(query) != index.dim:
        raise DimensionMismatchError(
            f"query has {len(query)} dimensions; index expects {index.dim}"
        )
    same = _nearest(index.matrices[query_class], index.row_maps[query_class], query, exclude_self)
    if same is None:
        raise InsufficientClassRowsError(
            f"class {query_class} has no candidate row once {exclude_self} is excluded"
        )
    sq_a, orig_a, local_a = same
    sq_b, orig_b = _nearest_other(index, query_class, index.matrices[query_class][local_a])
    dist_a = math.sqrt(sq_a)
    dist_b = math.sqrt(sq_b)
    if dist_b == 0.0:
        raise DegenerateReferenceError(
            f"training rows {orig_a} and {orig_b} carry identical traces across "
            "classes; distance surprise is undefined on corrupt references",
            ref_same_id=orig_a,
            ref_other_id=orig_b,
        )
    return DsaScore(
        value=dist_a / dist_b,
        dist_a=dist_a,
        dist_b=dist_b,
        ref_same_id=orig_a,
        ref_other_id=orig_b,
    )


def _nearest_other(index: ClassIndex, query_class: int, anchor: np.ndarray) -> tuple[float, int]:
    """Nearest row to the anchor across every class except query_class.

    Ties across classes resolve to the lowest original row index, matching
    the within-class rule.
    """
    best_sq = math.inf
    best_orig = -1
    for label in index.class_labels:
        if label == query_class:
            continue
        found = _nearest(index.matrices[label], index.row_maps[label], anchor)
        if found is None:
            continue
        sq, orig, _ = found
        if sq < best_sq or (sq == best_sq and orig < best_orig):
            best_sq = sq
            best_orig = orig
    if best_orig < 0:
        raise SingleClassError("no rows exist outside the query's class")
    return best_sq, best_orig


def dsa_batch(
    index: ClassIndex,
    queries: TraceSet,
    label_source: str = "predicted",
    exclude_self: bool = False,
    workers: int | None = None,
) -> SurpriseReport:
    """Score a batch; rows hitting per-row errors are flagged, not fatal.

    With ``exclude_self`` the queries are taken to be the index's own training
    rows in original order, and row i skips itself in the same-class search.
    The cross-class reference distance depends only on the same-class neighbor,
    so it is cached per (class, neighbor) pair.
    """
    if int(index.column_indices.max()) >= queries.total_neurons:
        raise DimensionMismatchError(
            f"index columns reach {int(index.column_indices.max())} but queries "
            f"have {queries.total_neurons} neurons"
        )
    selected = queries.values[:, index.column_indices]
    labels = queries.labels(label_source) if queries.num_inputs else np.zeros(0, dtype=np.int64)
    dist_b_cache: dict[tuple[int, int], tuple[float, int]] = {}

    def one(i: int):
        qc = int(labels[i])
        if qc not in index.matrices:
            return math.nan, None, f"unknown_class:{qc}"
        query = selected[i]
        same = _nearest(
            index.matrices[qc], index.row_maps[qc], query, i if exclude_self else None
        )
        if same is None:
            return math.nan, None, "no_same_class_candidate"
        sq_a, orig_a, local_a = same
        key = (qc, orig_a)
        if key not in dist_b_cache:
            dist_b_cache[key] = _nearest_other(index, qc, index.matrices[qc][local_a])
        sq_b, orig_b = dist_b_cache[key]
        dist_b = math.sqrt(sq_b)
        if dist_b == 0.0:
            return math.nan, None, f"degenerate_reference:{orig_a}:{orig_b}"
        return math.sqrt(sq_a) / dist_b, qc, ""

    rows = _map_rows(one, queries.num_inputs, workers)
    return SurpriseReport(
        kind="dsa",
        selection=index.selection,
        ids=queries.row_ids(),
        values=np.array([r[0] for r in rows], dtype=np.float64) if rows else np.zeros(0),
        class_used=tuple(r[1] for r in rows),
        flags=tuple(r[2] for r in rows),
        config={"label_source": label_source, "exclude_self": bool(exclude_self)},
    )
