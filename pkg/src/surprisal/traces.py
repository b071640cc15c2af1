"""Activation-trace data model shared by every metric module.

A trace set is a row-major (inputs x neurons) float64 matrix whose columns
are segmented into contiguous layer blocks, so selecting a layer is a slice.
All arithmetic downstream runs in 64-bit floats regardless of on-disk width.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    ColumnOutOfBoundsError,
    MissingLabelsError,
    TraceValidationError,
    UnknownLayerError,
)

ClassLabel = int


@dataclass(frozen=True)
class LayerSpec:
    """One contiguous block of trace columns.

    ``offset`` is the index of the layer's first column in the flattened
    matrix; consecutive layers must tile the columns without gaps.
    """

    name: str
    neuron_count: int
    offset: int

    def __post_init__(self):
        if self.neuron_count < 1:
            raise TraceValidationError(
                f"layer {self.name!r} has neuron_count {self.neuron_count}; must be >= 1"
            )
        if self.offset < 0:
            raise TraceValidationError(f"layer {self.name!r} has negative offset")

    @property
    def columns(self) -> slice:
        return slice(self.offset, self.offset + self.neuron_count)


def layers_from_counts(named_counts: Sequence[tuple[str, int]]) -> tuple[LayerSpec, ...]:
    """Build contiguous LayerSpecs from (name, neuron_count) pairs."""
    specs = []
    offset = 0
    for name, count in named_counts:
        specs.append(LayerSpec(name=name, neuron_count=count, offset=offset))
        offset += count
    return tuple(specs)


def _as_label_array(labels, n: int, what: str) -> np.ndarray | None:
    if labels is None:
        return None
    arr = np.asarray(labels)
    if arr.ndim != 1 or len(arr) != n:
        raise TraceValidationError(
            f"{what} has length {arr.shape}; expected ({n},) to match the trace rows"
        )
    if not np.issubdtype(arr.dtype, np.integer):
        fl = np.asarray(arr, dtype=np.float64)
        if not np.all(fl == np.floor(fl)):
            raise TraceValidationError(f"{what} must contain integer class indices")
        arr = fl.astype(np.int64)
    else:
        arr = arr.astype(np.int64)
    if len(arr) and arr.min() < 0:
        raise TraceValidationError(f"{what} contains negative class indices")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TraceSet:
    """Immutable matrix of activation traces plus layer segmentation.

    Invariants enforced at construction: float64 values, no NaN/Inf, layer
    blocks tile the columns exactly, optional label/id lists match the row
    count. Arrays are marked read-only so instances are safe to share across
    concurrent readers.
    """

    values: np.ndarray
    layers: tuple[LayerSpec, ...]
    ground_truth: np.ndarray | None = None
    predicted: np.ndarray | None = None
    ids: tuple[str, ...] | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise TraceValidationError(f"trace values must be 2-D, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            bad = int(np.argwhere(~np.isfinite(values))[0][0])
            raise TraceValidationError(f"non-finite activation value in row {bad}")
        layers = tuple(self.layers)
        if not layers:
            raise TraceValidationError("a trace set needs at least one layer")
        offset = 0
        for spec in layers:
            if spec.offset != offset:
                raise TraceValidationError(
                    f"layer {spec.name!r} has offset {spec.offset}; expected {offset}"
                )
            offset += spec.neuron_count
        if offset != values.shape[1]:
            raise TraceValidationError(
                f"layer neuron counts sum to {offset} but the matrix has "
                f"{values.shape[1]} columns"
            )
        values = np.ascontiguousarray(values)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "layers", layers)
        n = values.shape[0]
        object.__setattr__(
            self, "ground_truth", _as_label_array(self.ground_truth, n, "ground_truth")
        )
        object.__setattr__(self, "predicted", _as_label_array(self.predicted, n, "predicted"))
        if self.ids is not None:
            ids = tuple(str(i) for i in self.ids)
            if len(ids) != n:
                raise TraceValidationError(
                    f"ids has length {len(ids)}; expected {n} to match the trace rows"
                )
            object.__setattr__(self, "ids", ids)

    @property
    def num_inputs(self) -> int:
        return self.values.shape[0]

    @property
    def total_neurons(self) -> int:
        return self.values.shape[1]

    def layer_named(self, name: str) -> LayerSpec:
        for spec in self.layers:
            if spec.name == name:
                return spec
        known = [spec.name for spec in self.layers]
        raise UnknownLayerError(f"no layer named {name!r}; available layers: {known}")

    def row_ids(self) -> tuple[str, ...]:
        """Explicit ids when present, otherwise positional ids."""
        if self.ids is not None:
            return self.ids
        return tuple(str(i) for i in range(self.num_inputs))

    def labels(self, source: str) -> np.ndarray:
        """Return the requested label list or raise with instructions."""
        if source == "predicted":
            arr = self.predicted
        elif source == "ground_truth":
            arr = self.ground_truth
        else:
            raise ValueError(f"label source must be 'predicted' or 'ground_truth', got {source!r}")
        if arr is None:
            raise MissingLabelsError(
                f"this trace set carries no {source!r} labels; supply them "
                f"(labels_path / predicted_path in the manifest) or switch label source"
            )
        return arr


@dataclass(frozen=True)
class NeuronSelector:
    """Chooses which trace columns a metric runs over.

    Modes: every neuron, one named layer, or an explicit column list (which
    is normalized to unique sorted indices).
    """

    mode: str = "all"
    layer: str | None = None
    columns: tuple[int, ...] | None = None

    @staticmethod
    def all_neurons() -> "NeuronSelector":
        return NeuronSelector(mode="all")

    @staticmethod
    def single_layer(name: str) -> "NeuronSelector":
        return NeuronSelector(mode="layer", layer=name)

    @staticmethod
    def explicit_columns(columns: Sequence[int]) -> "NeuronSelector":
        return NeuronSelector(mode="columns", columns=tuple(int(c) for c in columns))

    def resolve(self, traces: TraceSet) -> np.ndarray:
        """Resolve to unique, sorted, in-bounds column indices."""
        if self.mode == "all":
            return np.arange(traces.total_neurons, dtype=np.int64)
        if self.mode == "layer":
            spec = traces.layer_named(self.layer or "")
            return np.arange(spec.offset, spec.offset + spec.neuron_count, dtype=np.int64)
        if self.mode == "columns":
            if not self.columns:
                raise ColumnOutOfBoundsError("explicit column selector is empty")
            cols = np.unique(np.asarray(self.columns, dtype=np.int64))
            for c in self.columns:
                if c < 0 or c >= traces.total_neurons:
                    raise ColumnOutOfBoundsError(
                        f"column {c} is out of bounds for a trace set with "
                        f"{traces.total_neurons} neurons"
                    )
            return cols
        raise ValueError(f"unknown selector mode {self.mode!r}")

    def describe(self) -> str:
        if self.mode == "all":
            return "all-neurons"
        if self.mode == "layer":
            return f"layer:{self.layer}"
        return "columns:" + ",".join(str(c) for c in self.columns or ())


def select_columns(traces: TraceSet, sel: NeuronSelector) -> TraceSet:
    """Restrict a trace set to the selector's columns.

    Layer metadata is regrouped per source layer so the result still tiles
    its columns; labels and ids are carried through unchanged. A single-layer
    selection is a slice view of the original values.
    """
    cols = sel.resolve(traces)
    if sel.mode == "all":
        return traces
    if sel.mode == "layer":
        spec = traces.layer_named(sel.layer or "")
        values = traces.values[:, spec.columns]
        layers = (LayerSpec(spec.name, spec.neuron_count, 0),)
    else:
        values = traces.values[:, cols]
        grouped: list[tuple[str, int]] = []
        for spec in traces.layers:
            count = int(np.sum((cols >= spec.offset) & (cols < spec.offset + spec.neuron_count)))
            if count:
                grouped.append((spec.name, count))
        layers = layers_from_counts(grouped)
    return TraceSet(
        values=values,
        layers=layers,
        ground_truth=traces.ground_truth,
        predicted=traces.predicted,
        ids=traces.ids,
    )


def partition_by_class(traces: TraceSet, use: str = "predicted") -> dict[ClassLabel, np.ndarray]:
    """Group row indices by class label.

    Every row lands in exactly one partition; an empty trace set yields an
    empty map.
    """
    labels = traces.labels(use)
    partitions: dict[ClassLabel, np.ndarray] = {}
    for label in np.unique(labels):
        partitions[int(label)] = np.flatnonzero(labels == label)
    return partitions


def concat_tracesets(parts: Sequence[TraceSet], ids: Sequence[str] | None = None) -> TraceSet:
    """Stack trace sets row-wise; all parts must share the layer layout.

    Labels are kept only when every part carries them. Explicit ids, when not
    supplied, are taken from the parts prefixed with their position so the
    combined ids stay unique.
    """
    if not parts:
        raise TraceValidationError("nothing to concatenate")
    first = parts[0]
    for other in parts[1:]:
        if other.layers != first.layers:
            raise TraceValidationError("trace sets have different layer layouts")

    def cat_labels(pick):
        cols = [pick(p) for p in parts]
        return None if any(c is None for c in cols) else np.concatenate(cols)

    if ids is None:
        ids = tuple(
            f"{i}:{rid}" for i, part in enumerate(parts) for rid in part.row_ids()
        )
    return TraceSet(
        values=np.concatenate([p.values for p in parts], axis=0),
        layers=first.layers,
        ground_truth=cat_labels(lambda p: p.ground_truth),
        predicted=cat_labels(lambda p: p.predicted),
        ids=tuple(ids),
    )
