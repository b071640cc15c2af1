"""Bit-exact trace-file and manifest I/O.

Array files use the ubiquitous ``\\x93NUMPY`` binary format, deliberately
narrowed: version 1.0 only, little-endian ``<f4``/``<f8``, C order, 2-D.
The narrow parser keeps every malformed-file failure a distinct error and
makes write-then-read the identity on ``<f8`` data. Manifests are UTF-8 JSON.
"""

from __future__ import annotations

import ast
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    ArrayFormatError,
    BadMagicError,
    BadShapeError,
    FortranOrderError,
    ManifestError,
    TraceValidationError,
    TruncatedPayloadError,
    UnsupportedDtypeError,
)
from .traces import LayerSpec, TraceSet, layers_from_counts

MAGIC = b"\x93NUMPY"
FORMAT_VERSION = 1

_TRACE_DTYPES = {"<f4": np.dtype("<f4"), "<f8": np.dtype("<f8")}
_LABEL_DTYPES = {
    **_TRACE_DTYPES,
    "<i1": np.dtype("<i1"), "<i2": np.dtype("<i2"),
    "<i4": np.dtype("<i4"), "<i8": np.dtype("<i8"),
    "|i1": np.dtype("|i1"), "|u1": np.dtype("|u1"),
}


def _read_header(fh, path: Path) -> dict:
    magic = fh.read(6)
    if magic != MAGIC:
        raise BadMagicError(f"{path}: bad magic {magic!r}; expected {MAGIC!r}")
    version = fh.read(2)
    if len(version) != 2 or version[0] != 1:
        raise ArrayFormatError(f"{path}: unsupported format version {tuple(version)!r}")
    raw_len = fh.read(2)
    if len(raw_len) != 2:
        raise ArrayFormatError(f"{path}: truncated header length field")
    (header_len,) = struct.unpack("<H", raw_len)
    header_bytes = fh.read(header_len)
    if len(header_bytes) != header_len:
        raise ArrayFormatError(f"{path}: truncated header")
    try:
        header = ast.literal_eval(header_bytes.decode("ascii"))
    except (ValueError, SyntaxError, UnicodeDecodeError) as exc:
        raise ArrayFormatError(f"{path}: cannot parse header dict: {exc}") from exc
    if not isinstance(header, dict) or not {"descr", "fortran_order", "shape"} <= set(header):
        raise ArrayFormatError(f"{path}: header missing descr/fortran_order/shape")
    return header


def _read_payload(fh, path: Path, dtype: np.dtype, shape: tuple[int, ...]) -> np.ndarray:
    count = int(np.prod(shape, dtype=np.int64)) if shape else 0
    expected = count * dtype.itemsize
    payload = fh.read(expected)
    if len(payload) != expected:
        raise TruncatedPayloadError(
            f"{path}: payload holds {len(payload)} bytes; shape {shape} needs {expected}"
        )
    return np.frombuffer(payload, dtype=dtype).reshape(shape)


def read_array_file(path: str | Path) -> np.ndarray:
    """Read one 2-D little-endian float array file into float64.

    Raises a distinct error for each violation: bad magic, unsupported dtype,
    Fortran order, non-2-D shape, truncated payload.
    """
    path = Path(path)
    with open(path, "rb") as fh:
        header = _read_header(fh, path)
        descr = header["descr"]
        if descr not in _TRACE_DTYPES:
            raise UnsupportedDtypeError(
                f"{path}: dtype {descr!r} unsupported; accepted: {sorted(_TRACE_DTYPES)}"
            )
        if header["fortran_order"]:
            raise FortranOrderError(f"{path}: fortran_order is true; only C order is accepted")
        shape = header["shape"]
        if (
            not isinstance(shape, tuple) or len(shape) != 2
            or not all(isinstance(s, int) and s >= 0 for s in shape)
        ):
            raise BadShapeError(f"{path}: shape {shape!r} is not 2-D")
        data = _read_payload(fh, path, _TRACE_DTYPES[descr], shape)
    return np.ascontiguousarray(data, dtype=np.float64)


def write_array_file(path: str | Path, matrix: np.ndarray) -> None:
    """Write a finite 2-D matrix as dtype ``<f8``; round-trips bit-exactly."""
    path = Path(path)
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2:
        raise BadShapeError(f"cannot write shape {matrix.shape}; matrix must be 2-D")
    if not np.all(np.isfinite(matrix)):
        raise TraceValidationError("cannot write non-finite values to an array file")
    header = (
        "{'descr': '<f8', 'fortran_order': False, "
        f"'shape': ({matrix.shape[0]}, {matrix.shape[1]}), }}"
    )
    # Pad with spaces so magic+version+len+header is a multiple of 64, '\n'-terminated.
    base = len(MAGIC) + 2 + 2
    total = base + len(header) + 1
    pad = (64 - total % 64) % 64
    header_bytes = (header + " " * pad + "\n").encode("ascii")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(bytes([1, 0]))
        fh.write(struct.pack("<H", len(header_bytes)))
        fh.write(header_bytes)
        fh.write(np.ascontiguousarray(matrix, dtype="<f8").tobytes(order="C"))


def read_label_file(path: str | Path, dictionary: dict[str, int] | None = None) -> np.ndarray:
    """Read labels from a JSON list or a 1-column integer array file.

    JSON lists may hold ints, or strings mapped through the manifest's label
    dictionary. Array files may be any little-endian int width, or floats
    holding exact integers, shaped (n,) or (n, 1).
    """
    path = Path(path)
    if path.suffix == ".json":
        try:
            with open(path, encoding="utf-8") as fh:
                raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"{path}: invalid JSON: {exc}") from exc
        if not isinstance(raw, list):
            raise ManifestError(f"{path}: label JSON must be a list")
        out = []
        for item in raw:
            if isinstance(item, bool):
                raise ManifestError(f"{path}: boolean is not a valid class label")
            if isinstance(item, int):
                out.append(item)
            elif isinstance(item, str):
                if not dictionary or item not in dictionary:
                    raise ManifestError(
                        f"{path}: text label {item!r} needs a label_dictionary entry"
                    )
                out.append(dictionary[item])
            else:
                raise ManifestError(f"{path}: label {item!r} is neither int nor text")
        return np.asarray(out, dtype=np.int64)
    with open(path, "rb") as fh:
        header = _read_header(fh, path)
        descr = header["descr"]
        if descr not in _LABEL_DTYPES:
            raise UnsupportedDtypeError(
                f"{path}: label dtype {descr!r} unsupported; accepted: {sorted(_LABEL_DTYPES)}"
            )
        if header["fortran_order"]:
            raise FortranOrderError(f"{path}: fortran_order is true; only C order is accepted")
        shape = header["shape"]
        if not isinstance(shape, tuple) or len(shape) not in (1, 2):
            raise BadShapeError(f"{path}: label shape {shape!r} must be (n,) or (n, 1)")
        if len(shape) == 2 and shape[1] != 1:
            raise BadShapeError(f"{path}: label file must have a single column, got {shape!r}")
        data = _read_payload(fh, path, _LABEL_DTYPES[descr], shape).reshape(-1)
    if np.issubdtype(data.dtype, np.floating):
        if not np.all(np.isfinite(data)) or not np.all(data == np.floor(data)):
            raise ManifestError(f"{path}: float label file must hold exact integers")
    return data.astype(np.int64)


@dataclass
class ManifestLayer:
    name: str
    file_path: str
    neuron_count: int


@dataclass
class Manifest:
    """Dataset manifest: layer files, optional labels, label dictionary."""

    dataset_name: str
    layers: list[ManifestLayer]
    labels_path: str | None = None
    predicted_path: str | None = None
    label_dictionary: dict[str, int] | None = None
    format_version: int = FORMAT_VERSION

    def to_json(self) -> dict:
        doc: dict = {
            "format_version": self.format_version,
            "dataset_name": self.dataset_name,
            "layers": [
                {"name": l.name, "file_path": l.file_path, "neuron_count": l.neuron_count}
                for l in self.layers
            ],
        }
        if self.labels_path is not None:
            doc["labels_path"] = self.labels_path
        if self.predicted_path is not None:
            doc["predicted_path"] = self.predicted_path
        if self.label_dictionary is not None:
            doc["label_dictionary"] = self.label_dictionary
        return doc


def read_manifest(path: str | Path) -> Manifest:
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ManifestError(f"{path}: manifest must be a JSON object")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ManifestError(f"{path}: format_version {version!r}; this reader supports 1")
    raw_layers = doc.get("layers")
    if not isinstance(raw_layers, list) or not raw_layers:
        raise ManifestError(f"{path}: manifest needs a non-empty 'layers' list")
    layers = []
    for entry in raw_layers:
        try:
            layers.append(
                ManifestLayer(
                    name=str(entry["name"]),
                    file_path=str(entry["file_path"]),
                    neuron_count=int(entry["neuron_count"]),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ManifestError(f"{path}: malformed layer entry {entry!r}") from exc
    dictionary = doc.get("label_dictionary")
    if dictionary is not None:
        if not isinstance(dictionary, dict):
            raise ManifestError(f"{path}: label_dictionary must be an object")
        dictionary = {str(k): int(v) for k, v in dictionary.items()}
        if len(set(dictionary.values())) != len(dictionary):
            raise ManifestError(f"{path}: label_dictionary is not injective")
    return Manifest(
        dataset_name=str(doc.get("dataset_name", path.stem)),
        layers=layers,
        labels_path=doc.get("labels_path"),
        predicted_path=doc.get("predicted_path"),
        label_dictionary=dictionary,
        format_version=version,
    )


def load_traceset(manifest_path: str | Path) -> TraceSet:
    """Load a manifest's layer files into one validated TraceSet.

    Layer files are concatenated column-wise in manifest order; row counts
    must agree; any non-finite value is rejected.
    """
    manifest_path = Path(manifest_path)
    manifest = read_manifest(manifest_path)
    root = manifest_path.parent

    blocks: list[np.ndarray] = []
    counts: list[tuple[str, int]] = []
    rows: int | None = None
    for layer in manifest.layers:
        file_path = root / layer.file_path
        if not file_path.exists():
            raise ManifestError(f"{manifest_path}: layer file {layer.file_path!r} does not exist")
        block = read_array_file(file_path)
        if block.shape[1] != layer.neuron_count:
            raise ManifestError(
                f"{manifest_path}: layer {layer.name!r} declares {layer.neuron_count} neurons "
                f"but {layer.file_path!r} has {block.shape[1]} columns"
            )
        if rows is None:
            rows = block.shape[0]
        elif block.shape[0] != rows:
            raise ManifestError(
                f"{manifest_path}: row count mismatch: layer {layer.name!r} has "
                f"{block.shape[0]} rows; earlier layers have {rows}"
            )
        if not np.all(np.isfinite(block)):
            raise ManifestError(f"{manifest_path}: layer {layer.name!r} contains non-finite values")
        blocks.append(block)
        counts.append((layer.name, layer.neuron_count))

    values = np.concatenate(blocks, axis=1) if len(blocks) > 1 else blocks[0]

    def _labels(rel: str | None, what: str) -> np.ndarray | None:
        if rel is None:
            return None
        label_path = root / rel
        if not label_path.exists():
            raise ManifestError(f"{manifest_path}: {what} file {rel!r} does not exist")
        labels = read_label_file(label_path, manifest.label_dictionary)
        if len(labels) != rows:
            raise ManifestError(
                f"{manifest_path}: {what} has {len(labels)} entries for {rows} trace rows"
            )
        return labels

    try:
        return TraceSet(
            values=values,
            layers=layers_from_counts(counts),
            ground_truth=_labels(manifest.labels_path, "labels"),
            predicted=_labels(manifest.predicted_path, "predicted labels"),
        )
    except TraceValidationError as exc:
        raise ManifestError(f"{manifest_path}: {exc}") from exc


def write_traceset(
    traces: TraceSet,
    out_dir: str | Path,
    dataset_name: str,
    label_dictionary: dict[str, int] | None = None,
) -> Path:
    """Write one array file per layer plus labels and manifest; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    layers = []
    for spec in traces.layers:
        file_name = f"{spec.name}.npy"
        write_array_file(out_dir / file_name, traces.values[:, spec.columns])
        layers.append(ManifestLayer(name=spec.name, file_path=file_name, neuron_count=spec.neuron_count))
    manifest = Manifest(dataset_name=dataset_name, layers=layers, label_dictionary=label_dictionary)
    if traces.ground_truth is not None:
        manifest.labels_path = "labels.json"
        _write_json(out_dir / "labels.json", [int(v) for v in traces.ground_truth])
    if traces.predicted is not None:
        manifest.predicted_path = "predicted.json"
        _write_json(out_dir / "predicted.json", [int(v) for v in traces.predicted])
    manifest_path = out_dir / "manifest.json"
    _write_json(manifest_path, manifest.to_json())
    return manifest_path


def _write_json(path: Path, doc) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
