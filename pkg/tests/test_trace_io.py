import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from surprisal.errors import (
    ArrayFormatError,
    BadMagicError,
    BadShapeError,
    FortranOrderError,
    ManifestError,
    TraceValidationError,
    TruncatedPayloadError,
    UnsupportedDtypeError,
)
from surprisal.trace_io import (
    MAGIC,
    load_traceset,
    read_array_file,
    read_label_file,
    read_manifest,
    write_array_file,
    write_traceset,
)

from conftest import make_traces


def write_raw(path, descr="<f8", fortran=False, shape=(2, 2), payload=None, magic=MAGIC,
              version=(1, 0)):
    """Hand-assemble an array file so each header field can be corrupted."""
    header = f"{{'descr': {descr!r}, 'fortran_order': {fortran}, 'shape': {shape!r}, }}"
    header_bytes = (header + "\n").encode("ascii")
    if payload is None:
        count = int(np.prod(shape)) if shape else 0
        payload = np.zeros(count, dtype=descr).tobytes()
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(bytes(version))
        fh.write(struct.pack("<H", len(header_bytes)))
        fh.write(header_bytes)
        fh.write(payload)


def test_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    matrix = rng.standard_normal((17, 5))
    matrix[0, 0] = -0.0
    matrix[1, 1] = np.nextafter(1.0, 2.0)
    path = tmp_path / "m.npy"
    write_array_file(path, matrix)
    back = read_array_file(path)
    assert back.dtype == np.float64
    assert np.array_equal(
        back.view(np.uint64), np.asarray(matrix, dtype=np.float64).view(np.uint64)
    )


@settings(max_examples=30, deadline=None)
@given(n=st.integers(0, 9), d=st.integers(1, 7), seed=st.integers(0, 2**31))
def test_round_trip_property(tmp_path_factory, n, d, seed):
    rng = np.random.default_rng(seed)
    matrix = rng.standard_normal((n, d)) * rng.choice([1e-300, 1.0, 1e300])
    path = tmp_path_factory.mktemp("rt") / "m.npy"
    write_array_file(path, matrix)
    back = read_array_file(path)
    assert back.shape == (n, d)
    assert np.array_equal(back.view(np.uint64), matrix.view(np.uint64))


def test_header_is_64_byte_aligned(tmp_path):
    path = tmp_path / "m.npy"
    write_array_file(path, np.zeros((3, 2)))
    blob = path.read_bytes()
    (hlen,) = struct.unpack("<H", blob[8:10])
    assert (10 + hlen) % 64 == 0
    assert blob[10 + hlen - 1:10 + hlen] == b"\n"


def test_read_accepts_float32(tmp_path):
    path = tmp_path / "m.npy"
    data = np.array([[1.5, -2.25]], dtype="<f4")
    write_raw(path, descr="<f4", shape=(1, 2), payload=data.tobytes())
    back = read_array_file(path)
    assert back.dtype == np.float64
    assert np.array_equal(back, np.array([[1.5, -2.25]]))


def test_bad_magic(tmp_path):
    path = tmp_path / "m.npy"
    write_raw(path, magic=b"\x93NUMPX")
    with pytest.raises(BadMagicError):
        read_array_file(path)


def test_unsupported_version(tmp_path):
    path = tmp_path / "m.npy"
    write_raw(path, version=(2, 0))
    with pytest.raises(ArrayFormatError):
        read_array_file(path)


def test_unsupported_dtype(tmp_path):
    path = tmp_path / "m.npy"
    write_raw(path, descr="<i8", payload=np.zeros(4, dtype="<i8").tobytes())
    with pytest.raises(UnsupportedDtypeError):
        read_array_file(path)


def test_big_endian_rejected(tmp_path):
    path = tmp_path / "m.npy"
    write_raw(path, descr=">f8", payload=np.zeros(4, dtype=">f8").tobytes())
    with pytest.raises(UnsupportedDtypeError):
        read_array_file(path)


def test_fortran_order_rejected(tmp_path):
    path = tmp_path / "m.npy"
    write_raw(path, fortran=True)
    with pytest.raises(FortranOrderError):
        read_array_file(path)


def test_non_2d_shape_rejected(tmp_path):
    path = tmp_path / "m.npy"
    write_raw(path, shape=(4,), payload=np.zeros(4, dtype="<f8").tobytes())
    with pytest.raises(BadShapeError):
        read_array_file(path)


def test_truncated_payload(tmp_path):
    path = tmp_path / "m.npy"
    write_raw(path, shape=(2, 2), payload=np.zeros(3, dtype="<f8").tobytes())
    with pytest.raises(TruncatedPayloadError):
        read_array_file(path)


def test_garbled_header_dict(tmp_path):
    path = tmp_path / "m.npy"
    header_bytes = b"{'descr': '<f8', !!!}\n"
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(bytes([1, 0]))
        fh.write(struct.pack("<H", len(header_bytes)))
        fh.write(header_bytes)
    with pytest.raises(ArrayFormatError):
        read_array_file(path)


def test_write_rejects_non_finite_and_non_2d(tmp_path):
    with pytest.raises(TraceValidationError):
        write_array_file(tmp_path / "x.npy", np.array([[np.inf]]))
    with pytest.raises(BadShapeError):
        write_array_file(tmp_path / "x.npy", np.zeros(3))


def test_label_file_json_ints(tmp_path):
    path = tmp_path / "labels.json"
    path.write_text("[1, 0, 2]")
    assert list(read_label_file(path)) == [1, 0, 2]


def test_label_file_json_strings_need_dictionary(tmp_path):
    path = tmp_path / "labels.json"
    path.write_text('["cat", "dog", "cat"]')
    with pytest.raises(ManifestError):
        read_label_file(path)
    labels = read_label_file(path, dictionary={"cat": 0, "dog": 1})
    assert list(labels) == [0, 1, 0]


def test_label_file_json_rejects_junk(tmp_path):
    path = tmp_path / "labels.json"
    path.write_text("[1, 2,")
    with pytest.raises(ManifestError):
        read_label_file(path)
    path.write_text('{"a": 1}')
    with pytest.raises(ManifestError):
        read_label_file(path)
    path.write_text("[true]")
    with pytest.raises(ManifestError):
        read_label_file(path)


def test_label_file_npy_int_and_float(tmp_path):
    ints = tmp_path / "l.npy"
    write_raw(ints, descr="<i4", shape=(3,), payload=np.array([4, 0, 1], dtype="<i4").tobytes())
    assert list(read_label_file(ints)) == [4, 0, 1]

    col = tmp_path / "c.npy"
    write_raw(col, descr="<f8", shape=(2, 1), payload=np.array([2.0, 5.0]).tobytes())
    assert list(read_label_file(col)) == [2, 5]

    frac = tmp_path / "f.npy"
    write_raw(frac, descr="<f8", shape=(1,), payload=np.array([1.5]).tobytes())
    with pytest.raises(ManifestError):
        read_label_file(frac)


def test_label_file_npy_rejects_two_columns(tmp_path):
    path = tmp_path / "l.npy"
    write_raw(path, descr="<i4", shape=(2, 2), payload=np.zeros(4, dtype="<i4").tobytes())
    with pytest.raises(BadShapeError):
        read_label_file(path)


def manifest_doc(**overrides):
    doc = {
        "format_version": 1,
        "dataset_name": "toy",
        "layers": [{"name": "dense", "file_path": "dense.npy", "neuron_count": 2}],
    }
    doc.update(overrides)
    return doc


def test_read_manifest_round_trip(tmp_path):
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps(manifest_doc(labels_path="labels.json",
                                            label_dictionary={"cat": 0})))
    m = read_manifest(path)
    assert m.dataset_name == "toy"
    assert m.layers[0].neuron_count == 2
    assert m.labels_path == "labels.json"
    assert m.label_dictionary == {"cat": 0}


def test_read_manifest_rejects_bad_version_and_empty_layers(tmp_path):
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps(manifest_doc(format_version=2)))
    with pytest.raises(ManifestError):
        read_manifest(path)
    path.write_text(json.dumps(manifest_doc(layers=[])))
    with pytest.raises(ManifestError):
        read_manifest(path)
    path.write_text("{not json")
    with pytest.raises(ManifestError):
        read_manifest(path)


def test_read_manifest_rejects_non_injective_dictionary(tmp_path):
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps(manifest_doc(label_dictionary={"a": 0, "b": 0})))
    with pytest.raises(ManifestError):
        read_manifest(path)


def test_write_then_load_traceset(tmp_path):
    vals = np.arange(12.0).reshape(3, 4)
    ts = make_traces(vals, ground_truth=[0, 1, 0], predicted=[0, 1, 1],
                     layer_counts=[("a", 1), ("b", 3)])
    manifest_path = write_traceset(ts, tmp_path, "toy")
    back = load_traceset(manifest_path)
    assert np.array_equal(back.values, vals)
    assert [(l.name, l.neuron_count) for l in back.layers] == [("a", 1), ("b", 3)]
    assert list(back.ground_truth) == [0, 1, 0]
    assert list(back.predicted) == [0, 1, 1]


def test_load_traceset_row_mismatch(tmp_path):
    ts = make_traces(np.zeros((3, 2)), layer_counts=[("a", 1), ("b", 1)])
    manifest_path = write_traceset(ts, tmp_path, "toy")
    write_array_file(tmp_path / "b.npy", np.zeros((2, 1)))
    with pytest.raises(ManifestError):
        load_traceset(manifest_path)


def test_load_traceset_neuron_count_mismatch(tmp_path):
    ts = make_traces(np.zeros((2, 2)), layer_counts=[("a", 2)])
    manifest_path = write_traceset(ts, tmp_path, "toy")
    write_array_file(tmp_path / "a.npy", np.zeros((2, 3)))
    with pytest.raises(ManifestError):
        load_traceset(manifest_path)


def test_load_traceset_label_length_mismatch(tmp_path):
    ts = make_traces(np.zeros((3, 2)), ground_truth=[0, 1, 0])
    manifest_path = write_traceset(ts, tmp_path, "toy")
    (tmp_path / "labels.json").write_text("[0, 1]")
    with pytest.raises(ManifestError):
        load_traceset(manifest_path)
