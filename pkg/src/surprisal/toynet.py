"""Tiny dense feed-forward nets for end-to-end fixtures.

Runs inference and records every layer's post-activation output as an
activation trace, with no external ML stack. Weights are seeded, never
trained: fixtures get their structure from Gaussian class clusters in input
space, and the net is just a fixed nonlinear map on top of them.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionMismatchError, SurprisalError, TraceValidationError
from .trace_io import write_array_file, write_traceset
from .traces import TraceSet, layers_from_counts

ACTIVATIONS = ("relu", "identity", "softmax")


@dataclass(frozen=True)
class DenseLayer:
    name: str
    weights: np.ndarray  # (fan_in, fan_out)
    bias: np.ndarray     # (fan_out,)
    activation: str

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=np.float64)
        bias = np.asarray(self.bias, dtype=np.float64).reshape(-1)
        if weights.ndim != 2:
            raise DimensionMismatchError(f"layer {self.name!r}: weights must be 2-D")
        if weights.shape[1] != len(bias):
            raise DimensionMismatchError(
                f"layer {self.name!r}: {weights.shape[1]} outputs vs {len(bias)} biases"
            )
        if not (np.all(np.isfinite(weights)) and np.all(np.isfinite(bias))):
            raise TraceValidationError(f"layer {self.name!r}: non-finite parameters")
        if self.activation not in ACTIVATIONS:
            raise SurprisalError(
                f"layer {self.name!r}: unknown activation {self.activation!r}; "
                f"choose from {ACTIVATIONS}"
            )
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "bias", bias)
        weights.setflags(write=False)
        bias.setflags(write=False)

    @property
    def fan_in(self) -> int:
        return self.weights.shape[0]

    @property
    def fan_out(self) -> int:
        return self.weights.shape[1]


@dataclass(frozen=True)
class DenseNet:
    layers: tuple[DenseLayer, ...]

    def __post_init__(self):
        if not self.layers:
            raise SurprisalError("a net needs at least one layer")
        for prev, cur in zip(self.layers, self.layers[1:]):
            if prev.fan_out != cur.fan_in:
                raise DimensionMismatchError(
                    f"layer {cur.name!r} takes {cur.fan_in} inputs but "
                    f"{prev.name!r} emits {prev.fan_out}"
                )

    @property
    def input_width(self) -> int:
        return self.layers[0].fan_in

    @property
    def num_classes(self) -> int:
        return self.layers[-1].fan_out


def _apply(activation: str, z: np.ndarray) -> np.ndarray:
    if activation == "relu":
        return np.maximum(z, 0.0)
    if activation == "softmax":
        shifted = z - z.max(axis=1, keepdims=True)
        expz = np.exp(shifted)
        return expz / expz.sum(axis=1, keepdims=True)
    return z


def forward_with_traces(
    net: DenseNet,
    inputs: np.ndarray,
    ground_truth=None,
    ids=None,
) -> TraceSet:
    """Run the net and collect every layer's post-activation values.

    The trace matrix is the column-wise concatenation of all layer outputs in
    order; the predicted label is the argmax of the final layer, ties going
    to the lowest class index.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 2:
        raise DimensionMismatchError(f"inputs must be 2-D, got shape {inputs.shape}")
    if inputs.shape[1] != net.input_width:
        raise DimensionMismatchError(
            f"inputs have {inputs.shape[1]} features; net takes {net.input_width}"
        )
    blocks = []
    h = inputs
    for layer in net.layers:
        h = _apply(layer.activation, h @ layer.weights + layer.bias)
        blocks.append(h)
    values = np.concatenate(blocks, axis=1)
    predicted = np.argmax(blocks[-1], axis=1).astype(np.int64)
    return TraceSet(
        values=values,
        layers=layers_from_counts([(l.name, l.fan_out) for l in net.layers]),
        ground_truth=None if ground_truth is None else np.asarray(ground_truth, dtype=np.int64),
        predicted=predicted,
        ids=None if ids is None else tuple(ids),
    )


def random_net(
    rng: np.random.Generator,
    layer_sizes: tuple[int, ...],
    final_activation: str = "identity",
    bias_mean: float = 1.0,
) -> DenseNet:
    """Draw a net with N(0, 1/fan_in) weights, relu hidden layers.

    Biases center on a positive value so most relu units stay alive across
    the input range; nets full of units that are exactly zero for a whole
    class produce degenerate per-class trace covariances.
    """
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(layer_sizes, layer_sizes[1:])):
        last = i == len(layer_sizes) - 2
        layers.append(
            DenseLayer(
                name=f"dense{i + 1}",
                weights=rng.normal(0.0, 1.0 / math.sqrt(fan_in), size=(fan_in, fan_out)),
                bias=rng.normal(bias_mean, 0.1, size=fan_out),
                activation=final_activation if last else "relu",
            )
        )
    return DenseNet(layers=tuple(layers))


def _relabel_outputs(net: DenseNet, mapping: list[int]) -> DenseNet:
    """Reorder the final layer so cluster c's majority prediction becomes c."""
    final = net.layers[-1]
    order = np.asarray(mapping, dtype=np.int64)
    relabeled = DenseLayer(
        name=final.name,
        weights=final.weights[:, order],
        bias=final.bias[order],
        activation=final.activation,
    )
    return DenseNet(layers=(*net.layers[:-1], relabeled))


def save_net(net: DenseNet, path: str | Path) -> None:
    doc = {
        "layers": [
            {
                "name": layer.name,
                "activation": layer.activation,
                "weights": [[float(v) for v in row] for row in layer.weights],
                "bias": [float(v) for v in layer.bias],
            }
            for layer in net.layers
        ]
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_net(path: str | Path) -> DenseNet:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    return DenseNet(
        layers=tuple(
            DenseLayer(
                name=entry["name"],
                weights=np.asarray(entry["weights"], dtype=np.float64),
                bias=np.asarray(entry["bias"], dtype=np.float64),
                activation=entry["activation"],
            )
            for entry in doc["layers"]
        )
    )


@dataclass(frozen=True)
class FixtureBundle:
    train: TraceSet
    test_clean: TraceSet
    test_perturbed: TraceSet
    net: DenseNet
    paths: dict


def make_fixture(
    out_dir: str | Path,
    seed: int = 0,
    n_train: int = 1000,
    n_test: int = 500,
    n_classes: int = 2,
    d_in: int = 12,
    hidden: tuple[int, ...] = (10,),
    perturbation: float = 0.5,
    min_center_gap: float = 8.0,
) -> FixtureBundle:
    """Generate a deterministic train / clean-test / perturbed-test fixture.

    Inputs are Gaussian clusters around per-class centers. Each perturbed
    test input is shifted toward a different class's center by
    ``perturbation`` times the center-to-center vector, so at the default 0.5
    it lands in the thinly populated region between clusters while keeping
    its own noise offset; such inputs genuinely surprise a model of the
    training traces and sit near the decision boundary.

    The seeded net is redrawn (deterministically) until each training cluster
    is predicted as one dominant class and those dominant classes are all
    distinct; the final layer is then reordered so cluster c predicts class
    c. That gives the untrained net the one property a trained classifier
    would have, namely that clean inputs are mostly classified correctly,
    without running any training loop.

    Writes three manifests plus the net and raw test inputs under out_dir,
    so the whole pipeline, other tooling included, can run from files alone.
    """
    if n_classes < 2 or n_train < 4 * n_classes or n_test < 2 or d_in < 2:
        raise SurprisalError("fixture sizes too small to be useful")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    # Clusters closer than the gap floor leave no room for a between-cluster
    # region, which is where the perturbed inputs must land.
    for _ in range(200):
        centers = rng.normal(0.0, 3.0, size=(n_classes, d_in))
        gaps = [
            np.linalg.norm(centers[a] - centers[b])
            for a in range(n_classes)
            for b in range(a + 1, n_classes)
        ]
        if min(gaps) >= min_center_gap:
            break
    else:
        raise SurprisalError(
            f"could not place {n_classes} centers at pairwise distance "
            f">= {min_center_gap} in 200 draws; lower min_center_gap"
        )
    train_labels = rng.integers(0, n_classes, size=n_train)
    test_labels = rng.integers(0, n_classes, size=n_test)
    train_inputs = centers[train_labels] + rng.normal(0.0, 1.0, size=(n_train, d_in))
    test_inputs = centers[test_labels] + rng.normal(0.0, 1.0, size=(n_test, d_in))

    # Perturbation target: a different class, drawn per test input.
    offsets = rng.integers(1, n_classes, size=n_test)
    target_labels = (test_labels + offsets) % n_classes
    perturbed_inputs = test_inputs + perturbation * (
        centers[target_labels] - centers[test_labels]
    )

    net = None
    for attempt in range(128):
        candidate = random_net(np.random.default_rng((seed, attempt)), (d_in, *hidden, n_classes))
        predicted = forward_with_traces(candidate, train_inputs).predicted
        mapping = []
        for cluster in range(n_classes):
            counts = np.bincount(predicted[train_labels == cluster], minlength=n_classes)
            if counts.max() < 0.97 * counts.sum():
                break
            mapping.append(int(np.argmax(counts)))
        if len(mapping) == n_classes and sorted(mapping) == list(range(n_classes)):
            net = _relabel_outputs(candidate, mapping)
            break
    if net is None:
        raise SurprisalError(
            "no seeded net separated the clusters cleanly in 128 draws; "
            "try a different seed or wider hidden layers"
        )

    train = forward_with_traces(net, train_inputs, ground_truth=train_labels)
    test_clean = forward_with_traces(net, test_inputs, ground_truth=test_labels)
    # Perturbed rows keep the label of the input they corrupt.
    test_perturbed = forward_with_traces(net, perturbed_inputs, ground_truth=test_labels)

    dictionary = {f"class_{c}": c for c in range(n_classes)}
    paths = {
        "train": write_traceset(train, out_dir / "train", "train", dictionary),
        "test_clean": write_traceset(test_clean, out_dir / "test_clean", "test_clean", dictionary),
        "test_perturbed": write_traceset(
            test_perturbed, out_dir / "test_perturbed", "test_perturbed", dictionary
        ),
        "net": out_dir / "net.json",
        "inputs_test_clean": out_dir / "inputs_test_clean.npy",
        "inputs_test_perturbed": out_dir / "inputs_test_perturbed.npy",
    }
    save_net(net, paths["net"])
    write_array_file(paths["inputs_test_clean"], test_inputs)
    write_array_file(paths["inputs_test_perturbed"], perturbed_inputs)
    return FixtureBundle(
        train=train,
        test_clean=test_clean,
        test_perturbed=test_perturbed,
        net=net,
        paths=paths,
    )
