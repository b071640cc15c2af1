"""Detecting anomalous inputs from their surprise scores.

A logistic regression over surprise features separates original from
adversarial (or otherwise synthetic) inputs; ROC-AUC over a held-out split
quantifies how well surprise alone discriminates. The optimizer is a
deterministic full-batch gradient descent so a seeded experiment is
reproducible bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateLabelsError,
    DimensionMismatchError,
    SurprisalError,
    TraceValidationError,
)

DEFAULT_L2 = 1e-4
DEFAULT_MAX_ITERS = 1000
DEFAULT_TOL = 1e-8
DEFAULT_TRAIN_PER_CLASS = 1000

_ARMIJO_C = 1e-4
_MAX_HALVINGS = 60


def _as_features(scores) -> np.ndarray:
    features = np.asarray(scores, dtype=np.float64)
    if features.ndim == 1:
        features = features.reshape(-1, 1)
    if features.ndim != 2:
        raise DimensionMismatchError(f"features must be 1-D or 2-D, got shape {features.shape}")
    return features


@dataclass(frozen=True)
class LabeledScores:
    """Feature vectors (one row per input) with binary labels.

    Label 1 marks the adversarial/synthetic class, 0 the originals. Features
    default to a single surprise value per input; per-layer surprise vectors
    work the same way.
    """

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        features = _as_features(self.features)
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if len(features) != len(labels):
            raise DimensionMismatchError(
                f"{len(features)} feature rows vs {len(labels)} labels"
            )
        if not np.all(np.isfinite(features)):
            raise TraceValidationError("features contain non-finite values")
        if not np.all((labels == 0) | (labels == 1)):
            raise DegenerateLabelsError("labels must be 0 (original) or 1 (adversarial)")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        features.setflags(write=False)
        labels.setflags(write=False)

    @property
    def num_rows(self) -> int:
        return len(self.labels)

    def both_classes_present(self) -> bool:
        return 0 < int(self.labels.sum()) < len(self.labels)


@dataclass(frozen=True)
class LogisticModel:
    """Fitted detector: standardization constants plus a linear decision rule."""

    weights: np.ndarray
    bias: float
    feature_mean: np.ndarray
    feature_std: np.ndarray

    def decision(self, scores) -> np.ndarray:
        """Linear score before the sigmoid; monotone in the probability."""
        features = _as_features(scores)
        if features.shape[1] != len(self.weights):
            raise DimensionMismatchError(
                f"model takes {len(self.weights)} features, got {features.shape[1]}"
            )
        standardized = (features - self.feature_mean) / self.feature_std
        return standardized @ self.weights + self.bias

    def predict_proba(self, scores) -> np.ndarray:
        return _sigmoid(self.decision(scores))

    def predict(self, scores) -> np.ndarray:
        return (self.decision(scores) > 0.0).astype(np.int64)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    expz = np.exp(z[~pos])
    out[~pos] = expz / (1.0 + expz)
    return out


def fit_logistic(
    train: LabeledScores,
    l2: float = DEFAULT_L2,
    max_iters: int = DEFAULT_MAX_ITERS,
    tol: float = DEFAULT_TOL,
) -> LogisticModel:
    """Fit by full-batch gradient descent with a backtracking line search.

    Features are standardized with the training split's mean and stdev. The
    loss is the mean negative log-likelihood plus (l2/2)*||w||^2 with the bias
    unregularized; accepted steps never increase it.
    """
    if not train.both_classes_present():
        raise DegenerateLabelsError("training labels are all one class; nothing to separate")
    y = train.labels.astype(np.float64)
    mean = train.features.mean(axis=0)
    std = train.features.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    x = (train.features - mean) / std
    n, f = x.shape

    def loss_at(w, b):
        z = x @ w + b
        nll = np.mean(np.logaddexp(0.0, z) - y * z)
        return nll + 0.5 * l2 * float(w @ w)

    w = np.zeros(f)
    b = 0.0
    loss = loss_at(w, b)
    for _ in range(max_iters):
        z = x @ w + b
        residual = _sigmoid(z) - y
        grad_w = x.T @ residual / n + l2 * w
        grad_b = float(residual.mean())
        grad_sq = float(grad_w @ grad_w) + grad_b * grad_b
        if math.sqrt(grad_sq) < tol:
            break
        step = 1.0
        for _ in range(_MAX_HALVINGS):
            cand_w = w - step * grad_w
            cand_b = b - step * grad_b
            cand_loss = loss_at(cand_w, cand_b)
            if cand_loss <= loss - _ARMIJO_C * step * grad_sq:
                w, b, loss = cand_w, cand_b, cand_loss
                break
            step *= 0.5
        else:
            break  # no acceptable step; gradient direction exhausted
    return LogisticModel(weights=w, bias=float(b), feature_mean=mean, feature_std=std)


def roc_auc(scores, labels) -> float:
    """Probability a positive outscores a negative, ties counting half.

    Computed from the rank-sum with average ranks on ties, which equals the
    pairwise definition exactly but runs in O(m log m).
    """
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if len(scores) != len(labels):
        raise DimensionMismatchError(f"{len(scores)} scores vs {len(labels)} labels")
    n_pos = int(np.count_nonzero(labels == 1))
    n_neg = int(np.count_nonzero(labels == 0))
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabelsError("ROC-AUC needs both a positive and a negative class")
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(len(scores), dtype=np.float64)
    start = 0
    ordered = scores[order]
    for i in range(1, len(ordered) + 1):
        if i == len(ordered) or ordered[i] != ordered[start]:
            # 1-based positions start+1 .. i share the average rank
            ranks[order[start:i]] = 0.5 * (start + 1 + i)
            start = i
    rank_sum_pos = float(np.sum(ranks[labels == 1]))
    u = rank_sum_pos - 0.5 * n_pos * (n_pos + 1)
    return u / (n_pos * n_neg)


@dataclass(frozen=True)
class DetectionResult:
    model: LogisticModel
    test_auc: float
    train_per_class: int
    n_test_original: int
    n_test_adversarial: int
    seed: int
    feature_mode: str

    def summary(self) -> dict:
        return {
            "auc": self.test_auc,
            "n_train": 2 * self.train_per_class,
            "n_test": self.n_test_original + self.n_test_adversarial,
            "seed": self.seed,
            "feature_mode": self.feature_mode,
        }


def detection_experiment(
    original_sa,
    adversarial_sa,
    train_per_class: int = DEFAULT_TRAIN_PER_CLASS,
    seed: int = 0,
    l2: float = DEFAULT_L2,
    max_iters: int = DEFAULT_MAX_ITERS,
    tol: float = DEFAULT_TOL,
) -> DetectionResult:
    """Split, fit, and score the surprise-based detector.

    A seeded random draw takes train_per_class rows from each side for
    fitting; AUC is computed on everything left over. The same seed always
    produces the same split, model, and AUC.
    """
    original = _as_features(original_sa)
    adversarial = _as_features(adversarial_sa)
    if original.shape[1] != adversarial.shape[1]:
        raise DimensionMismatchError(
            f"original features have {original.shape[1]} columns, "
            f"adversarial have {adversarial.shape[1]}"
        )
    if len(original) <= train_per_class or len(adversarial) <= train_per_class:
        raise SurprisalError(
            f"need more than {train_per_class} rows per class to hold out a test set; "
            f"got {len(original)} original and {len(adversarial)} adversarial"
        )
    rng = np.random.default_rng(seed)
    perm_orig = rng.permutation(len(original))
    perm_adv = rng.permutation(len(adversarial))

    train_features = np.concatenate(
        [original[perm_orig[:train_per_class]], adversarial[perm_adv[:train_per_class]]]
    )
    train_labels = np.concatenate(
        [np.zeros(train_per_class, dtype=np.int64), np.ones(train_per_class, dtype=np.int64)]
    )
    model = fit_logistic(
        LabeledScores(train_features, train_labels), l2=l2, max_iters=max_iters, tol=tol
    )

    test_orig = original[perm_orig[train_per_class:]]
    test_adv = adversarial[perm_adv[train_per_class:]]
    test_scores = model.decision(np.concatenate([test_orig, test_adv]))
    test_labels = np.concatenate(
        [np.zeros(len(test_orig), dtype=np.int64), np.ones(len(test_adv), dtype=np.int64)]
    )
    return DetectionResult(
        model=model,
        test_auc=roc_auc(test_scores, test_labels),
        train_per_class=train_per_class,
        n_test_original=len(test_orig),
        n_test_adversarial=len(test_adv),
        seed=seed,
        feature_mode="scalar" if original.shape[1] == 1 else f"vector:{original.shape[1]}",
    )
