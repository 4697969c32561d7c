"""Downstream use of purified labels: linear cross-entropy retraining,
linear-probe evaluation, and held-out accuracy.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import FeatureMatrix, HardLabels, one_hot
from .eac import AdamState, LinearClassifier, classifier_forward, eac_train_step


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch: int = 256
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    weight_decay: float = 0.0

    def __post_init__(self) -> None:
        if self.epochs < 1 or self.batch < 1:
            raise ValueError(f"epochs and batch must be >= 1, got {self.epochs}, {self.batch}")
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay must be nonnegative, got {self.weight_decay}")


def train_linear_on_targets(
    features: FeatureMatrix, targets: np.ndarray, cfg: TrainConfig
) -> LinearClassifier:
    """Minibatch cross-entropy training of a linear head on soft target rows."""
    targets = np.asarray(targets, dtype=np.float64)
    if targets.ndim != 2 or targets.shape[0] != features.n:
        raise ValueError(f"{features.n} feature rows vs target shape {targets.shape}")
    F = features.values
    clf = LinearClassifier.zeros(features.dim, targets.shape[1])
    opt = AdamState.init(features.dim, targets.shape[1], cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
    rng = np.random.default_rng(cfg.seed)
    for _ in range(cfg.epochs):
        perm = rng.permutation(features.n)
        for lo in range(0, features.n, cfg.batch):
            idx = perm[lo : lo + cfg.batch]
            clf, opt = eac_train_step(
                clf, F[idx], targets[idx], opt,
                gamma_ent=0.0, weight_decay=cfg.weight_decay,
            )
    return clf


def train_linear_ce(
    features: FeatureMatrix, labels: HardLabels, cfg: TrainConfig
) -> LinearClassifier:
    """Retrain a linear head with plain cross entropy on hard labels."""
    if len(labels) != features.n:
        raise ValueError(f"{features.n} feature rows vs {len(labels)} labels")
    return train_linear_on_targets(features, one_hot(labels), cfg)


def evaluate_classifier(clf: LinearClassifier, features: FeatureMatrix, y: HardLabels) -> float:
    """Fraction of rows whose argmax prediction matches y (ties to lowest index)."""
    if len(y) != features.n:
        raise ValueError(f"{features.n} feature rows vs {len(y)} labels")
    pred = np.argmax(classifier_forward(clf, features.values), axis=1)
    return float(np.mean(pred == y.values))


def linear_probe(
    train_features: FeatureMatrix,
    clean_labels_subset: HardLabels,
    test_features: FeatureMatrix,
    y_test: HardLabels,
    cfg: TrainConfig,
) -> float:
    """Train on a clean labeled subset only and return held-out accuracy.

    The subset is put into a canonical order (by label, then by feature
    values) before batching, so the probe does not depend on caller row order.
    """
    if len(clean_labels_subset) == 0:
        raise ValueError("probe subset must be nonempty")
    if len(clean_labels_subset) != train_features.n:
        raise ValueError(
            f"{train_features.n} subset feature rows vs {len(clean_labels_subset)} labels"
        )
    order = np.lexsort(
        tuple(train_features.values[:, j] for j in range(train_features.dim - 1, -1, -1))
        + (clean_labels_subset.values,)
    )
    ordered_f = FeatureMatrix(train_features.values[order])
    ordered_y = HardLabels(clean_labels_subset.values[order], clean_labels_subset.n_classes)
    clf = train_linear_ce(ordered_f, ordered_y, cfg)
    return evaluate_classifier(clf, test_features, y_test)


def save_classifier(clf: LinearClassifier, path: str | Path) -> None:
    """Write a classifier to versioned JSON."""
    payload = {
        "version": 1,
        "weights": clf.weights.tolist(),
        "bias": clf.bias.tolist(),
    }
    Path(path).write_text(json.dumps(payload), encoding="utf-8")


def load_classifier(path: str | Path) -> LinearClassifier:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if data.get("version") != 1:
        raise ValueError(f"{path}: unsupported classifier version {data.get('version')}")
    return LinearClassifier(np.asarray(data["weights"]), np.asarray(data["bias"]))
