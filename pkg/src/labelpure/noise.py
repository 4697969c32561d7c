"""Synthetic feature generation, label-noise injection, and label agreement.

All randomness flows through numpy's seeded Generator (PCG64); every
operation here is a pure function of its arguments and seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import FeatureMatrix, HardLabels

# Conventional similar-class map for the 10-class CIFAR layout:
# truck->automobile, bird->airplane, deer->horse, cat<->dog.
CIFAR10_CLASS_MAP = {9: 1, 2: 0, 4: 7, 3: 5, 5: 3}

_NOISE_KINDS = ("symmetric", "asymmetric")


@dataclass(frozen=True)
class NoiseSpec:
    """Label corruption recipe.

    ``exact_count`` switches from per-sample Bernoulli flips to flipping an
    exact rounded count, for fixed-ratio benchmark reproduction.
    """

    kind: str
    ratio: float
    class_map: dict[int, int] | None = None
    seed: int = 0
    exact_count: bool = False

    def __post_init__(self) -> None:
        if self.kind not in _NOISE_KINDS:
            raise ValueError(f"noise kind must be one of {_NOISE_KINDS}, got {self.kind!r}")
        if not 0.0 <= self.ratio <= 1.0:
            raise ValueError(f"noise ratio must lie in [0, 1], got {self.ratio}")
        if self.kind == "asymmetric":
            if not self.class_map:
                raise ValueError("asymmetric noise requires a class map")
            _check_class_map(self.class_map)


def _check_class_map(class_map: dict[int, int]) -> None:
    for src, dst in class_map.items():
        if src == dst:
            raise ValueError(f"class map entry {src}->{dst} maps a class to itself")
        if src < 0 or dst < 0:
            raise ValueError(f"class map entry {src}->{dst} has a negative index")


@dataclass(frozen=True)
class MixtureSpec:
    """Isotropic Gaussian mixture: a desk-scale stand-in for pretrained embeddings.

    ``separation`` is the minimum pairwise distance between cluster means in
    units of the per-component standard deviation (which is 1).
    """

    n: int
    dim: int
    classes: int
    separation: float
    seed: int = 0

    def __post_init__(self) -> None:
        if self.classes < 2:
            raise ValueError(f"need at least 2 classes, got {self.classes}")
        if self.n < self.classes:
            raise ValueError(f"need n >= classes, got n={self.n}, classes={self.classes}")
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        if not self.separation > 0:
            raise ValueError(f"separation must be positive, got {self.separation}")


def _balanced_counts(n: int, c: int) -> np.ndarray:
    counts = np.full(c, n // c, dtype=np.int64)
    counts[: n % c] += 1
    return counts


def _cluster_means(rng: np.random.Generator, spec: MixtureSpec) -> np.ndarray:
    # Random point cloud rescaled so the minimum pairwise distance equals the
    # requested separation exactly, then verified.
    for _ in range(100):
        pts = rng.standard_normal((spec.classes, spec.dim))
        dists = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)
        min_dist = dists[np.triu_indices(spec.classes, 1)].min()
        if min_dist > 1e-9:
            means = pts * (spec.separation / min_dist)
            check = np.linalg.norm(means[:, None, :] - means[None, :, :], axis=-1)
            assert check[np.triu_indices(spec.classes, 1)].min() >= spec.separation * (1 - 1e-9)
            return means
    raise RuntimeError("failed to place distinct cluster means")


def gen_gaussian_mixture(spec: MixtureSpec) -> tuple[FeatureMatrix, HardLabels]:
    """Draw one balanced sample of the mixture (class sizes within +/-1)."""
    (features, labels), _, _ = gen_gaussian_mixture_split(spec)
    return features, labels


def gen_gaussian_mixture_split(
    spec: MixtureSpec, n_val: int = 0, n_test: int = 0
) -> tuple[
    tuple[FeatureMatrix, HardLabels],
    tuple[FeatureMatrix, HardLabels] | None,
    tuple[FeatureMatrix, HardLabels] | None,
]:
    """Draw train/validation/test splits that share one set of cluster means.

    Each split is balanced within +/-1 per class and shuffled. Splits must
    come from a single call: separate calls with different seeds would place
    different means, and with the same seed would replicate samples.
    """
    if n_val < 0 or n_test < 0:
        raise ValueError("split sizes must be nonnegative")
    rng = np.random.default_rng(spec.seed)
    means = _cluster_means(rng, spec)
    sizes = (spec.n, n_val, n_test)
    counts = [_balanced_counts(size, spec.classes) for size in sizes]

    blocks: list[list[np.ndarray]] = [[], [], []]
    label_blocks: list[list[np.ndarray]] = [[], [], []]
    for k in range(spec.classes):
        total = sum(int(cnt[k]) for cnt in counts)
        draws = means[k] + rng.standard_normal((total, spec.dim))
        offset = 0
        for s in range(3):
            take = int(counts[s][k])
            blocks[s].append(draws[offset : offset + take])
            label_blocks[s].append(np.full(take, k, dtype=np.int64))
            offset += take

    out: list[tuple[FeatureMatrix, HardLabels] | None] = []
    for s, size in enumerate(sizes):
        if size == 0:
            out.append(None)
            continue
        feats = np.concatenate(blocks[s])
        labs = np.concatenate(label_blocks[s])
        perm = rng.permutation(size)
        out.append((FeatureMatrix(feats[perm]), HardLabels(labs[perm], spec.classes)))
    train = out[0]
    assert train is not None
    return train, out[1], out[2]


def inject_symmetric(
    labels: HardLabels, ratio: float, seed: int, exact_count: bool = False
) -> HardLabels:
    """Flip each label with probability ``ratio`` to a uniformly chosen other class.

    With ``exact_count`` set, exactly round(ratio * N) labels are flipped
    instead of an independent Bernoulli draw per sample.
    """
    if not 0.0 <= ratio <= 1.0:
        raise ValueError(f"noise ratio must lie in [0, 1], got {ratio}")
    c = labels.n_classes
    if c < 2:
        raise ValueError(f"symmetric noise needs at least 2 classes, got {c}")
    n = len(labels)
    rng = np.random.default_rng(seed)
    if exact_count:
        flip = np.zeros(n, dtype=bool)
        k = int(round(ratio * n))
        flip[rng.choice(n, size=k, replace=False)] = True
    else:
        flip = rng.random(n) < ratio
    # label + 1 + U{0..c-2} mod c is uniform over the c-1 other classes
    offsets = rng.integers(0, c - 1, size=n)
    flipped = (labels.values + 1 + offsets) % c
    return HardLabels(np.where(flip, flipped, labels.values), c)


def inject_asymmetric(
    labels: HardLabels,
    ratio: float,
    class_map: dict[int, int],
    seed: int,
    exact_count: bool = False,
) -> HardLabels:
    """Flip mapped classes to their designated target with probability ``ratio``.

    Classes absent from the map are never touched; a flipped label always
    lands on ``class_map[original]``.
    """
    if not 0.0 <= ratio <= 1.0:
        raise ValueError(f"noise ratio must lie in [0, 1], got {ratio}")
    _check_class_map(class_map)
    c = labels.n_classes
    for src, dst in class_map.items():
        if src >= c or dst >= c:
            raise ValueError(f"class map entry {src}->{dst} outside {c} classes")
    rng = np.random.default_rng(seed)
    target = np.arange(c, dtype=np.int64)
    mapped = np.zeros(c, dtype=bool)
    for src, dst in class_map.items():
        target[src] = dst
        mapped[src] = True
    eligible = mapped[labels.values]
    if exact_count:
        flip = np.zeros(len(labels), dtype=bool)
        for src in class_map:
            idx = np.flatnonzero(labels.values == src)
            k = int(round(ratio * idx.size))
            if k:
                flip[rng.choice(idx, size=k, replace=False)] = True
    else:
        flip = (rng.random(len(labels)) < ratio) & eligible
    return HardLabels(np.where(flip, target[labels.values], labels.values), c)


def label_accuracy(a: HardLabels, b: HardLabels) -> float:
    """Fraction of positions where the two label sequences agree."""
    if len(a) != len(b):
        raise ValueError(f"label length mismatch: {len(a)} vs {len(b)}")
    return float(np.mean(a.values == b.values))
