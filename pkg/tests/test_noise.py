import numpy as np
import pytest

from labelpure.evaluate import TrainConfig, evaluate_classifier, train_linear_ce
from labelpure.noise import (
    CIFAR10_CLASS_MAP,
    MixtureSpec,
    NoiseSpec,
    gen_gaussian_mixture,
    gen_gaussian_mixture_split,
    inject_asymmetric,
    inject_symmetric,
    label_accuracy,
)
from labelpure.data import HardLabels


# ---------------------------------------------------------------- mixture


def test_mixture_balance_exact():
    feats, labels = gen_gaussian_mixture(MixtureSpec(4, 3, 2, 1.0, seed=0))
    assert feats.n == 4
    assert np.bincount(labels.values, minlength=2).tolist() == [2, 2]


def test_mixture_balance_within_one():
    _, labels = gen_gaussian_mixture(MixtureSpec(11, 2, 3, 1.0, seed=1))
    counts = np.bincount(labels.values, minlength=3)
    assert counts.max() - counts.min() <= 1
    assert counts.sum() == 11


def test_mixture_deterministic():
    spec = MixtureSpec(50, 4, 3, 2.0, seed=42)
    a_feats, a_labels = gen_gaussian_mixture(spec)
    b_feats, b_labels = gen_gaussian_mixture(spec)
    assert np.array_equal(a_feats.values, b_feats.values)
    assert np.array_equal(a_labels.values, b_labels.values)


def test_mixture_mean_separation():
    spec = MixtureSpec(500, 8, 5, 6.0, seed=3)
    feats, labels = gen_gaussian_mixture(spec)
    means = np.stack([feats.values[labels.values == k].mean(axis=0) for k in range(5)])
    dists = np.linalg.norm(means[:, None] - means[None, :], axis=-1)
    off_diag = dists[np.triu_indices(5, 1)]
    # empirical means wander ~1/sqrt(100) around the true means
    assert off_diag.min() > 6.0 - 1.0


def test_mixture_split_sizes_and_balance():
    spec = MixtureSpec(100, 3, 4, 3.0, seed=7)
    train, val, test = gen_gaussian_mixture_split(spec, n_val=21, n_test=10)
    assert train[0].n == 100 and val[0].n == 21 and test[0].n == 10
    for part in (train, val, test):
        counts = np.bincount(part[1].values, minlength=4)
        assert counts.max() - counts.min() <= 1


def test_mixture_split_none_when_zero():
    _, val, test = gen_gaussian_mixture_split(MixtureSpec(10, 2, 2, 1.0, seed=0))
    assert val is None and test is None


def test_mixture_separable_benchmark_clean_probe():
    # the oracle backing the correction benchmark: clean labels train a
    # near-perfect linear classifier at separation 8
    spec = MixtureSpec(2000, 32, 5, 8.0, seed=0)
    train, _, test = gen_gaussian_mixture_split(spec, n_test=1000)
    clf = train_linear_ce(train[0], train[1], TrainConfig(seed=0))
    assert evaluate_classifier(clf, test[0], test[1]) >= 0.99


def test_mixture_spec_validation():
    with pytest.raises(ValueError):
        MixtureSpec(10, 2, 1, 1.0, seed=0)
    with pytest.raises(ValueError):
        MixtureSpec(1, 2, 2, 1.0, seed=0)
    with pytest.raises(ValueError):
        MixtureSpec(10, 0, 2, 1.0, seed=0)
    with pytest.raises(ValueError):
        MixtureSpec(10, 2, 2, 0.0, seed=0)


# ---------------------------------------------------------------- symmetric noise


def _labels(n, c, seed):
    return HardLabels(np.random.default_rng(seed).integers(0, c, size=n), c)


def test_symmetric_zero_ratio_is_identity():
    labels = _labels(200, 4, 0)
    assert np.array_equal(inject_symmetric(labels, 0.0, seed=1).values, labels.values)


def test_symmetric_full_ratio_has_no_fixed_points():
    labels = _labels(5000, 10, 1)
    noisy = inject_symmetric(labels, 1.0, seed=2)
    assert not np.any(noisy.values == labels.values)


def test_symmetric_flip_fraction_concentrates():
    labels = _labels(10_000, 10, 2)
    noisy = inject_symmetric(labels, 0.5, seed=3)
    frac = float(np.mean(noisy.values != labels.values))
    assert 0.48 <= frac <= 0.52


def test_symmetric_correct_fraction_bound():
    n, ratio = 10_000, 0.3
    labels = _labels(n, 6, 4)
    noisy = inject_symmetric(labels, ratio, seed=5)
    correct = float(np.mean(noisy.values == labels.values))
    assert abs(correct - (1 - ratio)) <= 3 * np.sqrt(ratio * (1 - ratio) / n)


def test_symmetric_deterministic():
    labels = _labels(500, 5, 6)
    a = inject_symmetric(labels, 0.4, seed=9)
    b = inject_symmetric(labels, 0.4, seed=9)
    assert np.array_equal(a.values, b.values)
    c = inject_symmetric(labels, 0.4, seed=10)
    assert not np.array_equal(a.values, c.values)


def test_symmetric_exact_count():
    labels = _labels(1000, 5, 7)
    noisy = inject_symmetric(labels, 0.37, seed=8, exact_count=True)
    assert int((noisy.values != labels.values).sum()) == 370


def test_symmetric_exact_count_full_ratio_flips_everything():
    labels = _labels(300, 6, 8)
    noisy = inject_symmetric(labels, 1.0, seed=9, exact_count=True)
    assert not np.any(noisy.values == labels.values)


def test_exact_count_modes_are_deterministic():
    labels = _labels(400, 5, 9)
    a = inject_symmetric(labels, 0.5, seed=10, exact_count=True)
    b = inject_symmetric(labels, 0.5, seed=10, exact_count=True)
    assert np.array_equal(a.values, b.values)
    c = inject_asymmetric(labels, 0.5, {0: 1, 1: 0}, seed=11, exact_count=True)
    d = inject_asymmetric(labels, 0.5, {0: 1, 1: 0}, seed=11, exact_count=True)
    assert np.array_equal(c.values, d.values)


def test_symmetric_rejects_bad_inputs():
    labels = _labels(10, 4, 0)
    with pytest.raises(ValueError):
        inject_symmetric(labels, 1.5, seed=0)
    binary_free = HardLabels(np.zeros(4, dtype=int), 1)
    with pytest.raises(ValueError):
        inject_symmetric(binary_free, 0.5, seed=0)


# ---------------------------------------------------------------- asymmetric noise


def test_asymmetric_zero_ratio_is_identity():
    labels = _labels(100, 10, 1)
    out = inject_asymmetric(labels, 0.0, CIFAR10_CLASS_MAP, seed=0)
    assert np.array_equal(out.values, labels.values)


def test_asymmetric_full_ratio_maps_everything():
    labels = HardLabels(np.zeros(50, dtype=int), 2)
    out = inject_asymmetric(labels, 1.0, {0: 1}, seed=0)
    assert np.all(out.values == 1)


def test_asymmetric_flips_land_only_on_targets():
    c = 10
    class_map = {k: (k + 1) % c for k in range(c)}
    labels = _labels(10_000, c, 3)
    out = inject_asymmetric(labels, 0.4, class_map, seed=4)
    flipped = out.values != labels.values
    frac = float(flipped.mean())
    assert 0.37 <= frac <= 0.43
    targets = np.array([class_map[k] for k in range(c)])
    assert np.all(out.values[flipped] == targets[labels.values[flipped]])
    assert np.all(np.isin(out.values[~flipped], labels.values[~flipped]))


def test_asymmetric_unmapped_classes_untouched():
    labels = _labels(2000, 10, 5)
    out = inject_asymmetric(labels, 0.9, CIFAR10_CLASS_MAP, seed=6)
    unmapped = ~np.isin(labels.values, list(CIFAR10_CLASS_MAP))
    assert np.array_equal(out.values[unmapped], labels.values[unmapped])


def test_asymmetric_exact_count_per_class():
    labels = HardLabels(np.repeat([0, 1], 100), 2)
    out = inject_asymmetric(labels, 0.25, {0: 1}, seed=7, exact_count=True)
    assert int((out.values != labels.values).sum()) == 25
    assert np.all(out.values[100:] == 1)


def test_asymmetric_rejects_self_map():
    labels = _labels(10, 3, 0)
    with pytest.raises(ValueError):
        inject_asymmetric(labels, 0.5, {1: 1}, seed=0)
    with pytest.raises(ValueError):
        inject_asymmetric(labels, 0.5, {0: 9}, seed=0)


def test_noise_spec_validation():
    NoiseSpec("symmetric", 0.5)
    NoiseSpec("asymmetric", 0.5, class_map={0: 1})
    with pytest.raises(ValueError):
        NoiseSpec("weird", 0.5)
    with pytest.raises(ValueError):
        NoiseSpec("symmetric", -0.1)
    with pytest.raises(ValueError):
        NoiseSpec("asymmetric", 0.5)


# ---------------------------------------------------------------- accuracy


def test_label_accuracy_cases():
    a = HardLabels(np.array([0, 1, 2, 3]), 4)
    b = HardLabels(np.array([1, 2, 3, 0]), 4)
    half = HardLabels(np.array([0, 1, 3, 0]), 4)
    assert label_accuracy(a, a) == 1.0
    assert label_accuracy(a, b) == 0.0
    assert label_accuracy(a, half) == 0.5
    with pytest.raises(ValueError):
        label_accuracy(a, HardLabels(np.array([0]), 4))
