import mpmath
import numpy as np
import pytest

from labelpure.data import HardLabels, one_hot, softmax
from labelpure.eac import (
    AdamState,
    EacConfig,
    LinearClassifier,
    classifier_forward,
    eac_gradients,
    eac_label_update,
    eac_loss,
    eac_train_step,
)
from labelpure.errors import NumericError

from oracles import fd_classifier_gradients, naive_forward, relative_errors

mpmath.mp.dps = 50


# ---------------------------------------------------------------- forward


def test_forward_zero_classifier():
    clf = LinearClassifier.zeros(3, 2)
    assert np.array_equal(classifier_forward(clf, np.ones((4, 3))), np.zeros((4, 2)))


def test_forward_identity():
    clf = LinearClassifier(np.eye(3), np.zeros(3))
    assert np.array_equal(classifier_forward(clf, np.eye(3)), np.eye(3))


def test_forward_matches_naive_loop():
    rng = np.random.default_rng(0)
    clf = LinearClassifier(rng.normal(size=(5, 4)), rng.normal(size=4))
    F = rng.normal(size=(7, 5))
    assert np.abs(classifier_forward(clf, F) - naive_forward(clf, F)).max() < 1e-12


def test_forward_dim_mismatch():
    with pytest.raises(ValueError):
        classifier_forward(LinearClassifier.zeros(3, 2), np.ones((2, 4)))


# ---------------------------------------------------------------- loss


def test_loss_uniform_logits_is_log_c():
    logits = np.zeros((6, 4))
    targets = one_hot(HardLabels(np.arange(6) % 4, 4))
    assert abs(eac_loss(logits, targets, gamma_ent=0.0) - np.log(4)) < 1e-12


def test_loss_uniform_logits_with_entropy_doubles():
    logits = np.zeros((3, 5))
    targets = one_hot(HardLabels(np.array([0, 1, 2]), 5))
    assert abs(eac_loss(logits, targets, gamma_ent=1.0) - 2 * np.log(5)) < 1e-12


def test_loss_saturated_correct_prediction():
    logits = np.array([[10.0, 0.0, 0.0]])
    targets = np.array([[1.0, 0.0, 0.0]])
    loss = eac_loss(logits, targets, gamma_ent=0.0)
    assert loss < 1e-3
    # exact value from a high-precision evaluation of -log softmax
    exps = [mpmath.exp(v) for v in (10.0, 0.0, 0.0)]
    expected = float(-mpmath.log(exps[0] / sum(exps)))
    assert abs(loss - expected) < 1e-15


def test_loss_rejects_unnormalized_targets():
    with pytest.raises(ValueError):
        eac_loss(np.zeros((1, 3)), np.array([[0.5, 0.2, 0.1]]))
    with pytest.raises(ValueError):
        eac_loss(np.zeros((1, 3)), np.array([[1.5, -0.5, 0.0]]))


def test_loss_nonnegative_on_random_inputs():
    rng = np.random.default_rng(1)
    for _ in range(50):
        logits = rng.normal(size=(5, 4)) * 3
        targets = softmax(rng.normal(size=(5, 4)))
        assert eac_loss(logits, targets, gamma_ent=float(rng.uniform(0, 2))) >= 0.0


# ---------------------------------------------------------------- gradients


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(2)
    clf = LinearClassifier(rng.normal(size=(3, 2)), rng.normal(size=2))
    F = rng.normal(size=(4, 3))
    targets = softmax(rng.normal(size=(4, 2)))
    for gamma in (0.0, 1.0):
        _, grad_w, grad_b = eac_gradients(clf, F, targets, gamma_ent=gamma)
        fd_w, fd_b = fd_classifier_gradients(clf, F, targets, gamma)
        rel_w, abs_w = relative_errors(grad_w, fd_w)
        rel_b, abs_b = relative_errors(grad_b, fd_b)
        assert rel_w <= 1e-4 and abs_w <= 1e-8
        assert rel_b <= 1e-4 and abs_b <= 1e-8


def test_gradients_include_weight_decay():
    rng = np.random.default_rng(3)
    clf = LinearClassifier(rng.normal(size=(3, 2)), np.zeros(2))
    F = rng.normal(size=(4, 3))
    targets = softmax(rng.normal(size=(4, 2)))
    _, g0, _ = eac_gradients(clf, F, targets, gamma_ent=0.0, weight_decay=0.0)
    _, g1, _ = eac_gradients(clf, F, targets, gamma_ent=0.0, weight_decay=0.5)
    assert np.abs((g1 - g0) - 0.5 * clf.weights).max() < 1e-12


# ---------------------------------------------------------------- training


def test_train_step_zero_lr_keeps_classifier():
    rng = np.random.default_rng(4)
    clf = LinearClassifier(rng.normal(size=(3, 2)), rng.normal(size=2))
    opt = AdamState.init(3, 2, lr=0.0)
    F = rng.normal(size=(5, 3))
    targets = softmax(rng.normal(size=(5, 2)))
    new_clf, new_opt = eac_train_step(clf, F, targets, opt)
    assert np.array_equal(new_clf.weights, clf.weights)
    assert np.array_equal(new_clf.bias, clf.bias)
    assert new_opt.step == 1


def test_training_reduces_loss():
    rng = np.random.default_rng(5)
    F = np.vstack([rng.normal(size=(20, 4)) + 3, rng.normal(size=(20, 4)) - 3])
    targets = one_hot(HardLabels(np.repeat([0, 1], 20), 2))
    clf = LinearClassifier.zeros(4, 2)
    opt = AdamState.init(4, 2)
    initial = eac_loss(classifier_forward(clf, F), targets, gamma_ent=0.0)
    for _ in range(200):
        clf, opt = eac_train_step(clf, F, targets, opt, gamma_ent=0.0)
    final = eac_loss(classifier_forward(clf, F), targets, gamma_ent=0.0)
    assert final < initial


def test_training_is_deterministic():
    rng = np.random.default_rng(6)
    F = rng.normal(size=(10, 3))
    targets = softmax(rng.normal(size=(10, 4)))

    def run():
        clf = LinearClassifier.zeros(3, 4)
        opt = AdamState.init(3, 4)
        for _ in range(25):
            clf, opt = eac_train_step(clf, F, targets, opt)
        return clf

    a, b = run(), run()
    assert np.array_equal(a.weights, b.weights)
    assert np.array_equal(a.bias, b.bias)


def test_train_step_can_freeze_bias():
    rng = np.random.default_rng(7)
    clf = LinearClassifier.zeros(3, 2)
    opt = AdamState.init(3, 2)
    F = rng.normal(size=(5, 3))
    targets = softmax(rng.normal(size=(5, 2)))
    clf, _ = eac_train_step(clf, F, targets, opt, update_bias=False)
    assert np.array_equal(clf.bias, np.zeros(2))
    assert not np.array_equal(clf.weights, np.zeros((3, 2)))


def test_train_step_rejects_nonfinite():
    clf = LinearClassifier(np.ones((2, 2)), np.zeros(2))
    opt = AdamState.init(2, 2)
    with np.errstate(all="ignore"), pytest.raises(NumericError):
        eac_train_step(clf, np.array([[1e308, 1e308]]), np.array([[1.0, 0.0]]), opt)


# ---------------------------------------------------------------- label update


def test_label_update_endpoints_are_exact():
    rng = np.random.default_rng(8)
    Y = rng.normal(size=(6, 3))
    logits = rng.normal(size=(6, 3))
    assert np.array_equal(eac_label_update(Y, logits, 0.0), Y)
    assert np.array_equal(eac_label_update(Y, logits, 1.0), logits)


def test_label_update_midpoint_arithmetic():
    out = eac_label_update(np.array([[2.0, 0.0]]), np.array([[0.0, 2.0]]), 0.5)
    assert np.array_equal(out, [[1.0, 1.0]])


def test_label_update_is_affine():
    rng = np.random.default_rng(9)
    Y = rng.normal(size=(4, 2))
    logits = rng.normal(size=(4, 2))
    eta = 0.3
    out = eac_label_update(Y, logits, eta)
    assert np.abs(out - ((1 - eta) * Y + eta * logits)).max() < 1e-15


def test_label_update_validation():
    with pytest.raises(ValueError):
        eac_label_update(np.ones((2, 2)), np.ones((3, 2)), 0.5)
    with pytest.raises(ValueError):
        eac_label_update(np.ones((2, 2)), np.ones((2, 2)), 1.5)


def test_eac_config_validation():
    with pytest.raises(ValueError):
        EacConfig(eta=1.2)
    with pytest.raises(ValueError):
        EacConfig(period=0)
    with pytest.raises(ValueError):
        EacConfig(gamma_ent=-1.0)
    with pytest.raises(ValueError):
        EacConfig(blend_space="sideways")
