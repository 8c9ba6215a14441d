import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from openal.probe import (
    ProbeConfig,
    ProbeModel,
    accuracy,
    entropy,
    loss_and_grad,
    predict_proba,
    train_probe,
    untrained,
)


def fd_grad(W, b, X, Y, l2, h=1e-5):
    """Central finite differences of the loss w.r.t. every W and b entry."""
    gW = np.zeros_like(W)
    gb = np.zeros_like(b)
    for idx in np.ndindex(W.shape):
        Wp, Wm = W.copy(), W.copy()
        Wp[idx] += h
        Wm[idx] -= h
        gW[idx] = (loss_and_grad(Wp, b, X, Y, l2)[0] - loss_and_grad(Wm, b, X, Y, l2)[0]) / (2 * h)
    for k in range(len(b)):
        bp, bm = b.copy(), b.copy()
        bp[k] += h
        bm[k] -= h
        gb[k] = (loss_and_grad(W, bp, X, Y, l2)[0] - loss_and_grad(W, bm, X, Y, l2)[0]) / (2 * h)
    return gW, gb


def random_instance(rng):
    K = int(rng.integers(2, 6))
    d = int(rng.integers(1, 11))
    n = int(rng.integers(1, 21))
    X = rng.normal(size=(n, d))
    Y = np.eye(K)[rng.integers(0, K, size=n)]
    return rng.normal(size=(K, d)), rng.normal(size=K), X, Y, float(rng.uniform(0, 0.1))


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-12)


def test_gradient_matches_finite_differences(rng):
    for _ in range(10):
        W, b, X, Y, l2 = random_instance(rng)
        _, gW, gb = loss_and_grad(W, b, X, Y, l2)
        fW, fb = fd_grad(W, b, X, Y, l2)
        assert rel_err(np.concatenate([gW.ravel(), gb]), np.concatenate([fW.ravel(), fb])) < 1e-5


def test_separable_1d():
    model = train_probe([[-1.0], [1.0]], [0, 1], 2)
    assert accuracy(model, [[-1.0], [1.0]], [0, 1]) == 1.0
    assert model.epochs == 200


def test_loss_non_increasing_small_lr(rng):
    X = rng.normal(size=(60, 5))
    y = rng.integers(0, 3, size=60)
    model = train_probe(X, y, 3, ProbeConfig(learning_rate=0.01))
    losses = np.array(model.losses + (model.final_loss,))
    assert np.all(np.diff(losses) <= 1e-12)
    assert losses[0] == pytest.approx(math.log(3))


def test_train_probe_permutation_invariant(rng):
    X = rng.normal(size=(30, 4))
    y = rng.integers(0, 3, size=30)
    a = train_probe(X, y, 3)
    perm = rng.permutation(30)
    b = train_probe(X[perm], y[perm], 3)
    assert np.allclose(a.weights, b.weights, atol=1e-10)
    assert np.allclose(a.biases, b.biases, atol=1e-10)


def test_train_probe_absent_class_kept():
    model = train_probe([[0.0], [1.0]], [0, 0], 3)
    assert model.weights.shape == (3, 1)
    assert predict_proba(model, [0.5]).shape == (3,)


def test_train_probe_errors():
    with pytest.raises(ValueError):
        train_probe(np.empty((0, 2)), [], 2)
    with pytest.raises(ValueError):
        train_probe([[0.0]], [3], 2)
    with pytest.raises(ValueError):
        ProbeConfig(learning_rate=0)
    with pytest.raises(ValueError):
        ProbeConfig(epochs=0)
    with pytest.raises(ValueError):
        ProbeConfig(l2_penalty=-1)


def test_zero_model_is_uniform():
    p = predict_proba(untrained(4, 3), [1.0, -5.0, 2.0])
    assert np.allclose(p, 0.25)


def _fixed(W, b):
    W = np.atleast_2d(np.asarray(W, dtype=float))
    return ProbeModel(W, np.asarray(b, dtype=float), tuple(range(len(b))),
                      np.zeros(W.shape[1]), np.ones(W.shape[1]))


def test_softmax_stability():
    p = predict_proba(_fixed([[1.0], [0.0]], [0.0, 0.0]), [1000.0])
    assert np.all(np.isfinite(p))
    assert p[0] == pytest.approx(1.0) and p[1] == pytest.approx(0.0, abs=1e-300)


def test_softmax_matches_naive(rng):
    for _ in range(20):
        W = rng.normal(size=(4, 3))
        b = rng.normal(size=4)
        z = rng.normal(size=3)
        logits = W @ z + b
        naive = np.exp(logits) / np.exp(logits).sum()
        assert np.allclose(predict_proba(_fixed(W, b), z), naive, atol=1e-12, rtol=0)


def test_predict_proba_dimension_mismatch():
    with pytest.raises(ValueError, match="dimension"):
        predict_proba(untrained(2, 3), [1.0, 2.0])


@settings(max_examples=60, deadline=None)
@given(
    logits=st.lists(st.floats(-500, 500), min_size=1, max_size=8),
    shift=st.floats(-100, 100),
)
def test_probabilities_valid_and_shift_invariant(logits, shift):
    K = len(logits)
    m = _fixed(np.zeros((K, 1)), logits)
    p = predict_proba(m, [0.0])
    assert np.all((p >= 0) & (p <= 1))
    assert abs(p.sum() - 1) < 1e-9
    q = predict_proba(_fixed(np.zeros((K, 1)), np.array(logits) + shift), [0.0])
    assert np.allclose(p, q, atol=1e-9)


def test_entropy_values():
    assert entropy([1.0, 0.0, 0.0]) == 0.0
    assert entropy([1 / 3] * 3) == pytest.approx(math.log(3))
    assert entropy([0.5, 0.25, 0.25]) == pytest.approx(1.5 * math.log(2))
    assert entropy([0.5, 0.25, 0.25]) == pytest.approx(1.0397, abs=1e-4)


@pytest.mark.parametrize("p", [[0.5, 0.6], [-0.1, 1.1], [0.2, 0.2]])
def test_entropy_rejects_invalid(p):
    with pytest.raises(ValueError):
        entropy(p)


@settings(max_examples=80, deadline=None)
@given(st.lists(st.floats(0, 1e3), min_size=1, max_size=10).filter(lambda v: sum(v) > 0))
def test_entropy_bounds(weights):
    p = np.array(weights) / sum(weights)
    h = entropy(p)
    assert -1e-12 <= h <= math.log(len(p)) + 1e-9


def test_accuracy_values():
    m = _fixed(np.eye(3), np.zeros(3))
    X = np.eye(3)[[0, 1, 2, 0, 1, 2, 0, 1, 2, 0]]
    assert accuracy(m, X, [0, 1, 2, 0, 1, 2, 0, 1, 2, 0]) == 1.0
    assert accuracy(m, X, [0, 1, 2, 0, 1, 2, 0, 2, 0, 1]) == pytest.approx(0.7)
    with pytest.raises(ValueError):
        accuracy(m, np.empty((0, 3)), [])


def test_accuracy_ties_go_to_lowest_class():
    m = untrained(3, 2)
    assert accuracy(m, np.zeros((4, 2)), [0, 0, 0, 0]) == 1.0


def test_random_guess_accuracy(rng):
    n = 3000
    X = rng.normal(size=(n, 6))
    y = np.repeat([0, 1, 2], n // 3)
    m = _fixed(rng.normal(size=(3, 6)), np.zeros(3))
    assert abs(accuracy(m, X, y) - 1 / 3) <= 0.05


def test_dump(tmp_path):
    m = _fixed([[1.0, 2.0], [3.0, 4.0]], [0.5, -0.5])
    m.dump(tmp_path / "m.txt")
    assert (tmp_path / "m.txt").read_text().splitlines() == ["2 2", "1.0 2.0 0.5", "3.0 4.0 -0.5"]
