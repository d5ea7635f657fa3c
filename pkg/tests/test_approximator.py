import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mpsim.approximator import (
    NonFiniteError, QFunction, WeightFileError, gradient_check, load_weights, relative_errors, save_weights,
    train_mse,
)
from mpsim.environment import N_ACTIONS, OBS_BASE_DIM, OBS_ID_DIM

SHAPES = [[d, 64, 64, int(k)] for d in (OBS_BASE_DIM, OBS_ID_DIM) for k in sorted(set(N_ACTIONS.tolist()))]


def _sample(q, n, seed):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(n, q.n_in)), rng.integers(0, q.n_out, n), rng.normal(size=n)


def test_zero_network_outputs_zero():
    q = QFunction([9, 64, 64, 24], zero=True)
    x = np.random.default_rng(0).normal(size=(5, 9))
    assert (q(x) == 0).all() and (q.infer(x) == 0).all()


def test_batch_equals_rows():
    q = QFunction([9, 16, 4], np.random.default_rng(1))
    x = np.random.default_rng(2).normal(size=(7, 9))
    batch = q(x)
    for i in range(7):
        np.testing.assert_allclose(q(x[i]), batch[i], rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(q.infer(x), batch, rtol=1e-5, atol=1e-5)


def test_hand_computed_network():
    q = QFunction([2, 2, 2], zero=True)
    q.W[0][...] = [[1.0, -1.0], [2.0, 0.5]]
    q.b[0][...] = [0.5, -3.0]
    q.W[1][...] = [[1.0, 2.0], [-1.0, 3.0]]
    q.b[1][...] = [0.1, 0.2]
    # x = (1, 2): hidden pre = (1 + 4 + 0.5, -1 + 1 - 3) = (5.5, -3) -> relu (5.5, 0)
    # out = (5.5 + 0.1, 11 + 0.2)
    np.testing.assert_allclose(q([1.0, 2.0]), [5.6, 11.2], rtol=0, atol=1e-14)


def test_dimension_mismatch():
    q = QFunction([9, 8, 2])
    with pytest.raises(ValueError, match="dimension"):
        q(np.zeros(13))


def test_targets_equal_outputs_leave_parameters():
    q = QFunction([5, 8, 3], np.random.default_rng(3))
    x, a, _ = _sample(q, 10, 4)
    y = q(x)[np.arange(10), a]
    before = q.flat().copy()
    loss = train_mse(q, x, a, y, 0.01)
    assert loss == 0.0
    np.testing.assert_array_equal(q.flat(), before)


def test_linear_model_adam_step():
    """Single sample, no hidden layer: first Adam step moves each parameter by -lr * g / (|g| + eps)."""
    q = QFunction([3, 2], np.random.default_rng(5))
    x = np.array([[0.5, -1.0, 2.0]])
    a = np.array([1])
    y = np.array([0.7])
    w0, b0 = q.W[0].copy(), q.b[0].copy()
    pred = x[0] @ w0[:, 1] + b0[1]
    g_w = np.zeros_like(w0)
    g_w[:, 1] = 2 * (pred - y[0]) * x[0]
    g_b = np.array([0.0, 2 * (pred - y[0])])
    lr = 0.05
    train_mse(q, x, a, y, lr)
    # bias-corrected first step: m_hat = g, v_hat = g^2
    np.testing.assert_allclose(q.W[0], w0 - lr * g_w / (np.abs(g_w) + 1e-8), rtol=0, atol=1e-15)
    np.testing.assert_allclose(q.b[0], b0 - lr * g_b / (np.abs(g_b) + 1e-8), rtol=0, atol=1e-15)


def test_memorisation():
    q = QFunction([4, 16, 3], np.random.default_rng(6))
    x = np.array([[0.1, 0.2, -0.3, 1.0]])
    for _ in range(3000):
        loss = train_mse(q, x, [2], [1.5], 0.01)
    assert q.loss(x, [2], [1.5]) < 1e-6 and loss < 1e-4


@pytest.mark.parametrize("sizes", SHAPES, ids=lambda s: "x".join(map(str, s)))
def test_gradient_check_used_shapes(sizes):
    q = QFunction(sizes, np.random.default_rng(sum(sizes)))
    assert gradient_check(q, _sample(q, 6, 7)) < 1e-4


@settings(max_examples=20, deadline=None)
@given(st.lists(st.integers(1, 6), min_size=2, max_size=4), st.integers(0, 1000))
def test_gradient_check_random_networks(sizes, seed):
    rng = np.random.default_rng(seed)
    q = QFunction(sizes, rng)
    for b in q.b:  # move pre-activations off the ReLU kink at exactly zero
        b[...] = rng.normal(size=b.shape)
    assert gradient_check(q, _sample(q, 4, seed)) < 1e-4


def test_gradient_zero_network_zero_input():
    q = QFunction([4, 5, 3], zero=True)
    sample = (np.zeros((2, 4)), np.array([0, 2]), np.zeros(2))
    _, grads = q.gradients(*sample)
    assert all((g == 0).all() for g in grads)
    assert gradient_check(q, sample) == 0.0


def test_relative_error_helper():
    assert relative_errors([1.0], [1.0 + 1e-6])[0] == pytest.approx(1e-6, rel=1e-3)
    assert relative_errors([0.0], [1e-9])[0] == 1e-9


def test_weights_round_trip(tmp_path):
    q = QFunction([13, 64, 64, 24], np.random.default_rng(8), input_scale=np.linspace(0.1, 1, 13))
    save_weights(q, tmp_path / "w.qnet")
    back = load_weights(tmp_path / "w.qnet", n_in=13, n_out=24)
    x = np.random.default_rng(9).normal(size=(50, 13))
    assert np.array_equal(q(x), back(x))
    assert np.array_equal(q.input_scale, back.input_scale)


def test_weights_wrong_size_and_corruption(tmp_path):
    q = QFunction([9, 8, 24], np.random.default_rng(10))
    p = tmp_path / "w.qnet"
    save_weights(q, p)
    with pytest.raises(WeightFileError, match="outputs"):
        load_weights(p, n_out=2)
    with pytest.raises(WeightFileError, match="inputs"):
        load_weights(p, n_in=13)
    data = bytearray(p.read_bytes())
    data[40] ^= 0xFF
    p.write_bytes(bytes(data))
    with pytest.raises(WeightFileError, match="checksum"):
        load_weights(p)
    p.write_bytes(b"not a weight file at all")
    with pytest.raises(WeightFileError):
        load_weights(p)


def test_non_finite_guards():
    q = QFunction([3, 4, 2], np.random.default_rng(11))
    x = np.ones((2, 3))
    with pytest.raises(NonFiniteError):
        train_mse(q, x, [0, 1], [np.nan, 0.0], 0.01)
    q.W[0][0, 0] = np.inf
    with pytest.raises(NonFiniteError):
        q.assert_finite()


def test_training_is_deterministic():
    def run():
        q = QFunction([6, 10, 3], np.random.default_rng(12))
        x, a, y = _sample(q, 32, 13)
        for _ in range(20):
            train_mse(q, x, a, y, 0.01)
        return q.flat()
    assert np.array_equal(run(), run())
