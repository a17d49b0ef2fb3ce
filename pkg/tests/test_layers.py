import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from cdar.numeric import DimensionError, Rng
from cdar.tnnar import layers as L
from cdar.tnnar.gradcheck import check_layers, check_losses, numeric_grad, rel_error

SEEDS = range(10)


@pytest.mark.parametrize("seed", SEEDS)
def test_layer_gradients(seed):
    errs = check_layers(seed)
    bad = {k: v for k, v in errs.items() if not v < 1e-4}
    assert not bad, bad


@pytest.mark.parametrize("seed", SEEDS)
def test_loss_gradients(seed):
    errs = check_losses(seed)
    bad = {k: v for k, v in errs.items() if not v < 1e-6}
    assert not bad, bad


def test_conv_block_gradient_on_70_step_input():
    r = np.random.default_rng(7)
    x = r.normal(size=(2, 3, 1, 70))
    k = 0.3 * r.normal(size=(4, 8))
    b = 0.1 * r.normal(size=4)
    out, cache = L.conv1d_block(x, k, b, 4, 4)
    R = r.normal(size=out.shape)
    dx, dk, db = L.conv1d_block_backward(R, cache)

    def f():
        return float(np.sum(L.conv1d_block(x, k, b, 4, 4)[0] * R))

    for t, g in ((x, dx), (k, dk), (b, db)):
        num = numeric_grad(f, t, h=1e-5)
        assert np.max(np.abs(num - g) / np.maximum(np.abs(num) + np.abs(g), 1e-8)) < 1e-4


def test_conv_identity_kernel():
    x = np.random.default_rng(0).normal(size=(2, 3, 1, 9))
    k = np.zeros((1, 3))
    k[0, 0] = 1.0
    out, _ = L.conv1d_block(np.abs(x), k, np.zeros(1), 1, 1)
    assert np.array_equal(out[:, :, 0], np.abs(x)[:, :, 0, :7])


def test_conv_all_negative_is_zero():
    x = np.abs(np.random.default_rng(0).normal(size=(2, 3, 1, 12)))
    out, _ = L.conv1d_block(x, -np.ones((2, 4)), np.zeros(2), 2, 2)
    assert np.all(out == 0)


def test_conv_too_short():
    with pytest.raises(DimensionError):
        L.conv_forward(np.ones((1, 1, 1, 3)), np.ones((2, 4)), np.zeros(2))


def test_maxpool_truncates_window():
    x = np.array([[[1.0, 5.0, 2.0]]])
    out, _ = L.maxpool_forward(x, 8, 4)
    assert out.tolist() == [[[5.0]]]
    assert L.pool_output_len(3, 8, 4) == 1
    assert L.pool_output_len(10, 4, 4) == 2


# -------------------------------------------------------------------- LSTM


def test_lstm_zero_weights_single_step():
    h, _ = L.lstm_forward(np.ones((2, 1, 3)), np.zeros((8, 3)), np.zeros((8, 2)), np.zeros(8))
    assert np.all(h == 0)


def test_lstm_gradient_spec_shape():
    r = np.random.default_rng(11)
    N, T, D, H = 2, 5, 4, 6
    x = r.normal(size=(N, T, D))
    W, U, b = 0.4 * r.normal(size=(4 * H, D)), 0.4 * r.normal(size=(4 * H, H)), r.normal(size=4 * H)
    R = r.normal(size=(N, H))
    _, cache = L.lstm_forward(x, W, U, b)
    grads = L.lstm_backward(R, cache)

    def f():
        return float(np.sum(L.lstm_forward(x, W, U, b)[0] * R))

    for t, g in zip((x, W, U, b), grads):
        num = numeric_grad(f, t, h=1e-5)
        assert np.max(np.abs(num - g) / np.maximum(np.abs(num) + np.abs(g), 1e-8)) < 1e-4


def test_lstm_inert_prefix_steps():
    # an extra input feature set to 1 on padding steps drives the input and
    # output gates shut, so the state stays at zero through the padding
    r = np.random.default_rng(3)
    N, T, D, H = 2, 4, 3, 5
    x = r.normal(size=(N, T, D))
    W = r.normal(size=(4 * H, D + 1)) * 0.5
    W[:, D] = 0.0
    W[0:H, D] = -60.0  # input gate
    W[3 * H:, D] = -60.0  # output gate
    U, b = 0.5 * r.normal(size=(4 * H, H)), 0.1 * r.normal(size=4 * H)
    real = np.concatenate([x, np.zeros((N, T, 1))], axis=2)
    pad = np.concatenate([np.zeros((N, T, D)), np.ones((N, T, 1))], axis=2)
    h1, _ = L.lstm_forward(real, W, U, b)
    h2, _ = L.lstm_forward(np.concatenate([pad, real], axis=1), W, U, b)
    assert np.max(np.abs(h1 - h2)) < 1e-6


# ------------------------------------------------------------ dense & co


def test_softmax_basics():
    assert np.allclose(L.softmax(np.zeros((1, 4))), 0.25, atol=0)
    z = np.random.default_rng(0).normal(size=(5, 6))
    p = L.softmax(z)
    assert np.all(np.abs(p.sum(axis=1) - 1) < 1e-12)
    assert np.all((p > 0) & (p < 1))
    assert np.max(np.abs(L.softmax(z + 123.0) - p)) < 1e-12


@given(arrays(np.float64, (3, 5), elements=st.floats(-1e300, 1e300)))
def test_softmax_is_probability_vector(z):
    p = L.softmax(z)
    assert np.all(np.isfinite(p)) and np.all(p >= 0)
    assert np.all(np.abs(p.sum(axis=1) - 1) < 1e-12)


def test_dense_activations():
    h = np.array([[1.0, -2.0]])
    W = np.eye(2)
    assert L.dense(h, W, np.zeros(2), "relu").tolist() == [[1.0, 0.0]]
    assert L.dense(h, W, np.zeros(2)).tolist() == [[1.0, -2.0]]
    with pytest.raises(DimensionError):
        L.dense(np.ones((1, 3)), W, np.zeros(2))
    with pytest.raises(ValueError):
        L.dense(h, W, np.zeros(2), "tanh")


def test_dropout_modes():
    h = np.random.default_rng(0).normal(size=(4, 5))
    assert np.array_equal(L.dropout(h, 1.0, Rng(0))[0], h)
    assert np.array_equal(L.dropout(h, 0.5, Rng(0), train=False)[0], h)
    assert np.array_equal(L.dropout(h, 0.5, None, train=False)[1], np.ones_like(h))
    with pytest.raises(ValueError):
        L.dropout(h, 0.0, Rng(0))
    out, mask = L.dropout(h, 0.8, Rng(1))
    assert set(np.unique(mask)) <= {0.0, 1.25}


def test_dropout_expectation():
    h = np.linspace(0.5, 2.0, 20)[None, :]
    rng = Rng(2)
    total = np.zeros_like(h)
    n = 10_000
    for _ in range(n):
        total += L.dropout(h, 0.8, rng)[0]
    assert np.max(np.abs(total / n / h - 1)) < 0.02


def test_cross_entropy_values():
    probs = np.array([[1.0, 0.0, 0.0]])
    assert L.cross_entropy_loss(probs, [0])[0] == 0.0
    loss, _ = L.cross_entropy_loss(np.full((2, 5), 0.2), [1, 3])
    assert loss == pytest.approx(math.log(5), abs=1e-12)
    with pytest.raises(ValueError):
        L.cross_entropy_loss(np.full((1, 3), 1 / 3), [3])


def test_adaptation_loss_values():
    r = np.random.default_rng(0)
    hs = r.normal(size=(6, 4))
    loss, gs, gt = L.adaptation_loss(hs, hs.copy())
    assert loss == 0.0 and not gs.any() and not gt.any()
    v = np.array([1.0, -2.0, 0.5, 0.0])
    assert L.adaptation_loss(hs, hs + v)[0] == pytest.approx(v @ v, abs=1e-12)
    with pytest.raises(DimensionError):
        L.adaptation_loss(hs, np.ones((3, 5)))


def test_rel_error_helper():
    a = np.array([1.0, 2.0])
    assert rel_error(a, a) == 0.0
    assert rel_error(np.zeros(2), np.zeros(2)) == 0.0
