import numpy as np
import pytest
from hypothesis import given, strategies as st

from cdar.numeric import (DimensionError, NonFiniteError, Rng, check_finite, flat_index, matmul,
                          reduce_mean, rng_normal)


def test_matmul_identity_and_dot():
    assert np.array_equal(matmul([[1, 0], [0, 1]], [[3, 4], [5, 6]]), [[3, 4], [5, 6]])
    assert matmul([[1, 2]], [[3], [4]])[0, 0] == 11


def test_matmul_matches_triple_loop():
    r = np.random.default_rng(0)
    a, b = r.normal(size=(7, 5)), r.normal(size=(5, 3))
    ref = np.zeros((7, 3))
    for i in range(7):
        for j in range(3):
            for k in range(5):
                ref[i, j] += a[i, k] * b[k, j]
    assert np.max(np.abs(matmul(a, b) - ref)) < 1e-12


def test_matmul_reports_both_shapes():
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
        matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_reduce_mean():
    assert np.array_equal(reduce_mean(np.array([[1.0, 3], [5, 7]]), 0), [3, 5])
    assert np.all(reduce_mean(np.full((4, 3), 2.5), 1) == 2.5)
    x = rng_normal(Rng(1), (10000,))
    assert abs(reduce_mean(x, 0)) < 0.05


def test_reduce_mean_errors():
    with pytest.raises(DimensionError):
        reduce_mean(np.zeros((0, 3)), 0)
    with pytest.raises(DimensionError):
        reduce_mean(np.zeros((2, 3)), 2)


def test_check_finite():
    with pytest.raises(NonFiniteError):
        check_finite(np.array([1.0, np.nan]))


def test_rng_normal_contract():
    assert np.all(rng_normal(Rng(3), (5, 4), mean=1.5, stddev=0.0) == 1.5)
    assert np.array_equal(rng_normal(Rng(3), (50,)), rng_normal(Rng(3), (50,)))
    x = rng_normal(Rng(4), (100_000,), stddev=2.0)
    assert abs(x.var() / 4.0 - 1) < 0.05
    with pytest.raises(ValueError):
        rng_normal(Rng(0), (3,), stddev=-1.0)


def test_rng_long_stream_reproducible():
    a = Rng(123).uniform((1_000_000,))
    b = Rng(123).uniform((1_000_000,))
    assert np.array_equal(a, b)


def test_forks_are_independent_and_stable():
    root = Rng(9)
    x = root.fork("init").normal((100,))
    # drawing from the parent does not disturb a named child
    root.normal((1000,))
    assert np.array_equal(x, Rng(9).fork("init").normal((100,)))
    assert not np.array_equal(x, Rng(9).fork("dropout").normal((100,)))
    assert not np.array_equal(x, Rng(10).fork("init").normal((100,)))


@given(st.integers(1, 40), st.integers(1, 40), st.data())
def test_flat_index_round_trip(rows, cols, data):
    i = data.draw(st.integers(0, rows - 1))
    j = data.draw(st.integers(0, cols - 1))
    a = np.arange(rows * cols, dtype=float).reshape(rows, cols)
    k = flat_index(i, j, cols)
    assert k == i * cols + j
    assert a.ravel()[k] == a[i, j]
    assert np.unravel_index(k, a.shape) == (i, j)


@given(st.integers(1, 6), st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**32))
def test_matmul_property(m, k, n, seed):
    r = np.random.default_rng(seed)
    a, b = r.normal(size=(m, k)), r.normal(size=(k, n))
    assert np.allclose(matmul(a, b), a @ b, atol=1e-12)
