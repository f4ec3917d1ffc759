import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from eagps import autodiff as ad
from eagps.errors import GradCheckInvalid, NonFiniteError
from eagps.numerics import (ParamStore, adam_step, dropout_mask, finite_diff_grad_check, l2_normalize_rows,
                            layer_norm, softmax_rows, xavier_init)

finite = st.floats(-50, 50, allow_nan=False)
matrices = arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 5)), elements=finite)


def test_xavier_bounds_and_determinism():
    w = xavier_init(4, 2, seed=3)
    assert np.all(np.abs(w) <= 1.0)
    np.testing.assert_array_equal(w, xavier_init(4, 2, seed=3))


def test_xavier_variance():
    w = xavier_init(1000, 1000, seed=0)
    bound = math.sqrt(6 / 2000)
    expected = (2 * bound) ** 2 / 12
    assert abs(w.var() - expected) / expected < 0.1
    assert abs(expected - 2 / 2000) < 1e-15


def _scalar_store(value=0.0):
    store = ParamStore()
    store.add("theta", np.array([[value]]))
    return store


def test_adam_zero_gradient_no_move():
    store = _scalar_store(1.5)
    adam_step(store, lr=0.1)
    assert store["theta"][0, 0] == 1.5


def test_adam_first_step_is_minus_lr():
    store = _scalar_store()
    store.grads["theta"][...] = 1.0
    adam_step(store, lr=1e-3, t=1)
    # m_hat = 1, v_hat = 1, so the step is lr / (1 + eps)
    assert store["theta"][0, 0] == pytest.approx(-1e-3 / (1 + 1e-8), rel=1e-12)
    assert store.grads["theta"][0, 0] == 0.0


def test_adam_matches_scalar_simulation_and_drifts_monotonically():
    store = _scalar_store()
    lr, b1, b2, eps = 0.01, 0.9, 0.999, 1e-8
    theta = m = v = 0.0
    trail = []
    for t in range(1, 101):
        store.grads["theta"][...] = 0.5
        adam_step(store, lr)
        m = b1 * m + (1 - b1) * 0.5
        v = b2 * v + (1 - b2) * 0.25
        theta -= lr * (m / (1 - b1 ** t)) / (math.sqrt(v / (1 - b2 ** t)) + eps)
        trail.append(store["theta"][0, 0])
    assert store["theta"][0, 0] == pytest.approx(theta, rel=1e-12)
    assert all(b < a for a, b in zip(trail, trail[1:]))


def test_adam_non_finite_names_parameter():
    store = _scalar_store()
    store.add("other", np.zeros((2, 2)))
    store.grads["other"][0, 1] = np.nan
    with pytest.raises(NonFiniteError, match="other"):
        adam_step(store, lr=0.1)


def test_l2_examples():
    out = l2_normalize_rows(np.array([[3.0, 4.0], [0.0, 0.0]]))
    np.testing.assert_allclose(out, [[0.6, 0.8], [0.0, 0.0]])


@given(matrices)
def test_l2_row_norms_and_idempotence(x):
    out = l2_normalize_rows(x)
    norms = np.linalg.norm(out, axis=1)
    assert np.all((np.abs(norms) < 1e-12) | (np.abs(norms - 1) < 1e-12))
    np.testing.assert_allclose(l2_normalize_rows(out), out, atol=1e-12)


def test_softmax_examples():
    np.testing.assert_allclose(softmax_rows(np.array([[0.0, 0.0]])), [[0.5, 0.5]])
    big = softmax_rows(np.array([[1000.0, 0.0]]))
    assert np.all(np.isfinite(big)) and big[0, 0] == 1.0


@given(matrices, st.floats(-100, 100))
def test_softmax_sums_to_one_and_shift_invariant(x, c):
    p = softmax_rows(x)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(softmax_rows(x + c), p, atol=1e-12)


def test_layer_norm_examples():
    ones, zeros = np.ones((1, 2)), np.zeros((1, 2))
    np.testing.assert_array_equal(layer_norm(np.array([[5.0, 5.0]]), ones, zeros), [[0.0, 0.0]])
    np.testing.assert_allclose(layer_norm(np.array([[1.0, -1.0]]), ones, zeros), [[1.0, -1.0]], atol=1e-5)


@given(arrays(np.float64, (4, 5), elements=finite), st.floats(-3, 3), st.floats(0.5, 2))
def test_layer_norm_row_mean_equals_bias(x, b, g):
    out = layer_norm(x, np.full((1, 5), g), np.full((1, 5), b))
    np.testing.assert_allclose(out.mean(axis=1), b, atol=1e-9)


def test_dropout_modes():
    assert np.all(dropout_mask((3, 3), 0.0, seed=0) == 1.0)
    assert np.all(dropout_mask((3, 3), 0.5, seed=0, training=False) == 1.0)


def test_dropout_keep_fraction():
    mask = dropout_mask((100, 1000), 0.1, seed=11)
    assert abs((mask > 0).mean() - 0.9) < 0.01
    assert set(np.unique(mask)) <= {0.0, 1 / 0.9}


def _quadratic(store):
    v = store.var("theta")
    return ad.mul(ad.sum(ad.mul(v, v)), 0.5)


def test_grad_check_quadratic():
    store = ParamStore()
    store.add("theta", np.random.default_rng(0).normal(size=(6, 7)))
    report = finite_diff_grad_check(_quadratic, store)
    assert report.n_checked["theta"] == 32
    assert report.max_rel_err["theta"] < 1e-9 and report.passed


def test_grad_check_detects_nondeterminism():
    store = _scalar_store(1.0)
    calls = iter(range(100))
    with pytest.raises(GradCheckInvalid):
        finite_diff_grad_check(lambda s: ad.add(_quadratic(s), float(next(calls))), store)


def test_grad_check_catches_wrong_gradient():
    store = ParamStore()
    store.add("theta", np.ones((2, 2)))
    report = finite_diff_grad_check(_quadratic, store, grad_hook=lambda name, g: 2 * g)
    assert not report.passed and report.worst[0] == "theta"


def test_param_store_rejects_duplicates():
    store = _scalar_store()
    with pytest.raises(KeyError):
        store.add("theta", np.zeros((1, 1)))
