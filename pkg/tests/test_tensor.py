import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vdsr.errors import ShapeError
from vdsr.tensor import (ConvParams, add, conv2d_backward, conv2d_forward, relu_backward,
                         relu_forward)

from oracles import central_diff, conv2d_loops


def random_params(rng, co, ci, dtype=np.float64):
    return ConvParams(rng.standard_normal((co, ci, 3, 3)).astype(dtype),
                      rng.standard_normal(co).astype(dtype))


def test_zero_input_gives_bias():
    params = ConvParams(np.random.default_rng(0).standard_normal((2, 1, 3, 3)), np.array([0.5, -2.0]))
    out = conv2d_forward(np.zeros((1, 1, 3, 3)), params)
    assert out.shape == (1, 2, 3, 3)
    assert np.all(out[0, 0] == 0.5) and np.all(out[0, 1] == -2.0)


def test_delta_kernel_is_identity():
    w = np.zeros((1, 1, 3, 3))
    w[0, 0, 1, 1] = 1.0
    x = np.random.default_rng(1).standard_normal((2, 1, 5, 4))
    np.testing.assert_array_equal(conv2d_forward(x, ConvParams(w, np.zeros(1))), x)


def test_random_case_matches_loops():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((1, 2, 4, 4))
    params = random_params(rng, 3, 2)
    np.testing.assert_allclose(conv2d_forward(x, params), conv2d_loops(x, params.weight, params.bias),
                               rtol=0, atol=1e-12)


def test_channel_mismatch_rejected():
    params = random_params(np.random.default_rng(0), 2, 3)
    with pytest.raises(ShapeError):
        conv2d_forward(np.zeros((1, 2, 4, 4)), params)
    with pytest.raises(ShapeError):
        conv2d_backward(np.zeros((1, 3, 4, 4)), np.zeros((1, 3, 4, 4)), params)


def test_conv_params_require_3x3():
    with pytest.raises(ShapeError):
        ConvParams(np.zeros((1, 1, 5, 5)), np.zeros(1))


@given(n=st.integers(1, 3), ci=st.integers(1, 3), co=st.integers(1, 3),
       h=st.integers(1, 6), w=st.integers(1, 6), seed=st.integers(0, 2**32 - 1))
@settings(max_examples=60, deadline=None)
def test_conv_matches_oracle_and_keeps_size(n, ci, co, h, w, seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, ci, h, w))
    params = random_params(rng, co, ci)
    out = conv2d_forward(x, params)
    assert out.shape == (n, co, h, w)
    np.testing.assert_allclose(out, conv2d_loops(x, params.weight, params.bias), rtol=0, atol=1e-12)


def test_conv_linearity():
    rng = np.random.default_rng(3)
    params = random_params(rng, 3, 2)
    params.bias[:] = 0
    x1, x2 = rng.standard_normal((2, 2, 2, 5, 5))
    lhs = conv2d_forward(0.3 * x1 - 1.7 * x2, params)
    rhs = 0.3 * conv2d_forward(x1, params) - 1.7 * conv2d_forward(x2, params)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_backward_zero_upstream():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((2, 2, 4, 3))
    params = random_params(rng, 3, 2)
    gx, gw, gb = conv2d_backward(np.zeros((2, 3, 4, 3)), x, params)
    assert not gx.any() and not gw.any() and not gb.any()
    assert gx.shape == x.shape and gw.shape == params.weight.shape and gb.shape == params.bias.shape


def test_backward_delta_kernel_single_pixel():
    w = np.zeros((1, 1, 3, 3))
    w[0, 0, 1, 1] = 1.0
    g = np.zeros((1, 1, 5, 5))
    g[0, 0, 2, 3] = 1.0
    gx, _, _ = conv2d_backward(g, np.zeros((1, 1, 5, 5)), ConvParams(w, np.zeros(1)))
    np.testing.assert_array_equal(gx, g)


def _fd_relerr(analytic, numeric):
    return np.max(np.abs(analytic - numeric)) / max(np.max(np.abs(numeric)), 1e-30)


@pytest.mark.parametrize("seed", range(20))
def test_backward_matches_finite_differences_float64(seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((2, 2, 4, 5))
    params = random_params(rng, 3, 2)
    probe = rng.standard_normal((2, 3, 4, 5))

    def loss():
        return float(np.sum(probe * conv2d_forward(x, params)))

    gx, gw, gb = conv2d_backward(probe, x, params)
    assert _fd_relerr(gx, central_diff(loss, x)) < 1e-5
    assert _fd_relerr(gw, central_diff(loss, params.weight)) < 1e-5
    assert _fd_relerr(gb, central_diff(loss, params.bias)) < 1e-5


@pytest.mark.parametrize("seed", range(20))
def test_backward_matches_finite_differences_float32(seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((1, 2, 4, 4)).astype(np.float32)
    params = random_params(rng, 2, 2, np.float32)
    probe = rng.standard_normal((1, 2, 4, 4)).astype(np.float32)

    def loss():
        return float(np.sum(probe.astype(np.float64) * conv2d_forward(x, params)))

    gx, gw, gb = conv2d_backward(probe, x, params)
    assert _fd_relerr(gx, central_diff(loss, x, step=1e-2)) < 1e-2
    assert _fd_relerr(gw, central_diff(loss, params.weight, step=1e-2)) < 1e-2


def test_relu_forward_examples():
    np.testing.assert_array_equal(relu_forward(np.array([-1.0, 0.0, 2.0])), [0, 0, 2])
    assert not relu_forward(-np.random.default_rng(0).random(10) - 0.1).any()


@given(st.lists(st.floats(-10, 10), min_size=1, max_size=30))
def test_relu_nonnegative_and_nonzero_iff_positive(values):
    x = np.array(values)
    out = relu_forward(x)
    assert np.all(out >= 0)
    assert out.any() == (x > 0).any()


def test_relu_backward():
    g = np.random.default_rng(0).standard_normal(8)
    np.testing.assert_array_equal(relu_backward(g, np.ones(8)), g)
    assert not relu_backward(g, -np.ones(8)).any()
    assert relu_backward(np.ones(1), np.zeros(1))[0] == 0
    with pytest.raises(ShapeError):
        relu_backward(np.ones(3), np.ones(4))


def test_relu_backward_matches_finite_differences_away_from_kink():
    rng = np.random.default_rng(5)
    x = rng.standard_normal(50)
    x[np.abs(x) < 0.01] += 0.05
    probe = rng.standard_normal(50)
    numeric = central_diff(lambda: float(np.sum(probe * relu_forward(x))), x)
    np.testing.assert_allclose(relu_backward(probe, x), numeric, atol=1e-8)


def test_add():
    rng = np.random.default_rng(6)
    a, b = rng.standard_normal((2, 1, 2, 3, 3))
    np.testing.assert_array_equal(add(a, np.zeros_like(a)), a)
    np.testing.assert_allclose(add(a, b - a), b, atol=1e-15)
    ref = np.array([x + y for x, y in zip(a.ravel().tolist(), b.ravel().tolist())]).reshape(a.shape)
    np.testing.assert_array_equal(add(a, b), ref)
    with pytest.raises(ShapeError):
        add(a, b[..., :2])
