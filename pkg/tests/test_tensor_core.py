import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from drpnn.tensor_core import (
    ConfigurationError,
    ConvKernel,
    add,
    conv2d_backward,
    conv2d_forward,
    relu_backward,
    relu_forward,
)
from oracles import central_difference, conv2d_bruteforce


def random_kernel(rng, c_out, c_in, k, dtype=np.float64):
    return ConvKernel(rng.standard_normal((c_out, c_in, k, k)).astype(dtype),
                      rng.standard_normal(c_out).astype(dtype))


def test_identity_kernel():
    x = np.arange(9, dtype=np.float32).reshape(1, 1, 3, 3)
    k = ConvKernel(np.ones((1, 1, 1, 1), np.float32), np.zeros(1, np.float32))
    np.testing.assert_array_equal(conv2d_forward(x, k), x)


def test_zero_weights_give_bias():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((2, 3, 5, 4))
    k = ConvKernel(np.zeros((4, 3, 3, 3)), np.array([1.0, -2.0, 0.5, 3.0]))
    out = conv2d_forward(x, k)
    for o in range(4):
        assert np.all(out[:, o] == k.bias[o])


def test_matches_bruteforce():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((2, 3, 5, 5))
    k = random_kernel(rng, 4, 3, 3)
    np.testing.assert_allclose(conv2d_forward(x, k), conv2d_bruteforce(x, k.weights, k.bias), rtol=1e-6, atol=1e-12)


def test_float32_stays_float32():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((1, 2, 4, 4)).astype(np.float32)
    k = random_kernel(rng, 3, 2, 3, np.float32)
    assert conv2d_forward(x, k).dtype == np.float32
    gi, gw, gb = conv2d_backward(x, k, np.ones((1, 3, 4, 4), np.float32))
    assert gi.dtype == gw.dtype == gb.dtype == np.float32


def test_rectangular_kernel():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((1, 2, 6, 5))
    k = ConvKernel(rng.standard_normal((2, 2, 3, 5)), rng.standard_normal(2))
    np.testing.assert_allclose(conv2d_forward(x, k), conv2d_bruteforce(x, k.weights, k.bias), rtol=1e-10)


def test_configuration_errors():
    with pytest.raises(ConfigurationError):
        ConvKernel(np.zeros((1, 1, 2, 2)), np.zeros(1))
    k = ConvKernel(np.zeros((1, 2, 3, 3)), np.zeros(1))
    with pytest.raises(ConfigurationError):
        conv2d_forward(np.zeros((1, 3, 4, 4)), k)
    with pytest.raises(ConfigurationError):
        conv2d_forward(np.zeros((3, 4, 4)), k)
    with pytest.raises(ConfigurationError):
        conv2d_backward(np.zeros((1, 2, 4, 4)), k, np.zeros((1, 1, 4, 5)))


def test_backward_zero_upstream():
    rng = np.random.default_rng(5)
    x = rng.standard_normal((2, 3, 4, 4))
    k = random_kernel(rng, 2, 3, 3)
    gi, gw, gb = conv2d_backward(x, k, np.zeros((2, 2, 4, 4)))
    assert not gi.any() and not gw.any() and not gb.any()


def test_backward_scalar_chain_rule():
    a, w, g = 1.5, -0.75, 2.0
    k = ConvKernel(np.full((1, 1, 1, 1), w), np.zeros(1))
    gi, gw, gb = conv2d_backward(np.full((1, 1, 1, 1), a), k, np.full((1, 1, 1, 1), g))
    assert gw.item() == a * g
    assert gb.item() == g
    assert gi.item() == w * g


def test_backward_finite_differences():
    rng = np.random.default_rng(6)
    x = rng.standard_normal((2, 2, 4, 5))
    k = random_kernel(rng, 3, 2, 3)
    probe = rng.standard_normal((2, 3, 4, 5))

    def loss():
        return float(np.sum(probe * conv2d_forward(x, k)))

    gi, gw, gb = conv2d_backward(x, k, probe)
    for analytic, arr in ((gi, x), (gw, k.weights), (gb, k.bias)):
        numeric = central_difference(loss, arr, step=1e-5)
        np.testing.assert_allclose(analytic, numeric, rtol=1e-6, atol=1e-8)


def test_relu():
    x = np.array([-1.0, 0.0, 2.0]).reshape(1, 1, 1, 3)
    np.testing.assert_array_equal(relu_forward(x).ravel(), [0, 0, 2])
    pos = np.abs(x) + 1
    np.testing.assert_array_equal(relu_forward(pos), pos)
    assert not relu_forward(-pos).any()
    g = np.ones_like(x)
    np.testing.assert_array_equal(relu_backward(x, g).ravel(), [0, 0, 1])
    np.testing.assert_array_equal(relu_backward(pos, g), g)
    assert not relu_backward(-pos, g).any()
    with pytest.raises(ConfigurationError):
        relu_backward(x, np.ones((1, 1, 1, 2)))


def test_add():
    a = np.array([1.0, 2.0]).reshape(1, 1, 1, 2)
    np.testing.assert_array_equal(add(a, np.array([3.0, 4.0]).reshape(1, 1, 1, 2)).ravel(), [4, 6])
    np.testing.assert_array_equal(add(a, np.zeros_like(a)), a)
    assert not add(a, -a).any()
    with pytest.raises(ConfigurationError):
        add(a, np.zeros((1, 1, 2, 1)))


dims = st.tuples(st.integers(1, 2), st.integers(1, 4), st.integers(1, 8), st.integers(1, 8))


@settings(max_examples=40, deadline=None)
@given(dims=dims, c_out=st.integers(1, 4), k=st.sampled_from([1, 3, 5]), seed=st.integers(0, 2**31))
def test_forward_bruteforce_property(dims, c_out, k, seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(dims)
    kern = random_kernel(rng, c_out, dims[1], k)
    np.testing.assert_allclose(conv2d_forward(x, kern), conv2d_bruteforce(x, kern.weights, kern.bias),
                               rtol=1e-6, atol=1e-10)


@settings(max_examples=30, deadline=None)
@given(dims=dims, c_out=st.integers(1, 4), k=st.sampled_from([1, 3, 5]), seed=st.integers(0, 2**31))
def test_linearity_and_adjoint(dims, c_out, k, seed):
    rng = np.random.default_rng(seed)
    x, y, dx = (rng.standard_normal(dims) for _ in range(3))
    kern = ConvKernel(rng.standard_normal((c_out, dims[1], k, k)), np.zeros(c_out))
    a, b = rng.standard_normal(2)
    lhs = conv2d_forward(a * x + b * y, kern)
    rhs = a * conv2d_forward(x, kern) + b * conv2d_forward(y, kern)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-5, atol=1e-9)

    gout = rng.standard_normal((dims[0], c_out, dims[2], dims[3]))
    gi, _, _ = conv2d_backward(x, kern, gout)
    left = np.vdot(gout, conv2d_forward(dx, kern))
    right = np.vdot(gi, dx)
    assert abs(left - right) <= 1e-8 * max(abs(left), abs(right), 1e-300) + 1e-12


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_relu_idempotent(seed):
    x = np.random.default_rng(seed).standard_normal((2, 3, 4, 4))
    np.testing.assert_array_equal(relu_forward(relu_forward(x)), relu_forward(x))


def test_chunked_batches_match(monkeypatch):
    import drpnn.tensor_core as tc

    rng = np.random.default_rng(7)
    x = rng.standard_normal((5, 3, 6, 6))
    kern = random_kernel(rng, 2, 3, 3)
    gout = rng.standard_normal((5, 2, 6, 6))
    full = conv2d_forward(x, kern), *conv2d_backward(x, kern, gout)
    monkeypatch.setattr(tc, "_IM2COL_LIMIT", 3 * 9 * 36 * 2)
    chunked = conv2d_forward(x, kern), *conv2d_backward(x, kern, gout)
    for a, b in zip(full, chunked):
        np.testing.assert_allclose(a, b, rtol=1e-12)
