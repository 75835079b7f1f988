import numpy as np
import pytest

from drpnn.model import (
    CheckpointError,
    NetworkSpec,
    backward,
    forward,
    init_network,
    load_checkpoint,
    save_checkpoint,
)
from drpnn.tensor_core import ConfigurationError, ConvKernel
from oracles import central_difference, conv2d_bruteforce


def zero_body(params):
    for k in params.layers[:-1]:
        k.weights[...] = 0
        k.bias[...] = 0
    return params


def identity_last(params, bands):
    k = params.layers[-1]
    k.weights[...] = 0
    k.bias[...] = 0
    kh, kw = k.weights.shape[2:]
    for s in range(bands):
        k.weights[s, s, kh // 2, kw // 2] = 1
    return params


def test_init_deterministic():
    spec = NetworkSpec(bands=4, layers=4, hidden_channels=8, filter_size=3)
    a, b = init_network(spec, 7), init_network(spec, 7)
    for x, y in zip(a.arrays(), b.arrays()):
        assert x.tobytes() == y.tobytes()
    c = init_network(spec, 8)
    assert a.layers[0].weights.tobytes() != c.layers[0].weights.tobytes()


def test_default_shapes():
    spec = NetworkSpec(bands=4)
    shapes = spec.layer_shapes()
    assert len(shapes) == 11
    assert shapes[0] == (64, 5, 7, 7)
    assert shapes[1:9] == [(64, 64, 7, 7)] * 8
    # layer L-1 feeds the skip sum, so it must emit S+1 bands
    assert shapes[9] == (5, 64, 7, 7)
    assert shapes[10] == (4, 5, 7, 7)
    expected = (64 * 5 * 49 + 64) + 8 * (64 * 64 * 49 + 64) + (5 * 64 * 49 + 5) + (4 * 5 * 49 + 4)
    assert spec.parameter_count() == expected == 1638557


def test_init_statistics():
    spec = NetworkSpec(bands=4, layers=3, hidden_channels=512, filter_size=7)
    w = init_network(spec, 0, dtype=np.float64).layers[0].weights
    assert w.size >= 10**5
    std = np.sqrt(2.0 / (5 * 49))
    assert abs(w.mean()) < 3 * std / np.sqrt(w.size)
    assert abs(w.std() / std - 1) < 0.01


def test_spec_validation():
    with pytest.raises(ConfigurationError):
        NetworkSpec(layers=1)
    with pytest.raises(ConfigurationError):
        NetworkSpec(filter_size=4)
    with pytest.raises(ConfigurationError):
        NetworkSpec(layers=3, filter_size=[3, 5])
    assert NetworkSpec(layers=3, filter_size=[3, (1, 5), 7]).kernel_sizes == [(3, 3), (1, 5), (7, 7)]


def test_zero_residual_identity():
    spec = NetworkSpec(bands=4, layers=5, hidden_channels=8, filter_size=3)
    params = zero_body(init_network(spec, 1))
    G = np.random.default_rng(0).random((2, 5, 8, 8)).astype(np.float32)
    F, cache = forward(params, spec, G)
    assert cache.stage1.tobytes() == G.tobytes()
    identity_last(params, 4)
    F, _ = forward(params, spec, G)
    assert F.shape == (2, 4, 8, 8)
    assert F.tobytes() == np.ascontiguousarray(G[:, :4]).tobytes()


def reference_forward(params, spec, G):
    h = G
    n_layers = len(params.layers)
    for l in range(n_layers):
        k = params.layers[l]
        z = conv2d_bruteforce(h, k.weights, k.bias)
        if l < n_layers - 2 or (l == n_layers - 2 and spec.relu_before_skip):
            z = np.maximum(z, 0)
        if l == n_layers - 2:
            z = G + z
        h = z
    return h


@pytest.mark.parametrize("relu_before_skip", [True, False])
def test_forward_matches_reference(relu_before_skip):
    spec = NetworkSpec(bands=4, layers=4, hidden_channels=6, filter_size=3, relu_before_skip=relu_before_skip)
    params = init_network(spec, 3, dtype=np.float64)
    for k in params.layers:
        k.bias[...] = np.random.default_rng(9).standard_normal(k.bias.shape) * 0.1
    G = np.random.default_rng(4).random((1, 5, 8, 8))
    F, _ = forward(params, spec, G)
    np.testing.assert_allclose(F, reference_forward(params, spec, G), rtol=1e-6, atol=1e-12)


def test_forward_channel_mismatch():
    spec = NetworkSpec(bands=4, layers=3, hidden_channels=4, filter_size=3)
    with pytest.raises(ConfigurationError):
        forward(init_network(spec, 0), spec, np.zeros((1, 4, 8, 8), np.float32))


def test_backward_zero_grad():
    spec = NetworkSpec(bands=3, layers=4, hidden_channels=5, filter_size=3)
    params = init_network(spec, 0, dtype=np.float64)
    G = np.random.default_rng(1).random((1, 4, 6, 6))
    F, cache = forward(params, spec, G)
    for gw, gb in backward(params, spec, cache, np.zeros_like(F)):
        assert not gw.any() and not gb.any()


def test_backward_dead_branch():
    from drpnn.tensor_core import conv2d_backward

    spec = NetworkSpec(bands=3, layers=4, hidden_channels=5, filter_size=3)
    params = zero_body(init_network(spec, 0, dtype=np.float64))
    rng = np.random.default_rng(2)
    G = rng.random((1, 4, 6, 6))
    F, cache = forward(params, spec, G)
    gF = rng.standard_normal(F.shape)
    grads = backward(params, spec, cache, gF)
    _, gw, gb = conv2d_backward(G, params.layers[-1], gF)
    np.testing.assert_array_equal(grads[-1][0], gw)
    np.testing.assert_array_equal(grads[-1][1], gb)


@pytest.mark.parametrize("relu_before_skip", [True, False])
def test_backward_finite_differences(relu_before_skip):
    spec = NetworkSpec(bands=2, layers=3, hidden_channels=3, filter_size=3, relu_before_skip=relu_before_skip)
    params = init_network(spec, 5, dtype=np.float64)
    rng = np.random.default_rng(6)
    for k in params.layers:
        k.bias[...] = rng.standard_normal(k.bias.shape) * 0.1
    G = rng.random((2, 3, 5, 5))
    probe = rng.standard_normal((2, 2, 5, 5))

    def loss():
        return float(np.sum(probe * forward(params, spec, G)[0]))

    _, cache = forward(params, spec, G)
    grads, gG = backward(params, spec, cache, probe, return_input_grad=True)
    for (gw, gb), kern in zip(grads, params.layers):
        np.testing.assert_allclose(gw, central_difference(loss, kern.weights), rtol=1e-6, atol=1e-8)
        np.testing.assert_allclose(gb, central_difference(loss, kern.bias), rtol=1e-6, atol=1e-8)
    np.testing.assert_allclose(gG, central_difference(loss, G), rtol=1e-6, atol=1e-8)


def test_network_adjoint():
    spec = NetworkSpec(bands=3, layers=5, hidden_channels=6, filter_size=3)
    params = init_network(spec, 11, dtype=np.float64)
    rng = np.random.default_rng(12)
    G = rng.random((1, 4, 8, 8))
    gF = rng.standard_normal((1, 3, 8, 8))
    _, cache = forward(params, spec, G)
    grads = backward(params, spec, cache, gF)
    dirs = [rng.standard_normal(a.shape) for a in params.arrays()]
    predicted = sum(np.vdot(g, d) for g, d in zip([x for pair in grads for x in pair], dirs))

    h = 1e-6

    def shifted(sign):
        p = params.copy()
        for a, d in zip(p.arrays(), dirs):
            a += sign * h * d
        return forward(p, spec, G)[0]

    jd = (shifted(1) - shifted(-1)) / (2 * h)
    measured = np.vdot(gF, jd)
    assert abs(measured - predicted) <= 1e-7 * abs(predicted)


def test_checkpoint_roundtrip(tmp_path):
    spec = NetworkSpec(bands=4, layers=4, hidden_channels=8, filter_size=[3, 5, 3, 1], relu_before_skip=False)
    for dtype in (np.float32, np.float64):
        params = init_network(spec, 2, dtype=dtype)
        params.layers[0].bias[...] = 0.25
        path = tmp_path / f"m_{np.dtype(dtype).name}.drpn"
        save_checkpoint(params, spec, path)
        loaded, lspec = load_checkpoint(path, expect_spec=spec)
        assert lspec == NetworkSpec(bands=4, layers=4, hidden_channels=8,
                                    filter_size=[(3, 3), (5, 5), (3, 3), (1, 1)], relu_before_skip=False)
        for a, b in zip(params.arrays(), loaded.arrays()):
            assert a.dtype == b.dtype and a.tobytes() == b.tobytes()


def test_checkpoint_truncated(tmp_path):
    spec = NetworkSpec(bands=4, layers=3, hidden_channels=4, filter_size=3)
    path = tmp_path / "m.drpn"
    save_checkpoint(init_network(spec, 0), spec, path)
    data = path.read_bytes()
    for cut in (3, 20, len(data) - 1):
        (tmp_path / "t.drpn").write_bytes(data[:cut])
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / "t.drpn")
    (tmp_path / "bad.drpn").write_bytes(b"XXXX" + data[4:])
    with pytest.raises(CheckpointError, match="magic"):
        load_checkpoint(tmp_path / "bad.drpn")


def test_checkpoint_shape_mismatch(tmp_path):
    spec4 = NetworkSpec(bands=4, layers=3, hidden_channels=4, filter_size=3)
    path = tmp_path / "m.drpn"
    save_checkpoint(init_network(spec4, 0), spec4, path)
    with pytest.raises(CheckpointError, match="shape mismatch"):
        load_checkpoint(path, expect_spec=NetworkSpec(bands=8, layers=3, hidden_channels=4, filter_size=3))


def test_save_rejects_wrong_params(tmp_path):
    spec = NetworkSpec(bands=4, layers=3, hidden_channels=4, filter_size=3)
    params = init_network(spec, 0)
    params.layers[1] = ConvKernel(np.zeros((5, 3, 3, 3), np.float32), np.zeros(5, np.float32))
    with pytest.raises(ConfigurationError):
        save_checkpoint(params, spec, tmp_path / "x.drpn")
