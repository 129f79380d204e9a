"""Network layout, initialization, forward values, and input gradients.

The forward oracle is an independent numpy reimplementation living in this
file; the tape-based network must agree with it exactly.
"""

import numpy as np
import pytest

from dfvm.autodiff import Tape
from dfvm.network import (
    Network, NetworkConfig, NetField, as_field, eval_fcnn, eval_resnet,
    input_gradient, load_params, make_network, save_params,
)


def reference_forward(net: Network, params: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Plain-numpy forward pass, written against the documented layout only."""
    cfg = net.config
    v = lambda name: net.view(params, name)
    if cfg.kind == "fcnn":
        h = np.tanh(x @ v("w0") + v("b0"))
        for k in range(1, cfg.depth):
            h = np.tanh(h @ v(f"w{k}") + v(f"b{k}"))
    else:
        h = x @ v("w_in") + v("b_in")
        for k in range(cfg.depth):
            p = np.tanh(h @ v(f"w{k}a") + v(f"b{k}a"))
            q = np.tanh(p @ v(f"w{k}b") + v(f"b{k}b"))
            h = h + q
    return (h @ v("w_out") + v("b_out")).reshape(-1)


def fcnn_count(d, m, depth):
    return d * m + m + (depth - 1) * (m * m + m) + m + 1


def resnet_count(d, m, depth):
    return d * m + m + depth * 2 * (m * m + m) + m + 1


# ---------------------------------------------------------------------------
# layout and init


@pytest.mark.parametrize("d", [1, 2, 10])
@pytest.mark.parametrize("m", [8, 40, 64, 128])
@pytest.mark.parametrize("depth", [1, 3])
def test_parameter_count_formulas(d, m, depth):
    fc = Network(NetworkConfig(kind="fcnn", input_dim=d, width=m, depth=depth))
    rn = Network(NetworkConfig(kind="resnet", input_dim=d, width=m, depth=depth))
    assert fc.n_params == fcnn_count(d, m, depth)
    assert rn.n_params == resnet_count(d, m, depth)


def test_layout_offsets_are_contiguous():
    net = Network(NetworkConfig(kind="resnet", input_dim=3, width=8, depth=2))
    off = 0
    for name, shape, o in net.layout:
        assert o == off
        off += int(np.prod(shape))
    assert off == net.n_params


def test_init_bounds_and_zero_biases():
    net = Network(NetworkConfig(kind="resnet", input_dim=4, width=16, depth=2))
    params = net.init_params(seed=5)
    for name, shape, _ in net.layout:
        block = net.view(params, name)
        if name.startswith("w"):
            bound = 1.0 / np.sqrt(shape[0])
            assert np.max(np.abs(block)) <= bound
            assert np.any(block != 0.0)
        else:
            np.testing.assert_array_equal(block, np.zeros(shape))


def test_init_is_seed_deterministic():
    net = Network(NetworkConfig(kind="fcnn", input_dim=2, width=8, depth=2))
    a = net.init_params(seed=3)
    b = net.init_params(seed=3)
    c = net.init_params(seed=4)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_config_validation():
    with pytest.raises(ValueError, match="kind"):
        NetworkConfig(kind="transformer")
    with pytest.raises(ValueError, match="tanh"):
        NetworkConfig(activation="relu")
    with pytest.raises(ValueError):
        NetworkConfig(width=0)
    with pytest.raises(ValueError, match="scalar"):
        NetworkConfig(output_dim=2)


# ---------------------------------------------------------------------------
# forward values


@pytest.mark.parametrize("kind", ["fcnn", "resnet"])
@pytest.mark.parametrize("d,m,depth", [(1, 8, 1), (2, 8, 2), (5, 16, 3)])
def test_value_matches_reference_forward(kind, d, m, depth):
    net = Network(NetworkConfig(kind=kind, input_dim=d, width=m, depth=depth))
    params = net.init_params(seed=11)
    x = np.random.default_rng(1).uniform(-1, 1, size=(17, d))
    np.testing.assert_allclose(net.value(params, x), reference_forward(net, params, x),
                               rtol=0, atol=0)


def test_eval_helpers_dispatch_and_guard():
    cfg_f = NetworkConfig(kind="fcnn", input_dim=2, width=8, depth=2)
    cfg_r = NetworkConfig(kind="resnet", input_dim=2, width=8, depth=2)
    pf = Network(cfg_f).init_params(0)
    pr = Network(cfg_r).init_params(0)
    x = np.zeros((3, 2))
    np.testing.assert_allclose(eval_fcnn(cfg_f, pf, x), Network(cfg_f).value(pf, x))
    np.testing.assert_allclose(eval_resnet(cfg_r, pr, x), Network(cfg_r).value(pr, x))
    with pytest.raises(ValueError):
        eval_fcnn(cfg_r, pr, x)
    with pytest.raises(ValueError):
        eval_resnet(cfg_f, pf, x)


def test_resnet_with_zero_block_weights_is_affine():
    # zero blocks pass h through: u = (x @ w_in + b_in) @ w_out + b_out
    net = Network(NetworkConfig(kind="resnet", input_dim=2, width=8, depth=3))
    params = net.init_params(seed=2)
    for k in range(3):
        for nm in (f"w{k}a", f"b{k}a", f"w{k}b", f"b{k}b"):
            net.view(params, nm)[:] = 0.0
    x = np.random.default_rng(0).normal(size=(9, 2))
    lift = x @ net.view(params, "w_in") + net.view(params, "b_in")
    want = (lift @ net.view(params, "w_out") + net.view(params, "b_out")).reshape(-1)
    np.testing.assert_allclose(net.value(params, x), want, atol=1e-15)


def test_value_accepts_single_point_and_checks_dim():
    net = Network(NetworkConfig(kind="fcnn", input_dim=3, width=4, depth=1))
    params = net.init_params(0)
    single = net.value(params, np.zeros(3))
    assert single.shape == (1,)
    with pytest.raises(ValueError, match="dimension"):
        net.value(params, np.zeros((5, 2)))


# ---------------------------------------------------------------------------
# input gradients: emitted ops vs backward pass vs finite differences


@pytest.mark.parametrize("kind", ["fcnn", "resnet"])
def test_emitted_input_gradient_equals_backward_gradient(kind):
    net = Network(NetworkConfig(kind=kind, input_dim=3, width=10, depth=2))
    params = net.init_params(seed=9)
    x = np.random.default_rng(4).uniform(-0.8, 0.8, size=(6, 3))

    _, g_emitted = net.value_and_input_grad(params, x)

    # oracle: reverse pass w.r.t. the x leaf, one point at a time
    g_backward = np.empty_like(x)
    for i in range(x.shape[0]):
        tape = Tape()
        leaves = net.param_leaves(tape, params)
        xn = tape.leaf(x[i:i + 1])
        u = net.emit(tape, leaves, xn)
        g_backward[i] = tape.backward(tape.sum(u)).of(xn)[0]
    # batch-1 vs batch-n BLAS summation order shifts the last ulp
    np.testing.assert_allclose(g_emitted, g_backward, rtol=1e-13, atol=1e-15)


@pytest.mark.parametrize("kind", ["fcnn", "resnet"])
def test_input_gradient_matches_finite_differences(kind):
    net = Network(NetworkConfig(kind=kind, input_dim=2, width=12, depth=3))
    params = net.init_params(seed=13)
    x = np.array([[0.3, -0.4], [0.9, 0.1]])
    g = input_gradient(net, params, x)
    h = 1e-6
    for i in range(2):
        for j in range(2):
            e = np.zeros((1, 2))
            e[0, j] = h
            fd = (net.value(params, x[i:i + 1] + e)
                  - net.value(params, x[i:i + 1] - e)) / (2 * h)
            assert abs(g[i, j] - fd[0]) < 1e-7


def test_parameter_gradient_matches_finite_differences():
    # backprop through u including the emitted input-gradient subgraph
    net = Network(NetworkConfig(kind="resnet", input_dim=2, width=6, depth=2))
    params = net.init_params(seed=21)
    x = np.random.default_rng(3).uniform(-0.5, 0.5, size=(4, 2))

    def scalar(p):
        u, g = net.value_and_input_grad(p, x)
        return float(np.sum(u * u) + np.sum(g * g))

    tape = Tape()
    leaves = net.param_leaves(tape, params)
    un, gn = net.emit_with_input_grad(tape, leaves, tape.leaf(x))
    root = tape.add(tape.sum(tape.square(un)), tape.sum(tape.square(gn)))
    grad = net.gradient_vector(tape.backward(root), leaves)

    rng = np.random.default_rng(8)
    idx = rng.choice(net.n_params, size=25, replace=False)
    h = 1e-6
    for i in idx:
        e = np.zeros_like(params)
        e[i] = h
        fd = (scalar(params + e) - scalar(params - e)) / (2 * h)
        assert abs(grad[i] - fd) < 1e-5 * max(1.0, abs(fd))


# ---------------------------------------------------------------------------
# fields and serialization


def test_net_field_adapter():
    net = Network(NetworkConfig(kind="fcnn", input_dim=2, width=6, depth=1))
    params = net.init_params(1)
    f = as_field(net, params)
    assert isinstance(f, NetField)
    x = np.random.default_rng(2).normal(size=(5, 2))
    np.testing.assert_array_equal(f.value(x), net.value(params, x))
    np.testing.assert_array_equal(f.gradient(x), input_gradient(net, params, x))


def test_save_load_round_trip(tmp_path):
    cfg = NetworkConfig(kind="resnet", input_dim=4, width=10, depth=2)
    net = Network(cfg)
    params = net.init_params(seed=77)
    path = tmp_path / "params.bin"
    save_params(path, cfg, params)
    cfg2, params2 = load_params(path)
    assert cfg2 == cfg
    np.testing.assert_array_equal(params2, params)


def test_save_load_float32_promotes_to_float64(tmp_path):
    cfg = NetworkConfig(kind="fcnn", input_dim=2, width=4, depth=1)
    net = Network(cfg)
    params = net.init_params(seed=1).astype(np.float32)
    path = tmp_path / "p32.bin"
    save_params(path, cfg, params)
    _, out = load_params(path)
    assert out.dtype == np.float64
    np.testing.assert_array_equal(out, params.astype(np.float64))


def test_load_rejects_wrong_magic(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"NOTAPARM" + b"\x00" * 64)
    with pytest.raises(ValueError, match="not a ParamSet"):
        load_params(path)


def test_save_rejects_wrong_length(tmp_path):
    cfg = NetworkConfig(kind="fcnn", input_dim=2, width=4, depth=1)
    with pytest.raises(ValueError, match="length"):
        save_params(tmp_path / "x.bin", cfg, np.zeros(7))


def test_make_network_and_field_value_float32():
    net = make_network(NetworkConfig(kind="fcnn", input_dim=2, width=4, depth=1))
    p32 = net.init_params(0).astype(np.float32)
    out = net.value(p32, np.zeros((2, 2)))
    assert out.dtype == np.float32
