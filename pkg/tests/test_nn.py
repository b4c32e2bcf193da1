import numpy as np
import pytest
from hypothesis import given, strategies as st

from trail_il.nn import (
    NATIVE_ORDER,
    Adam,
    Mlp,
    NonFiniteError,
    forward,
    forward_backward,
    gradient_check,
    load_mlp,
    opt_step,
    save_mlp,
    swish,
)


def test_linear_identity_net():
    net = Mlp((3, 3), [np.eye(3), np.zeros(3)])
    x = np.array([1.0, -2.0, 0.5])
    assert np.array_equal(forward(net, x), x)


def test_scalar_product_rule():
    net = Mlp((1, 1), [np.array([[2.5]]), np.zeros(1)])
    _, grads, g_in = forward_backward(net, np.array([[3.0]]), np.ones((1, 1)))
    assert grads[0][0, 0] == 3.0
    assert grads[1][0] == 1.0
    assert g_in[0, 0] == 2.5


def _mse_loss(net, x, y):
    def fn(params):
        net.params = params
        out = forward(net, x)
        r = out - y
        _, grads, _ = forward_backward(net, x, r / len(x))
        return 0.5 * float((r * r).sum()) / len(x), grads
    return fn


def test_two_hidden_layer_gradients():
    rng = np.random.default_rng(0)
    net = Mlp.init((4, 16, 16, 3), rng)
    x, y = rng.standard_normal((8, 4)), rng.standard_normal((8, 3))
    rep = gradient_check(_mse_loss(net, x, y), net.params)
    assert rep.passed and rep.max_rel_err <= 1e-4


def test_gradient_check_examples():
    quad = lambda p: (0.5 * sum(float((q * q).sum()) for q in p), [q.copy() for q in p])
    params = [np.random.default_rng(1).standard_normal(5)]
    assert gradient_check(quad, params).max_rel_err < 1e-8
    doubled = lambda p: (quad(p)[0], [2 * q for q in p])
    rep = gradient_check(doubled, params)
    assert rep.max_rel_err == pytest.approx(1.0, abs=1e-6)
    assert not rep.passed
    with pytest.raises(ValueError):
        gradient_check(quad, params, h=0.0)


def test_gradient_check_subsamples_large_models():
    params = [np.ones(50)]
    quad = lambda p: (0.5 * float((p[0] ** 2).sum()), [p[0].copy()])
    assert gradient_check(quad, params, max_coords=10).n_checked == 10


def test_non_finite_reports_layer():
    net = Mlp.init((2, 4, 1), np.random.default_rng(0))
    net.params[2][:] = np.inf
    with pytest.raises(NonFiniteError) as info:
        forward(net, np.ones(2))
    assert info.value.layer == 2
    with pytest.raises(NonFiniteError):
        forward(Mlp.init((2, 1), np.random.default_rng(0)), np.array([np.nan, 0.0]))


def test_swish_is_stable():
    assert swish(np.array([-1000.0]))[0] == 0.0
    assert swish(np.array([1000.0]))[0] == 1000.0


def test_adam_examples():
    p = [np.array([1.0, -1.0])]
    opt = Adam(lr=0.1)
    opt.step(p, [np.zeros(2)])
    assert np.array_equal(p[0], [1.0, -1.0])

    p = [np.zeros(3)]
    opt = Adam()
    opt_step(opt, p, [np.array([0.5, -2.0, 1e-3])])
    assert np.allclose(np.abs(p[0]), 3e-4, rtol=1e-4)
    assert p[0][0] < 0 < p[0][1]

    p = [np.zeros(1)]
    opt = Adam(lr=0.01)
    for _ in range(100):
        opt.step(p, [np.array([0.3])])
    assert p[0][0] < -0.5
    with pytest.raises(NonFiniteError):
        opt.step(p, [np.array([np.nan])])


@pytest.mark.parametrize("order", ["<", ">"])
def test_checkpoint_roundtrip(tmp_path, order):
    net = Mlp.init((3, 5, 2), np.random.default_rng(4))
    path = tmp_path / "m.bin"
    save_mlp(path, net, byteorder=order)
    blob = path.read_bytes()
    assert blob[:8] == b"TRAILMLP" and blob[8:9] == order.encode()
    assert len(blob) == 16 + 4 * 3 + 8 * net.n_params()
    back = load_mlp(path)
    assert back.sizes == net.sizes
    assert all(np.array_equal(a, b) for a, b in zip(back.params, net.params))


def test_checkpoint_rejects_garbage(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"NOTAMODEL" * 4)
    with pytest.raises(ValueError):
        load_mlp(path)
    net = Mlp.init((2, 2), np.random.default_rng(0))
    save_mlp(path, net, NATIVE_ORDER)
    path.write_bytes(path.read_bytes() + b"x")
    with pytest.raises(ValueError):
        load_mlp(path)


@given(st.integers(1, 4), st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_batch_and_single_forward_agree(n_in, hidden, seed):
    rng = np.random.default_rng(seed)
    net = Mlp.init((n_in, hidden, 2), rng)
    x = rng.standard_normal((3, n_in))
    batch = forward(net, x)
    for i in range(3):
        assert np.allclose(forward(net, x[i]), batch[i], atol=1e-12)
