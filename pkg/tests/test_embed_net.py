import numpy as np
import pytest

import gradcheck
from pareto_choice.choice_core import InvalidArgument
from pareto_choice.embed_net import BEFORE_RELU, NetworkParams, backward, forward, init_params
from pareto_choice.losses import LossWeights


def _same(p, q):
    return all(np.array_equal(a, b) for a, b in zip(p.state().values(), q.state().values()))


def test_init_deterministic_and_seed_sensitive():
    assert _same(init_params(3, 2, 8, 2, seed=4), init_params(3, 2, 8, 2, seed=4))
    assert not _same(init_params(3, 2, 8, 2, seed=4), init_params(3, 2, 8, 2, seed=5))


def test_init_shapes_and_state():
    p = init_params(2, 1, 4, 2, seed=0)
    assert p.hidden[0].W.shape == (2, 4) and p.W_out.shape == (4, 2)
    h = p.hidden[0]
    assert not h.b.any() and not h.beta.any() and not h.running_mean.any()
    assert (h.gamma == 1).all() and (h.running_var == 1).all()
    assert not p.b_out.any()


def test_init_variance_scaling():
    p = init_params(400, 1, 300, 200, seed=0)
    assert p.hidden[0].W.var() == pytest.approx(2 / 400, rel=0.05)
    assert p.W_out.var() == pytest.approx(1 / 300, rel=0.05)


def test_init_rejects_zero_dims():
    with pytest.raises(InvalidArgument):
        init_params(0, 1, 4, 2, seed=0)
    with pytest.raises(InvalidArgument):
        init_params(2, 1, 0, 2, seed=0)
    with pytest.raises(InvalidArgument):
        init_params(2, 1, 4, 0, seed=0)


def test_zero_network_gives_zero_embedding():
    p = init_params(3, 2, 5, 2, seed=0)
    for layer in p.hidden:
        layer.W[:] = 0
    p.W_out[:] = 0
    Z, _ = forward(np.random.default_rng(0).normal(size=(4, 3)), p)
    assert not Z.any()


def test_identity_head():
    p = NetworkParams([], np.eye(2), np.zeros(2))
    Z, _ = forward([[2.0, 3.0]], p)
    np.testing.assert_array_equal(Z, [[2.0, 3.0]])


def test_inference_is_pure():
    p = init_params(3, 2, 6, 2, seed=1)
    X = np.random.default_rng(0).normal(size=(7, 3))
    before = {k: v.copy() for k, v in p.state().items()}
    Z1, _ = forward(X, p)
    Z2, _ = forward(X, p)
    np.testing.assert_array_equal(Z1, Z2)
    for k, v in p.state().items():
        np.testing.assert_array_equal(v, before[k])


def test_train_mode_updates_running_stats():
    p = init_params(3, 1, 6, 2, seed=1)
    X = np.random.default_rng(0).normal(size=(20, 3))
    _, tr = forward(X, p, mode="train")
    h = np.maximum(X @ p.hidden[0].W + p.hidden[0].b, 0)
    np.testing.assert_allclose(p.hidden[0].running_mean, 0.1 * h.mean(axis=0), rtol=1e-12)
    np.testing.assert_allclose(p.hidden[0].running_var, 0.9 + 0.1 * h.var(axis=0, ddof=1), rtol=1e-12)


def test_forward_errors():
    p = init_params(3, 1, 4, 2, seed=0)
    with pytest.raises(InvalidArgument):
        forward(np.zeros((1, 3)), p, mode="train")
    with pytest.raises(InvalidArgument):
        forward(np.zeros((4, 2)), p)


def test_batch_norm_sanity():
    rng = np.random.default_rng(2)
    for eps in (1e-5, 1e-14):
        p = init_params(4, 3, 16, 2, seed=3, eps=eps)
        for layer in p.hidden:
            layer.gamma[:] = rng.uniform(0.5, 2.0, size=16)
            layer.beta[:] = rng.normal(size=16)
        X = rng.normal(size=(64, 4))
        _, tr = forward(X, p, mode="train")
        for layer, xhat, var_b in zip(p.hidden, tr.xhat, tr.batch_var):
            y = layer.gamma * xhat + layer.beta
            live = var_b > 0  # dead ReLU columns are constant
            assert live.sum() >= 8
            np.testing.assert_allclose(y.mean(axis=0), layer.beta, atol=1e-6)
            expected = layer.gamma**2 * var_b / (var_b + eps)
            np.testing.assert_allclose(y.var(axis=0)[live], expected[live], rtol=1e-9)
            if eps < 1e-12:
                np.testing.assert_allclose(y.var(axis=0)[live], layer.gamma[live] ** 2, atol=1e-6)


def test_weight_sharing_permutation():
    rng = np.random.default_rng(4)
    p = init_params(3, 2, 8, 2, seed=0)
    X = rng.normal(size=(10, 3))
    perm = rng.permutation(10)
    for mode in ("inference", "train"):
        Za, _ = forward(X, p.copy(), mode=mode)
        Zb, _ = forward(X[perm], p.copy(), mode=mode)
        np.testing.assert_allclose(Zb, Za[perm], rtol=1e-12, atol=1e-12)


def test_backward_zero_upstream():
    p = init_params(3, 2, 5, 2, seed=0)
    _, tr = forward(np.random.default_rng(0).normal(size=(6, 3)), p, mode="train")
    for g in backward(tr, p, np.zeros((6, 2))).values():
        assert not g.any()


def test_backward_errors():
    p = init_params(3, 2, 5, 2, seed=0)
    X = np.random.default_rng(0).normal(size=(6, 3))
    _, tr = forward(X, p, mode="inference")
    with pytest.raises(InvalidArgument):
        backward(tr, p, np.zeros((6, 2)))
    _, tr = forward(X, p, mode="train")
    with pytest.raises(InvalidArgument):
        backward(tr, init_params(3, 1, 5, 2, seed=0), np.zeros((6, 2)))
    with pytest.raises(InvalidArgument):
        backward(tr, p, np.zeros((5, 2)))


def _check(params, Q, C, w):
    n, worst = gradcheck.check(params, Q, C, w)
    assert n > 0
    assert worst <= gradcheck.TOL, worst


def test_head_only_single_output_gradient():
    rng = np.random.default_rng(0)
    p = init_params(3, 0, 1, 1, seed=0)
    Q = rng.normal(size=(2, 5, 3))
    C = (rng.random((2, 5)) < 0.5).astype(float)
    _check(p, Q, C, LossWeights(0.3, 0.3, 0.2, 0.2))


def test_two_hidden_layer_gradient():
    rng = np.random.default_rng(1)
    p = init_params(4, 2, 7, 2, seed=1)
    Q = rng.normal(size=(1, 6, 4))
    C = np.array([[1, 0, 0, 1, 0, 0]], dtype=float)
    _check(p, Q, C, LossWeights(0.4, 0.3, 0.2, 0.1))


def test_gradient_norm_before_relu():
    rng = np.random.default_rng(2)
    p = init_params(3, 2, 6, 2, seed=2, norm_position=BEFORE_RELU)
    Q = rng.normal(size=(2, 5, 3))
    C = (rng.random((2, 5)) < 0.5).astype(float)
    _check(p, Q, C, LossWeights())


def test_random_small_networks_gradient():
    rng = np.random.default_rng(3)
    for _ in range(20):
        _check(*gradcheck.random_problem(rng, max_layers=2, max_units=12))


def test_copy_is_deep():
    p = init_params(3, 1, 4, 2, seed=0)
    q = p.copy()
    q.hidden[0].W[0, 0] += 1
    assert p.hidden[0].W[0, 0] != q.hidden[0].W[0, 0]


def test_fd_truncation_near_norm_kink():
    # configuration 87 of the acceptance gradient sweep: a head-only net on 1-d inputs
    # puts every embedding on a line through the origin, the bias gradient of the norm
    # term cancels exactly, and one point sits 0.012 from the norm's kink
    rng = np.random.default_rng(20240601)
    for _ in range(88):
        params, Q, C, w = gradcheck.random_problem(rng, max_layers=2, max_units=32)
    assert not params.hidden and Q.shape == (2, 8, 1)
    from pareto_choice.training import train_step

    _, grads = train_step(params.copy(), Q, C, w)
    assert np.abs(grads["out.b"]).max() < 1e-15
    b = params.trainable()["out.b"]
    fd = []
    for h in (1e-3, 1e-4, 1e-5):
        b[0] += h
        fp = gradcheck._objective(params, Q, C, w)[0]
        b[0] -= 2 * h
        fm = gradcheck._objective(params, Q, C, w)[0]
        b[0] += h
        fd.append((fp - fm) / (2 * h))
    # central differences shrink by 100 per decade of step: pure O(h^2) truncation around a zero derivative
    assert fd[0] / fd[1] == pytest.approx(100, rel=0.02)
    assert fd[1] / fd[2] == pytest.approx(100, rel=0.02)
