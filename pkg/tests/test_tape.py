import numpy as np
import pytest

from uwf import tape
from uwf.rng import Rng


def fd_grad(f, x, h=1e-6):
    """Central finite differences of a scalar function of an ndarray."""
    g = np.zeros_like(x, dtype=float)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        ix = it.multi_index
        xp, xm = x.copy(), x.copy()
        xp[ix] += h
        xm[ix] -= h
        g[ix] = (f(xp) - f(xm)) / (2 * h)
    return g


def test_matmul_chain_gradients():
    rng = Rng(0)
    W = rng.normal(12).reshape(3, 4)
    x = rng.normal(4)

    def loss(Wv):
        Wn, xn = tape.param(Wv), tape.param(x)
        out = tape.col_sumsq(tape.matmul(Wn, xn))
        tape.backward(out)
        return float(out.value), Wn.grad, xn.grad

    val, gW, gx = loss(W)
    fdW = fd_grad(lambda Wv: float(np.sum((Wv @ x) ** 2)), W)
    fdx = fd_grad(lambda xv: float(np.sum((W @ xv) ** 2)), x)
    assert np.allclose(gW, fdW, rtol=1e-6, atol=1e-8)
    assert np.allclose(gx, fdx, rtol=1e-6, atol=1e-8)


def test_matmul_t_and_bias_batched():
    rng = Rng(1)
    W = rng.normal(6).reshape(2, 3)
    X = rng.normal(6).reshape(2, 3)
    b = rng.normal(3)

    def full(Wv, Xv, bv):
        return float(np.sum((Wv.T @ Xv + bv[:, None]) ** 2))

    Wn, Xn, bn = tape.param(W), tape.param(X), tape.param(b)
    out = tape.total(tape.col_sumsq(tape.add_bias(tape.matmul_t(Wn, Xn), bn)))
    tape.backward(out)
    assert out.value == pytest.approx(full(W, X, b), rel=1e-12)
    assert np.allclose(Wn.grad, fd_grad(lambda v: full(v, X, b), W), atol=1e-6)
    assert np.allclose(Xn.grad, fd_grad(lambda v: full(W, v, b), X), atol=1e-6)
    assert np.allclose(bn.grad, fd_grad(lambda v: full(W, X, v), b), atol=1e-6)


def test_elementwise_and_scale_columns():
    rng = Rng(2)
    X = rng.normal(8).reshape(2, 4)
    w = rng.uniform(4) + 0.5
    gamma = 0.7

    def full(Xv, gv):
        return float(np.sum((Xv * (gv * w)) ** 2))

    Xn, gn = tape.param(X), tape.param(np.asarray(gamma))
    out = tape.total(tape.col_sumsq(tape.scale_columns(Xn, w, gn)))
    tape.backward(out)
    assert np.allclose(Xn.grad, fd_grad(lambda v: full(v, gamma), X), atol=1e-6)
    fdg = (full(X, gamma + 1e-6) - full(X, gamma - 1e-6)) / 2e-6
    assert float(gn.grad) == pytest.approx(fdg, rel=1e-6)


def test_divide_sqrt_scalar_chain():
    a, b = 3.0, 7.0
    an, bn = tape.param(np.asarray(a)), tape.param(np.asarray(b))
    out = tape.sqrt(tape.divide(an, bn))
    tape.backward(out)
    assert float(an.grad) == pytest.approx(0.5 / np.sqrt(a * b), rel=1e-12)
    assert float(bn.grad) == pytest.approx(-0.5 * np.sqrt(a) / b**1.5, rel=1e-12)


def test_mask_is_constant():
    x = np.array([1.0, -2.0, 3.0])
    m = np.array([1.0, 0.0, 1.0])
    xn = tape.param(x)
    out = tape.col_sumsq(tape.mask(xn, m))
    tape.backward(out)
    assert np.allclose(xn.grad, 2 * x * m)


def test_col_max_subgradient():
    X = np.array([[1.0, 5.0], [3.0, 2.0]])
    Xn = tape.param(X)
    out = tape.total(tape.col_max(Xn))
    tape.backward(out)
    assert np.allclose(Xn.grad, [[0.0, 1.0], [1.0, 0.0]])


def test_pick_column_scatter():
    X = Rng(3).normal(6).reshape(3, 2)
    Xn = tape.param(X)
    out = tape.col_sumsq(tape.pick_column(Xn, 1))
    tape.backward(out)
    expected = np.zeros_like(X)
    expected[:, 1] = 2 * X[:, 1]
    assert np.allclose(Xn.grad, expected)


def test_amax_picks_largest():
    nodes = [tape.param(np.asarray(v)) for v in (1.0, 4.0, 2.0)]
    out = tape.amax(nodes)
    tape.backward(out)
    assert float(out.value) == 4.0
    assert float(nodes[1].grad) == 1.0
    assert nodes[0].grad is None and nodes[2].grad is None


def test_sigma_op_gradient_matches_fd():
    W = Rng(4).normal(12).reshape(4, 3)
    u, s, vt = np.linalg.svd(W)
    Wn = tape.param(W)
    out = tape.sigma_op(Wn, s[0], u[:, 0], vt[0])
    tape.backward(out)
    fdW = fd_grad(lambda Wv: np.linalg.svd(Wv, compute_uv=False)[0], W)
    assert np.allclose(Wn.grad, fdW, atol=1e-6)


def test_shared_subgraph_accumulates():
    x = np.array([2.0])
    xn = tape.param(x)
    y = tape.mul(xn, xn)            # x^2
    out = tape.total(tape.add(y, y))  # 2 x^2
    tape.backward(out)
    assert float(xn.grad[0]) == pytest.approx(8.0)


def test_backward_requires_scalar_root():
    with pytest.raises(ValueError):
        tape.backward(tape.param(np.ones(3)))
