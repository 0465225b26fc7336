import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from uwf.nets import (Layer, Net, lipschitz_empirical, lipschitz_upper,
                      net_forward, net_jvp, net_random, net_vjp)
from uwf.rng import Rng


def identity_net(n):
    return Net([Layer(np.eye(n), np.zeros(n), "identity")])


def safe_instance(dims, seed, margin=1e-6):
    """Random net and input with all pre-activations away from the kinks."""
    for attempt in range(100):
        net = net_random(dims, activation="relu", seed=seed + 1000 * attempt)
        x = Rng(seed + 31 * attempt).normal(dims[0])
        h = x
        ok = True
        for layer in net.layers:
            z = layer.W @ h + layer.b
            if np.min(np.abs(z)) < margin:
                ok = False
                break
            h = z * layer.act_mask(z)
        if ok:
            return net, x
    raise RuntimeError("no kink-free instance found")


class TestForward:
    def test_identity_layer(self):
        x = Rng(0).normal(4)
        assert np.allclose(net_forward(identity_net(4), x), x)

    def test_relu_all_negative(self):
        net = Net([Layer(-np.eye(3), np.zeros(3), "relu")])
        x = np.abs(Rng(1).normal(3)) + 0.1
        assert np.array_equal(net_forward(net, x), np.zeros(3))

    def test_three_layer_oracle(self):
        net = net_random([4, 5, 3, 2], activation="leaky_relu", seed=2)
        x = Rng(3).normal(4)
        h = x
        for layer in net.layers:
            z = layer.W @ h + layer.b
            h = np.where(z > 0, z, layer.slope * z)
        assert np.allclose(net_forward(net, x), h, rtol=1e-12)

    def test_zero_preservation(self):
        net = net_random([5, 7, 4], activation="relu", seed=4, zero_bias=True)
        assert np.array_equal(net_forward(net, np.zeros(5)), np.zeros(4))

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            net_forward(identity_net(3), np.zeros(4))


class TestVjp:
    def test_identity(self):
        v = Rng(5).normal(4)
        gx, grads = net_vjp(identity_net(4), np.zeros(4), v)
        assert np.allclose(gx, v)
        assert len(grads) == 1

    def test_zero_cotangent(self):
        net = net_random([3, 4, 2], seed=6)
        gx, grads = net_vjp(net, Rng(7).normal(3), np.zeros(2))
        assert np.allclose(gx, 0.0)
        for dW, db in grads:
            assert np.allclose(dW, 0.0) and np.allclose(db, 0.0)

    def test_finite_differences(self):
        h = 1e-5
        for seed in range(50):
            net, x = safe_instance([4, 6, 3], 100 + seed)
            v = Rng(900 + seed).normal(3)
            gx, grads = net_vjp(net, x, v)
            # input gradient
            for k in range(4):
                e = np.zeros(4)
                e[k] = h
                fd = (np.dot(v, net_forward(net, x + e))
                      - np.dot(v, net_forward(net, x - e))) / (2 * h)
                assert abs(fd - gx[k]) <= 1e-5 * max(1.0, abs(gx[k]))
            # one parameter slot per layer
            for li, layer in enumerate(net.layers):
                W0 = layer.W.copy()
                layer.W = W0.copy()
                layer.W[0, 0] = W0[0, 0] + h
                up = np.dot(v, net_forward(net, x))
                layer.W[0, 0] = W0[0, 0] - h
                dn = np.dot(v, net_forward(net, x))
                layer.W = W0
                fd = (up - dn) / (2 * h)
                analytic = grads[li][0][0, 0]
                assert abs(fd - analytic) <= 1e-5 * max(1.0, abs(analytic))


class TestJvp:
    def test_identity(self):
        u = Rng(8).normal(4)
        assert np.allclose(net_jvp(identity_net(4), np.zeros(4), u), u)

    def test_linear_product(self):
        net = net_random([3, 5, 2], activation="relu", seed=9)
        for layer in net.layers:
            layer.activation = "identity"
        u = Rng(10).normal(3)
        expected = net.layers[1].W @ (net.layers[0].W @ u)
        assert np.allclose(net_jvp(net, Rng(11).normal(3), u), expected)

    @given(st.integers(0, 5000))
    @settings(max_examples=30, deadline=None)
    def test_duality_with_vjp(self, seed):
        net = net_random([4, 6, 3], activation="leaky_relu", seed=seed)
        x = Rng(seed + 1).normal(4)
        u = Rng(seed + 2).normal(4)
        v = Rng(seed + 3).normal(3)
        lhs = np.dot(v, net_jvp(net, x, u))
        rhs = np.dot(net_vjp(net, x, v)[0], u)
        assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs))


class TestLipschitz:
    def test_single_scaled_identity(self):
        net = Net([Layer(2 * np.eye(3), np.zeros(3), "relu")])
        assert lipschitz_upper(net) == pytest.approx(2.0, abs=1e-9)

    def test_two_layer_product(self):
        net = Net([Layer(2 * np.eye(3), np.zeros(3), "relu"),
                   Layer(3 * np.eye(3), np.zeros(3), "relu")])
        assert lipschitz_upper(net) == pytest.approx(6.0, abs=1e-9)

    def test_empirical_identity(self):
        net = identity_net(3)
        samples = [Rng(s).normal(3) for s in range(6)]
        hi, lo = lipschitz_empirical(net, samples)
        assert hi == pytest.approx(1.0, abs=1e-12)
        assert lo == pytest.approx(1.0, abs=1e-12)

    def test_empirical_scaling(self):
        net = Net([Layer(3 * np.eye(2), np.zeros(2), "identity")])
        samples = [Rng(s).normal(2) for s in range(5)]
        hi, lo = lipschitz_empirical(net, samples)
        assert hi == pytest.approx(3.0, rel=1e-12)
        assert lo == pytest.approx(3.0, rel=1e-12)

    def test_empirical_brackets_singular_values(self):
        W = Rng(12).normal(12).reshape(4, 3)
        net = Net([Layer(W, np.zeros(4), "identity")])
        s = np.linalg.svd(W, compute_uv=False)
        samples = [Rng(100 + k).normal(3) for k in range(40)]
        hi, lo = lipschitz_empirical(net, samples)
        assert s[-1] - 1e-9 <= lo <= hi <= s[0] + 1e-9

    def test_empirical_bounded_by_product(self):
        for seed in range(10):
            net = net_random([4, 6, 3], activation="relu", seed=seed)
            samples = [Rng(500 + 13 * seed + k).normal(4) for k in range(25)]
            hi, _ = lipschitz_empirical(net, samples)
            assert hi <= lipschitz_upper(net) + 1e-9

    def test_monte_carlo_pair_bound(self):
        net = net_random([3, 5, 2], activation="leaky_relu", seed=13)
        bound = lipschitz_upper(net)
        xs = Rng(14).normal(3 * 200).reshape(200, 3)
        ys = np.stack([net_forward(net, x) for x in xs])
        worst = 0.0
        for i in range(0, 200, 2):
            dx = np.linalg.norm(xs[i] - xs[i + 1])
            if dx > 0:
                worst = max(worst, np.linalg.norm(ys[i] - ys[i + 1]) / dx)
        assert worst <= bound + 1e-9

    def test_duplicates_rejected(self):
        net = identity_net(2)
        x = np.ones(2)
        with pytest.raises(ValueError):
            lipschitz_empirical(net, [x, x.copy()])
