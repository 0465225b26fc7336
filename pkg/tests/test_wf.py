import numpy as np
import pytest

from uwf.forward import ForwardMap, intensity, make_gaussian, spectral_init
from uwf.linalg import dist
from uwf.rng import Rng, derive_seed
from uwf.wf import WfConfig, grad_J, loss_J, run_wf, trace_to_csv

from conftest import random_complex


def planted(N, M, seed):
    F = make_gaussian(M, N, derive_seed(7000, seed))
    rho = random_complex(N, 8000 + seed)
    return F, rho, intensity(F, rho)


class TestLossJ:
    def test_zero_at_solution(self):
        F, rho, d = planted(5, 30, 0)
        assert loss_J(F, rho, d) == pytest.approx(0.0, abs=1e-20)

    def test_scalar_expansion(self):
        F = ForwardMap(np.array([[1.0 + 0j]]), "file")
        assert loss_J(F, np.array([2.0 + 0j]), np.array([1.0])) == pytest.approx(4.5)

    def test_direct_sum_oracle(self):
        F, rho, d = planted(4, 9, 1)
        probe = random_complex(4, 42)
        acc = 0.0
        for m in range(9):
            z = F.A[m] @ probe
            acc += (abs(z) ** 2 - d[m]) ** 2
        assert loss_J(F, probe, d) == pytest.approx(acc / 18.0, rel=1e-12)

    def test_phase_invariance(self):
        F, rho, d = planted(4, 10, 2)
        probe = random_complex(4, 3)
        assert loss_J(F, probe, d) == pytest.approx(
            loss_J(F, np.exp(0.7j) * probe, d), rel=1e-12)


class TestGradJ:
    def test_zero_at_solution(self):
        F, rho, d = planted(6, 36, 3)
        assert np.linalg.norm(grad_J(F, rho, d)) <= 1e-12

    def test_scalar_expansion(self):
        F = ForwardMap(np.array([[1.0 + 0j]]), "file")
        g = grad_J(F, np.array([2.0 + 0j]), np.array([1.0]))
        assert g[0] == pytest.approx(6.0)

    def test_finite_differences(self):
        # real-direction derivative of J equals 2 Re<grad, delta>
        h = 1e-5
        for seed in range(50):
            F, _, d = planted(5, 12, 100 + seed)
            rho = random_complex(5, 200 + seed)
            g = grad_J(F, rho, d)
            for direction_seed in (0, 1):
                delta = (random_complex(5, 300 + 2 * seed + direction_seed)
                         if direction_seed else
                         Rng(400 + seed).normal(5).astype(complex))
                fd = (loss_J(F, rho + h * delta, d)
                      - loss_J(F, rho - h * delta, d)) / (2 * h)
                analytic = 2.0 * np.real(np.vdot(g, delta))
                assert abs(fd - analytic) <= 1e-5 * max(1.0, abs(analytic))


class TestRunWf:
    def test_fixed_point(self):
        F, rho, d = planted(5, 40, 4)
        trace = run_wf(F, d, rho, WfConfig(max_iter=50, step=0.2, tol=1e-14))
        assert trace.converged
        assert dist(trace.final, rho) <= 1e-10

    def test_planted_recovery(self):
        hits = 0
        for seed in range(10):
            F, rho, d = planted(16, 8 * 16, 500 + seed)
            init = spectral_init(F, d)
            trace = run_wf(F, d, init.estimate, WfConfig(max_iter=2000, step=0.2))
            hits += dist(trace.final, rho) / np.linalg.norm(rho) <= 1e-5
        assert hits >= 9

    def test_monotone_loss_small_step(self):
        for seed in range(20):
            F, rho, d = planted(6, 24, 700 + seed)
            init = spectral_init(F, d)
            trace = run_wf(F, d, init.estimate, WfConfig(max_iter=200, step=0.01))
            diffs = np.diff(trace.loss_history)
            assert np.all(diffs <= 1e-12 * max(1.0, trace.loss_history[0]))

    def test_phase_equivariance(self):
        F, rho, d = planted(5, 25, 5)
        init = spectral_init(F, d).estimate
        phi = np.exp(0.9j)
        cfg = WfConfig(max_iter=100, step=0.1, record_trace=True)
        t1 = run_wf(F, d, init, cfg)
        t2 = run_wf(F, d, phi * init, cfg)
        for a, b in zip(t1.iterates, t2.iterates):
            assert np.linalg.norm(phi * a - b) <= 1e-10 * np.linalg.norm(a)

    def test_zero_init_degenerate(self):
        F, _, d = planted(4, 8, 6)
        trace = run_wf(F, d, np.zeros(4, dtype=complex), WfConfig())
        assert trace.degenerate

    def test_divergence_guard(self):
        F, _, d = planted(4, 8, 7)
        init = spectral_init(F, d).estimate
        trace = run_wf(F, d, init, WfConfig(max_iter=2000, step=500.0))
        assert trace.diverged

    def test_trace_csv(self, tmp_path):
        F, rho, d = planted(4, 16, 8)
        cfg = WfConfig(max_iter=20, step=0.1, record_trace=True)
        trace = run_wf(F, d, spectral_init(F, d).estimate, cfg)
        out = tmp_path / "trace.csv"
        trace_to_csv(trace, out, truth=rho)
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "iter,loss,dist_to_truth"
        assert len(lines) == len(trace.loss_history) + 1
