import numpy as np
import pytest

from uwf.forward import (ForwardMap, intensity, lifted_adjoint, lifted_apply,
                         make_fourier, make_gaussian, spectral_init,
                         spectral_matrix)
from uwf.linalg import dist
from uwf.rng import Rng, derive_seed

from conftest import random_complex, random_hermitian


class TestMakeGaussian:
    def test_deterministic(self):
        F1 = make_gaussian(16, 4, 11)
        F2 = make_gaussian(16, 4, 11)
        assert np.array_equal(F1.A, F2.A)

    def test_row_energy(self):
        F = make_gaussian(4096, 8, 1)
        mean_row = np.mean(np.sum(np.abs(F.A) ** 2, axis=1))
        assert abs(mean_row - 8) / 8 < 0.05

    def test_column_correlation(self):
        F = make_gaussian(4096, 8, 2)
        for i in range(8):
            for j in range(i + 1, 8):
                corr = abs(np.vdot(F.A[:, i], F.A[:, j])) / 4096
                assert corr <= 0.1

    def test_bad_dims(self):
        with pytest.raises(ValueError):
            make_gaussian(0, 4, 1)


class TestMakeFourier:
    def test_two_point(self):
        F = make_fourier(2, 2)
        assert np.allclose(F.A, [[1, 1], [1, -1]], atol=1e-12)

    def test_unit_modulus(self):
        F = make_fourier(12, 5)
        assert np.allclose(np.abs(F.A), 1.0, atol=1e-12)

    def test_orthogonality(self):
        F = make_fourier(16, 7)
        G = F.A.conj().T @ F.A / F.M
        assert np.linalg.norm(G - np.eye(7)) <= 1e-10

    def test_requires_oversampling(self):
        with pytest.raises(ValueError):
            make_fourier(3, 5)


class TestIntensity:
    def test_scalar_case(self):
        F = ForwardMap(np.array([[1.0 + 0j]]), "file")
        assert intensity(F, np.array([3.0 + 0j])) == pytest.approx([9.0])

    def test_zero_signal(self):
        F = make_gaussian(6, 3, 0)
        assert np.array_equal(intensity(F, np.zeros(3, dtype=complex)),
                              np.zeros(6))

    def test_double_loop_oracle(self):
        F = make_gaussian(9, 4, 5)
        rho = random_complex(4, 6)
        expected = np.empty(9)
        for m in range(9):
            a_m = F.A[m].conj()          # rows of A are a_m^H
            acc = 0.0 + 0.0j
            for n in range(4):
                acc += np.conj(a_m[n]) * rho[n]
            expected[m] = abs(acc) ** 2
        assert np.allclose(intensity(F, rho), expected, rtol=1e-12)

    def test_phase_invariance(self):
        F = make_gaussian(7, 3, 8)
        rho = random_complex(3, 9)
        d1 = intensity(F, rho)
        d2 = intensity(F, np.exp(1.3j) * rho)
        assert np.allclose(d1, d2, rtol=1e-12)

    def test_dimension_mismatch(self):
        F = make_gaussian(4, 3, 0)
        with pytest.raises(ValueError):
            intensity(F, np.zeros(5, dtype=complex))


class TestLifted:
    def test_apply_identity(self):
        F = make_gaussian(5, 3, 1)
        out = lifted_apply(F, np.eye(3, dtype=complex))
        assert np.allclose(out, np.sum(np.abs(F.A) ** 2, axis=1), rtol=1e-12)

    def test_apply_consistent_with_intensity(self):
        F = make_gaussian(8, 4, 2)
        rho = random_complex(4, 3)
        X = np.outer(rho, rho.conj())
        assert np.allclose(lifted_apply(F, X), intensity(F, rho), atol=1e-10)

    def test_apply_trace_oracle(self):
        F = make_gaussian(6, 4, 4)
        X = random_hermitian(4, 5)
        expected = [np.real(np.trace(np.outer(F.A[m].conj(), F.A[m]).conj().T @ X))
                    for m in range(6)]
        assert np.allclose(lifted_apply(F, X), expected, rtol=1e-10)

    def test_apply_rejects_non_hermitian(self):
        F = make_gaussian(4, 3, 0)
        X = np.eye(3, dtype=complex)
        X[0, 1] = 1.0
        with pytest.raises(ValueError):
            lifted_apply(F, X)

    def test_adjoint_single_row(self):
        # a = (1, i): stored row is a^H = (1, -i)
        F = ForwardMap(np.array([[1.0, -1.0j]]), "file")
        out = lifted_adjoint(F, np.array([2.0]))
        assert np.allclose(out, 2.0 * np.array([[1, -1j], [1j, 1]]), atol=1e-12)

    def test_adjoint_zero(self):
        F = make_gaussian(5, 3, 6)
        assert np.allclose(lifted_adjoint(F, np.zeros(5)), 0.0)

    def test_adjoint_identity(self):
        F = make_gaussian(7, 4, 7)
        X = random_hermitian(4, 8)
        d = Rng(9).normal(7)
        lhs = np.dot(lifted_apply(F, X), d)
        rhs = np.real(np.trace(X.conj().T @ lifted_adjoint(F, d)))
        scale = np.linalg.norm(X, "fro") * np.linalg.norm(d)
        assert abs(lhs - rhs) <= 1e-9 * scale


class TestSpectralMatrix:
    def test_zero(self):
        F = make_gaussian(4, 3, 0)
        assert np.allclose(spectral_matrix(F, np.zeros(4)), 0.0)

    def test_single_row_case(self):
        F = ForwardMap(np.array([[1.0, -1.0j]]), "file")
        Y = spectral_matrix(F, np.array([2.0]))
        assert np.allclose(Y, np.array([[2, -2j], [2j, 2]]), atol=1e-12)

    def test_linearity(self):
        F = make_gaussian(6, 3, 1)
        d1, d2 = Rng(2).normal(6), Rng(3).normal(6)
        lhs = spectral_matrix(F, 2.0 * d1 + 3.0 * d2)
        rhs = 2.0 * spectral_matrix(F, d1) + 3.0 * spectral_matrix(F, d2)
        assert np.allclose(lhs, rhs, atol=1e-12)

    def test_concentration(self):
        devs = []
        for seed in range(20):
            N, M = 8, 64 * 8
            F = make_gaussian(M, N, derive_seed(100, seed))
            rho = random_complex(N, 200 + seed)
            Y = spectral_matrix(F, intensity(F, rho))
            target = np.outer(rho, rho.conj()) + np.linalg.norm(rho) ** 2 * np.eye(N)
            devs.append(np.linalg.norm(Y - target, 2) / np.linalg.norm(rho) ** 2)
        assert np.median(devs) < 0.5


class TestSpectralInit:
    def test_zero_measurements(self):
        F = make_gaussian(6, 3, 0)
        init = spectral_init(F, np.zeros(6))
        assert init.degenerate
        assert np.array_equal(init.estimate, np.zeros(3, dtype=complex))

    def test_basin_entry(self):
        ds = []
        for seed in range(50):
            N, M = 8, 64 * 8
            F = make_gaussian(M, N, derive_seed(300, seed))
            rho = random_complex(N, 400 + seed)
            init = spectral_init(F, intensity(F, rho), scale_rule="norm_of_d")
            ds.append(dist(init.estimate, rho) / np.linalg.norm(rho))
        assert np.median(ds) <= 0.5

    def test_scale_rules_ratio(self):
        # sqrt(lambda0) absorbs the ||rho||^2 I part of the backprojection,
        # so its norm estimate runs ~sqrt(2) above the norm_of_d rule
        ratios = []
        for seed in range(20):
            N, M = 8, 64 * 8
            F = make_gaussian(M, N, derive_seed(500, seed))
            rho = random_complex(N, 600 + seed)
            d = intensity(F, rho)
            a = np.linalg.norm(spectral_init(F, d, "sqrt_lambda").estimate)
            b = np.linalg.norm(spectral_init(F, d, "norm_of_d").estimate)
            ratios.append(a / b)
        assert abs(np.median(ratios) - np.sqrt(2)) < 0.1

    def test_unknown_rule(self):
        F = make_gaussian(4, 2, 0)
        with pytest.raises(ValueError):
            spectral_init(F, np.zeros(4), scale_rule="bogus")
