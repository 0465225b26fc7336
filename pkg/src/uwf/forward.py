"""Measurement maps for phaseless imaging.

A ForwardMap stores the M x N matrix whose rows are a_m^H, so that
(A @ rho)[m] = <a_m, rho>.  On top of it sit the intensity map
d_m = |<a_m, rho>|^2, the lifted map on Hermitian matrices, its adjoint,
the backprojection (spectral) matrix and spectral initialization.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .linalg import EigPair, power_iteration
from .rng import Rng

HERMITIAN_RTOL = 1e-12


@dataclass(frozen=True)
class ForwardMap:
    A: np.ndarray          # (M, N) complex, rows are a_m^H
    kind: str              # gaussian | fourier | file
    seed: Optional[int] = None

    @property
    def M(self) -> int:
        return self.A.shape[0]

    @property
    def N(self) -> int:
        return self.A.shape[1]

    @property
    def rows_conj(self) -> np.ndarray:
        """a_m as rows, i.e. conj of the stored matrix."""
        return self.A.conj()


def make_gaussian(M: int, N: int, seed: int) -> ForwardMap:
    """i.i.d. complex Gaussian map, Re and Im each N(0, 1/2)."""
    if M < 1 or N < 1:
        raise ValueError("M, N must be >= 1")
    A = Rng(seed).complex_normal(M * N).reshape(M, N)
    return ForwardMap(A, "gaussian", seed)


def make_fourier(M: int, N: int) -> ForwardMap:
    """First N entries of the M-point DFT rows, a_m(n) = exp(-2pi i m n / M)."""
    if M < N:
        raise ValueError("fourier map requires M >= N")
    m = np.arange(M)[:, None]
    n = np.arange(N)[None, :]
    # stored rows are a_m^H, hence the conjugated kernel
    A = np.exp(2j * np.pi * m * n / M)
    return ForwardMap(A, "fourier", None)


def intensity(F: ForwardMap, rho: np.ndarray) -> np.ndarray:
    """d_m = |<a_m, rho>|^2."""
    rho = np.asarray(rho)
    if rho.shape != (F.N,):
        raise ValueError(f"rho must have shape ({F.N},)")
    z = F.A @ rho
    return (z.real**2 + z.imag**2)


def check_hermitian(X: np.ndarray, rtol: float = HERMITIAN_RTOL) -> None:
    nx = np.linalg.norm(X, "fro")
    if np.linalg.norm(X - X.conj().T, "fro") > max(rtol * nx, 1e-300):
        raise ValueError("matrix is not Hermitian within tolerance")


def lifted_apply(F: ForwardMap, X: np.ndarray) -> np.ndarray:
    """m-th entry a_m^H X a_m for Hermitian X (real-valued output)."""
    X = np.asarray(X)
    if X.shape != (F.N, F.N):
        raise ValueError("X must be N x N")
    check_hermitian(X)
    return np.einsum("mn,nk,mk->m", F.A, X, F.A.conj()).real


def lifted_adjoint(F: ForwardMap, d: np.ndarray) -> np.ndarray:
    """sum_m d_m a_m a_m^H (Hermitian by construction)."""
    d = np.asarray(d, dtype=float)
    if d.shape != (F.M,):
        raise ValueError(f"d must have shape ({F.M},)")
    Y = (F.A.conj().T * d) @ F.A
    return 0.5 * (Y + Y.conj().T)


def spectral_matrix(F: ForwardMap, d: np.ndarray) -> np.ndarray:
    """Backprojection estimate (1/M) sum_m d_m a_m a_m^H."""
    return lifted_adjoint(F, d) / F.M


@dataclass(frozen=True)
class SpectralInit:
    estimate: np.ndarray
    leading: EigPair
    scale_rule: str            # sqrt_lambda | norm_of_d
    degenerate: bool = False
    converged: bool = True


def spectral_init(F: ForwardMap, d: np.ndarray, scale_rule: str = "sqrt_lambda",
                  tol: float = 1e-10, max_iter: int = 5000,
                  seed: int = 0) -> SpectralInit:
    """Leading eigenpair of the spectral matrix, scaled to a norm estimate.

    scale_rule "sqrt_lambda" uses sqrt(lambda_0); "norm_of_d" uses
    (2M)^(-1/4) sqrt(||d||).  A non-positive leading eigenvalue yields a
    zero estimate flagged degenerate.
    """
    if scale_rule not in ("sqrt_lambda", "norm_of_d"):
        raise ValueError(f"unknown scale rule {scale_rule!r}")
    Y = spectral_matrix(F, d)
    res = power_iteration(Y, tol=tol, max_iter=max_iter, seed=seed)
    lam, v0 = res.value, res.vector
    if lam <= 0.0:
        return SpectralInit(np.zeros(F.N, dtype=complex), EigPair(lam, v0),
                            scale_rule, degenerate=True, converged=res.converged)
    if scale_rule == "sqrt_lambda":
        scale = np.sqrt(lam)
    else:
        scale = (2.0 * F.M) ** -0.25 * np.sqrt(np.linalg.norm(d))
    return SpectralInit(scale * v0, EigPair(lam, v0), scale_rule,
                        degenerate=False, converged=res.converged)
