"""Dense complex linear algebra: power iteration, closed-form rank-2
eigenpairs of lifted errors, phase-invariant distance, spectral norms.

All routines are pure functions on immutable inputs; vectors and matrices
are plain complex128 ndarrays.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from .rng import Rng

DEFAULT_TOL = 1e-10


@dataclass(frozen=True)
class EigPair:
    value: float
    vector: np.ndarray  # unit l2 norm


@dataclass(frozen=True)
class PowerResult:
    value: float
    vector: np.ndarray
    converged: bool
    iterations: int
    residual: float

    @property
    def pair(self) -> EigPair:
        return EigPair(self.value, self.vector)


Operator = Union[np.ndarray, Callable[[np.ndarray], np.ndarray]]


def _as_matvec(A: Operator, dim: Optional[int]):
    if callable(A):
        if dim is None:
            raise ValueError("dim is required for a matrix-free operator")
        return A, dim
    M = np.asarray(A)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("operator must be a square matrix")
    return (lambda v: M @ v), M.shape[0]


def _norm_guess(matvec, v: np.ndarray, rounds: int = 12) -> float:
    """Rough upper proxy for ||A|| from a few plain iterations."""
    best = 0.0
    for _ in range(rounds):
        w = matvec(v)
        nw = np.linalg.norm(w)
        best = max(best, nw)
        if nw == 0.0:
            break
        v = w / nw
    return 1.25 * best


def _shifted_end(matvec, n: int, shift: float, sign: float, v0: np.ndarray,
                 tol: float, max_iter: int, ref_other: float):
    """Power iteration on shift*I + sign*A, which shares eigenvectors with
    A; returns the eigenpair of A at that spectral end.  The residual is
    measured in A itself, relative to the largest magnitude seen so far."""
    v = v0.copy()
    lam = 0.0
    residual = np.inf
    for it in range(1, max_iter + 1):
        av = matvec(v)
        lam = float(np.real(np.vdot(v, av)))
        residual = float(np.linalg.norm(av - lam * v))
        ref = max(abs(lam), ref_other)
        if residual <= tol * max(ref, np.finfo(float).tiny):
            return lam, v, True, it, residual
        w = shift * v + sign * av
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0, v, True, it, float(np.linalg.norm(av))
        v = w / nw
    return lam, v, False, max_iter, residual


def power_iteration(A: Operator, tol: float = DEFAULT_TOL, max_iter: int = 5000,
                    seed: int = 0, dim: Optional[int] = None) -> PowerResult:
    """Largest-|eigenvalue| pair of a Hermitian operator by power iteration.

    Both spectral ends are tracked through shifted iterations so a
    near-symmetric spectrum (lam_max ~ -lam_min) cannot stall.  Converged
    when ||A v - lam v|| <= tol * ||A||_est; on non-convergence the best
    iterate is returned flagged rather than raising.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    matvec, n = _as_matvec(A, dim)
    if n < 1:
        raise ValueError("dimension must be >= 1")
    v0 = Rng(seed).complex_normal(n)
    v0 /= np.linalg.norm(v0)
    shift = _norm_guess(matvec, v0)
    if shift == 0.0:
        return PowerResult(0.0, v0, True, 1, 0.0)
    half = max(1, max_iter // 2)
    hi = _shifted_end(matvec, n, shift, +1.0, v0, tol, half, 0.0)
    lo = _shifted_end(matvec, n, shift, -1.0, v0, tol, half, abs(hi[0]))
    best = hi if abs(hi[0]) >= abs(lo[0]) else lo
    lam, v, ok, its, residual = best
    return PowerResult(lam, v, ok, hi[3] + lo[3], residual)


def hermitian_norm(A: np.ndarray, tol: float = DEFAULT_TOL, seed: int = 0) -> float:
    """Spectral norm of a Hermitian matrix, max(|lam_max|, |lam_min|)."""
    return abs(power_iteration(A, tol=tol, seed=seed).value)


def leading_eigpair(A: np.ndarray, tol: float = DEFAULT_TOL, seed: int = 0,
                    max_iter: int = 5000) -> EigPair:
    """Algebraically largest eigenpair of a Hermitian matrix."""
    A = np.asarray(A)
    matvec, n = _as_matvec(A, None)
    v0 = Rng(seed).complex_normal(n)
    v0 /= np.linalg.norm(v0)
    shift = _norm_guess(matvec, v0)
    if shift == 0.0:
        return EigPair(0.0, v0)
    lam, v, _, _, _ = _shifted_end(matvec, n, shift, +1.0, v0, tol,
                                   max_iter, 0.0)
    return EigPair(lam, v)


@dataclass(frozen=True)
class Rank2Pairs:
    plus: EigPair
    minus: EigPair
    degenerate: bool

    def __iter__(self):
        return iter((self.plus, self.minus))


def rank2_eig(p: np.ndarray, q: np.ndarray) -> Rank2Pairs:
    """Both nonzero eigenpairs of E = p p^H - q q^H in closed form.

    The eigenvectors are affine combinations t = alpha*p + (1-alpha)*q with
    alpha the roots of  ||e||^2 a^2 + (e^H q - p^H e) a - p^H q = 0,
    where e = p - q; the eigenvalue is Re(e^H t).  If E = 0 two zero-valued
    pairs are returned, flagged degenerate.
    """
    p = np.asarray(p, dtype=complex)
    q = np.asarray(q, dtype=complex)
    if p.shape != q.shape or p.ndim != 1 or p.size < 2:
        raise ValueError("p, q must be equal-length vectors of dim >= 2")
    n = p.size
    e = p - q
    scale = float(np.linalg.norm(p) ** 2 + np.linalg.norm(q) ** 2)
    if np.linalg.norm(e) <= 1e-15 * max(np.sqrt(scale), 1.0):
        basis = [np.eye(n, dtype=complex)[:, 0], np.eye(n, dtype=complex)[:, 1]]
        return Rank2Pairs(EigPair(0.0, basis[0]), EigPair(0.0, basis[1]), True)

    a = np.vdot(e, e)               # ||e||^2, real positive
    b = np.vdot(e, q) - np.vdot(p, e)
    c = -np.vdot(p, q)
    disc = np.sqrt(b * b - 4.0 * a * c)
    pairs = []
    for alpha in ((-b + disc) / (2.0 * a), (-b - disc) / (2.0 * a)):
        t = alpha * p + (1.0 - alpha) * q
        nt = np.linalg.norm(t)
        if nt <= 1e-15 * max(np.sqrt(scale), 1.0):
            pairs.append(EigPair(0.0, np.eye(n, dtype=complex)[:, len(pairs)]))
            continue
        lam = float(np.real(np.vdot(e, t)))
        pairs.append(EigPair(lam, t / nt))
    pairs.sort(key=lambda ep: ep.value, reverse=True)
    return Rank2Pairs(pairs[0], pairs[1], False)


def dist(x: np.ndarray, y: np.ndarray) -> float:
    """min over global phase of ||x - y e^{i phi}||, in closed form."""
    x = np.asarray(x)
    y = np.asarray(y)
    if x.shape != y.shape:
        raise ValueError("dimension mismatch")
    val = (np.real(np.vdot(x, x)) + np.real(np.vdot(y, y))
           - 2.0 * abs(np.vdot(y, x)))
    return float(np.sqrt(max(val, 0.0)))


@dataclass(frozen=True)
class SpectralNormResult:
    value: float
    vector: np.ndarray  # right singular vector
    converged: bool


def spectral_norm(A: np.ndarray, tol: float = DEFAULT_TOL,
                  warm_start: Optional[np.ndarray] = None,
                  max_iter: int = 5000) -> SpectralNormResult:
    """Largest singular value and right singular vector of A.

    Power iteration on A^H A; a warm-start vector (e.g. the previous
    training step's estimate) is used when supplied.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    A = np.asarray(A)
    n = A.shape[1]
    if warm_start is not None and np.linalg.norm(warm_start) > 0:
        v = np.asarray(warm_start, dtype=A.dtype if np.iscomplexobj(A) else float).copy()
        v = v.astype(complex) if np.iscomplexobj(A) else v.astype(float)
        v /= np.linalg.norm(v)
    else:
        rng = Rng(0)
        v = rng.complex_normal(n) if np.iscomplexobj(A) else rng.normal(n)
        v /= np.linalg.norm(v)
    lam = 0.0
    residual = np.inf
    for _ in range(max_iter):
        w = A.conj().T @ (A @ v)
        lam = float(np.real(np.vdot(v, w)))
        residual = float(np.linalg.norm(w - lam * v))
        if residual <= tol * max(lam, np.finfo(float).tiny):
            return SpectralNormResult(float(np.sqrt(max(lam, 0.0))), v, True)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return SpectralNormResult(0.0, v, True)
        v = w / nw
    return SpectralNormResult(float(np.sqrt(max(lam, 0.0))), v, False)
