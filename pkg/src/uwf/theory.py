"""Numerical estimation of the exact-recovery constants and evaluation of
the sufficient-condition inequality chain.

delta and omega are empirical maxima over finite sample sets, i.e. lower
bounds on the true suprema; the report labels them accordingly.  All
derived constants (delta_hat, eps_rho, c, h, delta1, the rate bounds and
the Lipschitz-product window) are evaluated from their closed forms and
every check records both sides.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field, replace, asdict
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .forward import ForwardMap, intensity, lifted_adjoint, lifted_apply, make_gaussian, spectral_init
from .linalg import dist, hermitian_norm, leading_eigpair
from .nets import Net, net_forward
from .rng import Rng, derive_seed
from .unrolled import EncodedTrace, UnrolledModel, rnn_forward, stack_features

# Feasibility threshold on the concentration constant for plain WF under
# deterministic maps (cited recovery analysis); used as a reference point.
WF_DELTA_THRESHOLD = 0.184


def delta_apply(F: ForwardMap, X: np.ndarray) -> np.ndarray:
    """Perturbation operator (1/M) F^H F(X) - X - tr(X) I on Hermitian X."""
    X = np.asarray(X)
    back = lifted_adjoint(F, lifted_apply(F, X)) / F.M
    return back - X - np.real(np.trace(X)) * np.eye(X.shape[0])


def estimate_delta(F: ForwardMap, samples: Sequence[np.ndarray],
                   tol: float = 1e-10) -> float:
    """max over samples of ||Delta(rho rho^H)|| / ||rho||^2.

    An empirical (lower-bound) estimate of the concentration constant;
    range-restricted when the samples are decoder outputs.
    """
    best = 0.0
    used = 0
    for rho in samples:
        rho = np.asarray(rho, dtype=complex)
        nrm2 = float(np.real(np.vdot(rho, rho)))
        if nrm2 == 0.0:
            warnings.warn("estimate_delta: skipping zero-norm sample")
            continue
        pert = delta_apply(F, np.outer(rho, rho.conj()))
        best = max(best, hermitian_norm(pert, tol=tol) / nrm2)
        used += 1
    if used == 0:
        raise ValueError("estimate_delta: no nonzero samples")
    return best


@dataclass(frozen=True)
class HTildeResult:
    matrix: np.ndarray
    lam0: float
    u0: np.ndarray
    degenerate: bool = False


def h_tilde(decoder: Net, Z: np.ndarray, tol: float = 1e-10) -> HTildeResult:
    """Lift through the decoder: decode sqrt(lam0) u0 of Z, form the outer
    product.

    u0 is phase-aligned (largest-magnitude entry real nonnegative) to fix
    the eigenvector sign deterministically; lam0 <= 0 falls back to the
    decoded-zero lift, flagged degenerate.
    """
    Z = np.asarray(Z)
    pair = leading_eigpair(Z, tol=tol)
    lam0, u0 = pair.value, pair.vector
    k = int(np.argmax(np.abs(u0)))
    if np.abs(u0[k]) > 0:
        u0 = u0 * np.exp(-1j * np.angle(complex(u0[k])))
    if np.linalg.norm(u0.imag) > 1e-9 * np.linalg.norm(u0):
        raise ValueError("decoder requires a real encoded domain")
    u0 = u0.real
    if lam0 <= 0.0:
        rho = net_forward(decoder, np.zeros(decoder.input_dim))
        return HTildeResult(np.outer(rho, rho.conj()), lam0, u0, degenerate=True)
    rho = net_forward(decoder, np.sqrt(lam0) * u0)
    return HTildeResult(np.outer(rho, rho.conj()), lam0, u0)


@dataclass
class OmegaEstimate:
    value: float
    ratios: List[float]
    max_pair: Optional[Tuple[np.ndarray, np.ndarray]]
    skipped: int


def estimate_omega(decoder: Net, F: ForwardMap,
                   pairs: Sequence[Tuple[np.ndarray, np.ndarray]],
                   eps_y: float, tol: float = 1e-10,
                   den_floor: float = 1e-12) -> OmegaEstimate:
    """max over admissible (y, y*) pairs of
    ||Delta(Htil(y y^H) - Htil(y* y*^H))|| / ||Delta(Htil(y y^H - y* y*^H))||.

    Pairs outside the eps_y ball (plain Euclidean distance in the encoded
    space) and pairs with a vanishing denominator are skipped.
    """
    ratios: List[float] = []
    max_pair = None
    best = -np.inf
    skipped = 0
    for y, y_star in pairs:
        y = np.asarray(y, dtype=float)
        y_star = np.asarray(y_star, dtype=float)
        if np.linalg.norm(y - y_star) > eps_y * np.linalg.norm(y_star):
            skipped += 1
            continue
        lift_y = h_tilde(decoder, np.outer(y, y), tol=tol).matrix
        lift_s = h_tilde(decoder, np.outer(y_star, y_star), tol=tol).matrix
        num = hermitian_norm(delta_apply(F, lift_y - lift_s), tol=tol)
        diff = h_tilde(decoder, np.outer(y, y) - np.outer(y_star, y_star),
                       tol=tol).matrix
        den = hermitian_norm(delta_apply(F, diff), tol=tol)
        if den <= den_floor:
            skipped += 1
            continue
        r = num / den
        ratios.append(r)
        if r > best:
            best, max_pair = r, (y, y_star)
    if not ratios:
        raise ValueError("estimate_omega: no admissible pairs")
    return OmegaEstimate(best, ratios, max_pair, skipped)


def frame_bounds(decoder: Net, samples: Sequence[np.ndarray]
                 ) -> Tuple[float, float]:
    """(sigma_tilde, sigma) = min/max over samples of ||H(y)|| / ||y||."""
    lo, hi = np.inf, 0.0
    for y in samples:
        y = np.asarray(y, dtype=float)
        ny = np.linalg.norm(y)
        if ny == 0.0:
            continue
        r = np.linalg.norm(net_forward(decoder, y)) / ny
        lo, hi = min(lo, r), max(hi, r)
    if hi == 0.0:
        raise ValueError("frame_bounds: no nonzero samples")
    return lo, hi


def estimate_eps(F: ForwardMap, samples: Sequence[np.ndarray],
                 scale_rule: str = "sqrt_lambda") -> float:
    """Empirical spectral-init accuracy: max over truths of
    dist(rho0, rho*) / ||rho*||."""
    worst = 0.0
    for rho_star in samples:
        rho_star = np.asarray(rho_star, dtype=complex)
        d = intensity(F, rho_star)
        init = spectral_init(F, d, scale_rule=scale_rule)
        worst = max(worst, dist(init.estimate, rho_star) / np.linalg.norm(rho_star))
    return worst


def b1_b2(mu_G: float, mu_H: float, mu_R: float, eps: float
          ) -> Tuple[float, float]:
    """Lower-bound components for the init transfer constant chi:
    chi >= max(b1, b2)."""
    if eps <= 0 or min(mu_G, mu_H, mu_R) <= 0:
        raise ValueError("eps and all Lipschitz constants must be positive")
    b1 = (1.0 / eps) * (1.0 / mu_H - mu_G * (1.0 + eps))
    mu_M = mu_G * mu_H * mu_R
    b2 = (mu_G / (eps * mu_M)) * (1.0 - mu_R)
    return b1, b2


# ------------------------------------------------------------ Theorem ledger

@dataclass
class TheoryParams:
    delta: float = 0.0
    omega: float = 1.0
    mu_G: float = 1.0
    mu_H: float = 1.0
    mu_H_tilde: float = 1.0
    mu_R: float = 1.0
    sigma_H: float = 1.0
    sigma_H_tilde: float = 1.0
    eps: float = 0.0
    eps_y: float = 0.0
    eps_rho: Optional[float] = None    # None: computed as mu_G mu_R mu_H (1+eps) eps_y
    delta_hat: Optional[float] = None  # None: computed as omega mu_H^2 delta
    chi: float = 1.0
    xi_y: float = 1.0
    xi_rho: float = 1.0
    alpha: Optional[float] = None
    beta: Optional[float] = None
    L: int = 0
    M: int = 0
    N: int = 0
    N_y: int = 0


@dataclass
class TheoryCheck:
    name: str
    passed: bool
    lhs: float
    rhs: float
    indeterminate: bool = False


@dataclass
class TheoryReport:
    params: TheoryParams
    c_val: float
    h_val: float
    delta1: float
    bound_4ab: float
    frame_bound_4ab: float
    delta_upper: float
    frame_delta_upper: float
    lip_window: Tuple[float, float]
    checks: List[TheoryCheck] = field(default_factory=list)
    notes: Dict[str, str] = field(default_factory=dict)

    def passed(self, name: str) -> bool:
        for c in self.checks:
            if c.name == name:
                return c.passed
        raise KeyError(name)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True, default=float)


def c_of(delta: float, eps_y: float, omega: float) -> float:
    return (1.0 + eps_y) * (2.0 + eps_y) * (2.0 + omega * delta)


def delta1_of(delta_hat: float, eps_y: float, eps_rho: float,
              mu_H_tilde: float) -> float:
    den = mu_H_tilde**2 * (1.0 - eps_rho) * (2.0 - eps_rho)
    if den <= 0.0:
        return np.inf
    return np.sqrt(2.0) * delta_hat * (2.0 + eps_rho) * (2.0 + eps_y) / den


def h_of(delta1: float, eps_rho: float) -> float:
    return (1.0 - delta1) * (1.0 - eps_rho) * (2.0 - eps_rho)


def wf_delta1(delta: float, eps: float) -> float:
    """Restricted-convexity constant of plain WF under the same
    concentration bound (the comparison side of the delta1 inequality)."""
    den = (1.0 - eps) * (2.0 - eps)
    if den <= 0.0:
        return np.inf
    return np.sqrt(2.0) * delta * (2.0 + eps) / np.sqrt(den)


def calibrate_wf_eps(delta_threshold: float = WF_DELTA_THRESHOLD) -> float:
    """Init accuracy at which plain WF sits exactly on its feasibility
    boundary (wf_delta1 = 1) for the given delta; solved by bisection."""
    lo, hi = 0.0, 1.0 - 1e-12
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if wf_delta1(delta_threshold, mid) < 1.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def check_theorem1(params: TheoryParams) -> TheoryReport:
    """Evaluate the sufficient-condition ledger for the supplied constants."""
    p = params
    delta_hat = p.delta_hat if p.delta_hat is not None else p.omega * p.mu_H**2 * p.delta
    eps_rho = (p.eps_rho if p.eps_rho is not None
               else p.mu_G * p.mu_R * p.mu_H * (1.0 + p.eps) * p.eps_y)
    filled = replace(p, delta_hat=delta_hat, eps_rho=eps_rho)

    c_val = c_of(p.delta, p.eps_y, p.omega)
    delta1 = delta1_of(delta_hat, p.eps_y, eps_rho, p.mu_H_tilde)
    h_val = h_of(delta1, eps_rho)

    checks: List[TheoryCheck] = []

    def add(name, lhs, rhs):
        lhs, rhs = float(lhs), float(rhs)
        indet = not (np.isfinite(lhs) and np.isfinite(rhs))
        checks.append(TheoryCheck(name, bool(not indet and lhs <= rhs),
                                  lhs, rhs, indeterminate=indet))

    add("delta1_lt_1", delta1, 1.0)
    add("eps_rho_lt_1", eps_rho, 1.0)

    nb = np.sqrt(2.0) * p.omega * (2.0 + eps_rho) * (2.0 + p.eps_y)
    delta_upper = ((p.mu_H_tilde / p.mu_H) ** 2
                   * (1.0 - eps_rho) * (2.0 - eps_rho) / nb
                   if nb > 0 and p.mu_H > 0 else np.inf)
    add("delta_upper_bound", p.delta, delta_upper)

    ratio_mu = (p.mu_H_tilde / p.mu_H) if p.mu_H > 0 else np.inf
    bound_4ab = ratio_mu**8 * (h_val / c_val) ** 2 if c_val > 0 else np.inf
    if p.alpha is not None and p.beta is not None and p.alpha * p.beta > 0:
        add("rate_bound_holds", 4.0 / (p.alpha * p.beta), bound_4ab)

    ratio_sig = (p.sigma_H_tilde / p.sigma_H) if p.sigma_H > 0 else np.inf
    frame_bound_4ab = (ratio_mu**4 * ratio_sig**4 * (h_val / c_val) ** 2
                       if c_val > 0 else np.inf)
    frame_delta_upper = (p.sigma_H_tilde * p.mu_H_tilde / p.sigma_H**2
                         * (1.0 - eps_rho) * (2.0 - eps_rho) / nb
                         if nb > 0 and p.sigma_H > 0 else np.inf)
    add("frame_delta_upper_bound", p.delta, frame_delta_upper)

    win_lo = (1.0 - p.chi * p.eps * p.mu_H) / (1.0 + p.eps)
    win_hi = (min(2.0 - 1.0 / p.mu_R, p.xi_rho / p.xi_y) / (1.0 + p.eps)
              if p.mu_R > 0 and p.xi_y > 0 else np.inf)
    add("lip_product_lower", win_lo, p.mu_G * p.mu_H)
    add("lip_product_upper", p.mu_G * p.mu_H, win_hi)
    add("mu_R_le_1", p.mu_R, 1.0)

    den = (1.0 - eps_rho) * (2.0 - eps_rho)
    wf_den = (1.0 - p.eps) * (2.0 - p.eps)
    lhs49 = (p.omega * (p.mu_H / p.mu_H_tilde) ** 2
             * (2.0 + eps_rho) * (2.0 + p.eps_y) / den
             if den > 0 and p.mu_H_tilde > 0 else np.inf)
    rhs49 = (2.0 + p.eps) / np.sqrt(wf_den) if wf_den > 0 else np.inf
    add("delta1_beats_wf", lhs49, rhs49)

    return TheoryReport(params=filled, c_val=c_val, h_val=h_val, delta1=delta1,
                        bound_4ab=bound_4ab, frame_bound_4ab=frame_bound_4ab,
                        delta_upper=delta_upper,
                        frame_delta_upper=frame_delta_upper,
                        lip_window=(win_lo, win_hi), checks=checks,
                        notes={"delta": "empirical (lower-bound) estimate",
                               "omega": "empirical (lower-bound) estimate"})


# ----------------------------------------------------- initialization metrics

@dataclass(frozen=True)
class InitMetrics:
    d1: float
    d2: float
    d3: float
    skipped: int


def init_metrics(model: UnrolledModel, F: ForwardMap, testset: Sequence,
                 scale_rule: str = "sqrt_lambda") -> InitMetrics:
    """Mean initialization errors: spectral-init image error (d1, phase
    aligned), decoded-init error (d2) and encoded init-to-final error (d3)."""
    if len(testset) == 0:
        raise ValueError("testset must be non-empty")
    t1, t2, t3 = [], [], []
    skipped = 0
    for s in testset:
        rho_star = np.asarray(s.rho_star, dtype=complex)
        ns2 = float(np.real(np.vdot(rho_star, rho_star)))
        if ns2 == 0.0:
            skipped += 1
            continue
        init = spectral_init(F, s.d, scale_rule=scale_rule)
        trace = rnn_forward(model, F, np.asarray(s.d, dtype=float), init)
        yl = trace.y_l[-1] if trace.y_l else trace.y0
        nyl2 = float(np.dot(yl, yl))
        if nyl2 == 0.0:
            skipped += 1
            continue
        t1.append(dist(init.estimate, rho_star) ** 2 / ns2)
        t2.append(np.linalg.norm(net_forward(model.decoder, trace.y0)
                                 - rho_star.real) ** 2 / ns2)
        t3.append(np.linalg.norm(trace.y0 - yl) ** 2 / nyl2)
    if not t1:
        raise ValueError("init_metrics: all samples skipped")
    return InitMetrics(float(np.mean(t1)), float(np.mean(t2)),
                       float(np.mean(t3)), skipped)


# ---------------------------------------------------------- contraction audit

@dataclass(frozen=True)
class StageReport:
    stage: int
    dist_sq: float
    factor_bound: float
    satisfied: bool


def contraction_audit(trace: EncodedTrace, y_star: np.ndarray,
                      gammas: Sequence[float], alpha: float,
                      rtol: float = 1e-12) -> List[StageReport]:
    """Per-stage check of dist^2(y_l, y*) <= (1 - 2 gamma_l / (alpha s))
    dist^2(y_{l-1}, y*), with s the frozen normalizer."""
    y_star = np.asarray(y_star, dtype=float)
    s = trace.norm_y0_sq
    reports = []
    prev = dist(trace.y0, y_star) ** 2
    for l, (y, gamma) in enumerate(zip(trace.y_l, gammas), start=1):
        cur = dist(y, y_star) ** 2
        factor = 1.0 - 2.0 * gamma / (alpha * s)
        ok = factor >= 0.0 and cur <= factor * prev + rtol * max(prev, 1.0)
        reports.append(StageReport(l, cur, factor, ok))
        prev = cur
    return reports


# ------------------------------------------------------------------ sweeps

def delta_mn_sweep(N: int, ratios: Sequence[float], n_samples: int,
                   seed: int = 0) -> Dict[float, float]:
    """Median empirical delta-hat per M/N ratio for Gaussian maps."""
    out: Dict[float, float] = {}
    for ri, ratio in enumerate(ratios):
        M = max(1, int(round(ratio * N)))
        vals = []
        for i in range(n_samples):
            F = make_gaussian(M, N, derive_seed(seed, ri, 2 * i))
            rho = Rng(derive_seed(seed, ri, 2 * i + 1)).complex_normal(N)
            vals.append(estimate_delta(F, [rho]))
        out[float(ratio)] = float(np.median(vals))
    return out


def delta1_boundary_sweep(eps: float, deltas: Sequence[float]
                          ) -> Tuple[Optional[float], List[Tuple[float, float]]]:
    """Sweep the identity-decoder reduction (omega = mu's = 1,
    eps_y = eps_rho = eps) over delta; return the first delta1 >= 1
    crossing and the (delta, delta1) curve."""
    curve = []
    crossing = None
    for d in deltas:
        params = TheoryParams(delta=d, omega=1.0, mu_G=1.0, mu_H=1.0,
                              mu_H_tilde=1.0, mu_R=1.0, eps=eps,
                              eps_y=eps, eps_rho=eps)
        rep = check_theorem1(params)
        curve.append((float(d), float(rep.delta1)))
        if crossing is None and rep.delta1 >= 1.0:
            crossing = float(d)
    return crossing, curve
