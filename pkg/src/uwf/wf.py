"""Classic Wirtinger Flow in the image domain.

Loss J(rho) = (1/2M) sum_m (a_m^H rho rho^H a_m - d_m)^2, with the update
rho <- rho - (gamma / ||rho0||^2) * gradJ, where gradJ is the Wirtinger
derivative (1/M) F^H(e) rho.  The factor-2 relation to the real-calculus
gradient is absorbed by gamma; the finite-difference tests pin it down.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .forward import ForwardMap
from .linalg import dist


@dataclass
class WfConfig:
    max_iter: int = 2000
    step: float = 0.2
    tol: float = 0.0               # on ||gradJ|| / ||rho0||^3
    record_trace: bool = False
    max_pixel_rescale: bool = False  # rescale iterate so max |pixel| = 1

    def __post_init__(self):
        if self.step <= 0 or self.max_iter < 1:
            raise ValueError("step must be > 0 and max_iter >= 1")


@dataclass
class WfTrace:
    final: np.ndarray
    loss_history: List[float] = field(default_factory=list)
    iterates: Optional[List[np.ndarray]] = None
    converged: bool = False
    diverged: bool = False
    degenerate: bool = False
    iterations: int = 0


def loss_J(F: ForwardMap, rho: np.ndarray, d: np.ndarray) -> float:
    d = np.asarray(d, dtype=float)
    if d.shape != (F.M,):
        raise ValueError("d has wrong length")
    z = F.A @ np.asarray(rho)
    e = (z.real**2 + z.imag**2) - d
    return float(np.sum(e * e) / (2.0 * F.M))


def grad_J(F: ForwardMap, rho: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Wirtinger gradient (1/M) F^H(e) rho with e_m = |<a_m, rho>|^2 - d_m."""
    rho = np.asarray(rho, dtype=complex)
    d = np.asarray(d, dtype=float)
    if rho.shape != (F.N,) or d.shape != (F.M,):
        raise ValueError("dimension mismatch")
    z = F.A @ rho
    e = (z.real**2 + z.imag**2) - d
    return F.A.conj().T @ (e * z) / F.M


def run_wf(F: ForwardMap, d: np.ndarray, init: np.ndarray,
           cfg: WfConfig) -> WfTrace:
    rho = np.asarray(init, dtype=complex).copy()
    n0 = np.linalg.norm(rho)
    if n0 == 0.0:
        return WfTrace(final=rho, degenerate=True)
    norm0_sq = n0 * n0
    trace = WfTrace(final=rho, iterates=[rho.copy()] if cfg.record_trace else None)
    window_start = loss_J(F, rho, d)
    for it in range(1, cfg.max_iter + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            g = grad_J(F, rho, d)
        if not np.all(np.isfinite(g)):
            trace.diverged = True
            break
        gn = np.linalg.norm(g)
        if gn / n0**3 <= cfg.tol:
            trace.converged = True
            break
        rho = rho - (cfg.step / norm0_sq) * g
        if cfg.max_pixel_rescale:
            peak = np.max(np.abs(rho))
            if peak > 0:
                rho = rho / peak
        if not np.all(np.isfinite(rho)):
            trace.diverged = True
            break
        with np.errstate(over="ignore", invalid="ignore"):
            loss = loss_J(F, rho, d)
        trace.loss_history.append(loss)
        if cfg.record_trace:
            trace.iterates.append(rho.copy())
        trace.iterations = it
        # divergence guard: loss grew 10x over a 50-iteration window
        if it % 50 == 0:
            if loss > 10.0 * window_start and np.isfinite(window_start):
                trace.diverged = True
                break
            window_start = loss
    trace.final = rho
    return trace


def trace_to_csv(trace: WfTrace, path, truth: Optional[np.ndarray] = None) -> None:
    """Write iter, loss and (when truth given) dist_to_truth columns."""
    if truth is not None and trace.iterates is None:
        raise ValueError("dist_to_truth requires a trace recorded with iterates")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        header = ["iter", "loss"] + (["dist_to_truth"] if truth is not None else [])
        w.writerow(header)
        for i, loss in enumerate(trace.loss_history, start=1):
            row = [i, f"{loss:.17g}"]
            if truth is not None:
                row.append(f"{dist(trace.iterates[i], truth):.17g}")
            w.writerow(row)
