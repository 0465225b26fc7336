"""Experiment harness shared by the scripts and the acceptance suite:
squares-dataset problems, default architectures, WF baselines and the
M/N / SNR sweeps."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .data import Sample, gen_squares, synthesize
from .forward import ForwardMap, make_gaussian, spectral_init
from .linalg import dist
from .nets import net_random, Net
from .rng import derive_seed
from .training import TrainConfig, relative_errors, train
from .unrolled import UnrolledModel
from .wf import WfConfig, run_wf


@dataclass
class SquaresProblem:
    F: ForwardMap
    train_set: List[Sample]
    test_set: List[Sample]
    H: int
    W: int


def make_squares_problem(H: int, W: int, M: int, n_train: int, n_test: int,
                         seed: int, snr_db: Optional[float] = None
                         ) -> SquaresProblem:
    N = H * W
    F = make_gaussian(M, N, derive_seed(seed, 0xF0))
    imgs = gen_squares(n_train + n_test, H, W, derive_seed(seed, 0xDA))
    samples = synthesize(F, imgs, snr_db=snr_db, seed=derive_seed(seed, 0x27))
    return SquaresProblem(F, samples[:n_train], samples[n_train:], H, W)


def default_model(N: int, N_y: int, L: int, seed: int,
                  enc_hidden: Sequence[int] = (64,),
                  dec_hidden: Sequence[int] = (64,),
                  gamma0: float = 0.1) -> UnrolledModel:
    """Dense leaky-relu encoder / relu decoder pair around L stages."""
    enc = net_random([2 * N, *enc_hidden, N_y], activation="leaky_relu",
                     seed=derive_seed(seed, 0xE), last_activation="identity")
    dec = net_random([N_y, *dec_hidden, N], activation="relu",
                     seed=derive_seed(seed, 0xD), last_activation="identity")
    return UnrolledModel(enc, dec, np.full(L, gamma0))


def wf_errors(F: ForwardMap, samples: Sequence[Sample], iters: int = 2000,
              step: float = 0.2, scale_rule: str = "sqrt_lambda",
              max_pixel_rescale: bool = False) -> np.ndarray:
    """Per-sample phase-aligned relative squared errors of the WF baseline."""
    cfg = WfConfig(max_iter=iters, step=step,
                   max_pixel_rescale=max_pixel_rescale)
    errs = []
    for s in samples:
        init = spectral_init(F, s.d, scale_rule=scale_rule)
        trace = run_wf(F, np.asarray(s.d, dtype=float), init.estimate, cfg)
        num = dist(trace.final, np.asarray(s.rho_star, dtype=complex)) ** 2
        errs.append(num / np.linalg.norm(s.rho_star) ** 2)
    return np.asarray(errs)


def train_squares_model(problem: SquaresProblem, N_y: int, L: int,
                        cfg: TrainConfig,
                        enc_hidden: Sequence[int] = (64,),
                        dec_hidden: Sequence[int] = (64,)
                        ) -> Tuple[UnrolledModel, List[Dict[str, float]]]:
    N = problem.H * problem.W
    model = default_model(N, N_y, L, cfg.seed,
                          enc_hidden=enc_hidden, dec_hidden=dec_hidden)
    return train(model, problem.F, problem.train_set, cfg,
                 val_set=problem.test_set)


@dataclass
class SweepPoint:
    x: float
    model_mse: float
    wf_mse: float


def mn_sweep(ratios: Sequence[float], H: int = 8, W: int = 8,
             n_train: int = 400, n_test: int = 50, L: int = 5,
             N_y: int = 16, seed: int = 7,
             cfg: Optional[TrainConfig] = None,
             wf_iters: int = 2000) -> List[SweepPoint]:
    """Median test MSE of the trained model vs the WF baseline per M/N."""
    N = H * W
    points = []
    for ratio in ratios:
        M = max(1, int(round(ratio * N)))
        prob = make_squares_problem(H, W, M, n_train, n_test,
                                    derive_seed(seed, int(1000 * ratio)))
        c = cfg or TrainConfig(epochs=300, batch=64, lr=2e-3, seed=seed)
        model, _ = train_squares_model(prob, N_y, L, c)
        m_err = float(np.median(relative_errors(model, prob.F, prob.test_set)))
        w_err = float(np.median(wf_errors(prob.F, prob.test_set, iters=wf_iters)))
        points.append(SweepPoint(ratio, m_err, w_err))
    return points


def snr_sweep(snrs_db: Sequence[float], H: int = 8, W: int = 8,
              n_train: int = 200, n_test: int = 40, L: int = 5,
              N_y: int = 16, seed: int = 11,
              cfg: Optional[TrainConfig] = None,
              wf_iters: int = 1000) -> List[SweepPoint]:
    """Test MSE vs SNR at M = N, one model per noise level (shared seeds)."""
    N = H * W
    points = []
    for snr in snrs_db:
        prob = make_squares_problem(H, W, N, n_train, n_test, seed, snr_db=snr)
        c = cfg or TrainConfig(epochs=200, batch=64, lr=2e-3, seed=seed)
        model, _ = train_squares_model(prob, N_y, L, c)
        m_err = float(np.median(relative_errors(model, prob.F, prob.test_set)))
        w_err = float(np.median(wf_errors(prob.F, prob.test_set, iters=wf_iters)))
        points.append(SweepPoint(float(snr), m_err, w_err))
    return points


def ny_sweep(n_ys: Sequence[int], H: int = 8, W: int = 8, M: int = 32,
             n_train: int = 200, n_test: int = 40, L: int = 5, seed: int = 13,
             cfg: Optional[TrainConfig] = None) -> List[SweepPoint]:
    """Test MSE vs sqrt(N_y) at fixed M (no WF side; it does not vary)."""
    prob = make_squares_problem(H, W, M, n_train, n_test, seed)
    wf_mse = float(np.median(wf_errors(prob.F, prob.test_set)))
    points = []
    for n_y in n_ys:
        c = cfg or TrainConfig(epochs=200, batch=64, lr=2e-3, seed=seed)
        model, _ = train_squares_model(prob, int(n_y), L, c)
        m_err = float(np.median(relative_errors(model, prob.F, prob.test_set)))
        points.append(SweepPoint(float(np.sqrt(n_y)), m_err, wf_mse))
    return points
