"""The unrolled inversion pipeline: spectral init -> encoder -> L gradient
stages on the encoded objective K(y) -> decoder.

K(y) = (1/2M) sum_m (a_m^H H(y) H(y)^H a_m - d_m)^2 and its encoded-domain
gradient is J_H(y)^T Re[(1/M) F^H(e) H(y)], the Wirtinger convention with
the factor 2 absorbed into the trainable step sizes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .forward import ForwardMap, SpectralInit, spectral_init
from .nets import Net, net_forward, net_vjp


@dataclass
class UnrolledModel:
    encoder: Net        # input 2N -> N_y
    decoder: Net        # N_y -> N
    gammas: np.ndarray  # (L,) positive step sizes

    def __post_init__(self):
        # L = 0 is tolerated as a test edge; training uses L >= 1
        self.gammas = np.asarray(self.gammas, dtype=float)
        if self.gammas.ndim != 1:
            raise ValueError("gammas must be a 1-D array")
        if self.encoder.output_dim != self.decoder.input_dim:
            raise ValueError("encoder/decoder dims do not chain")

    @property
    def L(self) -> int:
        return self.gammas.size

    @property
    def N(self) -> int:
        return self.decoder.output_dim

    @property
    def N_y(self) -> int:
        return self.decoder.input_dim


@dataclass
class EncodedTrace:
    y0: np.ndarray
    y_l: List[np.ndarray]
    rho_hat: np.ndarray
    norm_y0_sq: float
    degenerate: bool = False


def phase_align(v: np.ndarray) -> np.ndarray:
    """Rotate a complex vector so its largest-magnitude entry is real >= 0."""
    v = np.asarray(v, dtype=complex)
    mags = np.abs(v)
    if mags.max() == 0.0:
        return v
    k = int(np.argmax(mags))
    return v * np.exp(-1j * np.angle(v[k]))


def stack_features(v: np.ndarray) -> np.ndarray:
    """Phase-aligned complex estimate as 2N real encoder features."""
    a = phase_align(v)
    return np.concatenate([a.real, a.imag])


def loss_K(decoder: Net, F: ForwardMap, y: np.ndarray, d: np.ndarray) -> float:
    rho = net_forward(decoder, y)
    z = F.A @ rho
    e = (z.real**2 + z.imag**2) - np.asarray(d, dtype=float)
    return float(np.sum(e * e) / (2.0 * F.M))


def grad_K(decoder: Net, F: ForwardMap, y: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Encoded-domain gradient J_H(y)^T Re[(1/M) F^H(e) H(y)]."""
    y = np.asarray(y, dtype=float)
    d = np.asarray(d, dtype=float)
    if y.shape != (decoder.input_dim,) or d.shape != (F.M,):
        raise ValueError("dimension mismatch")
    rho = net_forward(decoder, y)
    z = F.A @ rho
    e = (z.real**2 + z.imag**2) - d
    g_rho = (F.A.conj().T @ (e * z)).real / F.M
    gy, _ = net_vjp(decoder, y, g_rho)
    return gy


def rnn_forward(model: UnrolledModel, F: ForwardMap, d: np.ndarray,
                init: SpectralInit) -> EncodedTrace:
    """L unrolled WF stages in the encoded domain, normalizer frozen at y0."""
    y0 = net_forward(model.encoder, stack_features(init.estimate))
    s = float(np.dot(y0, y0))
    degenerate = s == 0.0
    if degenerate:
        s = 1.0
    ys: List[np.ndarray] = []
    y = y0
    for gamma in model.gammas:
        y = y - (gamma / s) * grad_K(model.decoder, F, y, d)
        ys.append(y)
    rho_hat = net_forward(model.decoder, ys[-1] if ys else y0)
    return EncodedTrace(y0=y0, y_l=ys, rho_hat=rho_hat, norm_y0_sq=s,
                        degenerate=degenerate)


def reconstruct(model: UnrolledModel, F: ForwardMap, d: np.ndarray,
                scale_rule: str = "sqrt_lambda") -> np.ndarray:
    """Test-time path: intensity vector -> trained network -> image."""
    init = spectral_init(F, d, scale_rule=scale_rule)
    return rnn_forward(model, F, d, init).rho_hat
