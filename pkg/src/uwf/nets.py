"""Dense layer stacks with real parameters and their Jacobian products.

Activations are relu / leaky_relu(slope) / identity, all 1-Lipschitz, with
the relu subgradient at 0 taken as 0.  Lipschitz tooling provides both the
layer-spectral-norm product upper bound and empirical pairwise estimates.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from . import tape
from .linalg import spectral_norm
from .rng import Rng

ACTIVATIONS = ("relu", "leaky_relu", "identity")


@dataclass
class Layer:
    W: np.ndarray                # (out, in)
    b: np.ndarray                # (out,)
    activation: str = "identity"
    slope: float = 0.2           # leaky_relu only

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[0],):
            raise ValueError("inconsistent layer shapes")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.activation == "leaky_relu" and not 0.0 < self.slope < 1.0:
            raise ValueError("leaky slope must be in (0, 1)")

    def act_mask(self, z: np.ndarray) -> np.ndarray:
        """Derivative of the activation at pre-activation z (0 at the kink)."""
        if self.activation == "identity":
            return np.ones_like(z)
        if self.activation == "relu":
            return (z > 0).astype(float)
        return np.where(z > 0, 1.0, self.slope)


@dataclass
class Net:
    layers: List[Layer]

    def __post_init__(self):
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if nxt.W.shape[1] != prev.W.shape[0]:
                raise ValueError("layer dimensions do not chain")

    @property
    def input_dim(self) -> int:
        return self.layers[0].W.shape[1]

    @property
    def output_dim(self) -> int:
        return self.layers[-1].W.shape[0]


def net_random(dims: Sequence[int], activation: str = "relu", seed: int = 0,
               slope: float = 0.2, zero_bias: bool = True,
               last_activation: str | None = None) -> Net:
    """Glorot-scaled random net with the given layer widths.

    `activation` applies to all layers except the last, which uses
    `last_activation` (defaults to the same tag).
    """
    rng = Rng(seed)
    layers = []
    for k in range(len(dims) - 1):
        fan_in, fan_out = dims[k], dims[k + 1]
        sc = np.sqrt(2.0 / (fan_in + fan_out))
        W = rng.normal(fan_out * fan_in).reshape(fan_out, fan_in) * sc
        b = np.zeros(fan_out) if zero_bias else rng.normal(fan_out) * 0.01
        act = activation if k < len(dims) - 2 else (last_activation or activation)
        layers.append(Layer(W, b, act, slope))
    return Net(layers)


def net_forward(net: Net, x: np.ndarray) -> np.ndarray:
    h = np.asarray(x, dtype=float)
    if h.shape[0] != net.input_dim:
        raise ValueError("input dimension mismatch")
    for layer in net.layers:
        z = layer.W @ h + (layer.b if h.ndim == 1 else layer.b[:, None])
        h = z * layer.act_mask(z)
    return h


def _forward_with_masks(net: Net, x: np.ndarray):
    h = np.asarray(x, dtype=float)
    masks = []
    for layer in net.layers:
        z = layer.W @ h + (layer.b if h.ndim == 1 else layer.b[:, None])
        m = layer.act_mask(z)
        masks.append((h, m))
        h = z * m
    return h, masks


def net_vjp(net: Net, x: np.ndarray, v: np.ndarray
            ) -> Tuple[np.ndarray, List[Tuple[np.ndarray, np.ndarray]]]:
    """v^T J_net(x) plus parameter cotangents, one (dW, db) per layer."""
    v = np.asarray(v, dtype=float)
    if v.shape != (net.output_dim,):
        raise ValueError("cotangent dimension mismatch")
    _, cache = _forward_with_masks(net, x)
    g = v
    grads: List[Tuple[np.ndarray, np.ndarray]] = [None] * len(net.layers)
    for k in range(len(net.layers) - 1, -1, -1):
        h_in, m = cache[k]
        gz = g * m
        grads[k] = (np.outer(gz, h_in), gz)
        g = net.layers[k].W.T @ gz
    return g, grads


def net_jvp(net: Net, x: np.ndarray, u: np.ndarray) -> np.ndarray:
    """J_net(x) u, consistent with net_vjp via the duality pairing."""
    u = np.asarray(u, dtype=float)
    if u.shape != (net.input_dim,):
        raise ValueError("tangent dimension mismatch")
    _, cache = _forward_with_masks(net, x)
    t = u
    for layer, (_, m) in zip(net.layers, cache):
        t = (layer.W @ t) * m
    return t


def tape_forward(net: Net, X: tape.Node,
                 params: List[Tuple[tape.Node, tape.Node]]):
    """Forward through the net on the tape.

    params holds one (W, b) node pair per layer.  Returns the output node
    and the recorded activation masks (constants for backprop).
    """
    h = X
    masks = []
    for layer, (Wn, bn) in zip(net.layers, params):
        z = tape.add_bias(tape.matmul(Wn, h), bn)
        m = layer.act_mask(z.value)
        masks.append(m)
        h = tape.mask(z, m)
    return h, masks


def tape_vjp(net: Net, masks, params: List[Tuple[tape.Node, tape.Node]],
             V: tape.Node) -> tape.Node:
    """J^T V as explicit masked-affine tape ops, reusing forward masks."""
    g = V
    for (Wn, _), m in zip(reversed(params), reversed(masks)):
        g = tape.matmul_t(Wn, tape.mask(g, m))
    return g


def lipschitz_upper(net: Net, tol: float = 1e-10) -> float:
    """Product of layer spectral norms (valid for 1-Lipschitz activations)."""
    out = 1.0
    for layer in net.layers:
        out *= spectral_norm(layer.W, tol=tol).value
    return out


def lipschitz_empirical(net: Net, samples: Sequence[np.ndarray]
                        ) -> Tuple[float, float]:
    """(max, min) pairwise output/input distance ratio over the samples."""
    xs = [np.asarray(s, dtype=float) for s in samples]
    ys = [net_forward(net, x) for x in xs]
    hi, lo = 0.0, np.inf
    used = 0
    for i in range(len(xs)):
        for j in range(i + 1, len(xs)):
            dx = np.linalg.norm(xs[i] - xs[j])
            if dx == 0.0:
                continue
            r = np.linalg.norm(ys[i] - ys[j]) / dx
            hi = max(hi, r)
            lo = min(lo, r)
            used += 1
    if used == 0:
        raise ValueError("need at least two distinct samples")
    return hi, lo
