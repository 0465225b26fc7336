"""End-to-end supervised training of the unrolled model.

The whole pipeline (encoder, L gradient stages including the
decoder-Jacobian factor inside each step, decoder, loss and regularizers)
is laid out as masked-affine ops on the tape and reverse-differentiated,
so gradients are exact almost everywhere.  Activation masks and the frozen
step normalizers ||y0||^2 are recorded as constants.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import tape
from .forward import ForwardMap, spectral_init
from .nets import Net, tape_forward, tape_vjp
from .linalg import spectral_norm
from .rng import Rng, derive_seed
from .unrolled import UnrolledModel, stack_features


@dataclass
class TrainConfig:
    lr: float = 1e-3
    batch: int = 32
    epochs: int = 100
    seed: int = 0
    eta: float = 0.1                    # intermediate-stage loss weight
    eta1: float = 0.01                  # zero-preservation
    eta2: float = 0.01                  # RNN Lipschitz target
    eta3: float = 0.01                  # encoder per-layer spectral targets
    eta4: float = 0.01                  # decoder per-layer spectral targets
    target_mu_R: float = 1.0
    mu_g_targets: Optional[Tuple[float, ...]] = None
    mu_h_targets: Optional[Tuple[float, ...]] = None
    max_pixel_prior: Optional[float] = None
    scale_rule: str = "sqrt_lambda"
    val_fraction: float = 0.1

    def __post_init__(self):
        if self.lr <= 0 or self.batch < 1:
            raise ValueError("lr must be > 0 and batch >= 1")
        for name in ("eta", "eta1", "eta2", "eta3", "eta4"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


def model_params(model: UnrolledModel) -> Dict[str, np.ndarray]:
    """Flat name -> array view of every trainable tensor."""
    out: Dict[str, np.ndarray] = {}
    for j, layer in enumerate(model.encoder.layers):
        out[f"enc.L{j}.W"] = layer.W
        out[f"enc.L{j}.b"] = layer.b
    for k, layer in enumerate(model.decoder.layers):
        out[f"dec.L{k}.W"] = layer.W
        out[f"dec.L{k}.b"] = layer.b
    out["gammas"] = model.gammas
    return out


def set_model_params(model: UnrolledModel, params: Dict[str, np.ndarray]) -> None:
    for j, layer in enumerate(model.encoder.layers):
        layer.W = np.asarray(params[f"enc.L{j}.W"], dtype=float)
        layer.b = np.asarray(params[f"enc.L{j}.b"], dtype=float)
    for k, layer in enumerate(model.decoder.layers):
        layer.W = np.asarray(params[f"dec.L{k}.W"], dtype=float)
        layer.b = np.asarray(params[f"dec.L{k}.b"], dtype=float)
    model.gammas = np.asarray(params["gammas"], dtype=float)


def batch_features(F: ForwardMap, ds: Sequence, scale_rule: str) -> np.ndarray:
    """Stacked encoder inputs (2N, B) from per-sample spectral inits."""
    cols = [stack_features(spectral_init(F, s.d, scale_rule=scale_rule).estimate)
            for s in ds]
    return np.stack(cols, axis=1)


class _Graph:
    """One tape instantiation of the pipeline over a batch."""

    def __init__(self, model: UnrolledModel, F: ForwardMap, X0: np.ndarray,
                 D: np.ndarray, normalizers: Optional[np.ndarray] = None):
        self.model = model
        self.enc_params = [(tape.param(l.W), tape.param(l.b))
                           for l in model.encoder.layers]
        self.dec_params = [(tape.param(l.W), tape.param(l.b))
                           for l in model.decoder.layers]
        self.gamma_nodes = [tape.param(np.asarray(g)) for g in model.gammas]

        self.Y0, _ = tape_forward(model.encoder, tape.const(X0), self.enc_params)
        if normalizers is None:
            s = np.sum(self.Y0.value * self.Y0.value, axis=0)
        else:
            s = np.asarray(normalizers, dtype=float).copy()
        s[s == 0.0] = 1.0
        self.normalizers = s          # frozen: constants for backprop
        w = 1.0 / s

        Fr, Fi = F.A.real.copy(), F.A.imag.copy()
        Dn = tape.const(D)
        Y = self.Y0
        self.Ys: List[tape.Node] = []
        for gamma_n in self.gamma_nodes:
            P, masks = tape_forward(model.decoder, Y, self.dec_params)
            Zr = tape.cmatmul(Fr, P)
            Zi = tape.cmatmul(Fi, P)
            E = tape.sub(tape.add(tape.mul(Zr, Zr), tape.mul(Zi, Zi)), Dn)
            G_rho = tape.scale(
                tape.add(tape.cmatmul(Fr.T, tape.mul(E, Zr)),
                         tape.cmatmul(Fi.T, tape.mul(E, Zi))),
                1.0 / F.M)
            G_y = tape_vjp(model.decoder, masks, self.dec_params, G_rho)
            Y = tape.sub(Y, tape.scale_columns(G_y, w, gamma_n))
            self.Ys.append(Y)
        last = self.Ys[-1] if self.Ys else self.Y0
        self.P_hat, _ = tape_forward(model.decoder, last, self.dec_params)

    def decode(self, Y: tape.Node) -> tape.Node:
        P, _ = tape_forward(self.model.decoder, Y, self.dec_params)
        return P


def _loss_graph(model: UnrolledModel, F: ForwardMap, batch: Sequence,
                cfg: TrainConfig, features: Optional[np.ndarray] = None,
                normalizers: Optional[np.ndarray] = None,
                sigma_warm: Optional[Dict[str, np.ndarray]] = None):
    if len(batch) == 0:
        raise ValueError("batch must be non-empty")
    if features is None:
        features = batch_features(F, batch, cfg.scale_rule)
    D = np.stack([np.asarray(s.d, dtype=float) for s in batch], axis=1)
    Pstar = np.stack([np.asarray(s.rho_star, dtype=float) for s in batch], axis=1)
    if Pstar.shape[0] != model.N:
        raise ValueError("sample dimension does not match the decoder output")

    g = _Graph(model, F, features, D, normalizers)
    breakdown: Dict[str, float] = {}
    Pstar_n = tape.const(Pstar)

    data = tape.mean(tape.col_sumsq(tape.sub(g.P_hat, Pstar_n)))
    breakdown["data"] = float(data.value)
    terms = [data]

    if cfg.eta > 0 and model.L >= 2:
        acc = None
        for Y in g.Ys[:-1]:
            t = tape.col_sumsq(tape.sub(g.decode(Y), Pstar_n))
            acc = t if acc is None else tape.add(acc, t)
        inter = tape.scale(tape.mean(acc), cfg.eta)
        breakdown["intermediate"] = float(inter.value)
        terms.append(inter)
    else:
        breakdown["intermediate"] = 0.0

    if cfg.eta1 > 0:
        ze = tape_forward(model.encoder,
                          tape.const(np.zeros(model.encoder.input_dim)),
                          g.enc_params)[0]
        zd = tape_forward(model.decoder, tape.const(np.zeros(model.N_y)),
                          g.dec_params)[0]
        c1 = tape.scale(tape.add(tape.col_sumsq(ze), tape.col_sumsq(zd)), cfg.eta1)
        breakdown["c1"] = float(c1.value)
        terms.append(c1)
    else:
        breakdown["c1"] = 0.0

    c2 = _rnn_lipschitz_term(g, cfg)
    breakdown["c2"] = 0.0 if c2 is None else float(c2.value)
    if c2 is not None:
        terms.append(c2)

    c3 = _sigma_term(g.enc_params, cfg.mu_g_targets, cfg.eta3, "enc", sigma_warm)
    breakdown["c3"] = 0.0 if c3 is None else float(c3.value)
    if c3 is not None:
        terms.append(c3)
    c4 = _sigma_term(g.dec_params, cfg.mu_h_targets, cfg.eta4, "dec", sigma_warm)
    breakdown["c4"] = 0.0 if c4 is None else float(c4.value)
    if c4 is not None:
        terms.append(c4)

    if cfg.max_pixel_prior is not None:
        peaks = tape.add_scalar(tape.col_max(g.P_hat), -1.0)
        pix = tape.scale(tape.mean(tape.mul(peaks, peaks)), cfg.max_pixel_prior)
        breakdown["pixel"] = float(pix.value)
        terms.append(pix)
    else:
        breakdown["pixel"] = 0.0

    root = terms[0]
    for t in terms[1:]:
        root = tape.add(root, t)
    return root, breakdown, g


def _rnn_lipschitz_term(g: _Graph, cfg: TrainConfig) -> Optional[tape.Node]:
    """eta2 * (max pairwise ||R(y0_i)-R(y0_j)|| / ||y0_i-y0_j|| - mu_R)^2.

    The max runs over the current minibatch; gradient flows through the
    maximizing pair only.
    """
    if cfg.eta2 <= 0 or not g.Ys:
        return None
    Y0v, YLv = g.Y0.value, g.Ys[-1].value
    B = Y0v.shape[1]
    if B < 2:
        return None
    best, best_pair = -np.inf, None
    for i in range(B):
        for j in range(i + 1, B):
            den = np.linalg.norm(Y0v[:, i] - Y0v[:, j])
            if den == 0.0:
                continue
            r = np.linalg.norm(YLv[:, i] - YLv[:, j]) / den
            if r > best:
                best, best_pair = r, (i, j)
    if best_pair is None:
        return None
    i, j = best_pair
    num = tape.sqrt(tape.col_sumsq(tape.sub(tape.pick_column(g.Ys[-1], i),
                                            tape.pick_column(g.Ys[-1], j))))
    den = tape.sqrt(tape.col_sumsq(tape.sub(tape.pick_column(g.Y0, i),
                                            tape.pick_column(g.Y0, j))))
    dev = tape.add_scalar(tape.divide(num, den), -cfg.target_mu_R)
    return tape.scale(tape.mul(dev, dev), cfg.eta2)


def _sigma_term(params, targets, eta: float, prefix: str,
                warm: Optional[Dict[str, np.ndarray]]) -> Optional[tape.Node]:
    if targets is None or eta <= 0:
        return None
    if len(targets) != len(params):
        raise ValueError(f"{prefix}: one spectral target per layer required")
    acc = None
    for k, ((Wn, _), tgt) in enumerate(zip(params, targets)):
        key = f"{prefix}.L{k}.W"
        ws = warm.get(key) if warm is not None else None
        res = spectral_norm(Wn.value, tol=1e-11, warm_start=ws)
        if warm is not None:
            warm[key] = res.vector
        u = Wn.value @ res.vector
        nu = np.linalg.norm(u)
        u = u / nu if nu > 0 else u
        dev = tape.add_scalar(tape.sigma_op(Wn, res.value, u, res.vector), -tgt)
        sq = tape.mul(dev, dev)
        acc = sq if acc is None else tape.add(acc, sq)
    return tape.scale(acc, eta)


def frozen_normalizers(model: UnrolledModel, F: ForwardMap, batch: Sequence,
                       cfg: TrainConfig,
                       features: Optional[np.ndarray] = None) -> np.ndarray:
    """Per-sample ||y0||^2 as the current forward pass would freeze them."""
    _, _, g = _loss_graph(model, F, batch, cfg, features)
    return g.normalizers.copy()


def train_loss(model: UnrolledModel, F: ForwardMap, batch: Sequence,
               cfg: TrainConfig, features: Optional[np.ndarray] = None,
               normalizers: Optional[np.ndarray] = None
               ) -> Tuple[float, Dict[str, float]]:
    """Loss and per-term breakdown.

    Pass `normalizers` to pin the frozen step normalizers across repeated
    evaluations (finite-difference checks differentiate at fixed values,
    matching the backprop convention).
    """
    root, breakdown, _ = _loss_graph(model, F, batch, cfg, features, normalizers)
    return float(root.value), breakdown


def train_backward(model: UnrolledModel, F: ForwardMap, batch: Sequence,
                   cfg: TrainConfig, features: Optional[np.ndarray] = None,
                   normalizers: Optional[np.ndarray] = None,
                   sigma_warm: Optional[Dict[str, np.ndarray]] = None
                   ) -> Tuple[float, Dict[str, float], Dict[str, np.ndarray]]:
    """Reverse-mode gradients of train_loss for every trainable tensor."""
    root, breakdown, g = _loss_graph(model, F, batch, cfg, features,
                                     normalizers, sigma_warm)
    tape.backward(root)
    grads: Dict[str, np.ndarray] = {}
    for j, (Wn, bn) in enumerate(g.enc_params):
        grads[f"enc.L{j}.W"] = _grad_of(Wn, f"enc.L{j}.W")
        grads[f"enc.L{j}.b"] = _grad_of(bn, f"enc.L{j}.b")
    for k, (Wn, bn) in enumerate(g.dec_params):
        grads[f"dec.L{k}.W"] = _grad_of(Wn, f"dec.L{k}.W")
        grads[f"dec.L{k}.b"] = _grad_of(bn, f"dec.L{k}.b")
    grads["gammas"] = np.array([float(_grad_of(gn, f"gamma.{i}"))
                                for i, gn in enumerate(g.gamma_nodes)])
    return float(root.value), breakdown, grads


def _grad_of(node: tape.Node, path: str) -> np.ndarray:
    grad = node.grad if node.grad is not None else np.zeros_like(node.value)
    if not np.all(np.isfinite(grad)):
        raise FloatingPointError(f"non-finite gradient for parameter {path}")
    return grad


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


GAMMA_FLOOR = 1e-8


def adam_step(params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray],
              state: AdamState, lr: float) -> Dict[str, np.ndarray]:
    """Bias-corrected ADAM update; step sizes are clamped positive after."""
    state.step_count += 1
    t = state.step_count
    out: Dict[str, np.ndarray] = {}
    for name in params:
        g = np.asarray(grads[name], dtype=float)
        if name not in state.m:
            state.m[name] = np.zeros_like(g)
            state.v[name] = np.zeros_like(g)
        state.m[name] = state.beta1 * state.m[name] + (1 - state.beta1) * g
        state.v[name] = state.beta2 * state.v[name] + (1 - state.beta2) * g * g
        mh = state.m[name] / (1 - state.beta1**t)
        vh = state.v[name] / (1 - state.beta2**t)
        out[name] = params[name] - lr * mh / (np.sqrt(vh) + state.eps)
    if "gammas" in out:
        out["gammas"] = np.maximum(out["gammas"], GAMMA_FLOOR)
    return out


def pipeline_outputs(model: UnrolledModel, F: ForwardMap, ds: Sequence,
                     features: Optional[np.ndarray] = None) -> np.ndarray:
    """(N, B) reconstructions via the same batched graph training uses."""
    if features is None:
        features = batch_features(F, ds, "sqrt_lambda")
    D = np.stack([np.asarray(s.d, dtype=float) for s in ds], axis=1)
    return _Graph(model, F, features, D).P_hat.value


def relative_errors(model: UnrolledModel, F: ForwardMap, ds: Sequence,
                    features: Optional[np.ndarray] = None) -> np.ndarray:
    """Per-sample ||rho_hat - rho*||^2 / ||rho*||^2 (batched forward)."""
    if len(ds) == 0:
        return np.zeros(0)
    P_hat = pipeline_outputs(model, F, ds, features)
    Pstar = np.stack([np.asarray(s.rho_star, dtype=float) for s in ds], axis=1)
    num = np.sum((P_hat - Pstar) ** 2, axis=0)
    den = np.sum(Pstar**2, axis=0)
    return num / den


def train(model: UnrolledModel, F: ForwardMap, dataset: Sequence,
          cfg: TrainConfig, val_set: Optional[Sequence] = None,
          start_epoch: int = 0, adam: Optional[AdamState] = None,
          sigma_warm: Optional[Dict[str, np.ndarray]] = None
          ) -> Tuple[UnrolledModel, List[Dict[str, float]]]:
    """Deterministic minibatch training loop.

    Without an explicit validation set, a seeded shuffle holds out
    `cfg.val_fraction` of the data.  `start_epoch` plus the passed-in
    optimizer state allow checkpoint resume to reproduce a single long run.
    """
    if len(dataset) < 1:
        raise ValueError("dataset must contain at least one sample")
    if val_set is None:
        order = Rng(derive_seed(cfg.seed, 0x5A11D)).shuffle(np.arange(len(dataset)))
        n_val = int(cfg.val_fraction * len(dataset))
        val_idx, train_idx = order[:n_val], order[n_val:]
        train_ds = [dataset[i] for i in train_idx]
        val_ds = [dataset[i] for i in val_idx]
    else:
        train_ds = list(dataset)
        val_ds = list(val_set)

    feats = batch_features(F, train_ds, cfg.scale_rule)
    val_feats = batch_features(F, val_ds, cfg.scale_rule) if val_ds else None

    adam = adam or AdamState()
    sigma_warm = {} if sigma_warm is None else sigma_warm
    history: List[Dict[str, float]] = []
    n = len(train_ds)
    for epoch in range(start_epoch, start_epoch + cfg.epochs):
        order = Rng(derive_seed(cfg.seed, 1 + epoch)).shuffle(np.arange(n))
        last_breakdown: Dict[str, float] = {}
        for lo in range(0, n, cfg.batch):
            idx = order[lo:lo + cfg.batch]
            batch = [train_ds[i] for i in idx]
            bf = feats[:, idx]
            _, last_breakdown, grads = train_backward(
                model, F, batch, cfg, features=bf, sigma_warm=sigma_warm)
            params = adam_step(model_params(model), grads, adam, cfg.lr)
            set_model_params(model, params)
        row = {
            "epoch": float(epoch),
            "train_mse": float(np.mean(relative_errors(model, F, train_ds, feats))),
            "val_mse": (float(np.mean(relative_errors(model, F, val_ds, val_feats)))
                        if val_ds else float("nan")),
            "data_term": last_breakdown.get("data", float("nan")),
            "c1": last_breakdown.get("c1", 0.0),
            "c2": last_breakdown.get("c2", 0.0),
            "c3": last_breakdown.get("c3", 0.0),
            "c4": last_breakdown.get("c4", 0.0),
        }
        history.append(row)
    return model, history


HISTORY_COLUMNS = ["epoch", "train_mse", "val_mse", "data_term",
                   "c1", "c2", "c3", "c4"]


def history_to_csv(history: List[Dict[str, float]], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HISTORY_COLUMNS)
        for row in history:
            w.writerow([f"{row[c]:.17g}" for c in HISTORY_COLUMNS])
