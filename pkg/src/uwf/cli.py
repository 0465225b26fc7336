"""Command-line entry point.

Subcommands: gen-data | train | reconstruct | eval | theory | plot.
Configs are JSON with unknown keys rejected; reports are JSON, curves CSV,
plots SVG.  Exit codes: 0 success, 2 config error, 3 numeric failure,
4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path


class ConfigError(ValueError):
    pass


_SCHEMA = {
    "map": {"kind", "M", "N", "seed", "path"},
    "model": {"N_y", "L", "encoder_dims", "decoder_dims", "activations",
              "seed", "gamma0"},
    "activations": {"encoder", "decoder", "slope"},
    "train": {"lr", "batch", "epochs", "seed", "eta", "eta1", "eta2", "eta3",
              "eta4", "target_mu_R", "mu_g_targets", "mu_h_targets",
              "max_pixel_prior", "scale_rule", "val_fraction"},
    "data": {"source", "count", "H", "W", "snr_db", "seed", "path"},
}
_TOP_KEYS = {"map", "model", "train", "data", "out_dir"}


def _check_keys(obj: dict, allowed: set, where: str) -> None:
    unknown = set(obj) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")


def load_config(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be an object")
    _check_keys(cfg, _TOP_KEYS, "config")
    for section, allowed in _SCHEMA.items():
        if section == "activations":
            continue
        if section in cfg:
            if not isinstance(cfg[section], dict):
                raise ConfigError(f"config section {section!r} must be an object")
            _check_keys(cfg[section], allowed, section)
    acts = cfg.get("model", {}).get("activations")
    if acts is not None:
        _check_keys(acts, _SCHEMA["activations"], "model.activations")
    return cfg


def _build_map(mcfg: dict):
    from . import data as dio
    from . import forward
    kind = mcfg.get("kind", "gaussian")
    if kind == "gaussian":
        return forward.make_gaussian(int(mcfg["M"]), int(mcfg["N"]),
                                     int(mcfg.get("seed", 0)))
    if kind == "fourier":
        return forward.make_fourier(int(mcfg["M"]), int(mcfg["N"]))
    if kind == "file":
        return dio.load_map(mcfg["path"])
    raise ConfigError(f"unknown map kind {kind!r}")


def _build_model(mcfg: dict, N: int):
    import numpy as np
    from .nets import net_random
    from .unrolled import UnrolledModel
    from .rng import derive_seed
    acts = mcfg.get("activations", {})
    seed = int(mcfg.get("seed", 0))
    N_y = int(mcfg["N_y"])
    enc_dims = [2 * N, *mcfg.get("encoder_dims", [64]), N_y]
    dec_dims = [N_y, *mcfg.get("decoder_dims", [64]), N]
    enc = net_random(enc_dims, activation=acts.get("encoder", "leaky_relu"),
                     slope=float(acts.get("slope", 0.2)),
                     seed=derive_seed(seed, 0xE), last_activation="identity")
    dec = net_random(dec_dims, activation=acts.get("decoder", "relu"),
                     seed=derive_seed(seed, 0xD), last_activation="identity")
    gammas = np.full(int(mcfg["L"]), float(mcfg.get("gamma0", 0.1)))
    return UnrolledModel(enc, dec, gammas)


def _train_config(tcfg: dict, seed_override=None):
    from .training import TrainConfig
    kw = dict(tcfg)
    for key in ("mu_g_targets", "mu_h_targets"):
        if kw.get(key) is not None:
            kw[key] = tuple(kw[key])
    if seed_override is not None:
        kw["seed"] = seed_override
    try:
        return TrainConfig(**kw)
    except TypeError as exc:
        raise ConfigError(f"bad train config: {exc}") from exc


def _save_checkpoint(path, model, adam, cfg_echo: dict, epochs_done: int):
    from .training import model_params
    tensors = dict(model_params(model))
    for name, arr in adam.m.items():
        tensors[f"adam.m.{name}"] = arr
    for name, arr in adam.v.items():
        tensors[f"adam.v.{name}"] = arr
    meta = {
        "model": {
            "enc_dims": [l.W.shape[1] for l in model.encoder.layers]
                        + [model.encoder.output_dim],
            "dec_dims": [l.W.shape[1] for l in model.decoder.layers]
                        + [model.decoder.output_dim],
            "enc_acts": [l.activation for l in model.encoder.layers],
            "dec_acts": [l.activation for l in model.decoder.layers],
            "slope": model.encoder.layers[0].slope,
            "L": model.L,
        },
        "adam": {"step_count": adam.step_count},
        "epochs_done": epochs_done,
        "config": cfg_echo,
    }
    from .data import store_container
    store_container(path, tensors, meta)


def _load_checkpoint(path):
    import numpy as np
    from .data import load_container
    from .nets import Layer, Net
    from .training import AdamState
    from .unrolled import UnrolledModel
    tensors, meta = load_container(path)
    m = meta["model"]

    def build(prefix, acts, slope):
        layers = []
        for k, act in enumerate(acts):
            layers.append(Layer(tensors[f"{prefix}.L{k}.W"],
                                tensors[f"{prefix}.L{k}.b"], act, slope))
        return Net(layers)

    model = UnrolledModel(build("enc", m["enc_acts"], m["slope"]),
                          build("dec", m["dec_acts"], m["slope"]),
                          tensors["gammas"])
    adam = AdamState(step_count=int(meta["adam"]["step_count"]))
    for name in tensors:
        if name.startswith("adam.m."):
            adam.m[name[len("adam.m."):]] = np.asarray(tensors[name])
        elif name.startswith("adam.v."):
            adam.v[name[len("adam.v."):]] = np.asarray(tensors[name])
    return model, adam, meta


# ------------------------------------------------------------------ commands

def cmd_gen_data(args) -> int:
    from .data import gen_squares, load_idx, store_container, synthesize
    import numpy as np
    cfg = load_config(args.config)
    dcfg = cfg.get("data", {})
    out = Path(args.out or cfg.get("out_dir", "."))
    out.mkdir(parents=True, exist_ok=True)
    F = _build_map(cfg.get("map", {}))
    source = dcfg.get("source", "squares")
    H, W = int(dcfg.get("H", 8)), int(dcfg.get("W", 8))
    if source == "squares":
        images = gen_squares(int(dcfg.get("count", 100)), H, W,
                             int(dcfg.get("seed", 0)))
    elif source == "idx":
        images = load_idx(dcfg["path"])
        if dcfg.get("count"):
            images = images[: int(dcfg["count"])]
    else:
        raise ConfigError(f"unknown data source {source!r}")
    if images.shape[1] != F.N:
        raise ConfigError(f"image length {images.shape[1]} != map N {F.N}")
    samples = synthesize(F, images, snr_db=dcfg.get("snr_db"),
                         seed=int(dcfg.get("seed", 0)))
    tensors = {
        "forward.A": F.A,
        "data.rho": np.stack([s.rho_star for s in samples]),
        "data.d": np.stack([s.d for s in samples]),
    }
    meta = {"H": H, "W": W, "snr_db": dcfg.get("snr_db"),
            "seed": int(dcfg.get("seed", 0)), "count": len(samples),
            "map": {"kind": F.kind, "seed": F.seed, "M": F.M, "N": F.N}}
    store_container(out / "dataset.uwfd", tensors, meta)
    print(f"wrote {out / 'dataset.uwfd'} ({len(samples)} samples)")
    return 0


def _load_problem(data_path):
    from .data import Sample, load_container
    from .forward import ForwardMap
    tensors, meta = load_container(data_path)
    F = ForwardMap(tensors["forward.A"],
                   meta.get("map", {}).get("kind", "file"),
                   meta.get("map", {}).get("seed"))
    samples = [Sample(rho_star=r, d=d)
               for r, d in zip(tensors["data.rho"], tensors["data.d"])]
    return F, samples, meta


def cmd_train(args) -> int:
    from .training import AdamState, history_to_csv, train
    cfg = load_config(args.config)
    out = Path(args.out or cfg.get("out_dir", "."))
    out.mkdir(parents=True, exist_ok=True)
    F, samples, _ = _load_problem(args.data)
    tcfg = _train_config(cfg.get("train", {}), seed_override=args.seed)
    if args.resume:
        model, adam, meta = _load_checkpoint(args.resume)
        start = int(meta["epochs_done"])
    else:
        model = _build_model(cfg.get("model", {}), F.N)
        adam, start = AdamState(), 0
    model, history = train(model, F, samples, tcfg, start_epoch=start,
                           adam=adam)
    _save_checkpoint(out / "checkpoint.uwfd", model, adam, cfg,
                     start + tcfg.epochs)
    mode = "a" if args.resume and (out / "history.csv").exists() else "w"
    if mode == "a":
        with open(out / "history.csv", "a", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            from .training import HISTORY_COLUMNS
            for row in history:
                w.writerow([f"{row[c]:.17g}" for c in HISTORY_COLUMNS])
    else:
        history_to_csv(history, out / "history.csv")
    print(f"wrote {out / 'checkpoint.uwfd'} and history.csv "
          f"({len(history)} epochs)")
    return 0


def cmd_reconstruct(args) -> int:
    import numpy as np
    from .data import store_container
    from .unrolled import reconstruct
    from .linalg import dist
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    model, _, _ = _load_checkpoint(args.model)
    F, samples, _ = _load_problem(args.data)
    recons = np.stack([reconstruct(model, F, s.d) for s in samples])
    store_container(out / "recon.uwfd", {"recon.rho": recons}, {})
    report = {"count": len(samples)}
    if samples and np.linalg.norm(samples[0].rho_star) > 0:
        errs = [dist(r, s.rho_star.astype(complex)) ** 2
                / np.linalg.norm(s.rho_star) ** 2
                for r, s in zip(recons, samples)]
        report["mse"] = float(np.mean(errs))
    (out / "recon_report.json").write_text(json.dumps(report, indent=2))
    print(f"wrote {out / 'recon.uwfd'}")
    return 0


def cmd_eval(args) -> int:
    import numpy as np
    from .harness import wf_errors
    from .theory import init_metrics
    from .training import relative_errors
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    model, _, _ = _load_checkpoint(args.model)
    F, samples, _ = _load_problem(args.data)
    errs = relative_errors(model, F, samples)
    im = init_metrics(model, F, samples)
    report = {
        "count": len(samples),
        "mse": float(np.mean(errs)),
        "median_mse": float(np.median(errs)),
        "per_sample": [float(e) for e in errs],
        "d1": im.d1, "d2": im.d2, "d3": im.d3,
    }
    wf = None
    if args.baseline == "wf":
        wf = wf_errors(F, samples)
        report["wf"] = {"mse": float(np.mean(wf)),
                        "median_mse": float(np.median(wf)),
                        "per_sample": [float(e) for e in wf]}
    (out / "report.json").write_text(json.dumps(report, indent=2))
    with open(out / "curves.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample", "model_mse"] + (["wf_mse"] if wf is not None else []))
        for i, e in enumerate(errs):
            row = [i, f"{e:.17g}"]
            if wf is not None:
                row.append(f"{wf[i]:.17g}")
            w.writerow(row)
    print(f"wrote {out / 'report.json'} and curves.csv")
    return 0


def cmd_theory(args) -> int:
    import numpy as np
    from .linalg import dist
    from .nets import lipschitz_empirical, lipschitz_upper, net_forward
    from .forward import intensity, spectral_init
    from .rng import Rng, derive_seed
    from .theory import (TheoryParams, check_theorem1, delta_mn_sweep,
                         estimate_delta, estimate_omega, frame_bounds)
    from .unrolled import rnn_forward, stack_features
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    model, _, _ = _load_checkpoint(args.model)
    if args.data:
        F, _, _ = _load_problem(args.data)
    elif args.map:
        from .data import load_map
        F = load_map(args.map)
    else:
        raise ConfigError("theory requires --data or --map")
    n = int(args.samples)
    seed = args.seed or 0

    # probes constructed in the encoded domain: y* seeded, rho* = H(y*)
    ys, pairs, rhos = [], [], []
    eps_list = []
    for i in range(n):
        y_star = Rng(derive_seed(seed, 0x57A, i)).normal(model.N_y)
        rho_star = net_forward(model.decoder, y_star)
        if np.linalg.norm(rho_star) == 0:
            continue
        d = intensity(F, rho_star.astype(complex))
        init = spectral_init(F, d)
        trace = rnn_forward(model, F, d, init)
        ys.append(y_star)
        rhos.append(rho_star)
        perturb = Rng(derive_seed(seed, 0xbb, i)).normal(model.N_y)
        perturb *= 0.2 * np.linalg.norm(y_star) / max(np.linalg.norm(perturb), 1e-30)
        pairs.append((y_star + perturb, y_star))
        den = dist(init.estimate, rho_star.astype(complex))
        if den > 1e-12:
            eps_list.append(np.linalg.norm(trace.y0 - y_star) / den)
    if not ys:
        raise FloatingPointError("no usable probes (decoder collapsed to zero)")

    mu_H = lipschitz_upper(model.decoder)
    emp_hi, emp_lo = lipschitz_empirical(model.decoder, ys)
    sig_lo, sig_hi = frame_bounds(model.decoder, ys)
    delta = estimate_delta(F, [r.astype(complex) for r in rhos])
    omega = estimate_omega(model.decoder, F, pairs, eps_y=0.5).value
    mu_G = lipschitz_upper(model.encoder)
    eps = float(np.max([dist(spectral_init(F, intensity(F, r.astype(complex))).estimate,
                             r.astype(complex)) / np.linalg.norm(r)
                        for r in rhos]))
    params = TheoryParams(delta=delta, omega=omega, mu_G=mu_G, mu_H=mu_H,
                          mu_H_tilde=emp_lo, mu_R=1.0,
                          sigma_H=sig_hi, sigma_H_tilde=sig_lo,
                          eps=eps, eps_y=0.5,
                          chi=float(np.max(eps_list)) if eps_list else 1.0,
                          L=model.L, M=F.M, N=F.N, N_y=model.N_y)
    report = check_theorem1(params)
    sweep = delta_mn_sweep(F.N, [2, 4, 8], n_samples=min(n, 20), seed=seed)
    doc = json.loads(report.to_json())
    doc["delta_mn_sweep"] = {str(k): v for k, v in sweep.items()}
    doc["provenance"] = {"samples": n, "seed": seed,
                         "mu_H_empirical_upper": emp_hi}
    (out / "theory_report.json").write_text(json.dumps(doc, indent=2,
                                                       sort_keys=True))
    print(f"wrote {out / 'theory_report.json'}")
    return 0


def cmd_plot(args) -> int:
    from .viz import write_svg_lines
    out = Path(args.out or "plot.svg")
    with open(args.curves, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise ConfigError("curves file needs a header and at least one row")
    header, body = rows[0], rows[1:]
    xs = [float(r[0]) for r in body]
    series = {name: [float(r[i]) for r in body]
              for i, name in enumerate(header) if i > 0}
    if out.is_dir():
        out = out / "plot.svg"
    write_svg_lines(out, xs, series, xlabel=header[0])
    print(f"wrote {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="uwf",
                                 description="unrolled WF phaseless imaging")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a dataset container")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train the unrolled model")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.add_argument("--resume")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("reconstruct", help="run the trained inversion network")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("eval", help="evaluate MSE and init metrics")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--baseline", choices=["wf", "none"], default="none")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("theory", help="estimate constants and run the ledger")
    p.add_argument("--model", required=True)
    p.add_argument("--map")
    p.add_argument("--data")
    p.add_argument("--samples", type=int, default=25)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_theory)

    p = sub.add_parser("plot", help="render curves.csv to an SVG chart")
    p.add_argument("--curves", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_plot)
    return ap


def main(argv=None) -> int:
    threads = os.environ.get("UWF_THREADS")
    if threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS"):
            os.environ.setdefault(var, threads)
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (FloatingPointError, ZeroDivisionError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 4
    except ValueError as exc:
        # container/shape problems while reading inputs
        print(f"io error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
