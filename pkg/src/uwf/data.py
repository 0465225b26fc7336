"""Synthetic datasets, measurement synthesis and bit-exact persistence.

The container format is: magic "UWFD", u32 LE version, u64 LE header
length, a UTF-8 JSON header listing named tensors (name, dtype f64|c128,
shape) plus free-form metadata, then the raw little-endian payloads in
header order (complex stored interleaved re, im).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .forward import ForwardMap, intensity
from .rng import Rng, derive_seed

MAGIC = b"UWFD"
VERSION = 1
_DTYPES = {"f64": np.dtype("<f8"), "c128": np.dtype("<c16")}


class ContainerError(ValueError):
    pass


@dataclass(frozen=True)
class Sample:
    rho_star: np.ndarray   # real, length N
    d: np.ndarray          # real intensities, length M


def gen_squares(count: int, H: int, W: int, seed: int) -> np.ndarray:
    """Images with a uniform background and one brighter square.

    Background level is U[0.1, 0.3], square amplitude U[0.7, 1.0], side an
    integer in [2, H/3] and position uniform over the valid placements.
    Returns (count, H*W) row-major pixels, deterministic per seed.
    """
    if H < 4 or W < 4:
        raise ValueError("H, W must be >= 4")
    out = np.empty((count, H * W))
    side_hi = max(2, min(H // 3, W))
    for i in range(count):
        rng = Rng(derive_seed(seed, i))
        bg = 0.1 + 0.2 * rng.uniform(1)[0]
        amp = 0.7 + 0.3 * rng.uniform(1)[0]
        side = int(rng.integers(2, side_hi, 1)[0])
        r0 = int(rng.integers(0, H - side, 1)[0])
        c0 = int(rng.integers(0, W - side, 1)[0])
        img = np.full((H, W), bg)
        img[r0:r0 + side, c0:c0 + side] = amp
        out[i] = img.reshape(-1)
    return out


def synthesize(F: ForwardMap, images: np.ndarray,
               snr_db: Optional[float] = None, seed: int = 0) -> List[Sample]:
    """Intensity measurements, optionally with additive Gaussian noise
    scaled per-sample so 10 log10(||d||^2 / ||n||^2) equals snr_db."""
    images = np.atleast_2d(np.asarray(images, dtype=float))
    samples = []
    for i, rho in enumerate(images):
        d = intensity(F, rho.astype(complex))
        if snr_db is not None:
            g = Rng(derive_seed(seed, 0xA01, i)).normal(F.M)
            gnorm = np.linalg.norm(g)
            if gnorm > 0:
                n = g * (np.linalg.norm(d) * 10.0 ** (-snr_db / 20.0) / gnorm)
                d = d + n
        samples.append(Sample(rho_star=rho, d=d))
    return samples


# ----------------------------------------------------------------- container

def store_container(path, tensors: Dict[str, np.ndarray],
                    meta: Optional[dict] = None) -> None:
    entries = []
    payloads = []
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        dtype = "c128" if np.iscomplexobj(arr) else "f64"
        arr = np.ascontiguousarray(arr, dtype=_DTYPES[dtype])
        entries.append({"name": name, "dtype": dtype, "shape": list(arr.shape)})
        payloads.append(arr.tobytes())
    header = json.dumps({"tensors": entries, "meta": meta or {}},
                        sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for p in payloads:
            fh.write(p)


def load_container(path) -> Tuple[Dict[str, np.ndarray], dict]:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != MAGIC:
        raise ContainerError(f"bad magic {raw[:4]!r} at offset 0")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != VERSION:
        raise ContainerError(f"unsupported container version {version}")
    (hlen,) = struct.unpack_from("<Q", raw, 8)
    if 16 + hlen > len(raw):
        raise ContainerError(f"truncated header: need {16 + hlen} bytes, "
                             f"file has {len(raw)}")
    try:
        header = json.loads(raw[16:16 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ContainerError(f"corrupt header JSON: {exc}") from exc
    tensors: Dict[str, np.ndarray] = {}
    off = 16 + hlen
    for ent in header["tensors"]:
        dt = _DTYPES.get(ent["dtype"])
        if dt is None:
            raise ContainerError(f"unknown dtype {ent['dtype']!r}")
        count = int(np.prod(ent["shape"], dtype=np.int64)) if ent["shape"] else 1
        nbytes = count * dt.itemsize
        if off + nbytes > len(raw):
            raise ContainerError(f"truncated payload for {ent['name']!r} "
                                 f"at offset {off}")
        arr = np.frombuffer(raw[off:off + nbytes], dtype=dt).reshape(ent["shape"])
        tensors[ent["name"]] = arr.copy()
        off += nbytes
    if off != len(raw):
        raise ContainerError(f"{len(raw) - off} trailing bytes after payload")
    return tensors, header.get("meta", {})


def store_map(path, F: ForwardMap) -> None:
    store_container(path, {"forward.A": F.A},
                    {"kind": F.kind, "seed": F.seed, "M": F.M, "N": F.N})


def load_map(path) -> ForwardMap:
    tensors, meta = load_container(path)
    return ForwardMap(tensors["forward.A"], meta.get("kind", "file"),
                      meta.get("seed"))


def store_dataset(path, samples: Sequence[Sample],
                  meta: Optional[dict] = None) -> None:
    rho = np.stack([s.rho_star for s in samples]) if samples else np.zeros((0, 0))
    d = np.stack([s.d for s in samples]) if samples else np.zeros((0, 0))
    store_container(path, {"data.rho": rho, "data.d": d}, meta)


def load_dataset(path) -> Tuple[List[Sample], dict]:
    tensors, meta = load_container(path)
    rho, d = tensors["data.rho"], tensors["data.d"]
    return [Sample(rho_star=r, d=dd) for r, dd in zip(rho, d)], meta


# ----------------------------------------------------------------------- IDX

_IDX_IMAGES = 0x00000803
_IDX_LABELS = 0x00000801


def load_idx(path) -> np.ndarray:
    """Read an IDX file (big-endian, as published for MNIST).

    Image files (magic 0x803) return (n, rows*cols) float64 scaled to
    [0, 1] by dividing by 255; label files (magic 0x801) return (n,) ints.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 4:
        raise ContainerError(f"truncated IDX header at offset {len(raw)}")
    (magic,) = struct.unpack_from(">I", raw, 0)
    if magic == _IDX_IMAGES:
        if len(raw) < 16:
            raise ContainerError(f"truncated IDX dims at offset {len(raw)}")
        n, rows, cols = struct.unpack_from(">III", raw, 4)
        need = 16 + n * rows * cols
        if len(raw) < need:
            raise ContainerError(f"truncated IDX payload: need {need} bytes, "
                                 f"file has {len(raw)}")
        px = np.frombuffer(raw, dtype=np.uint8, count=n * rows * cols, offset=16)
        return px.reshape(n, rows * cols).astype(float) / 255.0
    if magic == _IDX_LABELS:
        if len(raw) < 8:
            raise ContainerError(f"truncated IDX dims at offset {len(raw)}")
        (n,) = struct.unpack_from(">I", raw, 4)
        if len(raw) < 8 + n:
            raise ContainerError(f"truncated IDX payload at offset {len(raw)}")
        return np.frombuffer(raw, dtype=np.uint8, count=n, offset=8).astype(int)
    raise ContainerError(f"bad IDX magic 0x{magic:08x} at offset 0")
