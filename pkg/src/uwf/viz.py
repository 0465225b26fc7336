"""Tiny deterministic SVG line charts (one polyline per series)."""

from __future__ import annotations

from typing import Dict, Sequence
from xml.sax.saxutils import escape

import numpy as np

_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


def write_svg_lines(path, xs: Sequence[float], series: Dict[str, Sequence[float]],
                    title: str = "", xlabel: str = "", ylabel: str = "",
                    logy: bool = False, width: int = 640, height: int = 420) -> None:
    xs = np.asarray(xs, dtype=float)
    ml, mr, mt, mb = 70, 20, 40, 55
    pw, ph = width - ml - mr, height - mt - mb

    ys_all = np.concatenate([np.asarray(v, dtype=float) for v in series.values()])
    if logy:
        ys_all = np.log10(np.maximum(ys_all, 1e-300))
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(ys_all.min()), float(ys_all.max())
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0

    def px(x):
        return ml + (x - x0) / (x1 - x0) * pw

    def py(y):
        return mt + ph - (y - y0) / (y1 - y0) * ph

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
             f'height="{height}" viewBox="0 0 {width} {height}">',
             f'<rect width="{width}" height="{height}" fill="white"/>',
             f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" '
             f'stroke="black"/>']
    if title:
        parts.append(f'<text x="{width/2:.1f}" y="24" text-anchor="middle" '
                     f'font-size="15">{escape(title)}</text>')
    if xlabel:
        parts.append(f'<text x="{ml + pw/2:.1f}" y="{height - 12}" '
                     f'text-anchor="middle" font-size="13">{escape(xlabel)}</text>')
    if ylabel:
        parts.append(f'<text x="16" y="{mt + ph/2:.1f}" text-anchor="middle" '
                     f'font-size="13" transform="rotate(-90 16 {mt + ph/2:.1f})">'
                     f'{escape(ylabel)}</text>')

    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        xv = x0 + frac * (x1 - x0)
        yv = y0 + frac * (y1 - y0)
        parts.append(f'<text x="{px(xv):.1f}" y="{mt + ph + 16}" '
                     f'text-anchor="middle" font-size="11">{xv:.3g}</text>')
        label = 10.0**yv if logy else yv
        parts.append(f'<text x="{ml - 6}" y="{py(yv) + 4:.1f}" '
                     f'text-anchor="end" font-size="11">{label:.3g}</text>')

    for i, (name, ys) in enumerate(series.items()):
        yv = np.asarray(ys, dtype=float)
        if logy:
            yv = np.log10(np.maximum(yv, 1e-300))
        pts = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(xs, yv))
        color = _COLORS[i % len(_COLORS)]
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                     f'stroke-width="1.8"/>')
        parts.append(f'<text x="{ml + 8}" y="{mt + 16 + 16 * i}" font-size="12" '
                     f'fill="{color}">{escape(name)}</text>')
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts) + "\n")
