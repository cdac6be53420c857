"""Minimal SVG line and scatter plots with axes and tick labels."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

from .io import atomic_write_text

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf")


@dataclass
class Series:
    x: Sequence[float]
    y: Sequence[float]
    label: str = ""
    kind: str = "line"
    color: str | None = None


@dataclass
class Figure:
    title: str = ""
    xlabel: str = ""
    ylabel: str = ""
    width: int = 640
    height: int = 400
    series: list = field(default_factory=list)

    def line(self, x, y, label: str = "", color: str | None = None) -> "Figure":
        self.series.append(Series(np.asarray(x, float), np.asarray(y, float), label, "line", color))
        return self

    def scatter(self, x, y, label: str = "", color: str | None = None) -> "Figure":
        self.series.append(Series(np.asarray(x, float), np.asarray(y, float), label, "scatter", color))
        return self

    def render(self) -> str:
        return render(self)

    def save(self, path):
        return atomic_write_text(path, self.render())


def nice_ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    if not hi > lo:
        return [lo]
    raw = (hi - lo) / max(count, 1)
    mag = 10.0 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step) * step
    ticks, t = [], start
    while t <= hi + 1e-12 * step:
        ticks.append(0.0 if abs(t) < 1e-12 * step else t)
        t += step
    return ticks


def _bounds(values) -> tuple[float, float]:
    finite = values[np.isfinite(values)]
    if finite.size == 0:
        return 0.0, 1.0
    lo, hi = float(finite.min()), float(finite.max())
    if hi == lo:
        pad = 0.5 if lo == 0 else 0.1 * abs(lo)
        return lo - pad, hi + pad
    pad = 0.04 * (hi - lo)
    return lo - pad, hi + pad


def render(fig: Figure) -> str:
    left, right, top, bottom = 70, 20, 36 if fig.title else 16, 48
    W, H = fig.width, fig.height
    pw, ph = W - left - right, H - top - bottom
    xs = np.concatenate([np.ravel(s.x) for s in fig.series]) if fig.series else np.zeros(1)
    ys = np.concatenate([np.ravel(s.y) for s in fig.series]) if fig.series else np.zeros(1)
    x0, x1 = _bounds(xs)
    y0, y1 = _bounds(ys)

    def px(x):
        return left + (np.asarray(x) - x0) / (x1 - x0) * pw

    def py(y):
        return top + (1.0 - (np.asarray(y) - y0) / (y1 - y0)) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
           f'viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">',
           f'<rect width="{W}" height="{H}" fill="white"/>',
           f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for t in nice_ticks(x0, x1):
        X = float(px(t))
        out.append(f'<line x1="{X:.2f}" y1="{top + ph}" x2="{X:.2f}" y2="{top + ph + 4}" stroke="black"/>')
        out.append(f'<text x="{X:.2f}" y="{top + ph + 16}" text-anchor="middle">{t:.4g}</text>')
    for t in nice_ticks(y0, y1):
        Y = float(py(t))
        out.append(f'<line x1="{left - 4}" y1="{Y:.2f}" x2="{left}" y2="{Y:.2f}" stroke="black"/>')
        out.append(f'<text x="{left - 6}" y="{Y + 4:.2f}" text-anchor="end">{t:.4g}</text>')
    if fig.title:
        out.append(f'<text x="{W / 2}" y="20" text-anchor="middle" font-size="14">{escape(fig.title)}</text>')
    if fig.xlabel:
        out.append(f'<text x="{left + pw / 2}" y="{H - 10}" text-anchor="middle">{escape(fig.xlabel)}</text>')
    if fig.ylabel:
        out.append(f'<text x="14" y="{top + ph / 2}" text-anchor="middle" '
                   f'transform="rotate(-90 14 {top + ph / 2})">{escape(fig.ylabel)}</text>')
    for i, s in enumerate(fig.series):
        color = s.color or PALETTE[i % len(PALETTE)]
        X, Y = px(s.x), py(s.y)
        ok = np.isfinite(X) & np.isfinite(Y)
        if s.kind == "scatter":
            for a, b in zip(X[ok], Y[ok]):
                out.append(f'<circle cx="{a:.2f}" cy="{b:.2f}" r="2.5" fill="{color}"/>')
        else:
            pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(X[ok], Y[ok]))
            out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        if s.label:
            ly = top + 14 + 14 * i
            out.append(f'<line x1="{left + pw - 110}" y1="{ly - 4}" x2="{left + pw - 92}" y2="{ly - 4}" '
                       f'stroke="{color}" stroke-width="2"/>')
            out.append(f'<text x="{left + pw - 88}" y="{ly}">{escape(s.label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
