"""Minimal static SVG 1.1 line plots (no styling beyond what is needed to read them)."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 640, 420
MARGIN = (70, 20, 30, 50)  # left, right, top, bottom
COLORS = ("#1f4e79", "#b03a2e", "#1e8449", "#7d3c98", "#b9770e", "#2e4053")


def _fmt(v: float) -> str:
    return format(v, ".2f")


def _ticks(lo, hi, n=5):
    if hi <= lo:
        return [lo]
    step = (hi - lo) / n
    mag = 10.0 ** math.floor(math.log10(step))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= step), default=step)
    start = math.ceil(lo / step) * step
    return [start + i * step for i in range(int((hi - start) / step + 1e-9) + 1)]


def line_plot(path, series, xlabel="t", ylabel="", logy=False, title=""):
    """Write an SVG with one polyline per ``(label, x, y)`` entry of ``series``.

    With ``logy`` the vertical axis shows ``log10(y)``; non-positive and
    non-finite values break the polyline.
    """
    left, right, top, bottom = MARGIN
    pw, ph = WIDTH - left - right, HEIGHT - top - bottom
    prepared = []
    for label, x, y in series:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if logy:
            with np.errstate(divide="ignore", invalid="ignore"):
                y = np.where(y > 0.0, np.log10(np.where(y > 0.0, y, 1.0)), np.nan)
        prepared.append((label, x, y))
    xs = np.concatenate([p[1][np.isfinite(p[2])] for p in prepared] or [np.zeros(1)])
    ys = np.concatenate([p[2][np.isfinite(p[2])] for p in prepared] or [np.zeros(1)])
    if xs.size == 0:
        xs, ys = np.zeros(1), np.zeros(1)
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(ys.min()), float(ys.max())
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5

    def px(v):
        return left + (v - x0) / (x1 - x0) * pw

    def py(v):
        return top + (y1 - v) / (y1 - y0) * ph

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    if title:
        out.append(f'<text x="{WIDTH / 2}" y="{top - 10}" text-anchor="middle" '
                   f'font-size="13">{escape(title)}</text>')
    for v in _ticks(x0, x1):
        out.append(f'<text x="{_fmt(px(v))}" y="{HEIGHT - bottom + 16}" text-anchor="middle" '
                   f'font-size="11">{v:g}</text>')
    for v in _ticks(y0, y1):
        lab = f"1e{v:g}" if logy else f"{v:g}"
        out.append(f'<text x="{left - 6}" y="{_fmt(py(v) + 4)}" text-anchor="end" '
                   f'font-size="11">{lab}</text>')
    out.append(f'<text x="{left + pw / 2}" y="{HEIGHT - 12}" text-anchor="middle" '
               f'font-size="12">{escape(xlabel)}</text>')
    out.append(f'<text x="16" y="{top + ph / 2}" text-anchor="middle" font-size="12" '
               f'transform="rotate(-90 16 {top + ph / 2})">{escape(ylabel)}</text>')
    for n, (label, x, y) in enumerate(prepared):
        color = COLORS[n % len(COLORS)]
        segment = []
        for a, b in zip(x, y):
            if np.isfinite(b):
                segment.append(f"{_fmt(px(a))},{_fmt(py(b))}")
            elif segment:
                out.append(f'<polyline fill="none" stroke="{color}" points="{" ".join(segment)}"/>')
                segment = []
        if segment:
            out.append(f'<polyline fill="none" stroke="{color}" points="{" ".join(segment)}"/>')
        if label:
            out.append(f'<text x="{left + 8}" y="{top + 16 + 14 * n}" font-size="11" '
                       f'fill="{color}">{escape(label)}</text>')
    out.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")
