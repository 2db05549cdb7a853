"""Tiny dependency-free chart rasterizer.

Renders line charts, bar charts and heatmaps straight into grayscale PNG
arrays (white background, dark ink). Glyphs come from a 3x5 bitmap font
covering digits and the handful of symbols numeric labels need. This is
deliberately minimal: training curves and bencmark bars, nothing more.
"""

from __future__ import annotations

import numpy as np

from .fileio import write_png

__all__ = ["line_chart", "bar_chart", "heatmap"]

_FONT = {
    "0": ("111", "101", "101", "101", "111"),
    "1": ("010", "110", "010", "010", "111"),
    "2": ("111", "001", "111", "100", "111"),
    "3": ("111", "001", "111", "001", "111"),
    "4": ("101", "101", "111", "001", "001"),
    "5": ("111", "100", "111", "001", "111"),
    "6": ("111", "100", "111", "101", "111"),
    "7": ("111", "001", "010", "010", "010"),
    "8": ("111", "101", "111", "101", "111"),
    "9": ("111", "101", "111", "001", "111"),
    ".": ("000", "000", "000", "000", "010"),
    "-": ("000", "000", "111", "000", "000"),
    "+": ("000", "010", "111", "010", "000"),
    "e": ("000", "111", "110", "100", "111"),
    "x": ("000", "101", "010", "101", "000"),
    ":": ("000", "010", "000", "010", "000"),
    " ": ("000", "000", "000", "000", "000"),
}


def _draw_text(canvas, r, c, text, shade=0.0, scale=1):
    for ch in str(text):
        glyph = _FONT.get(ch)
        if glyph is not None:
            for gr, row in enumerate(glyph):
                for gc, bit in enumerate(row):
                    if bit == "1":
                        rr = r + gr * scale
                        cc = c + gc * scale
                        canvas[rr:rr + scale, cc:cc + scale] = shade
        c += 4 * scale


def _fmt(v: float) -> str:
    if v == 0:
        return "0"
    if 1e-3 <= abs(v) < 1e4:
        s = f"{v:.3f}".rstrip("0").rstrip(".")
        return s if s else "0"
    return f"{v:.1e}".replace("e-0", "e-").replace("e+0", "e+")


def _draw_line(canvas, r0, c0, r1, c1, shade):
    n = int(2 * max(abs(r1 - r0), abs(c1 - c0))) + 1
    rr = np.clip(np.round(np.linspace(r0, r1, n)).astype(int), 0, canvas.shape[0] - 1)
    cc = np.clip(np.round(np.linspace(c0, c1, n)).astype(int), 0, canvas.shape[1] - 1)
    canvas[rr, cc] = shade


def line_chart(series: dict, path, size=(320, 480), logy: bool = False):
    """series maps a label to (x, y) arrays; labels are noted in shades of gray
    (first darkest). Axis extremes are annotated numerically."""
    h, w = size
    canvas = np.ones((h, w))
    top, bottom, left, right = 12, 24, 46, 10
    canvas[top, left:w - right] = 0.0
    canvas[h - bottom, left:w - right] = 0.0
    canvas[top:h - bottom + 1, left] = 0.0
    canvas[top:h - bottom + 1, w - right - 1] = 0.0

    xs = [np.asarray(x, float) for x, _ in series.values()]
    ys = [np.asarray(y, float) for _, y in series.values()]
    if logy:
        ys = [np.log10(np.maximum(y, 1e-12)) for y in ys]
    xlo = min(x.min() for x in xs)
    xhi = max(x.max() for x in xs)
    ylo = min(y.min() for y in ys)
    yhi = max(y.max() for y in ys)
    xspan = (xhi - xlo) or 1.0
    yspan = (yhi - ylo) or 1.0

    shades = np.linspace(0.0, 0.55, max(len(series), 1))
    for shade, x, y in zip(shades, xs, ys):
        pr = (h - bottom) - (y - ylo) / yspan * (h - top - bottom)
        pc = left + (x - xlo) / xspan * (w - left - right - 1)
        for i in range(len(x) - 1):
            _draw_line(canvas, pr[i], pc[i], pr[i + 1], pc[i + 1], shade)

    ylab_hi, ylab_lo = (yhi, ylo)
    if logy:
        ylab_hi, ylab_lo = 10 ** yhi, 10 ** ylo
    _draw_text(canvas, top - 3, 2, _fmt(ylab_hi))
    _draw_text(canvas, h - bottom - 2, 2, _fmt(ylab_lo))
    _draw_text(canvas, h - bottom + 4, left, _fmt(xlo))
    _draw_text(canvas, h - bottom + 4, w - right - 4 * len(_fmt(xhi)), _fmt(xhi))
    write_png(path, canvas)


def bar_chart(labels, values, path, size=(240, 400)):
    h, w = size
    canvas = np.ones((h, w))
    top, bottom, left = 20, 30, 14
    vmax = max(max(values), 1e-12)
    slot = (w - 2 * left) // max(len(values), 1)
    for i, (lab, val) in enumerate(zip(labels, values)):
        c0 = left + i * slot + slot // 6
        c1 = left + (i + 1) * slot - slot // 6
        bh = int((h - top - bottom) * val / vmax)
        canvas[h - bottom - bh:h - bottom, c0:c1] = 0.25 + 0.35 * (i % 2)
        _draw_text(canvas, h - bottom - bh - 8, c0, _fmt(val))
        _draw_text(canvas, h - bottom + 6, c0, str(lab)[:max((c1 - c0) // 4, 1)])
    canvas[h - bottom, left // 2:w - left // 2] = 0.0
    write_png(path, canvas)


def heatmap(arr, path, upscale: int = 1):
    a = np.asarray(arr, float)
    lo, hi = a.min(), a.max()
    a = (a - lo) / (hi - lo) if hi > lo else np.zeros_like(a)
    if upscale > 1:
        a = np.kron(a, np.ones((upscale, upscale)))
    write_png(path, a)
