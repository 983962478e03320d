"""Minimal self-contained SVG emission: trajectory fans, histograms, heatmaps.

No plotting library is involved, so the bytes are a pure function of the data
and identical across reruns.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = ["trajectory_fan_svg", "histogram_svg", "heatmap_svg"]

_W, _H = 720, 480
_MARGIN = 54
_PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
            "#8c564b", "#17becf", "#7f7f7f"]


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def _axes(title: str, xlabel: str, ylabel: str,
          xlim: tuple[float, float], ylim: tuple[float, float]) -> list[str]:
    x0, x1 = xlim
    y0, y1 = ylim
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2}" y="22" text-anchor="middle" font-size="15" '
        f'font-family="sans-serif">{title}</text>',
        f'<rect x="{_MARGIN}" y="{_MARGIN}" width="{_W - 2 * _MARGIN}" '
        f'height="{_H - 2 * _MARGIN}" fill="none" stroke="#333"/>',
        f'<text x="{_W / 2}" y="{_H - 12}" text-anchor="middle" font-size="12" '
        f'font-family="sans-serif">{xlabel}</text>',
        f'<text x="16" y="{_H / 2}" text-anchor="middle" font-size="12" '
        f'font-family="sans-serif" transform="rotate(-90 16 {_H / 2})">{ylabel}</text>',
    ]
    for frac in (0.0, 0.5, 1.0):
        px = _MARGIN + frac * (_W - 2 * _MARGIN)
        py = _H - _MARGIN + 14
        parts.append(f'<text x="{_fmt(px)}" y="{py}" text-anchor="middle" '
                     f'font-size="10" font-family="sans-serif">'
                     f'{x0 + frac * (x1 - x0):.3g}</text>')
        qy = _H - _MARGIN - frac * (_H - 2 * _MARGIN)
        parts.append(f'<text x="{_MARGIN - 6}" y="{_fmt(qy + 3)}" text-anchor="end" '
                     f'font-size="10" font-family="sans-serif">'
                     f'{y0 + frac * (y1 - y0):.3g}</text>')
    return parts


def _to_px(x, y, xlim, ylim):
    x0, x1 = xlim
    y0, y1 = ylim
    sx = (_W - 2 * _MARGIN) / (x1 - x0) if x1 > x0 else 1.0
    sy = (_H - 2 * _MARGIN) / (y1 - y0) if y1 > y0 else 1.0
    px = _MARGIN + (np.asarray(x) - x0) * sx
    py = _H - _MARGIN - (np.asarray(y) - y0) * sy
    return px, py


def _pad(lo: float, hi: float) -> tuple[float, float]:
    if hi <= lo:
        return lo - 0.5, lo + 0.5
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def trajectory_fan_svg(times: np.ndarray, fan: list[np.ndarray], title: str,
                       ylabel: str = "position") -> str:
    """Polyline per trajectory; ``fan`` holds 1-D position arrays on ``times``."""
    xlim = (float(times[0]), float(times[-1]))
    all_y = np.concatenate(fan) if fan else np.array([0.0])
    ylim = _pad(float(np.min(all_y)), float(np.max(all_y)))
    parts = _axes(title, "t", ylabel, xlim, ylim)
    for i, ys in enumerate(fan):
        px, py = _to_px(times, ys, xlim, ylim)
        pts = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in zip(px, py))
        color = _PALETTE[i % len(_PALETTE)]
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                     f'stroke-width="1"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def histogram_svg(bin_edges: np.ndarray, counts: np.ndarray, title: str,
                  xlabel: str = "position") -> str:
    edges = np.asarray(bin_edges, dtype=float)
    counts = np.asarray(counts, dtype=float)
    xlim = (float(edges[0]), float(edges[-1]))
    top = float(np.max(counts)) if len(counts) and np.max(counts) > 0 else 1.0
    ylim = (0.0, 1.05 * top)
    parts = _axes(title, xlabel, "count", xlim, ylim)
    for lo, hi, c in zip(edges[:-1], edges[1:], counts):
        if c <= 0:
            continue
        px0, py_top = _to_px(lo, c, xlim, ylim)
        px1, py_bot = _to_px(hi, 0.0, xlim, ylim)
        parts.append(f'<rect x="{_fmt(float(px0))}" y="{_fmt(float(py_top))}" '
                     f'width="{_fmt(float(px1 - px0))}" '
                     f'height="{_fmt(float(py_bot - py_top))}" '
                     f'fill="#1f77b4" stroke="white" stroke-width="0.5"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def heatmap_svg(values: np.ndarray, bounds, title: str,
                xlabel: str = "q1", ylabel: str = "q2") -> str:
    """Grayscale cell map of a 2-D array over rectangle bounds."""
    vals = np.asarray(values, dtype=float)
    (x0, x1), (y0, y1) = bounds
    parts = _axes(title, xlabel, ylabel, (x0, x1), (y0, y1))
    vmax = float(np.max(vals)) if np.max(vals) > 0 else 1.0
    nx, ny = vals.shape
    dx = (x1 - x0) / nx
    dy = (y1 - y0) / ny
    pw = dx * (_W - 2 * _MARGIN) / (x1 - x0)
    ph = dy * (_H - 2 * _MARGIN) / (y1 - y0)
    for i in range(nx):
        for j in range(ny):
            v = vals[i, j] / vmax
            if v <= 0:
                continue
            shade = int(round(255 * (1.0 - 0.85 * min(v, 1.0))))
            blue = int(round(255 - 0.3 * (255 - shade)))
            px, py = _to_px(x0 + i * dx, y0 + (j + 1) * dy, (x0, x1), (y0, y1))
            parts.append(f'<rect x="{_fmt(float(px))}" y="{_fmt(float(py))}" '
                         f'width="{_fmt(pw + 0.5)}" height="{_fmt(ph + 0.5)}" '
                         f'fill="rgb({shade},{shade},{blue})"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
