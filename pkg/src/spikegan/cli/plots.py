"""Minimal standalone SVG charts: line plots, scatter plots, image grids and rasters."""

from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf")
W, H, PAD = 480, 320, 48


def _svg(width, height, body) -> str:
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">\n<rect width="100%" height="100%" fill="white"/>\n'
        + "\n".join(body)
        + "\n</svg>\n"
    )


def _range(values):
    v = np.asarray([x for x in values if np.isfinite(x)], dtype=float)
    if v.size == 0:
        return 0.0, 1.0
    lo, hi = float(v.min()), float(v.max())
    if hi - lo < 1e-12:
        lo, hi = lo - 0.5, hi + 0.5
    return lo, hi


def _axes(title, xlabel, ylabel, xr, yr) -> list:
    x0, y0, x1, y1 = PAD, H - PAD, W - PAD / 2, PAD / 2
    out = [
        f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>',
        f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>',
        f'<text x="{W / 2}" y="16" text-anchor="middle" font-size="13">{escape(title)}</text>',
        f'<text x="{W / 2}" y="{H - 8}" text-anchor="middle" font-size="11">{escape(xlabel)}</text>',
        f'<text x="12" y="{H / 2}" text-anchor="middle" font-size="11" '
        f'transform="rotate(-90 12 {H / 2})">{escape(ylabel)}</text>',
    ]
    for frac in (0.0, 0.5, 1.0):
        xv = xr[0] + frac * (xr[1] - xr[0])
        yv = yr[0] + frac * (yr[1] - yr[0])
        px = x0 + frac * (x1 - x0)
        py = y0 - frac * (y0 - y1)
        out.append(f'<text x="{px:.1f}" y="{y0 + 14}" text-anchor="middle" font-size="9">{xv:.3g}</text>')
        out.append(f'<text x="{x0 - 4}" y="{py + 3:.1f}" text-anchor="end" font-size="9">{yv:.3g}</text>')
    return out


def _scale(v, r, a, b):
    return a + (v - r[0]) / (r[1] - r[0]) * (b - a)


def line_plot(path, series: dict, title="", xlabel="iteration", ylabel="") -> None:
    """``series`` maps a label to ``(x, y)`` arrays; non-finite points are skipped."""
    xs = [v for x, _ in series.values() for v in np.asarray(x, float)]
    ys = [v for _, y in series.values() for v in np.asarray(y, float)]
    xr, yr = _range(xs), _range(ys)
    body = _axes(title, xlabel, ylabel, xr, yr)
    for n, (label, (x, y)) in enumerate(series.items()):
        colour = PALETTE[n % len(PALETTE)]
        pts = [
            f"{_scale(a, xr, PAD, W - PAD / 2):.1f},{_scale(b, yr, H - PAD, PAD / 2):.1f}"
            for a, b in zip(np.asarray(x, float), np.asarray(y, float))
            if np.isfinite(a) and np.isfinite(b)
        ]
        if pts:
            body.append(f'<polyline fill="none" stroke="{colour}" stroke-width="1.2" points="{" ".join(pts)}"/>')
        body.append(
            f'<text x="{W - PAD / 2 - 4}" y="{PAD / 2 + 12 * (n + 1)}" text-anchor="end" '
            f'font-size="10" fill="{colour}">{escape(str(label))}</text>'
        )
    Path(path).write_text(_svg(W, H, body))


def scatter_plot(path, sets: dict, title="", xlabel="PC1", ylabel="PC2") -> None:
    """``sets`` maps a label to an ``(N, 2)`` array."""
    allp = np.concatenate([np.asarray(p, float).reshape(-1, 2) for p in sets.values()])
    xr, yr = _range(allp[:, 0]), _range(allp[:, 1])
    body = _axes(title, xlabel, ylabel, xr, yr)
    for n, (label, pts) in enumerate(sets.items()):
        colour = PALETTE[n % len(PALETTE)]
        for a, b in np.asarray(pts, float).reshape(-1, 2):
            body.append(
                f'<circle cx="{_scale(a, xr, PAD, W - PAD / 2):.1f}" cy="{_scale(b, yr, H - PAD, PAD / 2):.1f}" '
                f'r="1.8" fill="{colour}" fill-opacity="0.6"/>'
            )
        body.append(
            f'<text x="{W - PAD / 2 - 4}" y="{PAD / 2 + 12 * (n + 1)}" text-anchor="end" '
            f'font-size="10" fill="{colour}">{escape(str(label))}</text>'
        )
    Path(path).write_text(_svg(W, H, body))


def image_grid(path, images: np.ndarray, cols: int = 10, cell: int = 4, title="") -> None:
    """Flattened 8x8 grayscale images (values clipped to [0, 1]) as a tiled grid."""
    images = np.clip(np.asarray(images, float).reshape(-1, 8, 8), 0.0, 1.0)
    rows = int(np.ceil(len(images) / cols)) if len(images) else 1
    gap, top = 2, 20
    width = cols * (8 * cell + gap) + gap
    height = rows * (8 * cell + gap) + gap + top
    body = [f'<text x="{width / 2}" y="14" text-anchor="middle" font-size="12">{escape(title)}</text>']
    for n, img in enumerate(images):
        ox = gap + (n % cols) * (8 * cell + gap)
        oy = top + gap + (n // cols) * (8 * cell + gap)
        for r in range(8):
            for c in range(8):
                g = int(round(255 * (1.0 - img[r, c])))
                body.append(
                    f'<rect x="{ox + c * cell}" y="{oy + r * cell}" width="{cell}" height="{cell}" '
                    f'fill="rgb({g},{g},{g})"/>'
                )
    Path(path).write_text(_svg(width, height, body))


def raster(path, spikes: np.ndarray, title="", cell: int = 6) -> None:
    """Rows of binary spike trains ``(N, T)``; one tick per spike."""
    spikes = np.asarray(spikes, float).reshape(len(spikes), -1)
    N, T = spikes.shape
    top = 20
    width, height = T * cell + 2 * cell, N * cell + top + cell
    body = [f'<text x="{width / 2}" y="14" text-anchor="middle" font-size="12">{escape(title)}</text>']
    for i, t in zip(*np.nonzero(spikes)):
        body.append(
            f'<rect x="{cell + t * cell}" y="{top + i * cell}" width="{cell - 1}" height="{cell - 1}" fill="black"/>'
        )
    Path(path).write_text(_svg(width, height, body))
