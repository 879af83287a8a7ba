"""Minimal SVG line charts (no plotting dependency)."""

from __future__ import annotations

from html import escape

import numpy as np

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def line_chart(path, x, series: dict, title: str = "", xlabel: str = "t", width: int = 640,
               height: int = 400) -> None:
    """Write a polyline chart of each ``series[name]`` against ``x``."""
    x = np.asarray(x, dtype=float)
    ys = {k: np.asarray(v, dtype=float) for k, v in series.items()}
    pad_l, pad_r, pad_t, pad_b = 70, 20, 30, 40
    W, H = width - pad_l - pad_r, height - pad_t - pad_b
    finite = np.concatenate([v[np.isfinite(v)] for v in ys.values()] or [np.zeros(1)])
    y0, y1 = (finite.min(), finite.max()) if finite.size else (0.0, 1.0)
    if y1 <= y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    x0, x1 = (x.min(), x.max()) if x.size and x.max() > x.min() else (0.0, 1.0)

    def px(v):
        return pad_l + (v - x0) / (x1 - x0) * W

    def py(v):
        return pad_t + (1.0 - (v - y0) / (y1 - y0)) * H

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'font-family="sans-serif" font-size="12">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<text x="{width / 2:.1f}" y="18" text-anchor="middle">{escape(title)}</text>',
           f'<rect x="{pad_l}" y="{pad_t}" width="{W}" height="{H}" fill="none" stroke="black"/>']
    for v, anchor in ((y0, "end"), (y1, "end")):
        out.append(f'<text x="{pad_l - 5}" y="{py(v) + 4:.1f}" text-anchor="{anchor}">{v:.4g}</text>')
    out.append(f'<text x="{pad_l}" y="{height - 15}" text-anchor="middle">{x0:.4g}</text>')
    out.append(f'<text x="{pad_l + W}" y="{height - 15}" text-anchor="middle">{x1:.4g}</text>')
    out.append(f'<text x="{pad_l + W / 2:.1f}" y="{height - 5}" text-anchor="middle">{escape(xlabel)}</text>')
    for i, (name, y) in enumerate(ys.items()):
        color = _COLORS[i % len(_COLORS)]
        ok = np.isfinite(y)
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x[ok], y[ok]))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        out.append(f'<text x="{pad_l + 10}" y="{pad_t + 16 + 14 * i}" fill="{color}">{escape(name)}</text>')
    out.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")
