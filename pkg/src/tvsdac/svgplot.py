"""Minimal SVG line plots: polylines, axes with ticks, and a legend."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

MAX_POINTS = 2000
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf")


def decimate(x, y, max_points: int = MAX_POINTS):
    """Evenly spaced subsample that always keeps the last point."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size <= max_points:
        return x, y
    idx = np.unique(np.linspace(0, x.size - 1, max_points).round().astype(int))
    return x[idx], y[idx]


def _ticks(lo: float, hi: float, count: int = 5) -> np.ndarray:
    if hi <= lo:
        return np.array([lo])
    raw = (hi - lo) / count
    mag = 10 ** np.floor(np.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=10 * mag)
    start = np.ceil(lo / step) * step
    return np.arange(start, hi + 0.5 * step, step)


def line_plot(series, title: str = "", xlabel: str = "t", ylabel: str = "",
              width: int = 640, height: int = 360) -> str:
    """``series`` is a list of (label, x, y[, dashed]); returns the SVG document text."""
    left, right, top, bottom = 60, 20, 30 if title else 12, 40
    pw, ph = width - left - right, height - top - bottom
    prepared = []
    for item in series:
        label, x, y = item[:3]
        dashed = bool(item[3]) if len(item) > 3 else False
        x, y = decimate(x, y)
        keep = np.isfinite(x) & np.isfinite(y)
        prepared.append((label, x[keep], y[keep], dashed))
    xs = np.concatenate([p[1] for p in prepared]) if prepared else np.array([0.0, 1.0])
    ys = np.concatenate([p[2] for p in prepared]) if prepared else np.array([0.0, 1.0])
    x0, x1 = (float(xs.min()), float(xs.max())) if xs.size else (0.0, 1.0)
    y0, y1 = (float(ys.min()), float(ys.max())) if ys.size else (0.0, 1.0)
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad

    def px(v):
        return left + (v - x0) / (x1 - x0) * pw

    def py(v):
        return top + ph - (v - y0) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
           f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>']
    if title:
        out.append(f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" font-size="13">'
                   f'{escape(title)}</text>')
    out.append(f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')
    for tx in _ticks(x0, x1):
        out.append(f'<line x1="{px(tx):.2f}" y1="{top + ph}" x2="{px(tx):.2f}" y2="{top + ph + 4}" '
                   f'stroke="black"/>')
        out.append(f'<text x="{px(tx):.2f}" y="{top + ph + 16}" text-anchor="middle">{tx:g}</text>')
    for ty in _ticks(y0, y1):
        out.append(f'<line x1="{left - 4}" y1="{py(ty):.2f}" x2="{left}" y2="{py(ty):.2f}" '
                   f'stroke="black"/>')
        out.append(f'<text x="{left - 6}" y="{py(ty) + 4:.2f}" text-anchor="end">{ty:.3g}</text>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{height - 6}" text-anchor="middle">'
               f'{escape(xlabel)}</text>')
    if ylabel:
        out.append(f'<text x="14" y="{top + ph / 2:.1f}" text-anchor="middle" '
                   f'transform="rotate(-90 14 {top + ph / 2:.1f})">{escape(ylabel)}</text>')
    for k, (label, x, y, dashed) in enumerate(prepared):
        color = COLORS[k % len(COLORS)]
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x, y))
        dash = ' stroke-dasharray="6,4"' if dashed else ""
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>')
        ly = top + 14 + 14 * k
        out.append(f'<line x1="{left + pw - 110}" y1="{ly - 4}" x2="{left + pw - 90}" y2="{ly - 4}" '
                   f'stroke="{color}" stroke-width="2"{dash}/>')
        out.append(f'<text x="{left + pw - 86}" y="{ly}">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def trajectory_svg(log) -> str:
    """Two stacked panels: states x_i(t), and sum z^2 with its envelope when logged."""
    t = log.column("t")
    xs = [(c, t, log.column(c)) for c in log.columns if c.startswith("x") and c[1:].isdigit()]
    zs = [("sum z^2", t, log.column("sum_z2"))]
    if "z_env" in log.columns:
        zs.append(("envelope", t, log.column("z_env"), True))
    top = line_plot(xs, title="states", ylabel="x")
    bottom = line_plot(zs, title="transformed error", ylabel="sum z^2")
    body_top = top.split("\n", 1)[1].rsplit("</svg>", 1)[0]
    body_bottom = bottom.split("\n", 1)[1].rsplit("</svg>", 1)[0]
    return ('<svg xmlns="http://www.w3.org/2000/svg" width="640" height="720" '
            'font-family="sans-serif" font-size="11">\n'
            f'<g>{body_top}</g>\n<g transform="translate(0 360)">{body_bottom}</g>\n</svg>\n')
