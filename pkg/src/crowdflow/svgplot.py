"""Self-contained SVG line charts: zero plotting dependencies."""

from __future__ import annotations

import math
import os

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
_W, _H = 640, 420
_ML, _MR, _MT, _MB = 70, 20, 36, 52


def _transform(vals, lo, hi, out_lo, out_hi, log):
    if log:
        vals = [math.log10(v) for v in vals]
        lo, hi = math.log10(lo), math.log10(hi)
    span = (hi - lo) or 1.0
    return [out_lo + (v - lo) / span * (out_hi - out_lo) for v in vals]


def _bounds(series, idx, log):
    vals = [p[idx] for _, pts in series for p in pts
            if not log or p[idx] > 0]
    if not vals:
        vals = [1e-12, 1.0]
    lo, hi = min(vals), max(vals)
    if lo == hi:
        pad = abs(lo) * 0.1 + 1e-12
        lo, hi = lo - pad, hi + pad
    return lo, hi


def _ticks(lo, hi, log):
    if log:
        klo, khi = math.floor(math.log10(lo)), math.ceil(math.log10(hi))
        return [10.0 ** k for k in range(klo, khi + 1)]
    step = 10.0 ** math.floor(math.log10((hi - lo) / 4.0 + 1e-300))
    for mult in (1, 2, 5, 10):
        if (hi - lo) / (step * mult) <= 6:
            step *= mult
            break
    first = math.ceil(lo / step) * step
    out = []
    v = first
    while v <= hi + 1e-12 * abs(step):
        out.append(v)
        v += step
    return out


def line_chart(path, series, title="", xlabel="", ylabel="",
               logx=False, logy=False):
    """Write a simple multi-series line chart.

    ``series`` is a list of ``(label, points)`` with points ``(x, y)``.
    """
    xlo, xhi = _bounds(series, 0, logx)
    ylo, yhi = _bounds(series, 1, logy)
    px = lambda xs: _transform(xs, xlo, xhi, _ML, _W - _MR, logx)
    py = lambda ys: _transform(ys, ylo, yhi, _H - _MB, _MT, logy)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" '
             f'height="{_H}" viewBox="0 0 {_W} {_H}">',
             f'<rect width="{_W}" height="{_H}" fill="white"/>',
             f'<text x="{_W/2:.0f}" y="20" text-anchor="middle" '
             f'font-family="sans-serif" font-size="14">{title}</text>']
    # axes
    parts.append(f'<rect x="{_ML}" y="{_MT}" width="{_W-_ML-_MR}" '
                 f'height="{_H-_MT-_MB}" fill="none" stroke="#333"/>')
    for tx in _ticks(xlo, xhi, logx):
        if not xlo <= tx <= xhi:
            continue
        (sx,) = px([tx])
        parts.append(f'<line x1="{sx:.1f}" y1="{_H-_MB}" x2="{sx:.1f}" '
                     f'y2="{_H-_MB+5}" stroke="#333"/>')
        parts.append(f'<text x="{sx:.1f}" y="{_H-_MB+18}" text-anchor="middle" '
                     f'font-family="sans-serif" font-size="11">{tx:.4g}</text>')
    for ty in _ticks(ylo, yhi, logy):
        if not ylo <= ty <= yhi:
            continue
        (sy,) = py([ty])
        parts.append(f'<line x1="{_ML-5}" y1="{sy:.1f}" x2="{_ML}" '
                     f'y2="{sy:.1f}" stroke="#333"/>')
        parts.append(f'<text x="{_ML-8}" y="{sy+4:.1f}" text-anchor="end" '
                     f'font-family="sans-serif" font-size="11">{ty:.4g}</text>')
    parts.append(f'<text x="{_W/2:.0f}" y="{_H-10}" text-anchor="middle" '
                 f'font-family="sans-serif" font-size="12">{xlabel}</text>')
    parts.append(f'<text x="16" y="{_H/2:.0f}" text-anchor="middle" '
                 f'font-family="sans-serif" font-size="12" '
                 f'transform="rotate(-90 16 {_H/2:.0f})">{ylabel}</text>')
    for k, (label, pts) in enumerate(series):
        pts = [(x, y) for x, y in pts
               if (not logx or x > 0) and (not logy or y > 0)]
        if not pts:
            continue
        xs = px([p[0] for p in pts])
        ys = py([p[1] for p in pts])
        d = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys))
        color = _COLORS[k % len(_COLORS)]
        parts.append(f'<polyline points="{d}" fill="none" stroke="{color}" '
                     f'stroke-width="1.6"/>')
        ly = _MT + 16 + 16 * k
        parts.append(f'<line x1="{_W-_MR-120}" y1="{ly-4}" x2="{_W-_MR-100}" '
                     f'y2="{ly-4}" stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{_W-_MR-95}" y="{ly}" font-family="sans-serif" '
                     f'font-size="11">{label}</text>')
    parts.append("</svg>")
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as f:
        f.write("\n".join(parts))
    os.replace(tmp, path)
