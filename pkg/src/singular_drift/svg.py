"""Minimal static SVG line charts (polylines with axes and ticks)."""

from __future__ import annotations

import math
from typing import Sequence
from xml.sax.saxutils import escape

__all__ = ["line_chart", "write_line_chart"]

_COLOURS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
_W, _H = 640, 420
_LEFT, _RIGHT, _TOP, _BOTTOM = 70, 20, 40, 55


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi == lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=10 * mag)
    first = math.ceil(lo / step) * step
    out = []
    k = 0
    while first + k * step <= hi + 1e-9 * step:
        out.append(first + k * step)
        k += 1
    return out


def _fmt(v: float) -> str:
    return f"{v:.4g}"


def line_chart(
    series: dict[str, tuple[Sequence[float], Sequence[float]]],
    title: str = "",
    xlabel: str = "",
    ylabel: str = "",
    logx: bool = False,
    logy: bool = False,
) -> str:
    """Render named ``(x, y)`` series as one SVG document.

    Non-finite points (and non-positive ones on a log axis) are skipped.
    """
    fx = (lambda v: math.log10(v)) if logx else (lambda v: v)
    fy = (lambda v: math.log10(v)) if logy else (lambda v: v)
    clean = {}
    for name, (xs, ys) in series.items():
        pts = []
        for x, y in zip(xs, ys):
            x, y = float(x), float(y)
            if not (math.isfinite(x) and math.isfinite(y)):
                continue
            if (logx and x <= 0) or (logy and y <= 0):
                continue
            pts.append((fx(x), fy(y)))
        clean[name] = pts
    allp = [p for pts in clean.values() for p in pts] or [(0.0, 0.0)]
    x0, x1 = min(p[0] for p in allp), max(p[0] for p in allp)
    y0, y1 = min(p[1] for p in allp), max(p[1] for p in allp)
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad
    pw, ph = _W - _LEFT - _RIGHT, _H - _TOP - _BOTTOM

    def sx(v):
        return _LEFT + (v - x0) / (x1 - x0) * pw

    def sy(v):
        return _TOP + (y1 - v) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="12">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2:.1f}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<line x1="{_LEFT}" y1="{_TOP + ph}" x2="{_LEFT + pw}" y2="{_TOP + ph}" stroke="black"/>',
        f'<line x1="{_LEFT}" y1="{_TOP}" x2="{_LEFT}" y2="{_TOP + ph}" stroke="black"/>',
    ]
    for t in _ticks(x0, x1):
        label = _fmt(10**t) if logx else _fmt(t)
        out.append(f'<line x1="{sx(t):.2f}" y1="{_TOP + ph}" x2="{sx(t):.2f}" y2="{_TOP + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{sx(t):.2f}" y="{_TOP + ph + 18}" text-anchor="middle">{label}</text>')
    for t in _ticks(y0, y1):
        label = _fmt(10**t) if logy else _fmt(t)
        out.append(f'<line x1="{_LEFT - 5}" y1="{sy(t):.2f}" x2="{_LEFT}" y2="{sy(t):.2f}" stroke="black"/>')
        out.append(f'<text x="{_LEFT - 8}" y="{sy(t) + 4:.2f}" text-anchor="end">{label}</text>')
    out.append(f'<text x="{_LEFT + pw / 2:.1f}" y="{_H - 12}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(
        f'<text x="16" y="{_TOP + ph / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 16 {_TOP + ph / 2:.1f})">{escape(ylabel)}</text>'
    )
    for k, (name, pts) in enumerate(clean.items()):
        colour = _COLOURS[k % len(_COLOURS)]
        if pts:
            coords = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in pts)
            out.append(f'<polyline points="{coords}" fill="none" stroke="{colour}" stroke-width="1.5"/>')
            for x, y in pts:
                out.append(f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="2.5" fill="{colour}"/>')
        ly = _TOP + 14 + 16 * k
        out.append(f'<line x1="{_LEFT + pw - 150}" y1="{ly - 4}" x2="{_LEFT + pw - 130}" y2="{ly - 4}" stroke="{colour}" stroke-width="2"/>')
        out.append(f'<text x="{_LEFT + pw - 125}" y="{ly}">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_line_chart(path, series, **kw) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(line_chart(series, **kw))
