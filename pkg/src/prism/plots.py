"""Tiny SVG writers for loss curves, sweep curves and method comparisons."""
from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 560, 340
MARGIN = {"left": 60, "right": 20, "top": 36, "bottom": 46}
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")


def _frame(title: str, xlabel: str, ylabel: str, body: list[str]) -> str:
    x0, y1 = MARGIN["left"], HEIGHT - MARGIN["bottom"]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<line x1="{x0}" y1="{MARGIN["top"]}" x2="{x0}" y2="{y1}" stroke="black"/>',
        f'<line x1="{x0}" y1="{y1}" x2="{WIDTH - MARGIN["right"]}" y2="{y1}" stroke="black"/>',
        f'<text x="{WIDTH / 2}" y="{HEIGHT - 8}" text-anchor="middle">{escape(xlabel)}</text>',
        f'<text x="14" y="{HEIGHT / 2}" text-anchor="middle" '
        f'transform="rotate(-90 14 {HEIGHT / 2})">{escape(ylabel)}</text>',
    ]
    return "\n".join(parts + body + ["</svg>"]) + "\n"


def _scale(lo: float, hi: float, a: float, b: float):
    if not np.isfinite(lo) or not np.isfinite(hi) or hi <= lo:
        lo, hi = (lo - 0.5, lo + 0.5) if np.isfinite(lo) else (0.0, 1.0)
    return lambda v: a + (v - lo) / (hi - lo) * (b - a)


def _ticks(lo: float, hi: float, to_px, horizontal: bool, count: int = 5) -> list[str]:
    out = []
    for v in np.linspace(lo, hi, count):
        p = to_px(v)
        if horizontal:
            y = HEIGHT - MARGIN["bottom"]
            out.append(f'<text x="{p:.1f}" y="{y + 14}" text-anchor="middle">{v:.3g}</text>')
        else:
            out.append(f'<text x="{MARGIN["left"] - 4}" y="{p + 4:.1f}" text-anchor="end">{v:.3g}</text>')
    return out


def line_chart(series: dict[str, tuple[list[float], list[float]]], title: str,
               xlabel: str, ylabel: str) -> str:
    """One polyline per named series of ``(xs, ys)``; non-finite points are dropped."""
    pts = [(x, y) for xs, ys in series.values() for x, y in zip(xs, ys) if np.isfinite(y)]
    xs_all = [p[0] for p in pts] or [0.0, 1.0]
    ys_all = [p[1] for p in pts] or [0.0, 1.0]
    xlo, xhi, ylo, yhi = min(xs_all), max(xs_all), min(ys_all), max(ys_all)
    sx = _scale(xlo, xhi, MARGIN["left"], WIDTH - MARGIN["right"])
    sy = _scale(ylo, yhi, HEIGHT - MARGIN["bottom"], MARGIN["top"])
    body = _ticks(xlo, xhi, sx, True) + _ticks(ylo, yhi, sy, False)
    for i, (name, (xs, ys)) in enumerate(series.items()):
        color = PALETTE[i % len(PALETTE)]
        coords = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys) if np.isfinite(y))
        body.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{coords}"/>')
        body.append(f'<text x="{WIDTH - MARGIN["right"] - 4}" y="{MARGIN["top"] + 14 * i}" '
                    f'text-anchor="end" fill="{color}">{escape(name)}</text>')
    return _frame(title, xlabel, ylabel, body)


def bar_chart(labels: list[str], values: list[float], title: str, ylabel: str) -> str:
    top = max([v for v in values if np.isfinite(v)] + [1e-12])
    sy = _scale(0.0, top, HEIGHT - MARGIN["bottom"], MARGIN["top"])
    inner = WIDTH - MARGIN["left"] - MARGIN["right"]
    slot = inner / max(len(labels), 1)
    body = _ticks(0.0, top, sy, False)
    for i, (label, v) in enumerate(zip(labels, values)):
        x = MARGIN["left"] + i * slot + 0.15 * slot
        y = sy(v if np.isfinite(v) else 0.0)
        h = HEIGHT - MARGIN["bottom"] - y
        body.append(f'<rect x="{x:.2f}" y="{y:.2f}" width="{0.7 * slot:.2f}" height="{h:.2f}" '
                    f'fill="{PALETTE[i % len(PALETTE)]}"/>')
        body.append(f'<text x="{x + 0.35 * slot:.2f}" y="{HEIGHT - MARGIN["bottom"] + 14}" '
                    f'text-anchor="middle">{escape(label)}</text>')
        body.append(f'<text x="{x + 0.35 * slot:.2f}" y="{y - 4:.2f}" text-anchor="middle">{v:.3f}</text>')
    return _frame(title, "", ylabel, body)
