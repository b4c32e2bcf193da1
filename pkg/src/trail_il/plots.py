"""Standalone SVG line and bar charts (no plotting library)."""
from __future__ import annotations

import math
from xml.sax.saxutils import escape

WIDTH, HEIGHT = 480, 320
MARGIN = 50
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")


def _scale(lo, hi, a, b):
    span = hi - lo or 1.0
    return lambda v: a + (v - lo) / span * (b - a)


def _frame(title, xlabel, ylabel):
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<text x="{WIDTH / 2}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<text x="{WIDTH / 2}" y="{HEIGHT - 8}" text-anchor="middle" font-size="12">{escape(xlabel)}</text>',
        f'<text x="14" y="{HEIGHT / 2}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 14 {HEIGHT / 2})">{escape(ylabel)}</text>',
        f'<line x1="{MARGIN}" y1="{HEIGHT - MARGIN}" x2="{WIDTH - 20}" y2="{HEIGHT - MARGIN}" stroke="black"/>',
        f'<line x1="{MARGIN}" y1="30" x2="{MARGIN}" y2="{HEIGHT - MARGIN}" stroke="black"/>',
    ]


def line_chart(series, title="", xlabel="", ylabel="", logx=False, logy=False):
    """``series`` maps a label to ``(xs, ys)``. Returns the SVG document as a string."""
    tx = math.log10 if logx else float
    ty = math.log10 if logy else float
    pts = {k: [(tx(x), ty(y)) for x, y in zip(*v) if (not logy or y > 0) and (not logx or x > 0)]
           for k, v in series.items()}
    allx = [p[0] for v in pts.values() for p in v] or [0.0, 1.0]
    ally = [p[1] for v in pts.values() for p in v] or [0.0, 1.0]
    sx = _scale(min(allx), max(allx), MARGIN, WIDTH - 20)
    sy = _scale(min(ally), max(ally), HEIGHT - MARGIN, 30)
    out = _frame(title, xlabel, ylabel)
    for j, (label, p) in enumerate(pts.items()):
        color = COLORS[j % len(COLORS)]
        coords = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in p)
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{coords}"/>')
        out.append(f'<text x="{WIDTH - 130}" y="{40 + 16 * j}" font-size="11" fill="{color}">{escape(label)}</text>')
    for v in (min(ally), max(ally)):
        shown = 10 ** v if logy else v
        out.append(f'<text x="{MARGIN - 4}" y="{sy(v) + 4:.2f}" text-anchor="end" font-size="10">{shown:.3g}</text>')
    for v in (min(allx), max(allx)):
        shown = 10 ** v if logx else v
        out.append(f'<text x="{sx(v):.2f}" y="{HEIGHT - MARGIN + 14}" text-anchor="middle" font-size="10">{shown:.3g}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def bar_chart(labels, values, errors=None, title="", ylabel=""):
    top = max([v + (errors[i] if errors else 0.0) for i, v in enumerate(values)] + [1e-12])
    sy = _scale(0.0, top, HEIGHT - MARGIN, 30)
    slot = (WIDTH - 20 - MARGIN) / max(len(values), 1)
    out = _frame(title, "", ylabel)
    for i, (label, v) in enumerate(zip(labels, values)):
        x = MARGIN + i * slot + slot * 0.15
        w = slot * 0.7
        out.append(f'<rect x="{x:.2f}" y="{sy(v):.2f}" width="{w:.2f}" '
                   f'height="{sy(0.0) - sy(v):.2f}" fill="{COLORS[i % len(COLORS)]}"/>')
        if errors:
            cx = x + w / 2
            out.append(f'<line x1="{cx:.2f}" y1="{sy(v - errors[i]):.2f}" x2="{cx:.2f}" '
                       f'y2="{sy(v + errors[i]):.2f}" stroke="black"/>')
        out.append(f'<text x="{x + w / 2:.2f}" y="{HEIGHT - MARGIN + 14}" text-anchor="middle" '
                   f'font-size="11">{escape(str(label))}</text>')
        out.append(f'<text x="{x + w / 2:.2f}" y="{sy(v) - 4:.2f}" text-anchor="middle" font-size="10">{v:.3g}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
