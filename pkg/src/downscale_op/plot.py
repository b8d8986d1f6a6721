"""Minimal standalone SVG line plots of trend tables (log-scale y, +-1 std error bars)."""
from __future__ import annotations

import math
from pathlib import Path

WIDTH, HEIGHT = 640, 420
MARGIN = {"left": 80, "right": 150, "top": 30, "bottom": 60}
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")


def _f(v):
    return f"{v:.2f}"


def _y_range(rows):
    lows, highs = [], []
    for r in rows:
        lo = r.mean - r.std
        lows.append(lo if lo > 0 else r.mean)
        highs.append(r.mean + r.std)
    lo = min(v for v in lows if v > 0)
    hi = max(highs)
    if hi <= lo:
        hi = lo * 10.0
    return math.log10(lo) - 0.1, math.log10(hi) + 0.1


def render_svg(table, title="", xlabel="sweep value", ylabel="relative L2 error"):
    rows = list(table.rows)
    if not rows:
        raise ValueError("cannot plot an empty table")
    if any(r.mean <= 0 for r in rows):
        raise ValueError("log-scale plot needs positive mean errors")
    xs = sorted({r.sweep_value for r in rows})
    x0, x1 = min(xs), max(xs)
    y0, y1 = _y_range(rows)
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def px(x):
        if x1 == x0:
            return MARGIN["left"] + pw / 2
        return MARGIN["left"] + (x - x0) / (x1 - x0) * pw

    def py(y):
        return MARGIN["top"] + (y1 - math.log10(y)) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.0f}" y="20" text-anchor="middle" font-size="14">{_escape(title)}</text>',
    ]
    left, bottom = MARGIN["left"], HEIGHT - MARGIN["bottom"]
    out.append(f'<line x1="{left}" y1="{MARGIN["top"]}" x2="{left}" y2="{bottom}" stroke="black"/>')
    out.append(f'<line x1="{left}" y1="{bottom}" x2="{left + pw}" y2="{bottom}" stroke="black"/>')
    for x in xs:
        out.append(f'<text x="{_f(px(x))}" y="{bottom + 18}" text-anchor="middle" font-size="11">{x:g}</text>')
    for e in range(math.ceil(y0), math.floor(y1) + 1):
        y = py(10.0**e)
        out.append(f'<line x1="{left - 4}" y1="{_f(y)}" x2="{left}" y2="{_f(y)}" stroke="black"/>')
        out.append(f'<text x="{left - 8}" y="{_f(y + 4)}" text-anchor="end" font-size="11">1e{e}</text>')
    out.append(f'<text x="{left + pw / 2:.0f}" y="{HEIGHT - 15}" text-anchor="middle" font-size="12">'
               f'{_escape(xlabel)}</text>')
    out.append(f'<text x="18" y="{MARGIN["top"] + ph / 2:.0f}" text-anchor="middle" font-size="12" '
               f'transform="rotate(-90 18 {MARGIN["top"] + ph / 2:.0f})">{_escape(ylabel)}</text>')

    methods = []
    for r in rows:
        if r.method not in methods:
            methods.append(r.method)
    for i, method in enumerate(methods):
        color = COLORS[i % len(COLORS)]
        mrows = sorted((r for r in rows if r.method == method), key=lambda r: r.sweep_value)
        pts = [(px(r.sweep_value), py(r.mean)) for r in mrows]
        if len(pts) > 1:
            coords = " ".join(f"{_f(x)},{_f(y)}" for x, y in pts)
            out.append(f'<polyline class="trend" data-method="{_escape(method)}" points="{coords}" '
                       f'fill="none" stroke="{color}" stroke-width="2"/>')
        for r, (x, y) in zip(mrows, pts):
            lo = r.mean - r.std
            y_lo = py(lo) if lo > 0 else bottom
            y_hi = py(r.mean + r.std)
            if r.std > 0:
                out.append(f'<line x1="{_f(x)}" y1="{_f(min(y_lo, bottom))}" x2="{_f(x)}" y2="{_f(y_hi)}" '
                           f'stroke="{color}"/>')
            out.append(f'<circle class="marker" cx="{_f(x)}" cy="{_f(y)}" r="4" fill="{color}"/>')
        ly = MARGIN["top"] + 20 * (i + 1)
        lx = WIDTH - MARGIN["right"] + 15
        out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 20}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 26}" y="{ly + 4}" font-size="11">{_escape(method)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _escape(s):
    return str(s).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;").replace('"', "&quot;")


def emit_plot(table, path, **labels):
    """Write the SVG for ``table`` to ``path``; identical inputs give identical bytes."""
    path = Path(path)
    text = render_svg(table, **labels)
    try:
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write plot to {path}: {exc}") from exc
    return path
