"""Line plot of per-stage mean effective rank, written as plain SVG text."""

from __future__ import annotations

from xml.sax.saxutils import escape

from .iohelpers import atomic_write_text
from .spectra import parse_aggregate_csv

WIDTH, HEIGHT = 640, 400
LEFT, RIGHT, TOP, BOTTOM = 70, 160, 30, 60
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _f(x):
    return f"{x:.2f}"


def render_svg(series):
    """SVG for ``{variant: [(stage, mean), ...]}``; identical input gives identical text."""
    stages = []
    for points in series.values():
        for stage, _ in points:
            if stage not in stages:
                stages.append(stage)
    means = [m for points in series.values() for _, m in points]
    lo, hi = min(means), max(means)
    pad = 0.1 * (hi - lo) if hi > lo else max(0.5, 0.1 * abs(hi))
    lo, hi = lo - pad, hi + pad
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM

    def px(i):
        return LEFT + (pw * i / (len(stages) - 1) if len(stages) > 1 else pw / 2)

    def py(v):
        return TOP + ph * (hi - v) / (hi - lo)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
           f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
           f'<line x1="{LEFT}" y1="{TOP + ph}" x2="{LEFT + pw}" y2="{TOP + ph}" stroke="black"/>',
           f'<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{TOP + ph}" stroke="black"/>']
    for i, stage in enumerate(stages):
        x = _f(px(i))
        out.append(f'<line x1="{x}" y1="{TOP + ph}" x2="{x}" y2="{TOP + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{x}" y="{TOP + ph + 18}" text-anchor="middle">{escape(stage)}</text>')
    for k in range(5):
        v = lo + (hi - lo) * k / 4
        y = _f(py(v))
        out.append(f'<line x1="{LEFT - 5}" y1="{y}" x2="{LEFT}" y2="{y}" stroke="black"/>')
        out.append(f'<text x="{LEFT - 8}" y="{y}" text-anchor="end" dominant-baseline="middle">{v:.3f}</text>')
    out.append(f'<text x="{LEFT + pw / 2:.2f}" y="{HEIGHT - 15}" text-anchor="middle">stage</text>')
    out.append(f'<text x="18" y="{TOP + ph / 2:.2f}" text-anchor="middle" '
               f'transform="rotate(-90 18 {TOP + ph / 2:.2f})">mean effective rank</text>')
    for n, (name, points) in enumerate(series.items()):
        color = COLORS[n % len(COLORS)]
        coords = [(px(stages.index(s)), py(m)) for s, m in points]
        label = escape(name or "series")
        if len(coords) > 1:
            pts = " ".join(f"{_f(x)},{_f(y)}" for x, y in coords)
            out.append(f'<polyline class="series" data-variant="{label}" points="{pts}" '
                       f'fill="none" stroke="{color}" stroke-width="2"/>')
        for x, y in coords:
            out.append(f'<circle cx="{_f(x)}" cy="{_f(y)}" r="3.5" fill="{color}"/>')
        ly = TOP + 10 + 20 * n
        lx = WIDTH - RIGHT + 20
        out.append(f'<line class="legend" x1="{lx}" y1="{ly}" x2="{lx + 24}" y2="{ly}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 30}" y="{ly}" dominant-baseline="middle">{label}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_plot(csv_path, svg_path):
    """Read an aggregate CSV and write its per-stage mean plot; raises ``InputError``."""
    with open(csv_path) as fh:
        series = parse_aggregate_csv(fh.read())
    atomic_write_text(svg_path, render_svg(series))
    return svg_path
