"""Minimal SVG line charts for curve tables."""

from __future__ import annotations

from xml.sax.saxutils import escape

_COLOURS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")


def svg_line_chart(curves: dict, markers=(), xlabel: str = "", ylabel: str = "",
                   width: int = 640, height: int = 400) -> str:
    """``curves`` maps a label to ``(xs, ys)``; ``markers`` are (x, y) dots."""
    pad = 50
    xs = [x for c in curves.values() for x in c[0]]
    ys = [y for c in curves.values() for y in c[1]] + [0.0]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    sx = (width - 2 * pad) / ((x1 - x0) or 1.0)
    sy = (height - 2 * pad) / ((y1 - y0) or 1.0)

    def px(x, y):
        return pad + (x - x0) * sx, height - pad - (y - y0) * sy

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
             f'<rect width="{width}" height="{height}" fill="white"/>']
    zx0, zy = px(x0, 0.0)
    zx1, _ = px(x1, 0.0)
    parts.append(f'<line x1="{zx0:.1f}" y1="{zy:.1f}" x2="{zx1:.1f}" y2="{zy:.1f}" stroke="#999"/>')
    for k, (label, (cx, cy)) in enumerate(curves.items()):
        colour = _COLOURS[k % len(_COLOURS)]
        pts = " ".join("%.2f,%.2f" % px(x, y) for x, y in zip(cx, cy))
        parts.append(f'<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{pts}"/>')
        parts.append(f'<text x="{width - pad - 120}" y="{pad + 16 * k}" fill="{colour}" '
                     f'font-size="12">{escape(label)}</text>')
    for x, y in markers:
        cx, cy = px(x, y)
        parts.append(f'<circle cx="{cx:.1f}" cy="{cy:.1f}" r="3.5" fill="black"/>')
    parts.append(f'<text x="{width / 2:.0f}" y="{height - 12}" font-size="12">{escape(xlabel)}</text>')
    parts.append(f'<text x="8" y="{pad - 16}" font-size="12">{escape(ylabel)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
