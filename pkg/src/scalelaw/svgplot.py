"""Minimal log-log SVG plots of error rate against sample count."""
from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 640, 420
MARGIN = dict(left=70, right=20, top=30, bottom=50)


def _decades(lo, hi):
    return [10.0**k for k in range(math.floor(math.log10(lo)), math.ceil(math.log10(hi)) + 1)]


def loglog_svg(points=(), curve=None, band=None, title="", markers=()) -> str:
    """Render ``(n, 1 - v)`` on log-log axes.

    ``points`` are ``(n, v)`` pairs drawn as dots, ``curve`` is ``(n, v)``
    arrays drawn as a line and ``band`` is ``(n, v_lo, v_hi)`` drawn as a
    shaded region.  ``markers`` are vertical lines at given sample counts.
    Everything is clipped to error rates in ``[1e-6, 1]``.
    """
    xs, ys = [], []
    pts = [(float(n), 1.0 - float(v)) for n, v in points]
    xs += [p[0] for p in pts]
    ys += [p[1] for p in pts]
    if curve is not None:
        xs += list(np.asarray(curve[0], float))
        ys += list(1.0 - np.asarray(curve[1], float))
    if band is not None:
        xs += list(np.asarray(band[0], float))
        ys += list(1.0 - np.asarray(band[1], float)) + list(1.0 - np.asarray(band[2], float))
    xs += [float(m) for m in markers]
    ys = [min(max(y, 1e-6), 1.0) for y in ys]
    if not xs:
        raise ValueError("nothing to plot")
    x0, x1 = math.log10(min(xs)), math.log10(max(xs))
    y0, y1 = math.log10(min(ys)), math.log10(max(ys))
    if x1 - x0 < 1e-9:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 - y0 < 1e-9:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def px(n):
        return MARGIN["left"] + (math.log10(n) - x0) / (x1 - x0) * pw

    def py(e):
        e = min(max(e, 1e-6), 1.0)
        return MARGIN["top"] + (y1 - math.log10(e)) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
           f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>']
    if title:
        out.append(f'<text x="{WIDTH / 2:.1f}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>')
    # axes and decade ticks
    out.append(f'<rect x="{MARGIN["left"]}" y="{MARGIN["top"]}" width="{pw}" height="{ph}" '
               'fill="none" stroke="black"/>')
    for t in _decades(10**x0, 10**x1):
        if x0 - 1e-9 <= math.log10(t) <= x1 + 1e-9:
            x = px(t)
            out.append(f'<line x1="{x:.2f}" y1="{MARGIN["top"] + ph}" x2="{x:.2f}" y2="{MARGIN["top"] + ph + 5}" stroke="black"/>')
            out.append(f'<text x="{x:.2f}" y="{MARGIN["top"] + ph + 18}" text-anchor="middle">{t:g}</text>')
    for t in _decades(10**y0, 10**y1):
        if y0 - 1e-9 <= math.log10(t) <= y1 + 1e-9:
            y = py(t)
            out.append(f'<line x1="{MARGIN["left"] - 5}" y1="{y:.2f}" x2="{MARGIN["left"]}" y2="{y:.2f}" stroke="black"/>')
            out.append(f'<text x="{MARGIN["left"] - 8}" y="{y + 4:.2f}" text-anchor="end">{t:g}</text>')
    out.append(f'<text x="{MARGIN["left"] + pw / 2:.1f}" y="{HEIGHT - 10}" text-anchor="middle">samples n</text>')
    out.append(f'<text x="16" y="{MARGIN["top"] + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {MARGIN["top"] + ph / 2:.1f})">error 1 - v</text>')
    if band is not None:
        n, lo, hi = (np.asarray(a, float) for a in band)
        upper = [f"{px(a):.2f},{py(1.0 - b):.2f}" for a, b in zip(n, lo)]
        lower = [f"{px(a):.2f},{py(1.0 - b):.2f}" for a, b in zip(n[::-1], hi[::-1])]
        out.append(f'<polygon points="{" ".join(upper + lower)}" fill="steelblue" fill-opacity="0.25" stroke="none"/>')
    if curve is not None:
        path = " ".join(f"{px(a):.2f},{py(1.0 - b):.2f}" for a, b in zip(*curve))
        out.append(f'<polyline points="{path}" fill="none" stroke="steelblue" stroke-width="2"/>')
    for m in markers:
        x = px(float(m))
        out.append(f'<line x1="{x:.2f}" y1="{MARGIN["top"]}" x2="{x:.2f}" y2="{MARGIN["top"] + ph}" '
                   'stroke="gray" stroke-dasharray="4 3"/>')
    for n, e in pts:
        out.append(f'<circle cx="{px(n):.2f}" cy="{py(e):.2f}" r="3.5" fill="black"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
