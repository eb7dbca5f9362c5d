"""Minimal log-log SVG charts: axes, decade ticks, points, fitted line, slope label."""
from __future__ import annotations

import math
from xml.sax.saxutils import escape

WIDTH, HEIGHT = 640, 440
MARGIN = dict(left=80, right=30, top=40, bottom=60)


def _ticks(lo: float, hi: float) -> list[float]:
    a, b = math.floor(math.log10(lo)), math.ceil(math.log10(hi))
    return [10.0**k for k in range(a, b + 1)]


def _fmt(v: float) -> str:
    return f"{v:g}" if 1e-3 <= v < 1e4 else f"1e{int(round(math.log10(v)))}"


def loglog_svg(x, y, title: str = "", xlabel: str = "N", ylabel: str = "error", yerr=None,
               fit: tuple[float, float] | None = None, guide_slope: float | None = None,
               annotation: str | None = None) -> str:
    """Return an SVG document for points (x, y) with positive coordinates.

    ``fit`` is (slope, intercept) of log y = intercept + slope log x.  A
    ``guide_slope`` line is anchored at the first point.
    """
    pts = [(float(a), float(b)) for a, b in zip(x, y) if a > 0 and b > 0]
    if not pts:
        raise ValueError("nothing to plot: no positive points")
    xs, ys = [p[0] for p in pts], [p[1] for p in pts]
    xlo, xhi = min(xs) / 1.5, max(xs) * 1.5
    ylo, yhi = min(ys) / 2.0, max(ys) * 2.0
    L, R, Tm, B = MARGIN["left"], WIDTH - MARGIN["right"], MARGIN["top"], HEIGHT - MARGIN["bottom"]

    def px(v):
        return L + (math.log(v) - math.log(xlo)) / (math.log(xhi) - math.log(xlo)) * (R - L)

    def py(v):
        return B - (math.log(v) - math.log(ylo)) / (math.log(yhi) - math.log(ylo)) * (B - Tm)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
           f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
           f'<rect x="{L}" y="{Tm}" width="{R - L}" height="{B - Tm}" fill="none" stroke="black"/>']
    for t in _ticks(xlo, xhi):
        if xlo <= t <= xhi:
            X = px(t)
            out.append(f'<line x1="{X:.2f}" y1="{B}" x2="{X:.2f}" y2="{Tm}" stroke="#ddd"/>')
            out.append(f'<text x="{X:.2f}" y="{B + 16}" text-anchor="middle">{_fmt(t)}</text>')
    for t in _ticks(ylo, yhi):
        if ylo <= t <= yhi:
            Y = py(t)
            out.append(f'<line x1="{L}" y1="{Y:.2f}" x2="{R}" y2="{Y:.2f}" stroke="#ddd"/>')
            out.append(f'<text x="{L - 6}" y="{Y + 4:.2f}" text-anchor="end">{_fmt(t)}</text>')
    for xv in xs:
        out.append(f'<text x="{px(xv):.2f}" y="{B + 30}" text-anchor="middle" fill="#666" '
                   f'font-size="10">{xv:g}</text>')

    def segment(slope, icpt, color, dash=""):
        x0, x1 = min(xs), max(xs)
        y0, y1 = math.exp(icpt + slope * math.log(x0)), math.exp(icpt + slope * math.log(x1))
        y0c, y1c = min(max(y0, ylo), yhi), min(max(y1, ylo), yhi)
        d = f' stroke-dasharray="{dash}"' if dash else ""
        return (f'<line x1="{px(x0):.2f}" y1="{py(y0c):.2f}" x2="{px(x1):.2f}" y2="{py(y1c):.2f}" '
                f'stroke="{color}" stroke-width="1.5"{d}/>')

    if guide_slope is not None:
        icpt = math.log(ys[0]) - guide_slope * math.log(xs[0])
        out.append(segment(guide_slope, icpt, "#999", "6,4"))
        out.append(f'<text x="{R - 6}" y="{Tm + 32}" text-anchor="end" fill="#777">'
                   f'reference slope {guide_slope:g}</text>')
    if fit is not None:
        out.append(segment(fit[0], fit[1], "#c0392b"))
        label = annotation or f"fitted slope {fit[0]:.4f}"
        out.append(f'<text x="{R - 6}" y="{Tm + 16}" text-anchor="end" fill="#c0392b">{escape(label)}</text>')
    if yerr is not None:
        for (xv, yv), e in zip(pts, yerr):
            if e > 0:
                lo, hi = max(yv - 2 * e, ylo), min(yv + 2 * e, yhi)
                out.append(f'<line x1="{px(xv):.2f}" y1="{py(lo):.2f}" x2="{px(xv):.2f}" y2="{py(hi):.2f}" '
                           f'stroke="#2c3e50"/>')
    for xv, yv in pts:
        out.append(f'<circle cx="{px(xv):.2f}" cy="{py(yv):.2f}" r="3.5" fill="#2c3e50"/>')
    out.append(f'<text x="{(L + R) / 2}" y="{HEIGHT - 12}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="18" y="{(Tm + B) / 2}" text-anchor="middle" '
               f'transform="rotate(-90 18 {(Tm + B) / 2})">{escape(ylabel)}</text>')
    if title:
        out.append(f'<text x="{(L + R) / 2}" y="24" text-anchor="middle" font-size="14">{escape(title)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
