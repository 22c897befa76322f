"""Minimal static SVG 1.1 charts: stacked time-series panels and scatter plots."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from xml.sax.saxutils import escape

COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def nice_ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    """Round tick positions covering ``[lo, hi]``."""
    if not (math.isfinite(lo) and math.isfinite(hi)):
        return []
    if hi <= lo:
        hi = lo + (abs(lo) if lo else 1.0)
    raw = (hi - lo) / max(count, 1)
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step - 1e-9) * step
    ticks = []
    v = start
    while v <= hi + 1e-9 * step:
        ticks.append(round(v, 12))
        v += step
    return ticks


def _fmt(v: float) -> str:
    return f"{v:.4g}"


@dataclass
class Series:
    label: str
    x: list
    y: list
    style: str = "line"  # "line" | "points" | "dashed"


@dataclass
class Panel:
    title: str
    xlabel: str
    ylabel: str
    series: list = field(default_factory=list)


class _Frame:
    def __init__(self, x0, y0, w, h, xlim, ylim):
        self.x0, self.y0, self.w, self.h = x0, y0, w, h
        self.xlim, self.ylim = xlim, ylim

    def sx(self, v):
        lo, hi = self.xlim
        return self.x0 + (v - lo) / (hi - lo) * self.w

    def sy(self, v):
        lo, hi = self.ylim
        return self.y0 + self.h - (v - lo) / (hi - lo) * self.h


def _limits(values, pad=0.05):
    vals = [v for v in values if math.isfinite(v)]
    if not vals:
        return 0.0, 1.0
    lo, hi = min(vals), max(vals)
    if hi == lo:
        lo, hi = lo - 0.5 * (abs(lo) or 1.0), hi + 0.5 * (abs(hi) or 1.0)
    span = hi - lo
    return lo - pad * span, hi + pad * span


def _panel_svg(panel: Panel, x0, y0, w, h) -> list[str]:
    xs = [v for s in panel.series for v in s.x]
    ys = [v for s in panel.series for v in s.y]
    frame = _Frame(x0, y0, w, h, _limits(xs, 0.0), _limits(ys))
    out = [f'<rect x="{x0}" y="{y0}" width="{w}" height="{h}" fill="none" stroke="#333"/>']
    for t in nice_ticks(*frame.xlim):
        px = frame.sx(t)
        out.append(f'<line x1="{px:.2f}" y1="{y0 + h}" x2="{px:.2f}" y2="{y0 + h + 5}" stroke="#333"/>')
        out.append(f'<text x="{px:.2f}" y="{y0 + h + 18}" text-anchor="middle" font-size="11">{_fmt(t)}</text>')
    for t in nice_ticks(*frame.ylim):
        py = frame.sy(t)
        out.append(f'<line x1="{x0 - 5}" y1="{py:.2f}" x2="{x0 + w}" y2="{py:.2f}" stroke="#ddd"/>')
        out.append(f'<text x="{x0 - 8}" y="{py + 4:.2f}" text-anchor="end" font-size="11">{_fmt(t)}</text>')
    out.append(f'<text x="{x0 + w / 2}" y="{y0 - 8}" text-anchor="middle" font-size="13">{escape(panel.title)}</text>')
    out.append(f'<text x="{x0 + w / 2}" y="{y0 + h + 36}" text-anchor="middle" font-size="12">{escape(panel.xlabel)}</text>')
    out.append(
        f'<text x="{x0 - 48}" y="{y0 + h / 2}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 {x0 - 48} {y0 + h / 2})">{escape(panel.ylabel)}</text>'
    )
    for i, s in enumerate(panel.series):
        color = COLORS[i % len(COLORS)]
        pts = [(frame.sx(a), frame.sy(b)) for a, b in zip(s.x, s.y) if math.isfinite(a) and math.isfinite(b)]
        if s.style == "points":
            out += [f'<circle cx="{px:.2f}" cy="{py:.2f}" r="4" fill="{color}"/>' for px, py in pts]
        elif pts:
            dash = ' stroke-dasharray="6,4"' if s.style == "dashed" else ""
            coords = " ".join(f"{px:.2f},{py:.2f}" for px, py in pts)
            out.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>')
        ly = y0 + 14 + 16 * i
        out.append(f'<line x1="{x0 + w - 150}" y1="{ly}" x2="{x0 + w - 130}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{x0 + w - 125}" y="{ly + 4}" font-size="11">{escape(s.label)}</text>')
    return out


def render(panels: list[Panel], width: int = 720, panel_height: int = 240) -> str:
    """Stack ``panels`` vertically into one SVG document."""
    left, right, top, gap = 70, 20, 30, 70
    height = top + len(panels) * (panel_height + gap)
    body = []
    for i, p in enumerate(panels):
        body += _panel_svg(p, left, top + i * (panel_height + gap), width - left - right, panel_height)
    return (
        '<?xml version="1.0" encoding="UTF-8"?>\n'
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif">\n'
        f'<rect width="{width}" height="{height}" fill="white"/>\n'
        + "\n".join(body)
        + "\n</svg>\n"
    )
