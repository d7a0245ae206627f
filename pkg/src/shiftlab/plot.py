"""Deterministic SVG learning-curve plots: median line plus 25-75% band."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from shiftlab.aggregate import BandPoint, SeriesKey, read_bands
from shiftlab.runner import write_atomic

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf")


@dataclass(frozen=True)
class PlotStyle:
    width: int = 640
    height: int = 400
    margin_left: int = 70
    margin_right: int = 170
    margin_top: int = 40
    margin_bottom: int = 50
    title: str = ""
    ticks: int = 5
    band_opacity: float = 0.2


def _num(x: float) -> str:
    return f"{x:.2f}"


def _tick_label(v: float) -> str:
    return f"{v:.3g}"


def axis_range(lo: float, hi: float, margin: float = 0.05) -> tuple[float, float]:
    """``[lo, hi]`` widened by ``margin`` of its span on each side."""
    if hi == lo:
        return lo - 0.5, hi + 0.5
    pad = (hi - lo) * margin
    return lo - pad, hi + pad


def series_label(key: SeriesKey) -> str:
    series, _env, algo, shift_b, metric = key
    return f"{series} {algo} b={float(shift_b):g} {metric}"


def render_svg(bands: dict[SeriesKey, list[BandPoint]], style: PlotStyle = PlotStyle()) -> str:
    if not bands or not any(bands.values()):
        raise ValueError("nothing to plot")
    keys = sorted(k for k, v in bands.items() if v)
    xs = [p.x for k in keys for p in bands[k]]
    x_lo, x_hi = min(xs), max(xs)
    if x_lo == x_hi:
        x_lo, x_hi = x_lo - 1, x_hi + 1
    y_lo, y_hi = axis_range(min(p.q25 for k in keys for p in bands[k]), max(p.q75 for k in keys for p in bands[k]))

    left, top = style.margin_left, style.margin_top
    pw = style.width - style.margin_left - style.margin_right
    ph = style.height - style.margin_top - style.margin_bottom

    def sx(x: float) -> float:
        return left + (x - x_lo) / (x_hi - x_lo) * pw

    def sy(y: float) -> float:
        return top + (y_hi - y) / (y_hi - y_lo) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{style.width}" height="{style.height}" '
        f'viewBox="0 0 {style.width} {style.height}" font-family="sans-serif" font-size="11">',
        f'<rect x="0" y="0" width="{style.width}" height="{style.height}" fill="white"/>',
    ]
    if style.title:
        out.append(f'<text x="{_num(left + pw / 2)}" y="20" text-anchor="middle" font-size="14">{escape(style.title)}</text>')
    # axes and ticks
    out.append(f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>')
    out.append(f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>')
    for v in np.linspace(x_lo, x_hi, style.ticks):
        x = sx(v)
        out.append(f'<line x1="{_num(x)}" y1="{top + ph}" x2="{_num(x)}" y2="{top + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{_num(x)}" y="{top + ph + 18}" text-anchor="middle">{_tick_label(v)}</text>')
    for v in np.linspace(y_lo, y_hi, style.ticks):
        y = sy(v)
        out.append(f'<line x1="{left - 5}" y1="{_num(y)}" x2="{left}" y2="{_num(y)}" stroke="black"/>')
        out.append(f'<text x="{left - 8}" y="{_num(y + 4)}" text-anchor="end">{_tick_label(v)}</text>')
    out.append(f'<text x="{_num(left + pw / 2)}" y="{style.height - 10}" text-anchor="middle">episode</text>')

    for i, key in enumerate(keys):
        color = PALETTE[i % len(PALETTE)]
        pts = sorted(bands[key], key=lambda p: p.x)
        upper = " ".join(f"{_num(sx(p.x))},{_num(sy(p.q75))}" for p in pts)
        lower = " ".join(f"{_num(sx(p.x))},{_num(sy(p.q25))}" for p in reversed(pts))
        out.append(f'<polygon points="{upper} {lower}" fill="{color}" fill-opacity="{style.band_opacity}" stroke="none"/>')
        d = " ".join(("M" if j == 0 else "L") + f"{_num(sx(p.x))},{_num(sy(p.median))}" for j, p in enumerate(pts))
        out.append(f'<path d="{d}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        ly = top + 12 + 16 * i
        lx = left + pw + 10
        out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 18}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 22}" y="{ly + 4}">{escape(series_label(key))}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def plot_files(paths, out, style: PlotStyle = PlotStyle(), metric: str | None = None) -> str:
    """Render aggregate CSVs (optionally one metric only) to an SVG file."""
    paths = list(paths)
    if not paths:
        raise ValueError("need at least one aggregate CSV")
    bands = read_bands(paths)
    if metric is not None:
        bands = {k: v for k, v in bands.items() if k[4] == metric}
    svg = render_svg(bands, style)
    write_atomic(Path(out), svg)
    return svg
