"""SVG output, occupancy rasterization and raster-side layout balance.

The rasterizer marks a cell when its centre falls inside a non-background
element's box (half-open on the right and bottom edges). Text occupies its
whole box; no glyphs are drawn.
"""

from __future__ import annotations

import math
from xml.sax.saxutils import escape, quoteattr

import numpy as np
from scipy import ndimage

from .metrics import BalanceBreakdown, balance_from_masses
from .slide_model import Kind, SlideDoc, Weight

SVG_WIDTH = 960
MIN_RASTER = 64

_FILL = {Kind.TEXT: "#ffffff", Kind.IMAGE: "#d9e2ec", Kind.SHAPE: "#eeeeee"}
_STROKE = {Kind.TEXT: "#333333", Kind.IMAGE: "#486581", Kind.SHAPE: "#999999"}


class EmptyGrid(ValueError):
    pass


def _num(v: float) -> str:
    s = f"{v:.2f}".rstrip("0").rstrip(".")
    return "0" if s == "-0" else s


def to_svg(slide: SlideDoc, width: int = SVG_WIDTH) -> str:
    """Deterministic SVG 1.1 drawing of the slide, elements in z order.

    Text is drawn as an outlined block carrying its font size in pixels; a
    short excerpt of the text is embedded for orientation.
    """
    height = round(width / slide.aspect_ratio)
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect class="canvas" x="0" y="0" width="{width}" height="{height}" fill="#fafafa" stroke="#cccccc"/>',
    ]
    for e in slide.z_ordered():
        b = e.bbox
        x, y, w, h = b.x * width, b.y * height, b.w * width, b.h * height
        attrs = f'id={quoteattr(e.id)} x="{_num(x)}" y="{_num(y)}" width="{_num(w)}" height="{_num(h)}"'
        if e.background:
            out.append(f'<rect class="background" {attrs} fill="#f0f4f8"/>')
            continue
        if e.kind is Kind.TEXT:
            s = e.style
            font_px = s.font_size * height
            anchor = {"left": "start", "center": "middle", "right": "end"}[s.h_align.value]
            tx = {"start": x, "middle": x + w / 2, "end": x + w}[anchor]
            excerpt = (e.text or "")[:40]
            out.append(
                f'<g class="text" font-size="{_num(font_px)}" font-weight="{"bold" if s.weight is Weight.BOLD else "normal"}" '
                f'text-anchor="{anchor}">'
                f'<rect {attrs} fill="{_FILL[e.kind]}" stroke="{_STROKE[e.kind]}" stroke-dasharray="4 2"/>'
                f'<text x="{_num(tx)}" y="{_num(y + min(h, font_px))}">{escape(excerpt)}</text></g>'
            )
        else:
            out.append(f'<rect class="{e.kind.value}" {attrs} fill="{_FILL[e.kind]}" stroke="{_STROKE[e.kind]}"/>')
            if e.kind is Kind.IMAGE:
                out.append(
                    f'<path d="M{_num(x)} {_num(y)}L{_num(x + w)} {_num(y + h)}M{_num(x + w)} {_num(y)}L{_num(x)} {_num(y + h)}" '
                    f'stroke="{_STROKE[e.kind]}" stroke-width="0.5"/>'
                )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _span(lo: float, hi: float, n: int) -> tuple[int, int]:
    # cells whose centre (k + 0.5) / n lies in [lo, hi)
    start = max(0, math.ceil(lo * n - 0.5))
    stop = min(n, math.ceil(hi * n - 0.5))
    return start, max(start, stop)


def rasterize(slide: SlideDoc, width: int, height: int) -> np.ndarray:
    """Boolean ``(height, width)`` occupancy grid of the non-background boxes."""
    if width < MIN_RASTER or height < MIN_RASTER:
        raise ValueError(f"raster must be at least {MIN_RASTER}x{MIN_RASTER}")
    grid = np.zeros((height, width), dtype=bool)
    for e in slide.content:
        b = e.bbox
        c0, c1 = _span(b.x, b.right, width)
        r0, r1 = _span(b.y, b.bottom, height)
        grid[r0:r1, c0:c1] = True
    return grid


def label_components(grid: np.ndarray) -> tuple[np.ndarray, int]:
    """4-connected component labels (0 = empty) and the component count."""
    labels, n = ndimage.label(np.asarray(grid, dtype=bool))
    return labels, int(n)


def raster_balance(grid: np.ndarray) -> BalanceBreakdown:
    """Layout balance over the connected components of an occupancy grid.

    Each component weighs its cell count and sits at its cell centroid, both
    in canvas-normalized units.
    """
    grid = np.asarray(grid, dtype=bool)
    if grid.ndim != 2:
        raise ValueError("grid must be two-dimensional")
    labels, n = label_components(grid)
    if n == 0:
        raise EmptyGrid("grid has no occupied cells")
    height, width = grid.shape
    index = np.arange(1, n + 1)
    counts = ndimage.sum_labels(grid, labels, index)
    centers = ndimage.center_of_mass(grid, labels, index)
    cells = width * height
    return balance_from_masses(
        (float(c) / cells, (float(col) + 0.5) / width, (float(row) + 0.5) / height)
        for c, (row, col) in zip(counts, centers)
    )
