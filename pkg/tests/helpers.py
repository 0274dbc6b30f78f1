"""Shared builders and hypothesis strategies for the test-suite."""

from __future__ import annotations

import os
import random

from hypothesis import strategies as st

from presgauge.slide_model import Align, BBox, Element, Kind, SlideDoc, Style, Weight

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")
GRID = 1000


def fixture_path(name: str) -> str:
    return os.path.join(FIXTURES, name)


def box(x, y, w, h) -> BBox:
    return BBox(x, y, w, h)


def rect(eid: str, x, y, w, h, kind=Kind.SHAPE, **kw) -> Element:
    if kind is Kind.IMAGE and "intrinsic_aspect" not in kw:
        kw["intrinsic_aspect"] = 4 / 3
    return Element(eid, kind, BBox(x, y, w, h), **kw)


@st.composite
def bboxes(draw, min_side: int = 1) -> BBox:
    """Boxes on a 1/1000 lattice so quantization never pushes an edge past 1."""
    x = draw(st.integers(0, GRID - min_side))
    y = draw(st.integers(0, GRID - min_side))
    w = draw(st.integers(min_side, GRID - x))
    h = draw(st.integers(min_side, GRID - y))
    return BBox(x / GRID, y / GRID, w / GRID, h / GRID)


styles = st.builds(
    Style,
    font_size=st.integers(1, 500).map(lambda n: n / 1000),
    weight=st.sampled_from(Weight),
    h_align=st.sampled_from(Align),
    line_spacing=st.integers(100, 300).map(lambda n: n / 100),
    letter_spacing=st.integers(0, 50).map(lambda n: n / 100),
)

_text = st.text(st.characters(codec="utf-8", exclude_categories=("Cs",)), max_size=40)


@st.composite
def elements(draw, eid: str) -> Element:
    kind = draw(st.sampled_from(Kind))
    bbox = draw(bboxes())
    if kind is Kind.TEXT:
        return Element(eid, kind, bbox, z=draw(st.integers(-3, 3)), style=draw(styles), text=draw(_text),
                       level=draw(st.none() | st.integers(0, 2)), rank=draw(st.none() | st.integers(0, 20)))
    aspect = draw(st.integers(1, 4000).map(lambda n: n / 1000)) if kind is Kind.IMAGE else None
    return Element(eid, kind, bbox, z=draw(st.integers(-3, 3)), intrinsic_aspect=aspect,
                   background=draw(st.booleans()) if kind is Kind.SHAPE else False)


@st.composite
def slides(draw, max_elements: int = 6) -> SlideDoc:
    n = draw(st.integers(0, max_elements))
    elems = tuple(draw(elements(f"e{i}")) for i in range(n))
    aspect = draw(st.sampled_from((16 / 9, 4 / 3, 1.0, 3 / 4)))
    sid = draw(st.text(alphabet="abcdefghij0123456789", max_size=8))
    return SlideDoc(elems, aspect, sid)


def random_disjoint_slide(rng: random.Random, max_elements: int = 5, min_side: int = 20) -> SlideDoc:
    """A slide whose boxes sit in distinct cells of a 3x3 partition of the canvas."""
    cells = rng.sample(range(9), rng.randint(1, max_elements))
    elems = []
    for k, cell in enumerate(cells):
        lo_x, lo_y = cell % 3 * 333, cell // 3 * 333
        x = rng.randint(lo_x, lo_x + 333 - min_side)
        y = rng.randint(lo_y, lo_y + 333 - min_side)
        w = rng.randint(min_side, lo_x + 333 - x)
        h = rng.randint(min_side, lo_y + 333 - y)
        elems.append(Element(f"e{k}", Kind.SHAPE, BBox(x / GRID, y / GRID, w / GRID, h / GRID)))
    return SlideDoc(tuple(elems))
