from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import fixture_path, rect, slides
from presgauge.metrics import layout_balance
from presgauge.render import EmptyGrid, label_components, raster_balance, rasterize, to_svg
from presgauge.slide_model import BBox, Element, Kind, SlideDoc, read_deck

CLEAN = read_deck(fixture_path("clean_slide.json"))[0]


def brute_cells(b: BBox, width: int, height: int) -> int:
    """Cells whose centre falls inside the half-open box."""
    cols = sum(b.x <= (c + 0.5) / width < b.right for c in range(width))
    rows = sum(b.y <= (r + 0.5) / height < b.bottom for r in range(height))
    return cols * rows


def test_clean_fixture_matches_golden_svg():
    with open(fixture_path("clean_slide.svg"), encoding="utf-8") as fh:
        assert to_svg(CLEAN) == fh.read()


def test_empty_slide_is_canvas_only():
    svg = to_svg(SlideDoc())
    assert svg.count("<rect") == 1 and 'class="canvas"' in svg
    assert "<text" not in svg


def test_svg_is_deterministic_and_escapes_text():
    s = SlideDoc((Element("t", Kind.TEXT, BBox(0.1, 0.1, 0.5, 0.2), text="A < B & C"),))
    assert to_svg(s) == to_svg(s)
    assert "A &lt; B &amp; C" in to_svg(s)


def test_quarter_area_box_sets_ten_thousand_cells():
    grid = rasterize(SlideDoc((rect("a", 0.25, 0.25, 0.5, 0.5),)), 200, 200)
    assert grid.dtype == bool and grid.shape == (200, 200)
    assert abs(int(grid.sum()) - 10000) <= 200
    assert int(grid.sum()) == brute_cells(BBox(0.25, 0.25, 0.5, 0.5), 200, 200)


def test_empty_and_full_canvas():
    assert not rasterize(SlideDoc(), 64, 64).any()
    assert rasterize(SlideDoc((rect("a", 0, 0, 1, 1),)), 64, 80).all()
    with pytest.raises(ValueError):
        rasterize(SlideDoc(), 32, 64)
    with pytest.raises(EmptyGrid):
        raster_balance(np.zeros((64, 64), bool))


def test_two_disjoint_rects_make_two_components():
    s = SlideDoc((rect("a", 0.1, 0.1, 0.2, 0.3), rect("b", 0.6, 0.5, 0.3, 0.2)))
    grid = rasterize(s, 256, 256)
    _, n = label_components(grid)
    assert n == 2
    assert abs(raster_balance(grid).balance - layout_balance(s).balance) <= 2 / 256


def test_single_rect_matches_bbox_balance():
    s = SlideDoc((rect("a", 0.05, 0.6, 0.3, 0.3),))
    grid = rasterize(s, 300, 200)
    assert raster_balance(grid).balance == pytest.approx(layout_balance(s).balance, abs=2 / 200)


def test_overlapping_rects_merge():
    s = SlideDoc((rect("a", 0.1, 0.1, 0.4, 0.4), rect("b", 0.3, 0.3, 0.4, 0.4, z=1)))
    _, n = label_components(rasterize(s, 128, 128))
    assert n == 1


@st.composite
def grid_aligned_disjoint(draw, n: int = 125):
    """Disjoint boxes whose edges sit on cell boundaries of an ``n`` grid
    (125 keeps every edge exact at six decimals)."""
    cells = draw(st.lists(st.integers(0, 8), min_size=1, max_size=5, unique=True))
    third = n // 3
    out = []
    for i, c in enumerate(cells):
        lx, ly = (c % 3) * third, (c // 3) * third
        x = draw(st.integers(lx, lx + third - 2))
        y = draw(st.integers(ly, ly + third - 2))
        w = draw(st.integers(1, lx + third - x))
        h = draw(st.integers(1, ly + third - y))
        out.append(rect(f"e{i}", x / n, y / n, w / n, h / n))
    return SlideDoc(tuple(out))


@settings(max_examples=80)
@given(grid_aligned_disjoint())
def test_grid_aligned_slides_match_bbox_balance_exactly(slide):
    # with every edge on a cell boundary the cell counts are the exact areas
    assert raster_balance(rasterize(slide, 125, 125)).balance == pytest.approx(layout_balance(slide).balance, abs=1e-9)


def test_sub_cell_geometry_is_invisible_to_the_grid():
    # the corner box spans 9.6 or 10.4 cells: same grid, different exact balance
    def corner_pair(side):
        return SlideDoc((rect("a", 0.0, 0.0, side, side), rect("b", 0.98, 0.98, 0.02, 0.02)))

    small, large = corner_pair(9.6 / 512), corner_pair(10.4 / 512)
    assert (rasterize(small, 512, 512) == rasterize(large, 512, 512)).all()
    gap = layout_balance(large).balance - layout_balance(small).balance
    assert gap > 4 / 512  # no grid-only estimator can be within 2/512 of both


@given(st.integers(1, 900), st.integers(1, 900), st.integers(0, 999), st.integers(0, 999), st.integers(64, 600))
def test_single_box_error_is_within_one_cell(w, h, x, y, n):
    # the sampled centroid is off by at most half a cell per axis, so d moves by at most
    # sqrt(2)/2 cells and the balance by at most one cell width
    w, h = min(w, 1000 - x), min(h, 1000 - y)
    s = SlideDoc((rect("a", x / 1000, y / 1000, w / 1000, h / 1000),))
    grid = rasterize(s, n, n)
    if grid.any():
        assert abs(raster_balance(grid).balance - layout_balance(s).balance) <= 1 / n + 1e-12


@given(slides(max_elements=5), st.integers(64, 160), st.integers(64, 160))
def test_cell_counts_match_brute_force(slide, w, h):
    grid = rasterize(slide, w, h)
    for e in slide.content:
        alone = rasterize(SlideDoc((e,)), w, h)
        assert int(alone.sum()) == brute_cells(e.bbox, w, h)
        assert not (alone & ~grid).any()


@given(slides(max_elements=5), st.integers(0, 4))
def test_adding_an_element_never_clears_a_cell(slide, k):
    content = slide.content
    fewer = SlideDoc(content[: min(k, len(content))])
    assert not (rasterize(fewer, 96, 96) & ~rasterize(slide, 96, 96)).any()
