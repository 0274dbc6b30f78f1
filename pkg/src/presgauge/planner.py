"""Deterministic layout planner, font hierarchy and the default refiner.

Layouts sit on a 24-column grid inside a one-column margin. The planner tries
a few canonical templates (a single stack, a text/visual two-column split at
several widths, a grid of cells), rejects any that overlap or spill, and keeps
the one with the best layout balance. Text boxes are sized from a simple
typesetting model: a glyph advances ``char_width * font_size`` and a line is
``font_size * line_spacing`` tall.
"""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

from .checker import Feedback, Op
from .metrics import balance_from_masses
from .slide_model import Align, BBox, Element, Kind, SlideDoc, Style, Weight, overlap_area, q

log = logging.getLogger(__name__)

TITLE, BODY, CAPTION = 0, 1, 2


@dataclass(frozen=True)
class PlannerConfig:
    grid_cols: int = 24
    margin: float = 1 / 24
    gap: float = 0.03
    body_font: float = 0.045
    min_body_font: float = 0.025
    title_ratio: float = 1.5
    caption_ratio: float = 0.8
    line_spacing: float = 1.2
    char_width: float = 0.5
    text_pad: float = 0.5
    min_image_h: float = 0.12
    max_image_h: float = 0.5
    font_step: float = 0.9
    balance_target: float = 0.7

    @property
    def grid(self) -> float:
        return 1.0 / self.grid_cols

    def level_ratio(self, level: int) -> float:
        return {TITLE: self.title_ratio, CAPTION: self.caption_ratio}.get(level, 1.0)


DEFAULT = PlannerConfig()


class Overconstrained(ValueError):
    pass


class UnknownElementId(KeyError):
    pass


def text_height(
    n_chars: int,
    box_w: float,
    aspect: float,
    font_size: float,
    line_spacing: float = 1.2,
    letter_spacing: float = 0.0,
    char_width: float = DEFAULT.char_width,
) -> float:
    """Height (fraction of canvas height) needed to set ``n_chars`` in a box
    ``box_w`` wide (fraction of canvas width)."""
    advance = char_width * font_size * (1 + letter_spacing)
    per_line = max(1, math.floor(box_w * aspect / advance + 1e-9))
    lines = max(1, math.ceil(n_chars / per_line))
    return lines * font_size * line_spacing


def text_fits(e: Element, aspect: float, cfg: PlannerConfig = DEFAULT) -> bool:
    s = e.style or Style()
    need = text_height(len(e.text), e.bbox.w, aspect, s.font_size, s.line_spacing, s.letter_spacing, cfg.char_width)
    return need <= e.bbox.h + 1e-9


# -- manifests -------------------------------------------------------------------


@dataclass(frozen=True)
class ManifestItem:
    kind: Kind
    rank: int
    text: str = ""
    text_len: int | None = None
    intrinsic_aspect: float | None = None
    level: int | None = None
    id: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", Kind(self.kind))
        if self.kind is Kind.TEXT:
            if self.text_len is not None and not self.text:
                object.__setattr__(self, "text", filler_text(self.text_len))
        elif not (self.intrinsic_aspect or 0) > 0:
            raise ValueError(f"{self.kind.value} item needs a positive intrinsic_aspect")

    @property
    def element_id(self) -> str:
        return self.id or f"e{self.rank}"


@dataclass(frozen=True)
class ContentManifest:
    items: tuple[ManifestItem, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "items", tuple(self.items))
        ranks = [i.rank for i in self.items]
        if len(set(ranks)) != len(ranks):
            raise ValueError("manifest ranks must be unique")

    @classmethod
    def from_dict(cls, obj: dict) -> ContentManifest:
        items = []
        for raw in obj.get("items", []):
            items.append(
                ManifestItem(
                    kind=Kind(raw["kind"]),
                    rank=int(raw["rank"]),
                    text=raw.get("text", ""),
                    text_len=raw.get("text_len"),
                    intrinsic_aspect=raw.get("intrinsic_aspect"),
                    level=raw.get("level"),
                    id=raw.get("id"),
                )
            )
        return cls(tuple(items))

    @classmethod
    def from_slide(cls, slide: SlideDoc) -> ContentManifest:
        """Recover the manifest a slide's content would be planned from."""
        items = []
        content = slide.content
        for order, e in enumerate(sorted(content, key=lambda e: (e.rank if e.rank is not None else 10_000, e.z))):
            aspect = e.intrinsic_aspect
            if e.kind is not Kind.TEXT and not aspect:
                aspect = e.bbox.w * slide.aspect_ratio / e.bbox.h
            items.append(
                ManifestItem(
                    kind=e.kind,
                    rank=e.rank if e.rank is not None else order,
                    text=e.text if e.kind is Kind.TEXT else "",
                    intrinsic_aspect=None if e.kind is Kind.TEXT else aspect,
                    level=e.level if e.kind is Kind.TEXT else None,
                    id=e.id,
                )
            )
        return cls(tuple(items))


_FILLER = "lorem ipsum dolor sit amet consectetur adipiscing elit sed do eiusmod tempor "


def filler_text(n: int) -> str:
    return (_FILLER * (n // len(_FILLER) + 1))[:n]


# -- planning ------------------------------------------------------------------------


@dataclass
class _Draft:
    template: str
    font: float
    boxes: dict[str, BBox] = field(default_factory=dict)


def _col(cfg: PlannerConfig, start: int, stop: int) -> tuple[float, float]:
    return start * cfg.grid, (stop - start) * cfg.grid


def _level(item: ManifestItem) -> int:
    return BODY if item.level is None else item.level


def _font_for(item: ManifestItem, body_font: float, cfg: PlannerConfig) -> float:
    return body_font * cfg.level_ratio(_level(item))


def _text_box_h(item: ManifestItem, w: float, font: float, aspect: float, cfg: PlannerConfig) -> float:
    return text_height(len(item.text), w, aspect, font, cfg.line_spacing, 0.0, cfg.char_width) + cfg.text_pad * font


def _stack(
    items: Sequence[ManifestItem],
    x: float,
    w: float,
    top: float,
    height: float,
    font: float,
    aspect: float,
    cfg: PlannerConfig,
) -> dict[str, BBox] | None:
    """Stack items top to bottom in one column, centred vertically."""
    if not items:
        return {}
    heights: dict[str, float] = {}
    for it in items:
        if it.kind is Kind.TEXT:
            heights[it.element_id] = _text_box_h(it, w, _font_for(it, font, cfg), aspect, cfg)
    visuals = [it for it in items if it.kind is not Kind.TEXT]
    fixed = sum(heights.values()) + cfg.gap * (len(items) - 1)
    spare = height - fixed
    if spare < -1e-9:
        return None
    widths: dict[str, float] = {}
    if visuals:
        share = min(spare / len(visuals), cfg.max_image_h)
        for it in visuals:
            h = share
            iw = it.intrinsic_aspect * h / aspect
            if iw > w:
                iw, h = w, w * aspect / it.intrinsic_aspect
            if h < cfg.min_image_h:
                return None
            heights[it.element_id], widths[it.element_id] = h, iw
    total = sum(heights.values()) + cfg.gap * (len(items) - 1)
    y = top + (height - total) / 2
    boxes = {}
    for it in items:
        h = heights[it.element_id]
        bw = widths.get(it.element_id, w)
        boxes[it.element_id] = BBox(x + (w - bw) / 2, y, bw, h)
        y += h + cfg.gap
    return boxes


def _grid(
    items: Sequence[ManifestItem], top: float, height: float, font: float, aspect: float, cfg: PlannerConfig
) -> dict[str, BBox] | None:
    n = len(items)
    if n < 2:
        return None
    cols = [(1, 11), (13, 23)] if n <= 4 else [(1, 7), (9, 15), (17, 23)]
    rows = math.ceil(n / len(cols))
    cell_h = (height - cfg.gap * (rows - 1)) / rows
    if cell_h <= 0:
        return None
    boxes = {}
    for i, it in enumerate(items):
        r, c = divmod(i, len(cols))
        x, w = _col(cfg, *cols[c])
        y = top + r * (cell_h + cfg.gap)
        if it.kind is Kind.TEXT:
            h = _text_box_h(it, w, _font_for(it, font, cfg), aspect, cfg)
            if h > cell_h + 1e-9:
                return None
            boxes[it.element_id] = BBox(x, y, w, h)
        else:
            h = min(cell_h, cfg.max_image_h)
            iw = it.intrinsic_aspect * h / aspect
            if iw > w:
                iw, h = w, w * aspect / it.intrinsic_aspect
            if h < cfg.min_image_h:
                return None
            boxes[it.element_id] = BBox(x + (w - iw) / 2, y, iw, h)
    return boxes


def _templates(
    body: Sequence[ManifestItem], top: float, height: float, font: float, aspect: float, cfg: PlannerConfig, mixed_first: bool
) -> Iterator[tuple[str, dict[str, BBox] | None]]:
    texts = [it for it in body if it.kind is Kind.TEXT]
    visuals = [it for it in body if it.kind is not Kind.TEXT]
    full_x, full_w = _col(cfg, 1, cfg.grid_cols - 1)
    if texts and visuals:
        for k in range(8, 15):
            lx, lw = _col(cfg, 1, 1 + k)
            rx, rw = _col(cfg, 2 + k, cfg.grid_cols - 1)
            left = _stack(texts, lx, lw, top, height, font, aspect, cfg)
            right = _stack(visuals, rx, rw, top, height, font, aspect, cfg)
            yield f"two_column_{k}", None if left is None or right is None else {**left, **right}
        yield "grid", _grid(body, top, height, font, aspect, cfg)
        if mixed_first:
            return
    yield "stack", _stack(body, full_x, full_w, top, height, font, aspect, cfg)
    if len(texts) >= 2 and not visuals:
        half = math.ceil(len(texts) / 2)
        lx, lw = _col(cfg, 1, 11)
        rx, rw = _col(cfg, 13, 23)
        left = _stack(texts[:half], lx, lw, top, height, font, aspect, cfg)
        right = _stack(texts[half:], rx, rw, top, height, font, aspect, cfg)
        yield "two_column", None if left is None or right is None else {**left, **right}
    if not (texts and visuals):
        yield "grid", _grid(body, top, height, font, aspect, cfg)


def _font_ladder(cfg: PlannerConfig) -> list[float]:
    fonts, f = [], cfg.body_font
    while f > cfg.min_body_font + 1e-12:
        fonts.append(f)
        f *= cfg.font_step
    fonts.append(cfg.min_body_font)
    return fonts


def _make_element(item: ManifestItem, box: BBox, z: int, body_font: float, cfg: PlannerConfig) -> Element:
    if item.kind is Kind.TEXT:
        level = _level(item)
        style = Style(
            font_size=_font_for(item, body_font, cfg),
            weight=Weight.BOLD if level == TITLE else Weight.REGULAR,
            h_align=Align.LEFT,
            line_spacing=cfg.line_spacing,
        )
        return Element(item.element_id, Kind.TEXT, box, z=z, style=style, text=item.text, level=level, rank=item.rank)
    return Element(item.element_id, item.kind, box, z=z, intrinsic_aspect=item.intrinsic_aspect, rank=item.rank)


def _balance_shift(boxes: dict[str, BBox], fixed: dict[str, BBox], lo: float, hi: float) -> dict[str, BBox]:
    """Shift the movable group vertically to pull the centre of mass onto
    the canvas midline, staying inside ``[lo, hi]``."""
    if not boxes:
        return boxes
    every = list(boxes.values()) + list(fixed.values())
    total = sum(b.area for b in every)
    com_y = sum(b.area * b.center[1] for b in every) / total
    movable = sum(b.area for b in boxes.values())
    dy = (0.5 - com_y) * total / movable
    top = min(b.y for b in boxes.values())
    bottom = max(b.bottom for b in boxes.values())
    dy = min(max(dy, lo - top), hi - bottom)
    return {k: BBox(b.x, b.y + dy, b.w, b.h) for k, b in boxes.items()}


def _centered(x: float, h: float) -> BBox:
    """A box centred on the canvas after quantization: both edges are
    snapped first so the widths come out symmetric."""
    x, y = q(x), q(0.5 - h / 2)
    return BBox(x, y, q(1 - 2 * x), q(1 - 2 * y))


def _valid(boxes: Iterable[BBox], cfg: PlannerConfig) -> bool:
    boxes = list(boxes)
    lo, hi = cfg.margin - 1e-6, 1 - cfg.margin + 1e-6
    for b in boxes:
        if b.x < lo or b.y < lo or b.right > hi or b.bottom > hi:
            return False
    for i, a in enumerate(boxes):
        for b in boxes[i + 1 :]:
            if overlap_area(a, b) > 0:
                return False
    return True


def plan_layout(
    manifest: ContentManifest, aspect_ratio: float = 16 / 9, cfg: PlannerConfig = DEFAULT, slide_id: str = ""
) -> SlideDoc:
    items = sorted(manifest.items, key=lambda i: i.rank)
    m = cfg.margin
    full_x, full_w = _col(cfg, 1, cfg.grid_cols - 1)
    if not items:
        font = cfg.body_font * cfg.title_ratio
        h = font * cfg.line_spacing + cfg.text_pad * font
        placeholder = ManifestItem(Kind.TEXT, 0, level=TITLE, id="title")
        return SlideDoc((_make_element(placeholder, _centered(full_x, h), 0, cfg.body_font, cfg),), aspect_ratio, slide_id)

    title = next((i for i in items if i.kind is Kind.TEXT and i.level == TITLE), None)
    body = [i for i in items if i is not title]
    mixed = any(i.kind is Kind.TEXT for i in body) and any(i.kind is not Kind.TEXT for i in body)

    for mixed_first in ((True, False) if mixed else (False,)):
        for font in _font_ladder(cfg):
            fixed: dict[str, BBox] = {}
            top = m
            if title is not None:
                th = _text_box_h(title, full_w, _font_for(title, font, cfg), aspect_ratio, cfg)
                if not body:
                    fixed[title.element_id] = _centered(full_x, th)
                else:
                    fixed[title.element_id] = BBox(full_x, m, full_w, th)
                top = m + th + cfg.gap
            height = 1 - m - top
            best: tuple[float, int, _Draft] | None = None
            if not body:
                if _valid(fixed.values(), cfg):
                    best = (1.0, 0, _Draft("title", font, fixed))
            elif height > 0:
                for order, (name, boxes) in enumerate(_templates(body, top, height, font, aspect_ratio, cfg, mixed_first)):
                    if boxes is None:
                        continue
                    boxes = _balance_shift(boxes, fixed, top, 1 - m)
                    every = {**fixed, **boxes}
                    if not _valid(every.values(), cfg):
                        continue
                    draft = _Draft(name, font, every)
                    bal = _draft_balance(draft)
                    if best is None or bal > best[0] + 1e-12:
                        best = (bal, order, draft)
            if best is not None:
                draft = best[2]
                if best[0] < cfg.balance_target:
                    log.info("layout balance %.3f below target %.3f", best[0], cfg.balance_target)
                elements = tuple(
                    _make_element(it, draft.boxes[it.element_id], z, draft.font, cfg) for z, it in enumerate(items)
                )
                return SlideDoc(elements, aspect_ratio, slide_id)
    raise Overconstrained(f"{len(items)} items do not fit at the minimum body font {cfg.min_body_font}")


def _draft_balance(draft: _Draft) -> float:
    return balance_from_masses((b.area, *b.center) for b in draft.boxes.values()).balance


# -- font hierarchy ------------------------------------------------------------------------


def _text_level(e: Element) -> int:
    return BODY if e.level is None else e.level


def _restyle(e: Element, body_font: float, cfg: PlannerConfig, h_align: Align | None = None) -> Element:
    level = _text_level(e)
    return e.with_style(
        font_size=body_font * cfg.level_ratio(level),
        weight=Weight.BOLD if level == TITLE else Weight.REGULAR,
        line_spacing=cfg.line_spacing,
        letter_spacing=0.0,
        **({} if h_align is None else {"h_align": h_align}),
    )


def assign_font_hierarchy(
    slide: SlideDoc, cfg: PlannerConfig = DEFAULT, ids: Iterable[str] | None = None
) -> SlideDoc:
    """Restyle text so sizes follow the title:body:caption ratios.

    The body size is the largest size not above the configured default at
    which every restyled text element still fits its box, floored at the
    minimum body size (a log warning marks the floor being hit).
    """
    wanted = None if ids is None else set(ids)
    texts = [e for e in slide.elements if e.kind is Kind.TEXT and (wanted is None or e.id in wanted)]
    if not texts:
        return slide
    font = cfg.body_font
    while True:
        restyled = {e.id: _restyle(e, font, cfg) for e in texts}
        if all(text_fits(e, slide.aspect_ratio, cfg) for e in restyled.values()):
            break
        if font <= cfg.min_body_font:
            log.warning("text does not fit even at the minimum body font %.3f", cfg.min_body_font)
            break
        font = max(cfg.min_body_font, font - 0.0005)
    return slide.replace_elements(restyled)


# -- refiner -----------------------------------------------------------------------------

_OP_ORDER = (Op.RESPACE, Op.RESCALE, Op.FIX_ASPECT, Op.ALIGN_TO_GRID, Op.NORMALIZE_FONTS)
RAGGED_TOL = 0.05


def _respace(slide: SlideDoc, ids: set[str], cfg: PlannerConfig) -> SlideDoc:
    try:
        planned = plan_layout(ContentManifest.from_slide(slide), slide.aspect_ratio, cfg)
    except Overconstrained:
        log.info("respace skipped: content does not fit the planner")
        return slide
    boxes = {e.id: e.bbox for e in planned.elements}
    return slide.replace_elements({e.id: e.with_bbox(boxes[e.id]) for e in slide.elements if e.id in ids})


# smallest side a trimmed box may keep
MIN_SIDE = 0.02


def _trim(a: BBox, b: BBox) -> BBox:
    """Shrink ``a`` on the side facing ``b`` so they no longer overlap,
    along whichever axis loses less area."""
    ac, bc = a.center, b.center
    if ac[0] < bc[0] or (ac[0] == bc[0] and a.x <= b.x):
        x0, x1 = a.x, min(a.right, b.x)
    else:
        x0, x1 = max(a.x, b.right), a.right
    if ac[1] < bc[1] or (ac[1] == bc[1] and a.y <= b.y):
        y0, y1 = a.y, min(a.bottom, b.y)
    else:
        y0, y1 = max(a.y, b.bottom), a.bottom
    by_x = (x1 - x0) * a.h if x1 - x0 > 1e-6 else -1.0
    by_y = (y1 - y0) * a.w if y1 - y0 > 1e-6 else -1.0
    if by_x < 0 and by_y < 0:
        # b covers a on the facing sides: keep a quarter-size box at a's corner
        return BBox(a.x, a.y, a.w / 4, a.h / 4)
    if by_x >= by_y:
        return BBox(x0, a.y, x1 - x0, a.h)
    return BBox(a.x, y0, a.w, y1 - y0)


def _fix_aspect_box(e: Element, aspect: float) -> BBox:
    b = e.bbox
    display = b.w * aspect / b.h
    if e.intrinsic_aspect is None or abs(display / e.intrinsic_aspect - 1) < 1e-6:
        return b
    if display > e.intrinsic_aspect:
        w = e.intrinsic_aspect * b.h / aspect
        return BBox(b.x + (b.w - w) / 2, b.y, w, b.h)
    h = b.w * aspect / e.intrinsic_aspect
    return BBox(b.x, b.y + (b.h - h) / 2, b.w, h)


def _rescale(slide: SlideDoc, ids: set[str]) -> SlideDoc:
    elems = {e.id: e for e in slide.elements}
    content = [e.id for e in slide.content]
    for _ in range(4 * len(content) + 4):
        changed = False
        for i, a_id in enumerate(content):
            for b_id in content[i + 1 :]:
                a, b = elems[a_id], elems[b_id]
                if overlap_area(a.bbox, b.bbox) <= 0:
                    continue
                # shrink the referenced box; prefer the one drawn on top
                target, other = (b, a) if (b.id in ids and (a.id not in ids or b.z >= a.z)) else (a, b)
                if target.id not in ids:
                    continue
                box = _trim(target.bbox, other.bbox)
                if min(box.w, box.h) < MIN_SIDE:
                    continue  # leave the overlap rather than collapse the box
                if target.kind is Kind.IMAGE:
                    box = _fix_aspect_box(target.with_bbox(box), slide.aspect_ratio)
                elems[target.id] = target.with_bbox(box)
                changed = True
        if not changed:
            break
    return slide.replace_elements(elems)


def _fix_aspect(slide: SlideDoc, ids: set[str]) -> SlideDoc:
    return slide.replace_elements(
        {e.id: e.with_bbox(_fix_aspect_box(e, slide.aspect_ratio)) for e in slide.elements if e.id in ids and e.kind is Kind.IMAGE}
    )


def majority_align(counts: Counter) -> Align:
    top = max(counts.values())
    if counts[Align.LEFT] == top:
        return Align.LEFT
    return min((a for a in counts if counts[a] == top), key=lambda a: a.value)


def _align(slide: SlideDoc, ids: set[str], cfg: PlannerConfig) -> SlideDoc:
    g = cfg.grid
    updated: dict[str, Element] = {}
    for e in slide.elements:
        if e.id in ids:
            x = round(e.bbox.x / g) * g
            if x + e.bbox.w > 1:
                x = math.floor((1 - e.bbox.w) / g) * g
            updated[e.id] = e.with_bbox(BBox.fitted(x, e.bbox.y, e.bbox.w, e.bbox.h))
    current = {e.id: updated.get(e.id, e) for e in slide.elements}
    texts = [e for e in current.values() if e.kind is Kind.TEXT and not e.background]
    # snap near-miss text edges onto the most common nearby edge
    for e in texts:
        if e.id not in ids:
            continue
        near = [o.bbox.x for o in texts if abs(o.bbox.x - e.bbox.x) < RAGGED_TOL]
        counts = Counter(q(x) for x in near)
        target = min(counts, key=lambda x: (-counts[x], x))
        if abs(target - e.bbox.x) > 1e-9 and target + e.bbox.w <= 1:
            updated[e.id] = e = e.with_bbox(BBox(target, e.bbox.y, e.bbox.w, e.bbox.h))
            current[e.id] = e
    # one horizontal alignment for all text on the slide, ties going to left
    counts = Counter(current[e.id].style.h_align for e in texts)
    if counts:
        majority = majority_align(counts)
        for e in texts:
            if e.id in ids and current[e.id].style.h_align is not majority:
                updated[e.id] = current[e.id].with_style(h_align=majority)
    return slide.replace_elements(updated)


def apply_feedback_ops(slide: SlideDoc, feedback: Feedback, cfg: PlannerConfig = DEFAULT) -> SlideDoc:
    """Apply every suggested operation to the elements it names.

    Operations run in a fixed order (respace, rescale, fix aspect, align,
    normalize fonts) regardless of the order of feedback items.
    """
    known = {e.id for e in slide.elements}
    targets: dict[Op, set[str]] = {}
    for item in feedback.items:
        missing = [i for i in item.element_ids if i not in known]
        if missing:
            raise UnknownElementId(f"feedback references unknown elements {missing}")
        if item.suggested_op is not None:
            targets.setdefault(item.suggested_op, set()).update(item.element_ids)
    out = slide
    for op in _OP_ORDER:
        ids = targets.get(op)
        if not ids:
            continue
        if op is Op.RESPACE:
            out = _respace(out, ids, cfg)
        elif op is Op.RESCALE:
            out = _rescale(out, ids)
        elif op is Op.FIX_ASPECT:
            out = _fix_aspect(out, ids)
        elif op is Op.ALIGN_TO_GRID:
            out = _align(out, ids, cfg)
        else:
            out = assign_font_hierarchy(out, cfg, ids)
    return out


def make_refiner(cfg: PlannerConfig = DEFAULT):
    def refine(slide: SlideDoc, feedback: Feedback) -> SlideDoc:
        return apply_feedback_ops(slide, feedback, cfg)

    return refine

