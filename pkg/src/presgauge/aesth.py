"""Deterministic heuristic aesthetic scorer.

A geometry-and-style stand-in for a learned slide aesthetics model. Seven
components, each in ``[0, 1]`` with 1 meaning "no problem", are combined as
``1 + 9 * sum(w_i * c_i)`` and rounded to two decimals. Components below
their threshold produce feedback items naming the elements involved.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

from .checker import Feedback, FeedbackItem, Op
from .metrics import NoElements, layout_balance
from .planner import BODY, DEFAULT as PLANNER_DEFAULT, RAGGED_TOL, TITLE, PlannerConfig, majority_align, text_height
from .slide_model import DefectCategory, Element, Kind, SlideDoc, Weight, overlap_area

COMPONENTS = ("balance", "overlap", "overflow", "whitespace", "font_hierarchy", "legibility", "image_aspect")


def _default_weights() -> dict[str, float]:
    return {
        "balance": 0.25,
        "overlap": 0.2,
        "overflow": 0.15,
        "whitespace": 0.1,
        "font_hierarchy": 0.15,
        "legibility": 0.1,
        "image_aspect": 0.05,
    }


def _default_thresholds() -> dict[str, float]:
    return {
        "balance": 0.8,
        "overlap": 0.95,
        "overflow": 0.9,
        "whitespace": 0.5,
        "font_hierarchy": 0.9,
        "legibility": 0.9,
        "image_aspect": 0.9,
    }


@dataclass(frozen=True)
class ScorerConfig:
    weights: dict[str, float] = field(default_factory=_default_weights)
    thresholds: dict[str, float] = field(default_factory=_default_thresholds)
    # layout balance is mapped linearly from [balance_floor, balance_full] onto [0, 1]
    balance_floor: float = 0.7
    balance_full: float = 0.93
    overlap_gain: float = 20.0
    safe_margin: float = 0.02
    margin_gain: float = 6.0
    coverage_band: tuple[float, float] = (0.25, 0.65)
    hierarchy_targets: tuple[float, float] = (1.5, 1.25)
    min_font: float = 0.025
    max_line_spacing: float = 1.6
    max_letter_spacing: float = 0.1
    bold_body_legibility: float = 0.4
    aspect_tolerance: float = 0.25
    planner: PlannerConfig = PLANNER_DEFAULT

    def __post_init__(self) -> None:
        if set(self.weights) != set(COMPONENTS):
            raise ValueError(f"weights must cover exactly {COMPONENTS}")
        if abs(math.fsum(self.weights.values()) - 1) > 1e-9:
            raise ValueError("weights must sum to 1")
        if any(w < 0 for w in self.weights.values()):
            raise ValueError("weights must be non-negative")


@dataclass(frozen=True)
class ScoreBreakdown:
    components: dict[str, float]
    weights: dict[str, float]
    final: float
    layout_balance: float
    alignment: float
    coverage: float

    def to_dict(self) -> dict:
        return {
            "components": dict(self.components),
            "weights": dict(self.weights),
            "final": self.final,
            "layout_balance": self.layout_balance,
            "alignment": self.alignment,
            "coverage": self.coverage,
        }


def _clamp01(v: float) -> float:
    return min(1.0, max(0.0, v))


def _level(e: Element) -> int:
    return BODY if e.level is None else e.level


def _texts(slide: SlideDoc) -> list[Element]:
    return [e for e in slide.content if e.kind is Kind.TEXT]


def union_area(slide: SlideDoc) -> float:
    """Exact area covered by the content boxes (coordinate compression)."""
    boxes = [e.bbox for e in slide.content]
    if not boxes:
        return 0.0
    xs = sorted({b.x for b in boxes} | {b.right for b in boxes})
    total = 0.0
    for x0, x1 in zip(xs, xs[1:]):
        spans = sorted((b.y, b.bottom) for b in boxes if b.x < x1 and b.right > x0)
        covered, cur_lo, cur_hi = 0.0, None, None
        for lo, hi in spans:
            if cur_hi is None or lo > cur_hi:
                if cur_hi is not None:
                    covered += cur_hi - cur_lo
                cur_lo, cur_hi = lo, hi
            else:
                cur_hi = max(cur_hi, hi)
        if cur_hi is not None:
            covered += cur_hi - cur_lo
        total += covered * (x1 - x0)
    return total


def ragged_pairs(slide: SlideDoc) -> list[tuple[str, str]]:
    """Text elements whose left edges nearly, but not exactly, line up."""
    texts = _texts(slide)
    out = []
    for i, a in enumerate(texts):
        for b in texts[i + 1 :]:
            dx = abs(a.bbox.x - b.bbox.x)
            if 1e-6 < dx < RAGGED_TOL:
                out.append((a.id, b.id))
    return out


def misaligned_text(slide: SlideDoc) -> list[str]:
    """Text elements whose horizontal alignment differs from the slide's
    majority (ties count as left)."""
    texts = _texts(slide)
    if not texts:
        return []
    majority = majority_align(Counter(e.style.h_align for e in texts))
    return [e.id for e in texts if e.style.h_align is not majority]


def _alignment(slide: SlideDoc) -> tuple[float, list[str]]:
    texts = _texts(slide)
    if not texts:
        return 1.0, []
    ragged = {i for pair in ragged_pairs(slide) for i in pair}
    mixed = set(misaligned_text(slide))
    n = len(texts)
    value = _clamp01(1 - len(ragged) / n - len(mixed) / n)
    return value, sorted(ragged | mixed)


def _overflow(e: Element, slide: SlideDoc, cfg: ScorerConfig) -> float:
    b = e.bbox
    lo, hi = cfg.safe_margin, 1 - cfg.safe_margin
    ix = max(0.0, min(b.right, hi) - max(b.x, lo))
    iy = max(0.0, min(b.bottom, hi) - max(b.y, lo))
    outside = 1 - ix * iy / b.area if b.area > 0 else 1.0
    spill = 0.0
    if e.kind is Kind.TEXT and e.text:
        s = e.style
        need = text_height(len(e.text), b.w, slide.aspect_ratio, s.font_size, s.line_spacing, s.letter_spacing, cfg.planner.char_width)
        spill = max(0.0, need - b.h) / b.h
    return min(1.0, spill + cfg.margin_gain * outside)


def _pair_hierarchy(r: float, target: float) -> float:
    if r <= 1:
        return 0.0
    if r <= target:
        return (r - 1) / (target - 1)
    return _clamp01(1 - (r / target - 1) / 1.5)


def _hierarchy(slide: SlideDoc, cfg: ScorerConfig) -> float:
    groups: dict[int, list[Element]] = {}
    for e in _texts(slide):
        groups.setdefault(min(_level(e), 2), []).append(e)
    levels = sorted(groups)
    if not levels:
        return 1.0
    parts = []
    for upper, lower in zip(levels, levels[1:]):
        target = cfg.hierarchy_targets[0] if upper == TITLE else cfg.hierarchy_targets[1]
        if lower - upper > 1:
            target = cfg.hierarchy_targets[0] * cfg.hierarchy_targets[1]
        smallest_upper = min(e.style.font_size for e in groups[upper])
        largest_lower = max(e.style.font_size for e in groups[lower])
        parts.append(_pair_hierarchy(smallest_upper / largest_lower, target))
    # within a level, sizes should agree
    for group in groups.values():
        sizes = [e.style.font_size for e in group]
        parts.append(_clamp01(1 - 4 * (max(sizes) / min(sizes) - 1)))
    value = min(parts)
    # titles read bold, running text regular
    weight_ok = [
        (e.style.weight is Weight.BOLD) == (_level(e) == TITLE) for e in _texts(slide)
    ]
    value *= 1 - weight_ok.count(False) / len(weight_ok)
    return value


def _legibility(slide: SlideDoc, cfg: ScorerConfig) -> float:
    vals = []
    for e in _texts(slide):
        s = e.style
        size = _clamp01((s.font_size / cfg.min_font - 0.5) / 0.5)
        line = 1.0 if s.line_spacing <= cfg.max_line_spacing else _clamp01(1 - (s.line_spacing - cfg.max_line_spacing) / 0.5)
        letter = 1.0 if s.letter_spacing <= cfg.max_letter_spacing else _clamp01(1 - (s.letter_spacing - cfg.max_letter_spacing) / 0.1)
        # long runs of bold body text are tiring to read
        heavy = cfg.bold_body_legibility if s.weight is Weight.BOLD and _level(e) != TITLE else 1.0
        vals.append(min(size, line, letter, heavy))
    if not vals:
        return 1.0
    return min(vals)


def _image_aspect(e: Element, aspect: float, cfg: ScorerConfig) -> float:
    display = e.bbox.w * aspect / e.bbox.h
    distortion = abs(math.log(display / e.intrinsic_aspect))
    return _clamp01(1 - distortion / cfg.aspect_tolerance)


class HeuristicScorer:
    """Implements the scorer interface used by the refinement loop."""

    def __init__(self, cfg: ScorerConfig | None = None):
        self.cfg = cfg or ScorerConfig()

    # each component also returns the ids it would blame
    def _components(self, slide: SlideDoc) -> tuple[dict[str, float], dict[str, list[str]], dict[str, float]]:
        cfg = self.cfg
        content = slide.content
        ids = [e.id for e in content]
        comp: dict[str, float] = {}
        blame: dict[str, list[str]] = {}

        try:
            bal = layout_balance(slide).balance
        except NoElements:
            bal = 1.0
        align, align_ids = _alignment(slide)
        ramp = _clamp01((bal - cfg.balance_floor) / (cfg.balance_full - cfg.balance_floor))
        comp["balance"] = ramp * align
        blame["balance"] = ids if ramp < 1 else []
        blame["alignment"] = align_ids

        areas = sum(e.bbox.area for e in content)
        overlap, overlapping = 0.0, set()
        for i, a in enumerate(content):
            for b in content[i + 1 :]:
                o = overlap_area(a.bbox, b.bbox)
                if o > 0:
                    overlap += o
                    overlapping.update((a.id, b.id))
        comp["overlap"] = _clamp01(1 - cfg.overlap_gain * overlap / areas) if areas > 0 else 1.0
        blame["overlap"] = sorted(overlapping)

        spills = {e.id: _overflow(e, slide, cfg) for e in content}
        if spills:
            vals = list(spills.values())
            comp["overflow"] = _clamp01(1 - 0.5 * max(vals) - 0.5 * sum(vals) / len(vals))
        else:
            comp["overflow"] = 1.0
        blame["overflow"] = sorted(i for i, v in spills.items() if v > 0)

        coverage = union_area(slide)
        lo, hi = cfg.coverage_band
        if coverage < lo:
            comp["whitespace"] = _clamp01(1 - (lo - coverage) / lo)
        elif coverage > hi:
            comp["whitespace"] = _clamp01(1 - (coverage - hi) / (1 - hi))
        else:
            comp["whitespace"] = 1.0
        blame["whitespace"] = ids

        texts = [e.id for e in content if e.kind is Kind.TEXT]
        comp["font_hierarchy"] = _hierarchy(slide, cfg)
        blame["font_hierarchy"] = texts
        comp["legibility"] = _legibility(slide, cfg)
        blame["legibility"] = texts

        images = [e for e in content if e.kind is Kind.IMAGE and e.intrinsic_aspect]
        per_image = {e.id: _image_aspect(e, slide.aspect_ratio, cfg) for e in images}
        comp["image_aspect"] = min(per_image.values()) if per_image else 1.0
        blame["image_aspect"] = sorted(i for i, v in per_image.items() if v < 1 - 1e-9)

        extras = {"layout_balance": bal, "alignment": align, "coverage": coverage}
        return comp, blame, extras

    def breakdown(self, slide: SlideDoc) -> ScoreBreakdown:
        comp, _, extras = self._components(slide)
        w = self.cfg.weights
        total = math.fsum(w[k] * comp[k] for k in COMPONENTS)
        final = round(1 + 9 * total, 2)
        return ScoreBreakdown(comp, dict(w), final, extras["layout_balance"], extras["alignment"], extras["coverage"])

    def score(self, slide: SlideDoc) -> float:
        return self.breakdown(slide).final

    def feedback(self, slide: SlideDoc) -> Feedback:
        comp, blame, extras = self._components(slide)
        th = self.cfg.thresholds
        layout = DefectCategory.COMPOSITION_LAYOUT
        typo = DefectCategory.TYPOGRAPHY
        items: list[FeedbackItem] = []
        if comp["balance"] < th["balance"]:
            if blame["balance"]:
                items.append(FeedbackItem(layout, tuple(blame["balance"]), Op.RESPACE, f"layout balance {extras['layout_balance']:.3f}"))
            if blame["alignment"]:
                items.append(FeedbackItem(layout, tuple(blame["alignment"]), Op.ALIGN_TO_GRID, "ragged or mixed text alignment"))
        if comp["overlap"] < th["overlap"]:
            items.append(FeedbackItem(layout, tuple(blame["overlap"]), Op.RESCALE, "overlapping elements"))
        if comp["overflow"] < th["overflow"]:
            items.append(FeedbackItem(layout, tuple(blame["overflow"]), Op.RESPACE, "content spills out of its box or the safe area"))
        if comp["whitespace"] < th["whitespace"]:
            items.append(FeedbackItem(layout, tuple(blame["whitespace"]), Op.RESPACE, f"canvas coverage {extras['coverage']:.2f}"))
        if comp["font_hierarchy"] < th["font_hierarchy"]:
            items.append(FeedbackItem(typo, tuple(blame["font_hierarchy"]), Op.NORMALIZE_FONTS, "weak font hierarchy"))
        if comp["legibility"] < th["legibility"]:
            items.append(FeedbackItem(typo, tuple(blame["legibility"]), Op.NORMALIZE_FONTS, "hard-to-read text"))
        if comp["image_aspect"] < th["image_aspect"]:
            items.append(
                FeedbackItem(DefectCategory.IMAGERY_VISUALIZATIONS, tuple(blame["image_aspect"]), Op.FIX_ASPECT, "distorted image")
            )
        if not items:
            return Feedback.no_deficiency()
        return Feedback(tuple(items))
