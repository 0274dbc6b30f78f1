"""Seeded slide perturbations, quality tiers and preference pairs.

Magnitudes in ``[0, 1]`` map onto family-specific physical ranges (see
``RANGES``); magnitude 0 is always the identity. Every perturbed box is
clamped back into the canvas, so outputs stay valid.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .checker import Feedback, FeedbackItem, Op
from .planner import BODY, TITLE, ContentManifest, ManifestItem, PlannerConfig, apply_feedback_ops, plan_layout
from .planner import DEFAULT as PLANNER_DEFAULT
from .slide_model import (
    Align,
    BBox,
    DefectCategory,
    Element,
    Kind,
    SlideDoc,
    Weight,
    to_dict,
    validate,
)


class Family(str, Enum):
    WITHIN_OBJECT_ALIGNMENT = "within_object_alignment"
    BETWEEN_OBJECT_LAYOUT = "between_object_layout"
    TYPOGRAPHY = "typography"
    IMAGERY = "imagery"


SUBTYPES: dict[Family, tuple[str | None, ...]] = {
    Family.WITHIN_OBJECT_ALIGNMENT: (None,),
    Family.BETWEEN_OBJECT_LAYOUT: ("scale", "reposition", "spacing"),
    Family.TYPOGRAPHY: ("size", "weight", "spacing"),
    Family.IMAGERY: ("aspect_distort", "downscale"),
}

CATEGORY: dict[Family, DefectCategory] = {
    Family.WITHIN_OBJECT_ALIGNMENT: DefectCategory.COMPOSITION_LAYOUT,
    Family.BETWEEN_OBJECT_LAYOUT: DefectCategory.COMPOSITION_LAYOUT,
    Family.TYPOGRAPHY: DefectCategory.TYPOGRAPHY,
    Family.IMAGERY: DefectCategory.IMAGERY_VISUALIZATIONS,
}

# physical effect at magnitude 1
RANGES = {
    "alignment_shift": (0.012, 0.03),  # base + magnitude * span of left-edge shift
    "scale": 1.2,  # element grows by up to 120%
    "reposition": 0.6,  # centre offset toward a corner
    "spacing": 0.6,  # positions contract toward a corner by up to 60%
    "font_size": 0.7,  # font scale of +/-70%
    "line_spacing": 1.6,  # added to line spacing (capped at 3)
    "letter_spacing": 0.35,
    "aspect_distort": 1.0,  # one side stretched by up to 100%
    "downscale": 0.8,  # image shrinks by up to 80%
}


class NotApplicable(ValueError):
    pass


@dataclass(frozen=True)
class PerturbationSpec:
    family: Family
    sub: str | None = None
    magnitude: float = 0.5
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "family", Family(self.family))
        if self.sub not in SUBTYPES[self.family]:
            raise ValueError(f"{self.family.value} has no subtype {self.sub!r}")
        if not 0 <= self.magnitude <= 1:
            raise ValueError("magnitude must lie in [0, 1]")

    def to_dict(self) -> dict:
        return {"family": self.family.value, "sub": self.sub, "magnitude": self.magnitude, "seed": self.seed}


def _pick(rng: random.Random, elems: Sequence[Element], family: Family) -> Element:
    if not elems:
        raise NotApplicable(f"{family.value}: no element of the required kind")
    return elems[rng.randrange(len(elems))]


def _corner(rng: random.Random) -> tuple[float, float]:
    return rng.choice([(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)])


def _toward(b: BBox, target: tuple[float, float], dist: float) -> BBox:
    cx, cy = b.center
    dx, dy = target[0] - cx, target[1] - cy
    norm = math.hypot(dx, dy)
    if norm == 0:
        return b
    step = min(dist, norm)
    return b.translated(dx / norm * step, dy / norm * step)


def apply_perturbation(slide: SlideDoc, spec: PerturbationSpec) -> tuple[SlideDoc, frozenset[DefectCategory]]:
    """Apply one perturbation; returns the new slide and its defect labels."""
    rng = random.Random(spec.seed)
    content = slide.content
    texts = [e for e in content if e.kind is Kind.TEXT]
    images = [e for e in content if e.kind is Kind.IMAGE]
    fam, sub, mag = spec.family, spec.sub, spec.magnitude
    if fam is Family.TYPOGRAPHY or fam is Family.WITHIN_OBJECT_ALIGNMENT:
        pool = texts
    elif fam is Family.IMAGERY:
        pool = images
    else:
        pool = content
    if not pool:
        raise NotApplicable(f"{fam.value}: slide has no suitable element")
    if mag == 0:
        return slide, frozenset()

    updated: dict[str, Element] = {}
    if fam is Family.WITHIN_OBJECT_ALIGNMENT:
        e = _pick(rng, texts, fam)
        base, span = RANGES["alignment_shift"]
        shift = base + span * mag
        if e.bbox.x + shift + e.bbox.w > 1 or rng.random() < 0.5 and e.bbox.x - shift >= 0:
            shift = -shift
        align = rng.choice([a for a in Align if a is not e.style.h_align])
        updated[e.id] = e.with_bbox(e.bbox.translated(shift, 0)).with_style(h_align=align)

    elif fam is Family.BETWEEN_OBJECT_LAYOUT:
        if sub == "scale":
            e = _pick(rng, content, fam)
            f = 1 + RANGES["scale"] * mag
            updated[e.id] = e.with_bbox(e.bbox.scaled(f))
        elif sub == "reposition":
            e = _pick(rng, sorted(content, key=lambda e: -e.bbox.area)[: max(1, len(content) // 2)], fam)
            updated[e.id] = e.with_bbox(_toward(e.bbox, _corner(rng), RANGES["reposition"] * mag))
        else:
            ax, ay = _corner(rng)
            f = 1 - RANGES["spacing"] * mag
            for e in content:
                cx, cy = e.bbox.center
                nx, ny = ax + (cx - ax) * f, ay + (cy - ay) * f
                updated[e.id] = e.with_bbox(e.bbox.translated(nx - cx, ny - cy))

    elif fam is Family.TYPOGRAPHY:
        if sub == "size":
            levels = sorted({BODY if e.level is None else e.level for e in texts})
            level = rng.choice(levels)
            grow = rng.random() < 0.5 if level != TITLE else False
            f = 1 + RANGES["font_size"] * mag if grow else 1 - RANGES["font_size"] * mag
            for e in texts:
                if (BODY if e.level is None else e.level) == level:
                    updated[e.id] = e.with_style(font_size=min(0.5, e.style.font_size * f))
        elif sub == "weight":
            for e in texts:
                is_title = e.level == TITLE
                w = Weight.REGULAR if is_title else Weight.BOLD
                if e.style.weight is not w and (is_title or rng.random() < 0.3 + 0.7 * mag):
                    updated[e.id] = e.with_style(weight=w)
            if not updated:
                e = _pick(rng, texts, fam)
                flip = Weight.REGULAR if e.style.weight is Weight.BOLD else Weight.BOLD
                updated[e.id] = e.with_style(weight=flip)
        else:
            level_of = lambda e: BODY if e.level is None else e.level  # noqa: E731
            bodies = [e for e in texts if level_of(e) != TITLE] or texts
            for e in bodies:
                updated[e.id] = e.with_style(
                    line_spacing=min(3.0, e.style.line_spacing + RANGES["line_spacing"] * mag),
                    letter_spacing=e.style.letter_spacing + RANGES["letter_spacing"] * mag,
                )

    else:
        e = _pick(rng, images, fam)
        if sub == "aspect_distort":
            f = 1 + RANGES["aspect_distort"] * mag
            box = e.bbox.scaled(f, 1.0) if rng.random() < 0.5 else e.bbox.scaled(1.0, f)
            updated[e.id] = e.with_bbox(box)
        else:
            # shrink toward a corner of the original box so the mass shifts too
            f = 1 - RANGES["downscale"] * mag
            ax, ay = _corner(rng)
            b = e.bbox
            box = BBox(b.x + ax * b.w * (1 - f), b.y + ay * b.h * (1 - f), b.w * f, b.h * f)
            updated[e.id] = e.with_bbox(box)

    out = slide.replace_elements(updated)
    if out == slide:
        return slide, frozenset()
    return out, frozenset({CATEGORY[fam]})


# -- tiers and pairs ------------------------------------------------------------------


class Tier(str, Enum):
    POOR = "poor"
    BASE = "base"
    GOOD = "good"

    @property
    def rank(self) -> int:
        return {"poor": 0, "base": 1, "good": 2}[self.value]


@dataclass(frozen=True)
class Variant:
    slide: SlideDoc
    tier: Tier
    defect_labels: frozenset[DefectCategory] = frozenset()
    applied: tuple[PerturbationSpec, ...] = ()


@dataclass(frozen=True)
class Variants:
    poor: Variant
    base: Variant
    good: Variant

    def __iter__(self):
        return iter((self.good, self.base, self.poor))


MAX_REDRAWS = 32


def _draw_families(rng: random.Random, applicable: list[Family]) -> list[Family]:
    """Three distinct families (two if only two apply) spanning at least two
    defect categories."""
    cats = {CATEGORY[f] for f in applicable}
    if len(cats) < 2:
        raise NotApplicable("slide supports fewer than two defect categories")
    k = min(3, len(applicable))
    while True:
        fams = rng.sample(applicable, k)
        if len({CATEGORY[f] for f in fams}) >= 2:
            return fams


def repair(slide: SlideDoc, cfg: PlannerConfig = PLANNER_DEFAULT) -> SlideDoc:
    """Align text to the grid and normalize fonts."""
    texts = tuple(e.id for e in slide.content if e.kind is Kind.TEXT)
    if not texts:
        return slide
    fb = Feedback(
        (
            FeedbackItem(DefectCategory.COMPOSITION_LAYOUT, texts, Op.ALIGN_TO_GRID),
            FeedbackItem(DefectCategory.TYPOGRAPHY, texts, Op.NORMALIZE_FONTS),
        )
    )
    return apply_feedback_ops(slide, fb, cfg)


def make_variants(slide: SlideDoc, seed: int, cfg: PlannerConfig = PLANNER_DEFAULT) -> Variants:
    rng = random.Random(seed)
    has_text = any(e.kind is Kind.TEXT for e in slide.content)
    has_image = any(e.kind is Kind.IMAGE for e in slide.content)
    applicable = [Family.BETWEEN_OBJECT_LAYOUT] if slide.content else []
    if has_text:
        applicable += [Family.WITHIN_OBJECT_ALIGNMENT, Family.TYPOGRAPHY]
    if has_image:
        applicable.append(Family.IMAGERY)

    for _ in range(MAX_REDRAWS):
        fams = _draw_families(rng, applicable)
        current, labels, applied = slide, set(), []
        try:
            for fam in fams:
                spec = PerturbationSpec(fam, rng.choice(SUBTYPES[fam]), round(rng.uniform(0.7, 1.0), 6), rng.getrandbits(64))
                current, got = apply_perturbation(current, spec)
                labels |= got
                applied.append(spec)
        except NotApplicable:
            continue
        if len(labels) >= 2:
            break
    else:
        raise NotApplicable(f"no valid poor variant after {MAX_REDRAWS} draws")

    poor = Variant(current, Tier.POOR, frozenset(labels), tuple(applied))
    base = Variant(slide, Tier.BASE)
    good = Variant(repair(slide, cfg), Tier.GOOD)
    return Variants(poor=poor, base=base, good=good)


class Preference(str, Enum):
    FIRST = "first"
    SECOND = "second"


@dataclass(frozen=True)
class SlidePair:
    first: Variant
    second: Variant
    preference: Preference
    pair_id: str = ""
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "pair_id": self.pair_id,
            "first": to_dict(self.first.slide),
            "second": to_dict(self.second.slide),
            "preference": self.preference.value,
            "defect_labels_first": sorted(c.value for c in self.first.defect_labels),
            "defect_labels_second": sorted(c.value for c in self.second.defect_labels),
            "tier_first": self.first.tier.value,
            "tier_second": self.second.tier.value,
            "seed": self.seed,
        }


def make_pairs(variants: Variants, seed: int, prefix: str = "") -> list[SlidePair]:
    """(good, base), (base, poor) and (good, poor), each in seeded order."""
    tiers = [v.tier for v in variants]
    if len(set(tiers)) != len(tiers):
        raise ValueError("variants must have distinct tiers")
    rng = random.Random(seed)
    out = []
    for hi, lo in ((variants.good, variants.base), (variants.base, variants.poor), (variants.good, variants.poor)):
        swap = rng.random() < 0.5
        first, second = (lo, hi) if swap else (hi, lo)
        pref = Preference.SECOND if swap else Preference.FIRST
        pid = f"{prefix}{hi.tier.value}-{lo.tier.value}"
        out.append(SlidePair(first, second, pref, pid, seed))
    return out


# -- synthetic corpus ----------------------------------------------------------------

_ASPECTS = (4 / 3, 16 / 9, 1.0, 3 / 4, 3 / 2)


def synthetic_manifest(rng: random.Random) -> ContentManifest:
    items = [ManifestItem(Kind.TEXT, 0, text_len=rng.randint(18, 60), level=TITLE, id="title")]
    n_body = rng.randint(1, 3)
    n_img = rng.choice((0, 1, 1, 2)) if n_body < 3 else rng.choice((0, 1))
    rank = 1
    for i in range(n_body):
        items.append(ManifestItem(Kind.TEXT, rank, text_len=rng.randint(60, 260), level=BODY, id=f"body{i}"))
        rank += 1
    for i in range(n_img):
        items.append(ManifestItem(Kind.IMAGE, rank, intrinsic_aspect=rng.choice(_ASPECTS), id=f"img{i}"))
        rank += 1
    return ContentManifest(tuple(items))


def synthetic_corpus(n: int, seed: int, cfg: PlannerConfig = PLANNER_DEFAULT) -> list[SlideDoc]:
    """``n`` planner-made slides from seeded random manifests."""
    rng = random.Random(seed)
    out = []
    while len(out) < n:
        manifest = synthetic_manifest(rng)
        try:
            slide = plan_layout(manifest, cfg=cfg, slide_id=f"s{len(out):04d}")
        except ValueError:
            continue
        out.append(slide)
    return out


def benchmark_records(slides: Sequence[SlideDoc], seed: int, cfg: PlannerConfig = PLANNER_DEFAULT) -> list[dict]:
    """Benchmark pair records for a corpus; slide ``i`` uses a sub-seed
    derived from ``(seed, i)`` so records do not depend on corpus order."""
    records = []
    for i, slide in enumerate(slides):
        sub = random.Random(f"{seed}:{i}").getrandbits(64)
        variants = make_variants(slide, sub, cfg)
        for pair in make_pairs(variants, sub, prefix=f"{slide.id or i}-"):
            rec = pair.to_dict()
            rec["seed"] = seed
            records.append(rec)
    return records


def check_variants(v: Variants) -> list[str]:
    """Invariant breaches for a variant triple (empty when sound)."""
    problems = []
    for var in v:
        if validate(var.slide):
            problems.append(f"{var.tier.value}: invalid slide")
    if v.base.applied:
        problems.append("base has perturbations")
    if len(v.poor.applied) < 2:
        problems.append("poor has fewer than two perturbations")
    allowed = {CATEGORY[s.family] for s in v.poor.applied}
    if not v.poor.defect_labels <= allowed:
        problems.append("poor labels outside applied families")
    return problems

