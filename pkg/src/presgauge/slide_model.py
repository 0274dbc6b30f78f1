"""Structured slide documents.

Geometry lives in a normalized square: ``x``/``y`` in ``[0, 1]`` with a
top-left origin, widths and heights as fractions of the canvas. Every float
is stored at 1e-6 resolution so that encoding is canonical and
``decode(encode(s)) == s`` holds exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from enum import Enum
from typing import Iterable, Iterator

SCHEMA_VERSION = 1
PRECISION = 6
EDGE_TOL = 1e-9


def q(value: float) -> float:
    """Quantize to the canonical precision (and fold -0.0 into 0.0)."""
    return round(float(value), PRECISION) + 0.0


class Kind(str, Enum):
    TEXT = "text"
    IMAGE = "image"
    SHAPE = "shape"


class Weight(str, Enum):
    REGULAR = "regular"
    BOLD = "bold"


class Align(str, Enum):
    LEFT = "left"
    CENTER = "center"
    RIGHT = "right"


class DefectCategory(str, Enum):
    NO_DEFICIENCY = "no_deficiency"
    COMPOSITION_LAYOUT = "composition_layout"
    TYPOGRAPHY = "typography"
    IMAGERY_VISUALIZATIONS = "imagery_visualizations"

    @property
    def display(self) -> str:
        return _CATEGORY_TITLES[self]

    @classmethod
    def parse(cls, value: str | DefectCategory) -> DefectCategory:
        """Accept enum values, member names or display titles."""
        if isinstance(value, DefectCategory):
            return value
        key = str(value).strip()
        for member in cls:
            if key in (member.value, member.name, member.display):
                return member
        raise InvalidLabelSet(f"unknown defect category {value!r}")


_CATEGORY_TITLES = {
    DefectCategory.NO_DEFICIENCY: "No Deficiency",
    DefectCategory.COMPOSITION_LAYOUT: "Composition & Layout",
    DefectCategory.TYPOGRAPHY: "Typography",
    DefectCategory.IMAGERY_VISUALIZATIONS: "Imagery & Visualizations",
}

DEFECT_CATEGORIES = (
    DefectCategory.COMPOSITION_LAYOUT,
    DefectCategory.TYPOGRAPHY,
    DefectCategory.IMAGERY_VISUALIZATIONS,
)


class InvalidLabelSet(ValueError):
    pass


def check_label_set(labels: Iterable[DefectCategory]) -> frozenset[DefectCategory]:
    labels = frozenset(DefectCategory.parse(c) for c in labels)
    if DefectCategory.NO_DEFICIENCY in labels and len(labels) > 1:
        raise InvalidLabelSet("no_deficiency cannot be combined with defect categories")
    return labels


class DecodeError(ValueError):
    """Malformed slide document; ``offset`` is a character position when known."""

    def __init__(self, message: str, offset: int | None = None, line: int | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if offset is not None:
            where.append(f"offset {offset}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.offset = offset
        self.line = line


@dataclass(frozen=True)
class BBox:
    x: float
    y: float
    w: float
    h: float

    def __post_init__(self) -> None:
        for name in ("x", "y", "w", "h"):
            object.__setattr__(self, name, q(getattr(self, name)))

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def center(self) -> tuple[float, float]:
        return self.x + self.w / 2, self.y + self.h / 2

    @property
    def right(self) -> float:
        return self.x + self.w

    @property
    def bottom(self) -> float:
        return self.y + self.h

    @classmethod
    def fitted(cls, x: float, y: float, w: float, h: float) -> BBox:
        """Build a box clamped inside the canvas, shrinking it only if it is
        larger than the canvas itself."""
        w = min(max(q(w), 1e-6), 1.0)
        h = min(max(q(h), 1e-6), 1.0)
        x = min(max(q(x), 0.0), q(1.0 - w))
        y = min(max(q(y), 0.0), q(1.0 - h))
        return cls(x, y, w, h)

    def translated(self, dx: float, dy: float) -> BBox:
        return BBox.fitted(self.x + dx, self.y + dy, self.w, self.h)

    def scaled(self, sx: float, sy: float | None = None) -> BBox:
        """Scale about the center, then clamp into the canvas."""
        sy = sx if sy is None else sy
        cx, cy = self.center
        w, h = self.w * sx, self.h * sy
        return BBox.fitted(cx - w / 2, cy - h / 2, w, h)


@dataclass(frozen=True)
class Style:
    font_size: float = 0.045
    weight: Weight = Weight.REGULAR
    h_align: Align = Align.LEFT
    line_spacing: float = 1.2
    letter_spacing: float = 0.0

    def __post_init__(self) -> None:
        for name in ("font_size", "line_spacing", "letter_spacing"):
            object.__setattr__(self, name, q(getattr(self, name)))
        object.__setattr__(self, "weight", Weight(self.weight))
        object.__setattr__(self, "h_align", Align(self.h_align))


@dataclass(frozen=True)
class Element:
    """One slide element.

    ``level`` is the text hierarchy level (0 title, 1 body, 2 caption) and
    ``rank`` the importance order used by the planner; both are optional.
    """

    id: str
    kind: Kind
    bbox: BBox
    z: int = 0
    style: Style | None = None
    intrinsic_aspect: float | None = None
    text: str = ""
    level: int | None = None
    rank: int | None = None
    background: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", Kind(self.kind))
        if self.intrinsic_aspect is not None:
            object.__setattr__(self, "intrinsic_aspect", q(self.intrinsic_aspect))
        if self.kind is Kind.TEXT and self.style is None:
            object.__setattr__(self, "style", Style())

    def with_bbox(self, bbox: BBox) -> Element:
        return replace(self, bbox=bbox)

    def with_style(self, **changes) -> Element:
        return replace(self, style=replace(self.style or Style(), **changes))


@dataclass(frozen=True)
class SlideDoc:
    elements: tuple[Element, ...] = ()
    aspect_ratio: float = 16 / 9
    id: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "elements", tuple(self.elements))
        object.__setattr__(self, "aspect_ratio", q(self.aspect_ratio))

    @property
    def content(self) -> list[Element]:
        """Elements that take part in metrics (backgrounds excluded)."""
        return [e for e in self.elements if not e.background]

    def element(self, element_id: str) -> Element:
        for e in self.elements:
            if e.id == element_id:
                return e
        raise KeyError(element_id)

    def replace_elements(self, updated: dict[str, Element]) -> SlideDoc:
        return replace(self, elements=tuple(updated.get(e.id, e) for e in self.elements))

    def z_ordered(self) -> list[Element]:
        return [e for _, e in sorted(enumerate(self.elements), key=lambda p: (p[1].z, p[0]))]


@dataclass(frozen=True)
class Violation:
    element_id: str | None
    rule: str
    detail: str = ""


def validate(slide: SlideDoc) -> list[Violation]:
    out: list[Violation] = []
    if not slide.aspect_ratio > 0:
        out.append(Violation(None, "aspect_ratio>0", f"aspect_ratio={slide.aspect_ratio}"))
    seen: set[str] = set()
    for e in slide.elements:
        b = e.bbox
        if e.id in seen:
            out.append(Violation(e.id, "id_unique"))
        seen.add(e.id)
        if not b.w > 0:
            out.append(Violation(e.id, "w>0", f"w={b.w}"))
        if not b.h > 0:
            out.append(Violation(e.id, "h>0", f"h={b.h}"))
        if not 0 <= b.x <= 1:
            out.append(Violation(e.id, "0≤x≤1", f"x={b.x}"))
        if not 0 <= b.y <= 1:
            out.append(Violation(e.id, "0≤y≤1", f"y={b.y}"))
        if b.x + b.w > 1 + EDGE_TOL:
            out.append(Violation(e.id, "x+w≤1", f"x+w={b.x + b.w}"))
        if b.y + b.h > 1 + EDGE_TOL:
            out.append(Violation(e.id, "y+h≤1", f"y+h={b.y + b.h}"))
        if e.kind is Kind.IMAGE and not (e.intrinsic_aspect or 0) > 0:
            out.append(Violation(e.id, "intrinsic_aspect>0"))
        s = e.style
        if s is not None:
            if not 0 < s.font_size <= 0.5:
                out.append(Violation(e.id, "0<font_size≤0.5", f"font_size={s.font_size}"))
            if not 1 <= s.line_spacing <= 3:
                out.append(Violation(e.id, "1≤line_spacing≤3", f"line_spacing={s.line_spacing}"))
            if not s.letter_spacing >= 0:
                out.append(Violation(e.id, "letter_spacing≥0", f"letter_spacing={s.letter_spacing}"))
    return out


def overlap_area(a: BBox, b: BBox) -> float:
    ox = min(a.right, b.right) - max(a.x, b.x)
    oy = min(a.bottom, b.bottom) - max(a.y, b.y)
    if ox <= 0 or oy <= 0:
        return 0.0
    return ox * oy


# -- serialization ---------------------------------------------------------


def _style_to_dict(s: Style) -> dict:
    return {
        "font_size": q(s.font_size),
        "weight": s.weight.value,
        "h_align": s.h_align.value,
        "line_spacing": q(s.line_spacing),
        "letter_spacing": q(s.letter_spacing),
    }


def element_to_dict(e: Element) -> dict:
    return {
        "id": e.id,
        "kind": e.kind.value,
        "bbox": {"x": e.bbox.x, "y": e.bbox.y, "w": e.bbox.w, "h": e.bbox.h},
        "z": e.z,
        "style": None if e.style is None else _style_to_dict(e.style),
        "intrinsic_aspect": e.intrinsic_aspect,
        "text": e.text,
        "level": e.level,
        "rank": e.rank,
        "background": e.background,
    }


def to_dict(slide: SlideDoc) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "id": slide.id,
        "aspect_ratio": slide.aspect_ratio,
        "elements": [element_to_dict(e) for e in slide.elements],
    }


def canonical_json(obj) -> str:
    """Sorted keys, compact separators, no NaN; the form used for all hashing."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False)


def encode(slide: SlideDoc) -> str:
    return canonical_json(to_dict(slide))


def _need(obj: dict, key: str, typ, where: str):
    if key not in obj:
        raise DecodeError(f"{where}: missing field {key!r}")
    value = obj[key]
    if typ is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if not isinstance(value, typ) or isinstance(value, bool) and typ is not bool:
        raise DecodeError(f"{where}: field {key!r} has wrong type {type(value).__name__}")
    return value


def _opt(obj: dict, key: str, typ, where: str, default=None):
    if obj.get(key) is None:
        return default
    return _need(obj, key, typ, where)


def from_dict(obj) -> SlideDoc:
    if not isinstance(obj, dict):
        raise DecodeError("slide must be a JSON object")
    version = obj.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise DecodeError(f"unsupported schema_version {version!r}")
    raw = _need(obj, "elements", list, "slide")
    elements = []
    for i, item in enumerate(raw):
        where = f"elements[{i}]"
        if not isinstance(item, dict):
            raise DecodeError(f"{where}: not an object")
        bb = _need(item, "bbox", dict, where)
        bbox = BBox(*(_need(bb, k, float, where + ".bbox") for k in "xywh"))
        style = None
        if item.get("style") is not None:
            st = _need(item, "style", dict, where)
            try:
                style = Style(
                    font_size=_need(st, "font_size", float, where + ".style"),
                    weight=Weight(st.get("weight", "regular")),
                    h_align=Align(st.get("h_align", "left")),
                    line_spacing=_opt(st, "line_spacing", float, where + ".style", 1.2),
                    letter_spacing=_opt(st, "letter_spacing", float, where + ".style", 0.0),
                )
            except ValueError as exc:
                raise DecodeError(f"{where}.style: {exc}") from None
        try:
            kind = Kind(_need(item, "kind", str, where))
        except ValueError:
            raise DecodeError(f"{where}: unknown kind {item.get('kind')!r}") from None
        elements.append(
            Element(
                id=_need(item, "id", str, where),
                kind=kind,
                bbox=bbox,
                z=_opt(item, "z", int, where, 0),
                style=style,
                intrinsic_aspect=_opt(item, "intrinsic_aspect", float, where),
                text=_opt(item, "text", str, where, ""),
                level=_opt(item, "level", int, where),
                rank=_opt(item, "rank", int, where),
                background=_opt(item, "background", bool, where, False),
            )
        )
    return SlideDoc(
        elements=tuple(elements),
        aspect_ratio=_opt(obj, "aspect_ratio", float, "slide", 16 / 9),
        id=_opt(obj, "id", str, "slide", ""),
    )


def decode(text: str) -> SlideDoc:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DecodeError(f"invalid JSON: {exc.msg}", offset=exc.pos) from None
    return from_dict(obj)


def round_trip(slide: SlideDoc) -> SlideDoc:
    return decode(encode(slide))


def iter_deck(lines: Iterable[str]) -> Iterator[SlideDoc]:
    """Decode a JSONL deck; blank lines are skipped, errors carry the line number."""
    for n, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            yield decode(line)
        except DecodeError as exc:
            raise DecodeError(str(exc), offset=exc.offset, line=n) from None


def read_deck(path) -> list[SlideDoc]:
    with open(path, encoding="utf-8") as fh:
        return list(iter_deck(fh))


def write_deck(path, slides: Iterable[SlideDoc]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for s in slides:
            fh.write(encode(s) + "\n")

