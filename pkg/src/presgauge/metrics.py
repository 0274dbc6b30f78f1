"""Closed-form presentation metrics: layout balance, ROUGE-L, MAE, defect F1
and pairwise comparison accuracy."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Iterable, Sequence

from .slide_model import (
    DEFECT_CATEGORIES,
    DefectCategory,
    SlideDoc,
    check_label_set,
)

D_MAX = math.sqrt(2) / 2


class NoElements(ValueError):
    pass


class EmptyInput(ValueError):
    pass


class LengthMismatch(ValueError):
    pass


@dataclass(frozen=True)
class BalanceBreakdown:
    com_x: float
    com_y: float
    d: float
    balance: float


def balance_from_masses(masses: Iterable[tuple[float, float, float]]) -> BalanceBreakdown:
    """Balance from ``(area, center_x, center_y)`` triples."""
    masses = list(masses)
    total = math.fsum(a for a, _, _ in masses)
    if not masses or total <= 0:
        raise NoElements("no mass to balance")
    com_x = math.fsum(a * x for a, x, _ in masses) / total
    com_y = math.fsum(a * y for a, _, y in masses) / total
    d = math.hypot(com_x - 0.5, com_y - 0.5)
    return BalanceBreakdown(com_x, com_y, d, max(0.0, 1.0 - d / D_MAX))


def layout_balance(slide: SlideDoc) -> BalanceBreakdown:
    content = slide.content
    if not content:
        raise NoElements("slide has no non-background elements")
    return balance_from_masses((e.bbox.area, *e.bbox.center) for e in content)


# -- ROUGE-L ---------------------------------------------------------------

_PUNCT = re.compile(r"[^\w\s]", re.UNICODE)


def tokenize(text: str) -> list[str]:
    """Lowercase, strip punctuation, split on whitespace."""
    return _PUNCT.sub(" ", text.lower()).split()


def lcs_length(x: Sequence, y: Sequence) -> int:
    if len(x) < len(y):
        x, y = y, x
    prev = [0] * (len(y) + 1)
    for a in x:
        cur = [0]
        for j, b in enumerate(y, start=1):
            cur.append(prev[j - 1] + 1 if a == b else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


@dataclass(frozen=True)
class RougeResult:
    lcs_len: int
    precision: float
    recall: float
    f_score: float


def rouge_l(candidate: str | Sequence[str], reference: str | Sequence[str], beta: float = 1.0) -> RougeResult:
    """ROUGE-L of ``candidate`` (X) against ``reference`` (Y).

    Strings are tokenized with :func:`tokenize`; token sequences are used as is.
    """
    x = tokenize(candidate) if isinstance(candidate, str) else list(candidate)
    y = tokenize(reference) if isinstance(reference, str) else list(reference)
    if not x or not y:
        raise EmptyInput("ROUGE-L needs at least one token on each side")
    lcs = lcs_length(x, y)
    p = lcs / len(x)
    r = lcs / len(y)
    if p == 0 and r == 0:
        f = 0.0
    else:
        b2 = beta * beta
        f = (1 + b2) * r * p / (b2 * r + p)
    return RougeResult(lcs, p, r, f)


# -- aesthetic-awareness evaluation -----------------------------------------


def mae(predictions: Sequence[float], truths: Sequence[float]) -> float:
    if len(predictions) != len(truths):
        raise LengthMismatch(f"{len(predictions)} predictions vs {len(truths)} truths")
    if not predictions:
        raise EmptyInput("MAE of an empty set")
    return math.fsum(abs(p - t) for p, t in zip(predictions, truths)) / len(predictions)


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f1: float


def _f1(p: float, r: float) -> float:
    return 0.0 if p + r == 0 else 2 * p * r / (p + r)


def defect_f1(predicted: Iterable[DefectCategory], truth: Iterable[DefectCategory]) -> PRF:
    """Set-overlap precision/recall/F1 for one prediction.

    An empty side yields 0 for the ratio it would divide, except that two
    empty sets agree perfectly.
    """
    pred = check_label_set(predicted)
    gold = check_label_set(truth)
    if not pred and not gold:
        return PRF(1.0, 1.0, 1.0)
    hit = len(pred & gold)
    p = hit / len(pred) if pred else 0.0
    r = hit / len(gold) if gold else 0.0
    return PRF(p, r, _f1(p, r))


@dataclass(frozen=True)
class CategoryScore:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class DefectF1Report:
    per_category: dict[DefectCategory, CategoryScore]
    macro_f1: float
    mean_pair_f1: float
    n: int

    def to_dict(self) -> dict:
        return {
            "per_category": {
                c.value: {"precision": s.precision, "recall": s.recall, "f1": s.f1, "support": s.support}
                for c, s in self.per_category.items()
            },
            "macro_f1": self.macro_f1,
            "mean_pair_f1": self.mean_pair_f1,
            "n": self.n,
        }


def defect_f1_report(
    predicted: Sequence[Iterable[DefectCategory]], truths: Sequence[Iterable[DefectCategory]]
) -> DefectF1Report:
    """Per-category detection scores over a dataset.

    Each category is scored as a binary detection task across records; the
    macro average covers the three defect categories only, while
    ``no_deficiency`` is still reported.
    """
    if len(predicted) != len(truths):
        raise LengthMismatch(f"{len(predicted)} predictions vs {len(truths)} truths")
    preds = [check_label_set(p) for p in predicted]
    golds = [check_label_set(t) for t in truths]
    per: dict[DefectCategory, CategoryScore] = {}
    for cat in (*DEFECT_CATEGORIES, DefectCategory.NO_DEFICIENCY):
        tp = sum(1 for p, g in zip(preds, golds) if cat in p and cat in g)
        fp = sum(1 for p, g in zip(preds, golds) if cat in p and cat not in g)
        fn = sum(1 for p, g in zip(preds, golds) if cat not in p and cat in g)
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn) if tp + fn else 0.0
        per[cat] = CategoryScore(prec, rec, _f1(prec, rec), tp + fn)
    macro = math.fsum(per[c].f1 for c in DEFECT_CATEGORIES) / len(DEFECT_CATEGORIES)
    pair = [defect_f1(p, g).f1 for p, g in zip(preds, golds)]
    mean_pair = math.fsum(pair) / len(pair) if pair else 0.0
    return DefectF1Report(per, macro, mean_pair, len(preds))


def comparison_accuracy(predictions: Sequence[str | None], truths: Sequence[str]) -> float:
    """Fraction of matching ``"A"``/``"B"`` choices; ``None`` counts as wrong."""
    if len(predictions) != len(truths):
        raise LengthMismatch(f"{len(predictions)} predictions vs {len(truths)} truths")
    if not truths:
        raise EmptyInput("accuracy of an empty set")
    for c in (*predictions, *truths):
        if c not in ("A", "B", None):
            raise ValueError(f"choice must be 'A' or 'B', got {c!r}")
    return sum(1 for p, t in zip(predictions, truths) if p == t) / len(truths)
