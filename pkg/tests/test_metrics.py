from __future__ import annotations

import itertools
import math
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import rect
from presgauge.metrics import (
    D_MAX,
    EmptyInput,
    LengthMismatch,
    NoElements,
    comparison_accuracy,
    defect_f1,
    defect_f1_report,
    layout_balance,
    lcs_length,
    mae,
    rouge_l,
    tokenize,
)
from presgauge.slide_model import BBox, DefectCategory, Element, Kind, SlideDoc

CL = DefectCategory.COMPOSITION_LAYOUT
TY = DefectCategory.TYPOGRAPHY
IM = DefectCategory.IMAGERY_VISUALIZATIONS
ND = DefectCategory.NO_DEFICIENCY


def is_subsequence(sub, seq) -> bool:
    it = iter(seq)
    return all(tok in it for tok in sub)


def brute_lcs(a, b) -> int:
    """Longest common subsequence by enumerating every subsequence of ``a``."""
    for k in range(len(a), 0, -1):
        for idx in itertools.combinations(range(len(a)), k):
            if is_subsequence([a[i] for i in idx], b):
                return k
    return 0


def hand_balance(masses):
    """Area-weighted centre of mass in exact rationals, then the distance ratio."""
    total = sum(Fraction(a) for a, _, _ in masses)
    cx = sum(Fraction(a) * Fraction(x) for a, x, _ in masses) / total
    cy = sum(Fraction(a) * Fraction(y) for a, _, y in masses) / total
    d = math.hypot(float(cx - Fraction(1, 2)), float(cy - Fraction(1, 2)))
    return max(0.0, 1 - d / (math.sqrt(2) / 2))


# -- layout balance ------------------------------------------------------------------


def test_single_centered_element_is_balanced():
    s = SlideDoc((rect("a", 0.3, 0.3, 0.4, 0.4),))
    assert layout_balance(s).balance == pytest.approx(1.0, abs=1e-12)


def test_symmetric_pair_is_balanced():
    s = SlideDoc((rect("a", 0.15, 0.4, 0.2, 0.2), rect("b", 0.65, 0.4, 0.2, 0.2)))
    assert layout_balance(s).balance == pytest.approx(1.0, abs=1e-12)


def test_three_to_one_offset_case():
    # areas 0.15 and 0.05 centred at (0.5, 0.5) and (0.9, 0.5)
    s = SlideDoc((rect("a", 0.35, 0.25, 0.3, 0.5), rect("b", 0.85, 0.25, 0.1, 0.5)))
    got = layout_balance(s)
    assert got.com_x == pytest.approx(0.6, abs=1e-12)
    assert got.d == pytest.approx(0.1, abs=1e-12)
    assert got.balance == pytest.approx(1 - 0.1 * math.sqrt(2), abs=1e-9)
    assert got.balance == pytest.approx(hand_balance([(0.15, 0.5, 0.5), (0.05, 0.9, 0.5)]), abs=1e-12)
    assert round(got.balance, 5) == 0.85858


def test_backgrounds_are_ignored_and_empty_slides_raise():
    bg = Element("bg", Kind.SHAPE, BBox(0, 0, 1, 1), background=True)
    s = SlideDoc((bg, rect("a", 0.0, 0.0, 0.2, 0.2)))
    assert layout_balance(s).com_x == pytest.approx(0.1)
    with pytest.raises(NoElements):
        layout_balance(SlideDoc((bg,)))



@given(
    st.lists(st.tuples(st.integers(1, 200), st.integers(1, 200), st.integers(0, 700), st.integers(0, 700)), min_size=1, max_size=5),
    st.integers(-60, 60),
    st.integers(-60, 60),
)
def test_balance_shift_changes_by_distance_difference(shapes, sx, sy):
    base = SlideDoc(tuple(rect(f"e{i}", x / 1000 + 0.1, y / 1000 + 0.1, w / 1000, h / 1000) for i, (w, h, x, y) in enumerate(shapes)))
    moved = SlideDoc(tuple(e.with_bbox(BBox(e.bbox.x + sx / 1000, e.bbox.y + sy / 1000, e.bbox.w, e.bbox.h)) for e in base.elements))
    a, b = layout_balance(base), layout_balance(moved)
    if a.d < D_MAX and b.d < D_MAX:
        assert a.balance - b.balance == pytest.approx((b.d - a.d) / D_MAX, abs=1e-9)


@given(st.lists(st.tuples(st.integers(1, 300), st.integers(1, 300), st.integers(0, 600), st.integers(0, 600)), min_size=1, max_size=5))
def test_balance_matches_exact_rational_oracle(shapes):
    s = SlideDoc(tuple(rect(f"e{i}", x / 1000, y / 1000, w / 1000, h / 1000) for i, (w, h, x, y) in enumerate(shapes)))
    masses = [(Fraction(w, 1000) * Fraction(h, 1000), Fraction(2 * x + w, 2000), Fraction(2 * y + h, 2000)) for w, h, x, y in shapes]
    assert layout_balance(s).balance == pytest.approx(hand_balance(masses), abs=1e-9)


# -- ROUGE-L ---------------------------------------------------------------------


def test_rouge_worked_example():
    r = rouge_l("the cat sat on mat", "the cat on the mat")
    assert r.lcs_len == brute_lcs("the cat sat on mat".split(), "the cat on the mat".split()) == 4
    assert (r.precision, r.recall, r.f_score) == pytest.approx((0.8, 0.8, 0.8))


def test_rouge_identical_and_disjoint():
    assert rouge_l("a b c", "a b c").f_score == 1.0
    assert rouge_l("a b c", "d e f").f_score == 0.0


def test_rouge_tokenization_drops_case_and_punctuation():
    assert tokenize("The cat, sat!") == ["the", "cat", "sat"]
    assert rouge_l("The CAT.", "the cat").f_score == 1.0


def test_rouge_beta_weights_recall():
    r = rouge_l(["a", "b"], ["a", "b", "c", "d"], beta=2.0)
    p, rec = 1.0, 0.5
    assert r.f_score == pytest.approx(5 * rec * p / (4 * rec + p))


def test_rouge_empty_input_raises():
    with pytest.raises(EmptyInput):
        rouge_l("", "a")


_tokens = st.lists(st.sampled_from("abcd"), max_size=8)


@given(_tokens, _tokens)
def test_lcs_matches_brute_force(a, b):
    assert lcs_length(a, b) == brute_lcs(a, b) == lcs_length(b, a)


@given(st.lists(st.sampled_from("abcdefg"), min_size=1, max_size=12))
def test_rouge_self_is_one(x):
    assert rouge_l(x, x).f_score == 1.0


# -- MAE, F1, accuracy ---------------------------------------------------------------


def test_mae_examples():
    assert mae([8.5], [8.0]) == 0.5
    assert mae([1, 2], [1, 2]) == 0
    assert mae([7, 5, 9], [8, 5, 6]) == pytest.approx(4 / 3, abs=1e-15)
    with pytest.raises(LengthMismatch):
        mae([1], [1, 2])
    with pytest.raises(EmptyInput):
        mae([], [])


def test_defect_f1_examples():
    r = defect_f1({CL}, {CL, TY})
    assert (r.precision, r.recall, r.f1) == pytest.approx((1.0, 0.5, 2 / 3))
    assert defect_f1({ND}, {ND}).f1 == 1.0
    assert defect_f1({TY}, {IM}).f1 == 0.0


_labels = st.sampled_from([frozenset({ND}), frozenset()]) | st.sets(st.sampled_from([CL, TY, IM]), min_size=1)


@given(_labels, _labels)
def test_defect_f1_swap_exchanges_precision_and_recall(a, b):
    ab, ba = defect_f1(a, b), defect_f1(b, a)
    if a and b:
        assert (ab.precision, ab.recall) == (ba.recall, ba.precision)
    assert ab.f1 == pytest.approx(ba.f1)


def test_defect_report_per_category_detection():
    preds = [{CL}, {CL, TY}, {ND}, {IM}]
    truth = [{CL}, {TY}, {ND}, {CL}]
    rep = defect_f1_report(preds, truth)
    cl = rep.per_category[CL]
    # CL: tp 1 (rec 0), fp 1 (rec 1), fn 1 (rec 3)
    assert (cl.precision, cl.recall, cl.support) == (0.5, 0.5, 2)
    assert rep.per_category[TY].f1 == 1.0
    assert rep.per_category[IM].f1 == 0.0
    assert rep.macro_f1 == pytest.approx((0.5 + 1.0 + 0) / 3)
    assert rep.mean_pair_f1 == pytest.approx((1 + 2 / 3 + 1 + 0) / 4)


def test_comparison_accuracy_examples():
    assert comparison_accuracy(["A", "B", "A", "A"], ["A", "B", "A", "B"]) == 0.75
    assert comparison_accuracy(["A", "B"], ["A", "B"]) == 1.0
    assert comparison_accuracy(["B", None], ["A", "B"]) == 0.0
