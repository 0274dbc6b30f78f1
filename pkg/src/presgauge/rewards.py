"""Multi-task GRPO rewards: response parsing, format/accuracy rewards, group
advantages and the clipped surrogate objective."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from enum import Enum
from typing import Iterable, Sequence

from .metrics import LengthMismatch, defect_f1
from .slide_model import DefectCategory, check_label_set


class Task(str, Enum):
    SCORING = "scoring"
    ADJUSTMENT = "adjustment"
    COMPARISON = "comparison"


class RewardError(ValueError):
    pass


class NonNumericAnswer(RewardError):
    pass


class ScoreOutOfRange(RewardError):
    pass


class UnrecognizedChoice(RewardError):
    pass


class GroupTooSmall(ValueError):
    pass


@dataclass(frozen=True)
class RewardConfig:
    alpha: float = 0.5
    zeta: float = 0.25
    score_min: float = 1.0
    score_max: float = 10.0
    group_size: int = 8
    clip_delta: float = 0.2
    kl_beta: float = 0.001

    def __post_init__(self) -> None:
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if not self.zeta > 0:
            raise ValueError("zeta must be positive")
        if self.group_size < 2:
            raise ValueError("group_size must be at least 2")
        if not 0 < self.clip_delta < 1:
            raise ValueError("clip_delta must lie in (0, 1)")
        if self.kl_beta < 0:
            raise ValueError("kl_beta must be non-negative")
        if not self.score_min < self.score_max:
            raise ValueError("score_min must be below score_max")


# -- parsing ------------------------------------------------------------------

_TAGGED = re.compile(r"\s*<think>(.*?)</think>\s*<answer>(.*?)</answer>\s*", re.DOTALL)
_ANY_TAG = re.compile(r"</?(?:think|answer)>")


@dataclass(frozen=True)
class ParsedResponse:
    think: str
    answer: str
    well_formed: bool

    @property
    def r_fmt(self) -> int:
        return int(self.well_formed)


def parse_tagged(text: str) -> ParsedResponse:
    """Split ``<think>..</think><answer>..</answer>``; anything else is malformed."""
    m = _TAGGED.fullmatch(text)
    if m is None or _ANY_TAG.search(m.group(1)) or _ANY_TAG.search(m.group(2)):
        return ParsedResponse("", "", False)
    return ParsedResponse(m.group(1), m.group(2), True)


_SCORE = re.compile(r"[+-]?\d+(?:\.\d{1,2})?")


def parse_score(answer: str, cfg: RewardConfig = RewardConfig()) -> Decimal:
    text = answer.strip()
    if not _SCORE.fullmatch(text):
        raise NonNumericAnswer(f"not a score: {text[:40]!r}")
    value = Decimal(text)
    if not Decimal(repr(cfg.score_min)) <= value <= Decimal(repr(cfg.score_max)):
        raise ScoreOutOfRange(f"score {text} outside [{cfg.score_min}, {cfg.score_max}]")
    return value


def _dec(value: float | Decimal | str) -> Decimal:
    if isinstance(value, Decimal):
        return value
    if isinstance(value, str):
        return Decimal(value.strip())
    return Decimal(repr(float(value)))


def parse_choice(answer: str) -> str:
    norm = " ".join(answer.split()).casefold()
    if norm == "slide a":
        return "A"
    if norm == "slide b":
        return "B"
    raise UnrecognizedChoice(f"not a slide choice: {answer.strip()[:40]!r}")


# Headings may carry markdown/LaTeX markup around them, e.g. "**Typography**"
# or "\textbf{Composition \& Layout}".
_HEADINGS = {
    DefectCategory.COMPOSITION_LAYOUT: re.compile(r"composition\s*(?:&|and)\s*layout"),
    DefectCategory.TYPOGRAPHY: re.compile(r"typography"),
    DefectCategory.IMAGERY_VISUALIZATIONS: re.compile(r"imagery\s*(?:&|and)\s*visuali[sz]ations?"),
}
_SENTINEL = "no major deficiencies found"
_LATEX_ENV = re.compile(r"\\(?:begin|end)\{[^}]*\}")
_LATEX_CMD = re.compile(r"\\[a-zA-Z]+\*?")
_MARKUP = re.compile(r"[{}*_#`>|\[\]]|^\s*(?:[-+•]|\d+[.)])\s*", re.MULTILINE)


def _plain(text: str) -> str:
    text = _LATEX_ENV.sub(" ", text)
    text = text.replace("\\&", "&")
    text = _LATEX_CMD.sub(" ", text)
    text = _MARKUP.sub(" ", text)
    return text.casefold()


def _plain_lines(text: str) -> list[str]:
    return [" ".join(_MARKUP.sub(" ", _plain(line)).split()) for line in text.splitlines()]


def extract_categories(feedback_text: str) -> frozenset[DefectCategory]:
    """Deficiency categories named by a feedback answer.

    A category counts when its heading starts a line and the section under
    it does not open with "No major deficiencies found". A bare sentinel
    with no headings means no deficiency at all.
    """
    lines = [ln for ln in _plain_lines(feedback_text) if ln]
    sections: list[tuple[DefectCategory, list[str]]] = []
    for ln in lines:
        for cat, pat in _HEADINGS.items():
            m = pat.match(ln)
            tail = ln[m.end():].lstrip() if m else ""
            if m and (not tail or tail[0] in ":-–."):
                rest = tail.lstrip(":-–. ")
                sections.append((cat, [rest] if rest else []))
                break
        else:
            if sections:
                sections[-1][1].append(ln)
    if not sections:
        if _SENTINEL in " ".join(lines):
            return frozenset({DefectCategory.NO_DEFICIENCY})
        return frozenset()
    found = set()
    for cat, body in sections:
        if not " ".join(body).lstrip(" :.-").startswith(_SENTINEL):
            found.add(cat)
    if not found:
        return frozenset({DefectCategory.NO_DEFICIENCY})
    return frozenset(found)


# -- accuracy rewards ------------------------------------------------------


def acc_scoring(answer: str | float | Decimal, truth: float | Decimal | str, cfg: RewardConfig = RewardConfig()) -> int:
    """1 iff ``|answer - truth| < zeta``, evaluated in exact decimal arithmetic."""
    value = parse_score(answer, cfg) if isinstance(answer, str) else _dec(answer)
    if not Decimal(repr(cfg.score_min)) <= value <= Decimal(repr(cfg.score_max)):
        raise ScoreOutOfRange(f"score {value} outside [{cfg.score_min}, {cfg.score_max}]")
    return int(abs(value - _dec(truth)) < _dec(cfg.zeta))


def acc_adjustment(
    predicted: Iterable[DefectCategory], truth: Iterable[DefectCategory], cfg: RewardConfig = RewardConfig()
) -> int:
    return int(defect_f1(predicted, truth).f1 > cfg.alpha)


def acc_comparison(answer: str, truth: str) -> int:
    if truth not in ("A", "B"):
        raise ValueError(f"truth choice must be 'A' or 'B', got {truth!r}")
    return int(parse_choice(answer) == truth)


@dataclass(frozen=True)
class RewardResult:
    r_fmt: int
    r_acc: int
    error: str | None = None

    @property
    def r(self) -> int:
        return self.r_fmt + self.r_acc


def normalize_truth(task: Task, truth):
    """Coerce a JSON truth value to the type its task expects."""
    task = Task(task)
    if task is Task.SCORING:
        if isinstance(truth, bool) or not isinstance(truth, (int, float, str, Decimal)):
            raise ValueError(f"scoring truth must be a number, got {truth!r}")
        try:
            value = _dec(truth)
        except InvalidOperation:
            raise ValueError(f"scoring truth must be a number, got {truth!r}") from None
        if not value.is_finite() or not 1 <= value <= 10:
            raise ValueError(f"scoring truth {truth!r} outside [1, 10]")
        return value
    if task is Task.ADJUSTMENT:
        if isinstance(truth, str) or not isinstance(truth, Iterable):
            raise ValueError(f"adjustment truth must be a list of categories, got {truth!r}")
        return check_label_set(truth)
    choice = str(truth).strip()
    if choice.casefold() in ("a", "slide a"):
        return "A"
    if choice.casefold() in ("b", "slide b"):
        return "B"
    raise ValueError(f"comparison truth must be A or B, got {truth!r}")


def total_reward(parsed: ParsedResponse, task: Task | str, truth, cfg: RewardConfig = RewardConfig()) -> RewardResult:
    """Format reward plus accuracy reward on the answer block.

    Malformed responses earn nothing: no fallback answer extraction.
    """
    task = Task(task)
    if not parsed.well_formed:
        return RewardResult(0, 0, "MalformedResponse")
    truth = normalize_truth(task, truth)
    try:
        if task is Task.SCORING:
            acc = acc_scoring(parsed.answer, truth, cfg)
        elif task is Task.ADJUSTMENT:
            acc = acc_adjustment(extract_categories(parsed.answer), truth, cfg)
        else:
            acc = acc_comparison(parsed.answer, truth)
    except RewardError as exc:
        return RewardResult(1, 0, type(exc).__name__)
    return RewardResult(1, acc)


# -- GRPO ----------------------------------------------------------------------


@dataclass(frozen=True)
class GroupRewards:
    rewards: tuple[float, ...]
    advantages: tuple[float, ...] = field(default=())


def group_advantages(rewards: Sequence[float]) -> GroupRewards:
    """Standardize rewards within a group (population std); zero-variance
    groups get all-zero advantages."""
    n = len(rewards)
    if n < 2:
        raise GroupTooSmall(f"group of {n} cannot be normalized")
    rs = [float(r) for r in rewards]
    mean = math.fsum(rs) / n
    std = math.sqrt(math.fsum((r - mean) ** 2 for r in rs) / n)
    if std == 0:
        return GroupRewards(tuple(rs), (0.0,) * n)
    return GroupRewards(tuple(rs), tuple((r - mean) / std for r in rs))


def clip(value: float, lo: float, hi: float) -> float:
    return min(max(value, lo), hi)


def grpo_surrogate(
    ratios: Sequence[float],
    advantages: Sequence[float],
    kl_divergence: float = 0.0,
    cfg: RewardConfig = RewardConfig(),
) -> float:
    """Group mean of ``min(rho*A, clip(rho, 1-d, 1+d)*A)`` minus ``beta*KL``."""
    if len(ratios) != len(advantages):
        raise LengthMismatch(f"{len(ratios)} ratios vs {len(advantages)} advantages")
    if not ratios:
        raise ValueError("empty group")
    if any(not r > 0 for r in ratios):
        raise ValueError("policy ratios must be positive")
    if kl_divergence < 0:
        raise ValueError("KL divergence must be non-negative")
    lo, hi = 1 - cfg.clip_delta, 1 + cfg.clip_delta
    terms = [min(r * a, clip(r, lo, hi) * a) for r, a in zip(ratios, advantages)]
    return math.fsum(terms) / len(terms) - cfg.kl_beta * kl_divergence
