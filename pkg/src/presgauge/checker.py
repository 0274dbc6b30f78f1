"""Iterative score / feedback / refine loop with revert-on-regression and
best-version selection."""

from __future__ import annotations

import json
import math
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Protocol

from .rewards import ScoreOutOfRange  # noqa: F401  (raised by ExternalScorer.score)
from .rewards import NonNumericAnswer, RewardConfig, extract_categories, parse_score, parse_tagged
from .slide_model import DefectCategory, Kind, SlideDoc, to_dict


class Op(str, Enum):
    ALIGN_TO_GRID = "align_to_grid"
    RESCALE = "rescale"
    RESPACE = "respace"
    NORMALIZE_FONTS = "normalize_fonts"
    FIX_ASPECT = "fix_aspect"


@dataclass(frozen=True)
class FeedbackItem:
    category: DefectCategory
    element_ids: tuple[str, ...] = ()
    suggested_op: Op | None = None
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "category": self.category.value,
            "element_ids": list(self.element_ids),
            "suggested_op": None if self.suggested_op is None else self.suggested_op.value,
            "note": self.note,
        }


@dataclass(frozen=True)
class Feedback:
    items: tuple[FeedbackItem, ...] = ()

    @property
    def categories(self) -> frozenset[DefectCategory]:
        return frozenset(i.category for i in self.items)

    @property
    def clean(self) -> bool:
        return self.categories == {DefectCategory.NO_DEFICIENCY}

    @classmethod
    def no_deficiency(cls) -> Feedback:
        return cls((FeedbackItem(DefectCategory.NO_DEFICIENCY, note="No major deficiencies found."),))

    def summary(self) -> list[str]:
        return sorted(c.value for c in self.categories)


class Scorer(Protocol):
    def score(self, slide: SlideDoc) -> float: ...

    def feedback(self, slide: SlideDoc) -> Feedback: ...


Refiner = Callable[[SlideDoc, Feedback], SlideDoc]


class RevertTo(str, Enum):
    PREVIOUS = "previous"
    BEST = "best"


@dataclass(frozen=True)
class IterationRecord:
    t: int
    score: float
    slide: SlideDoc
    reverted: bool = False
    refined: bool = False
    refine_skipped: bool = False
    feedback: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "score": self.score,
            "reverted": self.reverted,
            "refined": self.refined,
            "refine_skipped": self.refine_skipped,
            "feedback": list(self.feedback),
        }


@dataclass
class CheckerTrace:
    iterations: list[IterationRecord] = field(default_factory=list)
    best_index: int | None = None
    early_exit: bool = False

    @property
    def scores(self) -> list[float]:
        return [r.score for r in self.iterations]

    def best_so_far(self) -> list[float]:
        out, best = [], -math.inf
        for s in self.scores:
            best = max(best, s)
            out.append(best)
        return out

    def to_dict(self) -> dict:
        return {
            "iterations": [r.to_dict() for r in self.iterations],
            "best_index": self.best_index,
            "early_exit": self.early_exit,
        }


@dataclass(frozen=True)
class RefinementResult:
    final: SlideDoc
    final_score: float
    trace: CheckerTrace


class CheckerError(RuntimeError):
    def __init__(self, message: str, trace: CheckerTrace):
        super().__init__(message)
        self.trace = trace


class ScorerFailure(CheckerError):
    pass


class RefinerFailure(CheckerError):
    pass


def run_refinement(
    initial: SlideDoc,
    scorer: Scorer,
    refiner: Refiner,
    max_iters: int = 5,
    threshold: float = 8.0,
    revert_to: RevertTo | str = RevertTo.PREVIOUS,
) -> RefinementResult:
    """Refine ``initial`` until a version scores at least ``threshold``.

    Each iteration scores the current version and returns it if it clears the
    threshold. Otherwise the version to refine is the current one, or the
    previous one when the score dropped below the previous iteration's score
    (``revert_to="best"`` compares against the best version instead). The
    refine step of the last iteration is skipped since its output would never
    be scored. Without an early exit the best-scoring version is returned.
    """
    if max_iters < 1:
        raise ValueError("max_iters must be at least 1")
    if not 1 <= threshold <= 10:
        raise ValueError("threshold must lie in [1, 10]")
    revert_to = RevertTo(revert_to)
    trace = CheckerTrace()
    current = initial
    best_slide, best_score = initial, 0.0
    prev_slide, prev_score = None, None

    for t in range(max_iters):
        try:
            score = float(scorer.score(current))
        except Exception as exc:
            raise ScorerFailure(f"scorer failed at t={t}: {exc}", trace) from exc
        if not math.isfinite(score) or not 1 <= score <= 10:
            raise ScorerFailure(f"score {score!r} at t={t} outside [1, 10]", trace)

        if score >= threshold:
            trace.iterations.append(IterationRecord(t, score, current))
            trace.best_index = t
            trace.early_exit = True
            return RefinementResult(current, score, trace)

        base, reverted = current, False
        if revert_to is RevertTo.PREVIOUS:
            if t > 0 and score < prev_score:
                base, reverted = prev_slide, True
        elif t > 0 and score < best_score:
            base, reverted = best_slide, True

        last = t == max_iters - 1
        summary: tuple[str, ...] = ()
        nxt = None
        if not last:
            try:
                fb = scorer.feedback(base)
            except Exception as exc:
                raise ScorerFailure(f"feedback failed at t={t}: {exc}", trace) from exc
            summary = tuple(fb.summary())
            try:
                nxt = refiner(base, fb)
            except Exception as exc:
                raise RefinerFailure(f"refiner failed at t={t}: {exc}", trace) from exc

        trace.iterations.append(
            IterationRecord(t, score, current, reverted=reverted, refined=not last, refine_skipped=last, feedback=summary)
        )
        if score > best_score:
            best_slide, best_score = current, score
            trace.best_index = t
        prev_slide, prev_score = current, score
        if nxt is not None:
            current = nxt

    return RefinementResult(best_slide, best_score, trace)


# -- remote scorer -------------------------------------------------------------


class TransportError(RuntimeError):
    pass


class MalformedRemoteResponse(ValueError):
    pass


_CATEGORY_OPS = {
    DefectCategory.COMPOSITION_LAYOUT: Op.RESPACE,
    DefectCategory.TYPOGRAPHY: Op.NORMALIZE_FONTS,
    DefectCategory.IMAGERY_VISUALIZATIONS: Op.FIX_ASPECT,
}


@dataclass
class ExternalScorer:
    """Scorer backed by an HTTP service speaking the tagged-response contract.

    Requests are ``POST {"task": ..., "slide": <SlideDoc JSON>}``; responses
    are ``{"text": "<think>..</think><answer>..</answer>"}``.
    """

    url: str
    timeout: float = 10.0
    retries: int = 2
    backoff: float = 0.2
    reward_config: RewardConfig = field(default_factory=RewardConfig)

    def _ask(self, task: str, slide: SlideDoc) -> str:
        body = json.dumps({"task": task, "slide": to_dict(slide)}, sort_keys=True).encode()
        req = urllib.request.Request(self.url, data=body, headers={"Content-Type": "application/json"})
        last: Exception | None = None
        for attempt in range(self.retries + 1):
            try:
                with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                    raw = resp.read()
                break
            except (urllib.error.URLError, OSError) as exc:
                last = exc
                if attempt < self.retries:
                    time.sleep(self.backoff * (2**attempt))
        else:
            raise TransportError(f"{self.url}: {last}")
        try:
            payload = json.loads(raw)
            text = payload["text"]
        except (ValueError, KeyError, TypeError):
            raise MalformedRemoteResponse("response is not a JSON object with a 'text' field") from None
        if not isinstance(text, str):
            raise MalformedRemoteResponse("'text' must be a string")
        parsed = parse_tagged(text)
        if not parsed.well_formed:
            raise MalformedRemoteResponse("response text is not one think block followed by one answer block")
        return parsed.answer

    def score(self, slide: SlideDoc) -> float:
        answer = self._ask("scoring", slide)
        try:
            return float(parse_score(answer, self.reward_config))
        except NonNumericAnswer as exc:
            raise MalformedRemoteResponse(str(exc)) from None

    def feedback(self, slide: SlideDoc) -> Feedback:
        answer = self._ask("adjustment", slide)
        cats = extract_categories(answer)
        if not cats or cats == {DefectCategory.NO_DEFICIENCY}:
            return Feedback.no_deficiency()
        ids = tuple(e.id for e in slide.content)
        images = tuple(e.id for e in slide.content if e.kind is Kind.IMAGE)
        return Feedback(
            tuple(
                FeedbackItem(c, images if c is DefectCategory.IMAGERY_VISUALIZATIONS else ids, _CATEGORY_OPS[c], note="remote")
                for c in sorted(cats, key=lambda c: c.value)
            )
        )


def external_scorer_adapter(url: str, timeout: float = 10.0, retries: int = 2) -> ExternalScorer:
    return ExternalScorer(url, timeout=timeout, retries=retries)

