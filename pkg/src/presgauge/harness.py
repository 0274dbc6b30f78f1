"""Dataset ingestion, evaluation reports and reward dumps behind the CLI.

Evaluation records are JSONL objects::

    {"schema_version": 1, "id": "r1", "task": "scoring",
     "slide": {...}, "truth": 7.5, "response_text": "<think>..</think><answer>7.25</answer>"}

Comparison records carry ``"pair": {"a": {...}, "b": {...}}`` and a truth of
``"A"`` or ``"B"``; benchmark pair records written by ``perturb`` are accepted
as comparison records directly. A record's prediction comes from its
``response_text`` when present, else from a ``prediction`` field, else from
the configured scorer.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Any, Iterable, Sequence

from .aesth import HeuristicScorer, ScorerConfig
from .checker import ExternalScorer
from .metrics import NoElements, comparison_accuracy, defect_f1_report, layout_balance, mae
from .planner import PlannerConfig
from .rewards import (
    GroupTooSmall,
    RewardConfig,
    RewardError,
    Task,
    extract_categories,
    group_advantages,
    normalize_truth,
    parse_choice,
    parse_score,
    parse_tagged,
    total_reward,
)
from .slide_model import DecodeError, DefectCategory, SlideDoc, canonical_json, from_dict

SCHEMA_VERSION = 1


class SchemaError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class EmptyDataset(ValueError):
    pass


# -- settings ----------------------------------------------------------------------


@dataclass(frozen=True)
class Settings:
    reward: RewardConfig = field(default_factory=RewardConfig)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    scorer: ScorerConfig = field(default_factory=ScorerConfig)

    def to_dict(self) -> dict:
        return json.loads(json.dumps(dataclasses.asdict(self)))

    def fingerprint(self) -> str:
        return hashlib.sha256(canonical_json(self.to_dict()).encode()).hexdigest()[:16]


def _build(cls, raw: dict, where: str, **extra):
    if not isinstance(raw, dict):
        raise ValueError(f"{where} must be an object")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - set(known))
    if unknown:
        raise ValueError(f"{where}: unknown keys {unknown}")
    kwargs = dict(extra)
    for key, value in raw.items():
        default = getattr(cls(), key)
        if isinstance(default, tuple):
            value = tuple(value)
        elif isinstance(default, dict):
            value = {**default, **value}
        kwargs[key] = value
    return cls(**kwargs)


def settings_from_dict(raw: dict) -> Settings:
    """Settings from ``{"reward": {...}, "planner": {...}, "scorer": {...}}``;
    missing sections and keys keep their defaults."""
    if not isinstance(raw, dict):
        raise ValueError("config must be a JSON object")
    unknown = sorted(set(raw) - {"reward", "planner", "scorer"})
    if unknown:
        raise ValueError(f"config: unknown sections {unknown}")
    reward = _build(RewardConfig, raw.get("reward", {}), "reward")
    planner = _build(PlannerConfig, raw.get("planner", {}), "planner")
    scorer_raw = dict(raw.get("scorer", {}))
    if "planner" in scorer_raw:
        raise ValueError("scorer: the planner is configured in its own section")
    scorer = _build(ScorerConfig, scorer_raw, "scorer", planner=planner)
    return Settings(reward, planner, scorer)


def load_settings(path: str | None) -> Settings:
    if path is None:
        return Settings()
    with open(path, encoding="utf-8") as fh:
        return settings_from_dict(json.load(fh))


# -- evaluation records ------------------------------------------------------------


@dataclass(frozen=True)
class EvalRecord:
    id: str
    task: Task
    truth: Any
    slide: SlideDoc | None = None
    pair: tuple[SlideDoc, SlideDoc] | None = None
    response_text: str | None = None
    prediction: Any = None
    rubric: dict | None = None

    @property
    def slides(self) -> tuple[SlideDoc, ...]:
        return self.pair if self.pair is not None else (self.slide,)


def _slide(raw, what: str, line: int) -> SlideDoc:
    try:
        return from_dict(raw)
    except DecodeError as exc:
        raise SchemaError(f"{what}: {exc}", line) from None


def parse_record(obj: Any, line: int) -> EvalRecord:
    if not isinstance(obj, dict):
        raise SchemaError("record must be a JSON object", line)
    version = obj.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise SchemaError(f"unsupported schema_version {version!r}", line)
    if "preference" in obj and "first" in obj:
        # benchmark pair record
        a = _slide(obj.get("first"), "first", line)
        b = _slide(obj.get("second"), "second", line)
        pref = obj["preference"]
        if pref not in ("first", "second"):
            raise SchemaError(f"preference must be 'first' or 'second', got {pref!r}", line)
        rid = obj.get("pair_id") or f"line{line}"
        return EvalRecord(str(rid), Task.COMPARISON, "A" if pref == "first" else "B", pair=(a, b))

    rid = obj.get("id")
    if not isinstance(rid, str) or not rid:
        raise SchemaError("'id' must be a non-empty string", line)
    try:
        task = Task(obj.get("task"))
    except ValueError:
        raise SchemaError(f"unknown task {obj.get('task')!r}", line) from None
    if "truth" not in obj:
        raise SchemaError("missing 'truth'", line)
    try:
        truth = normalize_truth(task, obj["truth"])
    except ValueError as exc:
        raise SchemaError(str(exc), line) from None
    response = obj.get("response_text")
    if response is not None and not isinstance(response, str):
        raise SchemaError("'response_text' must be a string", line)
    rubric = obj.get("rubric")
    if rubric is not None and not isinstance(rubric, dict):
        raise SchemaError("'rubric' must be an object", line)

    slide = pair = None
    if task is Task.COMPARISON:
        raw = obj.get("pair")
        if not isinstance(raw, dict) or set(raw) != {"a", "b"}:
            raise SchemaError("comparison records need 'pair': {'a': slide, 'b': slide}", line)
        pair = (_slide(raw["a"], "pair.a", line), _slide(raw["b"], "pair.b", line))
    else:
        if "slide" not in obj:
            raise SchemaError(f"{task.value} records need a 'slide'", line)
        slide = _slide(obj["slide"], "slide", line)
    return EvalRecord(rid, task, truth, slide, pair, response, obj.get("prediction"), rubric)


def read_records(lines: Iterable[str]) -> list[EvalRecord]:
    out = []
    for n, text in enumerate(lines, 1):
        if not text.strip():
            continue
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"invalid JSON: {exc.msg}", n) from None
        out.append(parse_record(obj, n))
    if not out:
        raise EmptyDataset("dataset has no records")
    return out


# -- predictions -------------------------------------------------------------------


def _from_answer(task: Task, answer: str, cfg: RewardConfig):
    if task is Task.SCORING:
        return float(parse_score(answer, cfg))
    if task is Task.ADJUSTMENT:
        cats = extract_categories(answer)
        return cats if cats else None
    return parse_choice(answer)


def _from_field(task: Task, value, cfg: RewardConfig):
    if task is Task.SCORING:
        if isinstance(value, str):
            return float(parse_score(value, cfg))
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            return None
        v = float(value)
        return v if cfg.score_min <= v <= cfg.score_max else None
    if task is Task.ADJUSTMENT:
        try:
            return normalize_truth(task, value)
        except ValueError:
            return None
    try:
        return normalize_truth(task, value)
    except ValueError:
        return None


def make_scorer(settings: Settings, scorer_url: str | None):
    if scorer_url:
        return ExternalScorer(scorer_url, reward_config=settings.reward)
    return HeuristicScorer(settings.scorer)


def predict(record: EvalRecord, settings: Settings, scorer) -> Any:
    """The record's prediction, or ``None`` when it cannot be read."""
    cfg = settings.reward
    task = record.task
    try:
        if record.response_text is not None:
            parsed = parse_tagged(record.response_text)
            return _from_answer(task, parsed.answer, cfg) if parsed.well_formed else None
        if record.prediction is not None:
            return _from_field(task, record.prediction, cfg)
    except RewardError:
        return None
    if task is Task.SCORING:
        return float(scorer.score(record.slide))
    if task is Task.ADJUSTMENT:
        return scorer.feedback(record.slide).categories
    a, b = (scorer.score(s) for s in record.pair)
    if a == b:
        return None
    return "A" if a > b else "B"


@dataclass(frozen=True)
class RecordResult:
    id: str
    task: Task
    truth: Any
    prediction: Any
    balances: tuple[tuple[str, float | None], ...]


def _balance(slide: SlideDoc) -> float | None:
    try:
        return layout_balance(slide).balance
    except NoElements:
        return None


def evaluate_record(record: EvalRecord, settings: Settings, scorer_url: str | None = None) -> RecordResult:
    scorer = make_scorer(settings, scorer_url)
    pred = predict(record, settings, scorer)
    balances = tuple((s.id or f"{record.id}#{k}", _balance(s)) for k, s in enumerate(record.slides))
    return RecordResult(record.id, record.task, record.truth, pred, balances)


def _evaluate_chunk(args) -> list[RecordResult]:
    records, settings, scorer_url = args
    return [evaluate_record(r, settings, scorer_url) for r in records]


def evaluate_records(
    records: Sequence[EvalRecord], settings: Settings, scorer_url: str | None = None, jobs: int = 1
) -> list[RecordResult]:
    """Per-record results in input order; ``jobs > 1`` fans out over processes."""
    if jobs <= 1 or len(records) < 2:
        return _evaluate_chunk((records, settings, scorer_url))
    size = math.ceil(len(records) / jobs)
    chunks = [(records[i : i + size], settings, scorer_url) for i in range(0, len(records), size)]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return [r for part in pool.map(_evaluate_chunk, chunks) for r in part]


def _stats(values: list[float]) -> dict:
    if not values:
        return {"n": 0, "mean": None, "min": None, "max": None}
    return {"n": len(values), "mean": math.fsum(values) / len(values), "min": min(values), "max": max(values)}


def build_report(results: Sequence[RecordResult], settings: Settings, seed: int | None = None) -> dict:
    """Aggregate per-record results into the report; depends only on the
    ordered results, so sequential and parallel runs agree exactly."""
    tasks: dict[str, dict] = {}
    for task in Task:
        rs = [r for r in results if r.task is task]
        if not rs:
            continue
        invalid = sum(1 for r in rs if r.prediction is None)
        entry: dict[str, Any] = {"n": len(rs), "n_invalid": invalid}
        if task is Task.SCORING:
            ok = [r for r in rs if r.prediction is not None]
            entry["mae"] = mae([r.prediction for r in ok], [float(r.truth) for r in ok]) if ok else None
        elif task is Task.ADJUSTMENT:
            preds = [r.prediction if r.prediction is not None else frozenset() for r in rs]
            entry.update(defect_f1_report(preds, [r.truth for r in rs]).to_dict())
        else:
            entry["accuracy"] = comparison_accuracy([r.prediction for r in rs], [r.truth for r in rs])
        tasks[task.value] = entry

    per_slide = [{"record": r.id, "slide": sid, "balance": b} for r in results for sid, b in r.balances]
    return {
        "schema_version": SCHEMA_VERSION,
        "seed": seed,
        "config_fingerprint": settings.fingerprint(),
        "n_records": len(results),
        "tasks": tasks,
        "corpus": {
            "n_slides": len(per_slide),
            "balance": _stats([s["balance"] for s in per_slide if s["balance"] is not None]),
            "per_slide": per_slide,
        },
    }


def _fmt(v) -> str:
    return "n/a" if v is None else f"{v:.4f}"


def report_markdown(report: dict) -> str:
    """Table of the headline number per task, then corpus statistics."""
    lines = ["| Task | Metric | Value | N | Invalid |", "|---|---|---|---|---|"]
    tasks = report["tasks"]
    if "scoring" in tasks:
        t = tasks["scoring"]
        lines.append(f"| Scoring | MAE | {_fmt(t['mae'])} | {t['n']} | {t['n_invalid']} |")
    if "adjustment" in tasks:
        t = tasks["adjustment"]
        lines.append(f"| Adjustment | macro F1 | {_fmt(t['macro_f1'])} | {t['n']} | {t['n_invalid']} |")
        for cat, s in t["per_category"].items():
            name = DefectCategory(cat).display
            lines.append(f"| Adjustment | F1 {name} | {_fmt(s['f1'])} | {s['support']} | |")
    if "comparison" in tasks:
        t = tasks["comparison"]
        lines.append(f"| Comparison | accuracy | {_fmt(t['accuracy'])} | {t['n']} | {t['n_invalid']} |")
    bal = report["corpus"]["balance"]
    lines += [
        "",
        f"Slides: {report['corpus']['n_slides']}, mean layout balance {_fmt(bal['mean'])} "
        f"(min {_fmt(bal['min'])}, max {_fmt(bal['max'])})",
        f"Config fingerprint: {report['config_fingerprint']}, seed: {report['seed']}",
    ]
    return "\n".join(lines) + "\n"


# -- reward dumps ------------------------------------------------------------------


@dataclass(frozen=True)
class ResponseRecord:
    id: str
    task: Task
    response_text: str
    truth: Any
    group: str | None = None


def read_responses(lines: Iterable[str], truths: dict[str, Any] | None = None) -> list[ResponseRecord]:
    out = []
    for n, text in enumerate(lines, 1):
        if not text.strip():
            continue
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"invalid JSON: {exc.msg}", n) from None
        if not isinstance(obj, dict):
            raise SchemaError("record must be a JSON object", n)
        rid = obj.get("id")
        if not isinstance(rid, str) or not rid:
            raise SchemaError("'id' must be a non-empty string", n)
        try:
            task = Task(obj.get("task"))
        except ValueError:
            raise SchemaError(f"unknown task {obj.get('task')!r}", n) from None
        text_ = obj.get("response_text")
        if not isinstance(text_, str):
            raise SchemaError("'response_text' must be a string", n)
        if "truth" in obj:
            truth = obj["truth"]
        elif truths is not None and rid in truths:
            truth = truths[rid]
        else:
            raise SchemaError(f"no truth for record {rid!r}", n)
        try:
            truth = normalize_truth(task, truth)
        except ValueError as exc:
            raise SchemaError(str(exc), n) from None
        group = obj.get("group")
        out.append(ResponseRecord(rid, task, text_, truth, None if group is None else str(group)))
    if not out:
        raise EmptyDataset("no responses")
    return out


def read_truths(lines: Iterable[str]) -> dict[str, Any]:
    """``{"id": ..., "truth": ...}`` lines keyed by id."""
    out = {}
    for n, text in enumerate(lines, 1):
        if not text.strip():
            continue
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"truths: invalid JSON: {exc.msg}", n) from None
        if not isinstance(obj, dict) or not isinstance(obj.get("id"), str) or "truth" not in obj:
            raise SchemaError("truths: each line needs 'id' and 'truth'", n)
        out[obj["id"]] = obj["truth"]
    return out


def _groups(records: Sequence[ResponseRecord], group_size: int) -> list[list[int]]:
    if all(r.group is None for r in records):
        if len(records) % group_size:
            raise GroupTooSmall(f"{len(records)} responses do not split into groups of {group_size}")
        return [list(range(i, i + group_size)) for i in range(0, len(records), group_size)]
    if any(r.group is None for r in records):
        raise SchemaError("either every response names its group or none does")
    order: dict[str, list[int]] = {}
    for i, r in enumerate(records):
        order.setdefault(r.group, []).append(i)
    for name, idx in order.items():
        if len(idx) != group_size:
            raise GroupTooSmall(f"group {name!r} has {len(idx)} responses, expected {group_size}")
    return list(order.values())


def reward_dump(records: Sequence[ResponseRecord], cfg: RewardConfig, group_size: int | None = None) -> list[dict]:
    """Per-response rewards with group-normalized advantages, in input order."""
    n = cfg.group_size if group_size is None else group_size
    results = [total_reward(parse_tagged(r.response_text), r.task, r.truth, cfg) for r in records]
    advantages: list[float] = [0.0] * len(records)
    group_of: list[str] = [""] * len(records)
    for k, idx in enumerate(_groups(records, n)):
        adv = group_advantages([results[i].r for i in idx]).advantages
        for i, a in zip(idx, adv):
            advantages[i] = a
            group_of[i] = records[i].group if records[i].group is not None else str(k)
    return [
        {
            "schema_version": SCHEMA_VERSION,
            "id": r.id,
            "group": group_of[i],
            "task": r.task.value,
            "r_fmt": res.r_fmt,
            "r_acc": res.r_acc,
            "r": res.r,
            "advantage": advantages[i],
            "error": res.error,
        }
        for i, (r, res) in enumerate(zip(records, results))
    ]


def json_default(obj):
    if isinstance(obj, Decimal):
        return float(obj)
    if isinstance(obj, (set, frozenset)):
        return sorted(c.value if isinstance(c, DefectCategory) else c for c in obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")
