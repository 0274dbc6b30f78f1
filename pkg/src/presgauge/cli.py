"""Command-line entry point: ``presgauge {eval,perturb,refine,reward,plan,score}``.

Reports go to stdout, artifacts to files. Exit codes: 0 success, 2 schema or
usage violation, 3 empty dataset, 4 transport failure talking to an external
scorer.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import random
import sys
from contextlib import contextmanager

from . import figures
from .aesth import HeuristicScorer
from .checker import CheckerError, RevertTo, TransportError, run_refinement
from .harness import (
    EmptyDataset,
    SchemaError,
    build_report,
    evaluate_records,
    json_default,
    load_settings,
    make_scorer,
    read_records,
    read_responses,
    read_truths,
    report_markdown,
    reward_dump,
)
from .perturb import benchmark_records, make_variants, synthetic_corpus
from .planner import ContentManifest, make_refiner, plan_layout
from .render import to_svg
from .rewards import GroupTooSmall, Task
from .slide_model import DecodeError, canonical_json, iter_deck, to_dict

EXIT_SCHEMA, EXIT_EMPTY, EXIT_TRANSPORT = 2, 3, 4
SCORER_ENV = "PRESGAUGE_SCORER_URL"

log = logging.getLogger("presgauge")


class CliFailure(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


@contextmanager
def _open_in(path: str):
    if path == "-":
        yield sys.stdin
    else:
        with open(path, encoding="utf-8") as fh:
            yield fh


def _write_text(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _jsonl(rows) -> str:
    return "".join(canonical_json(r) + "\n" for r in rows)


def _pretty(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=json_default) + "\n"


def _read_deck(path: str):
    with _open_in(path) as fh:
        try:
            slides = list(iter_deck(fh))
        except DecodeError as exc:
            raise CliFailure(EXIT_SCHEMA, str(exc)) from None
    if not slides:
        raise CliFailure(EXIT_EMPTY, f"{path}: no slides")
    return slides


def _scorer_url(args) -> str | None:
    return args.scorer_url or os.environ.get(SCORER_ENV) or None


# -- commands ----------------------------------------------------------------------


def cmd_eval(args, settings) -> None:
    with _open_in(args.dataset) as fh:
        records = read_records(fh)
    if args.task:
        records = [r for r in records if r.task is Task(args.task)]
        if not records:
            raise EmptyDataset(f"no {args.task} records")
    results = evaluate_records(records, settings, _scorer_url(args), jobs=args.jobs)
    report = build_report(results, settings, args.seed)
    if args.format == "md":
        _write_text(None, report_markdown(report))
    else:
        _write_text(None, _pretty(report))
    if args.figures:
        scoring = [r for r in results if r.task is Task.SCORING and r.prediction is not None]
        if scoring:
            figures.scoring_scatter([r.prediction for r in scoring], [float(r.truth) for r in scoring], args.figures)
        adj = report["tasks"].get("adjustment")
        if adj:
            figures.defect_f1_bars({k: v["f1"] for k, v in adj["per_category"].items()}, args.figures)


def cmd_perturb(args, settings) -> None:
    if args.corpus:
        slides = _read_deck(args.corpus)
        if args.count is not None:
            slides = slides[: args.count]
    else:
        slides = synthetic_corpus(args.count if args.count is not None else 10, args.seed, settings.planner)
    records = benchmark_records(slides, args.seed, settings.planner)
    _write_text(args.out, _jsonl(records))
    if not (args.figures or args.poor_deck):
        return
    # same per-slide sub-seeds as the benchmark records
    triples = [
        make_variants(slide, random.Random(f"{args.seed}:{i}").getrandbits(64), settings.planner)
        for i, slide in enumerate(slides)
    ]
    if args.poor_deck:
        _write_text(args.poor_deck, _jsonl(to_dict(v.poor.slide) for v in triples))
    if args.figures:
        scorer = HeuristicScorer(settings.scorer)
        tiers: dict[str, list[float]] = {"poor": [], "base": [], "good": []}
        for triple in triples:
            for v in triple:
                tiers[v.tier.value].append(scorer.score(v.slide))
        figures.tier_scores(tiers, args.figures)


def cmd_refine(args, settings) -> None:
    slides = _read_deck(args.deck)
    url = _scorer_url(args)
    scorer = make_scorer(settings, url)
    refiner = make_refiner(settings.planner)
    out_dir = args.out_dir
    os.makedirs(out_dir, exist_ok=True)
    refined, entries, curves = [], [], {}
    for k, slide in enumerate(slides):
        name = slide.id or f"slide{k}"
        try:
            res = run_refinement(slide, scorer, refiner, args.max_iters, args.threshold, args.revert_to)
        except CheckerError as exc:
            if isinstance(exc.__cause__, TransportError):
                raise CliFailure(EXIT_TRANSPORT, f"transport error: {exc.__cause__}") from None
            raise
        refined.append(res.final)
        curves[name] = res.trace.scores
        if not args.no_svg:
            for rec in res.trace.iterations:
                _write_text(os.path.join(out_dir, "svg", f"{name}_t{rec.t}.svg"), to_svg(rec.slide))
            _write_text(os.path.join(out_dir, "svg", f"{name}_final.svg"), to_svg(res.final))
        entries.append(
            {
                "id": name,
                "initial_score": res.trace.scores[0],
                "final_score": res.final_score,
                "best_so_far": res.trace.best_so_far(),
                "trace": res.trace.to_dict(),
            }
        )
    _write_text(os.path.join(out_dir, "refined.jsonl"), _jsonl(to_dict(s) for s in refined))
    trace = {
        "schema_version": 1,
        "scorer": "external" if url else "heuristic",
        "threshold": args.threshold,
        "max_iters": args.max_iters,
        "revert_to": args.revert_to,
        "config_fingerprint": settings.fingerprint(),
        "slides": entries,
    }
    _write_text(os.path.join(out_dir, "trace.json"), _pretty(trace))
    summary = {
        "schema_version": 1,
        "n_slides": len(entries),
        "reached_threshold": sum(1 for e in entries if e["final_score"] >= args.threshold),
        "slides": [{"id": e["id"], "initial_score": e["initial_score"], "final_score": e["final_score"]} for e in entries],
    }
    _write_text(None, _pretty(summary))
    if args.figures:
        figures.refinement_curves(curves, args.threshold, args.figures)


def cmd_reward(args, settings) -> None:
    truths = None
    if args.truths:
        with _open_in(args.truths) as fh:
            truths = read_truths(fh)
    with _open_in(args.responses) as fh:
        records = read_responses(fh, truths)
    try:
        rows = reward_dump(records, settings.reward, args.group_size)
    except GroupTooSmall as exc:
        raise CliFailure(EXIT_SCHEMA, str(exc)) from None
    _write_text(args.out, _jsonl(rows))


def cmd_plan(args, settings) -> None:
    with _open_in(args.manifest) as fh:
        try:
            manifest = ContentManifest.from_dict(json.load(fh))
        except (ValueError, KeyError, TypeError) as exc:
            raise CliFailure(EXIT_SCHEMA, f"invalid manifest: {exc}") from None
    slide = plan_layout(manifest, aspect_ratio=args.aspect, cfg=settings.planner, slide_id=args.id)
    _write_text(args.out, canonical_json(to_dict(slide)) + "\n")
    if args.svg:
        _write_text(args.svg, to_svg(slide))


def cmd_score(args, settings) -> None:
    slides = _read_deck(args.deck)
    url = _scorer_url(args)
    scorer = make_scorer(settings, url)
    rows = []
    for k, slide in enumerate(slides):
        row = {"schema_version": 1, "id": slide.id or f"slide{k}", "score": scorer.score(slide)}
        if url is None:
            row["breakdown"] = scorer.breakdown(slide).to_dict()
        row["feedback"] = [i.to_dict() for i in scorer.feedback(slide).items]
        rows.append(row)
    _write_text(args.out, _jsonl(rows))


# -- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with reward/planner/scorer overrides")
    common.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="presgauge", description="Slide aesthetics toolkit: metrics, rewards, refinement.")
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("eval", parents=[common], help="evaluate predictions against a labelled dataset")
    e.add_argument("dataset", help="JSONL evaluation records ('-' for stdin)")
    e.add_argument("--task", choices=[t.value for t in Task])
    e.add_argument("--format", choices=("json", "md"), default="json")
    e.add_argument("--jobs", type=int, default=1, help="worker processes")
    e.add_argument("--scorer-url", help=f"external scorer endpoint (default ${SCORER_ENV})")
    e.add_argument("--figures", metavar="DIR", help="also write figures to DIR")
    e.set_defaults(func=cmd_eval)

    b = sub.add_parser("perturb", parents=[common], help="build benchmark preference pairs")
    b.add_argument("corpus", nargs="?", help="JSONL deck; omitted means a synthetic corpus")
    b.add_argument("--count", type=int, help="number of slides (synthetic default 10)")
    b.add_argument("--out", help="output JSONL (default stdout)")
    b.add_argument("--poor-deck", metavar="PATH", help="also write the poor variants as a JSONL deck")
    b.add_argument("--figures", metavar="DIR")
    b.set_defaults(func=cmd_perturb)

    r = sub.add_parser("refine", parents=[common], help="run the score/feedback/refine loop over a deck")
    r.add_argument("deck", help="JSONL deck")
    r.add_argument("--out-dir", required=True)
    r.add_argument("--max-iters", type=int, default=5)
    r.add_argument("--threshold", type=float, default=8.0)
    r.add_argument("--revert-to", choices=[v.value for v in RevertTo], default="previous")
    r.add_argument("--scorer-url", help=f"external scorer endpoint (default ${SCORER_ENV})")
    r.add_argument("--no-svg", action="store_true", help="skip per-iteration SVGs")
    r.add_argument("--figures", metavar="DIR")
    r.set_defaults(func=cmd_refine)

    w = sub.add_parser("reward", parents=[common], help="rewards and group advantages for policy responses")
    w.add_argument("responses", help="JSONL {id, task, response_text, truth?, group?}")
    w.add_argument("--truths", help="JSONL {id, truth} for responses without an inline truth")
    w.add_argument("--group-size", type=int, help="responses per group (default from config, 8)")
    w.add_argument("--out", help="output JSONL (default stdout)")
    w.set_defaults(func=cmd_reward)

    m = sub.add_parser("plan", parents=[common], help="lay out a content manifest")
    m.add_argument("manifest", help="manifest JSON {items: [...]}")
    m.add_argument("--aspect", type=float, default=16 / 9)
    m.add_argument("--id", default="")
    m.add_argument("--out")
    m.add_argument("--svg", help="also write an SVG drawing")
    m.set_defaults(func=cmd_plan)

    s = sub.add_parser("score", parents=[common], help="score every slide of a deck")
    s.add_argument("deck")
    s.add_argument("--scorer-url", help=f"external scorer endpoint (default ${SCORER_ENV})")
    s.add_argument("--out")
    s.set_defaults(func=cmd_score)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        settings = load_settings(args.config)
    except (OSError, ValueError, TypeError) as exc:
        print(f"presgauge: bad config: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    for name in ("max_iters", "jobs", "group_size", "count"):
        value = getattr(args, name, None)
        if value is not None and value < 1:
            print(f"presgauge: --{name.replace('_', '-')} must be at least 1", file=sys.stderr)
            return EXIT_SCHEMA
    try:
        args.func(args, settings)
    except CliFailure as exc:
        print(f"presgauge: {exc}", file=sys.stderr)
        return exc.code
    except SchemaError as exc:
        print(f"presgauge: schema violation: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except EmptyDataset as exc:
        print(f"presgauge: {exc}", file=sys.stderr)
        return EXIT_EMPTY
    except TransportError as exc:
        print(f"presgauge: transport error: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT
    return 0


if __name__ == "__main__":
    sys.exit(main())
