"""End-to-end acceptance criteria, one test each.

Every test records a PASS/FAIL line that the terminal summary prints under
"acceptance criteria"; the assertion then enforces the stated tolerance.
"""

from __future__ import annotations

import itertools
import json
import math
import random
import statistics
import time

from conftest import ACCEPTANCE
from helpers import fixture_path, random_disjoint_slide, rect
from presgauge.aesth import HeuristicScorer
from presgauge.checker import Feedback, run_refinement
from presgauge.cli import main
from presgauge.harness import Settings, build_report, evaluate_records, read_records
from presgauge.metrics import layout_balance, lcs_length
from presgauge.perturb import make_variants, synthetic_corpus
from presgauge.render import raster_balance, rasterize
from presgauge.rewards import RewardConfig, Task, group_advantages, grpo_surrogate, parse_tagged, total_reward
from presgauge.slide_model import SlideDoc

CORPUS_SEED = 2024


def record(number: int, name: str, passed: bool, detail: str) -> None:
    ACCEPTANCE.append((number, name, passed, detail))
    print(f"{'PASS' if passed else 'FAIL'}  {number:>2}. {name}: {detail}")
    assert passed, detail


def cli(capsys, *argv) -> tuple[int, str]:
    code = main([str(a) for a in argv])
    return code, capsys.readouterr().out


def test_01_metric_exactness():
    d_max = math.sqrt(2) / 2
    cases = {
        "centred": (SlideDoc((rect("a", 0.3, 0.3, 0.4, 0.4),)), 1.0),
        "symmetric pair": (SlideDoc((rect("a", 0.15, 0.4, 0.2, 0.2), rect("b", 0.65, 0.4, 0.2, 0.2))), 1.0),
        # masses 0.15 at (0.5, 0.5) and 0.05 at (0.9, 0.5): centre of mass 0.1 right of centre
        "3:1 offset": (SlideDoc((rect("a", 0.35, 0.25, 0.3, 0.5), rect("b", 0.85, 0.25, 0.1, 0.5))), 1 - 0.1 / d_max),
    }
    errs = {k: abs(layout_balance(s).balance - want) for k, (s, want) in cases.items()}
    offset = layout_balance(cases["3:1 offset"][0]).balance
    slide = synthetic_corpus(1, 0)[0]
    t0 = time.perf_counter()
    for _ in range(1000):
        layout_balance(slide)
    per_slide = (time.perf_counter() - t0) / 1000
    ok = max(errs.values()) <= 1e-9 and round(offset, 5) == 0.85858 and per_slide < 1e-3
    record(1, "metric exactness", ok, f"max error {max(errs.values()):.1e}, 3:1 case {offset:.5f}, {per_slide * 1e6:.1f} us/slide")


def brute_lcs(a, b) -> int:
    for k in range(len(a), 0, -1):
        for idx in itertools.combinations(range(len(a)), k):
            it = iter(b)
            if all(a[i] in it for i in idx):
                return k
    return 0


def test_02_rouge_oracle():
    rng = random.Random(2)
    t0 = time.perf_counter()
    mismatches = 0
    for _ in range(500):
        a = [rng.choice("abcde") for _ in range(rng.randint(0, 8))]
        b = [rng.choice("abcde") for _ in range(rng.randint(0, 8))]
        mismatches += lcs_length(a, b) != brute_lcs(a, b)
    elapsed = time.perf_counter() - t0
    record(2, "ROUGE-L oracle equivalence", mismatches == 0 and elapsed < 5, f"{mismatches} mismatches in 500 pairs, {elapsed:.2f} s")


def test_03_reward_fidelity():
    cfg = RewardConfig()
    with open(fixture_path("scoring_response.txt"), encoding="utf-8") as fh:
        scoring = total_reward(parse_tagged(fh.read()), Task.SCORING, "8.00", cfg)
    comparison = total_reward(parse_tagged("<think>B is cleaner</think><answer>Slide B</answer>"), Task.COMPARISON, "B", cfg)
    got = (scoring.r_fmt, scoring.r_acc, scoring.r)
    ok = cfg.zeta == 0.25 and got == (1, 0, 1) and comparison.r_acc == 1
    record(3, "reward fidelity", ok, f"scoring (r_fmt, r_acc, r) = {got}, comparison r_acc = {comparison.r_acc}")


def test_04_advantage_normalization():
    rng = random.Random(4)
    worst_mean = worst_sd = 0.0
    zero_groups = bad_zero = 0
    for _ in range(1000):
        support = rng.sample([0, 1, 2], rng.randint(1, 3))
        rewards = [rng.choice(support) for _ in range(8)]
        adv = group_advantages(rewards).advantages
        if statistics.pvariance(rewards) > 0:
            worst_mean = max(worst_mean, abs(statistics.fmean(adv)))
            worst_sd = max(worst_sd, abs(statistics.pstdev(adv) - 1))
        else:
            zero_groups += 1
            bad_zero += any(a != 0 for a in adv)
    ok = worst_mean <= 1e-9 and worst_sd <= 1e-9 and bad_zero == 0
    detail = f"max |mean| {worst_mean:.1e}, max |std - 1| {worst_sd:.1e}, {zero_groups} zero-variance groups all zero: {bad_zero == 0}"
    record(4, "advantage normalization", ok, detail)


def test_05_surrogate_objective():
    rng = random.Random(5)
    exact = True
    no_kl = RewardConfig(kl_beta=0.0)
    for _ in range(200):
        adv = group_advantages([rng.choice([0, 1, 2]) for _ in range(8)]).advantages
        exact &= grpo_surrogate([1.0] * 8, adv, 0.0, no_kl) == math.fsum(adv) / 8
    # (ratio, advantage) -> min(ratio * A, clip(ratio, 0.8, 1.2) * A)
    hand = {(1.5, 1.0): 1.2, (1.5, -1.0): -1.5, (0.5, -1.0): -0.8, (0.5, 1.0): 0.5, (1.1, 2.0): 2.2}
    worst = max(abs(grpo_surrogate([r], [a], 0.0, no_kl) - want) for (r, a), want in hand.items())
    record(5, "surrogate objective", exact and worst <= 1e-12, f"unit-ratio case exact: {exact}, clipping max error {worst:.1e}")


class Scripted:
    def __init__(self, scores):
        self.scores, self.calls = list(scores), 0

    def score(self, slide):
        self.calls += 1
        return self.scores[self.calls - 1]

    def feedback(self, slide):
        return Feedback()


def _versions():
    made = []

    def refiner(slide, fb):
        made.append(slide.id)
        return SlideDoc(id=f"S{len(made)}")

    return made, refiner


def test_06_refinement_semantics():
    s0 = SlideDoc(id="S0")
    failures = []

    sc, (made, ref) = Scripted([9.0] * 5), _versions()
    res = run_refinement(s0, sc, ref, max_iters=5, threshold=8.0)
    if not (sc.calls == 1 and made == [] and res.final is s0 and res.trace.early_exit):
        failures.append("constant 9")

    sc, (made, ref) = Scripted([5, 4, 6]), _versions()
    res = run_refinement(s0, sc, ref, max_iters=3, threshold=8.0)
    flags = [r.reverted for r in res.trace.iterations]
    if not (sc.calls == 3 and made == ["S0", "S0"] and flags == [False, True, False] and res.final.id == "S2" and res.final_score == 6):
        failures.append("5,4,6")

    sc, (made, ref) = Scripted([5, 6, 8.2]), _versions()
    res = run_refinement(s0, sc, ref, max_iters=5, threshold=8.0)
    if not (sc.calls == 3 and res.final.id == "S2" and res.final_score == 8.2 and res.trace.early_exit):
        failures.append("5,6,8.2")

    rng = random.Random(6)
    breaches = 0
    for _ in range(10_000):
        n = rng.randint(1, 7)
        scores = [round(rng.uniform(1, 10), 2) for _ in range(n)]
        _, ref = _versions()
        res = run_refinement(s0, Scripted(scores), ref, max_iters=n, threshold=rng.choice([5.0, 8.0, 9.5]), revert_to=rng.choice(["previous", "best"]))
        breaches += res.final_score != max(res.trace.scores)
    ok = not failures and breaches == 0
    record(6, "refinement loop semantics", ok, f"hand traces failing: {failures or 'none'}; final != max in {breaches}/10000 sequences")


def test_07_raster_cross_check():
    rng = random.Random(7)
    bound = 2 / 512
    errors = []
    for _ in range(200):
        slide = random_disjoint_slide(rng)
        errors.append(abs(raster_balance(rasterize(slide, 512, 512)).balance - layout_balance(slide).balance))
    over = sum(e > bound for e in errors)
    detail = f"{over}/200 slides exceed 2/512 (worst {max(errors) * 512:.2f}/512, median {statistics.median(errors) * 512:.2f}/512)"
    record(7, "raster cross-check", over == 0, detail)


def test_08_perturbation_corpus_separation(tmp_path, capsys):
    slides = synthetic_corpus(50, CORPUS_SEED)
    scorer = HeuristicScorer()
    hits = 0
    for i, slide in enumerate(slides):
        v = make_variants(slide, random.Random(f"{CORPUS_SEED}:{i}").getrandbits(64))
        good, base, poor = (scorer.score(x.slide) for x in (v.good, v.base, v.poor))
        hits += good >= base > poor
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    cli(capsys, "perturb", "--count", 50, "--seed", CORPUS_SEED, "--out", a)
    cli(capsys, "perturb", "--count", 50, "--seed", CORPUS_SEED, "--out", b)
    same = a.read_bytes() == b.read_bytes()
    record(8, "perturbation corpus separation", hits / 50 >= 0.9 and same, f"good >= base > poor on {hits}/50 slides, files identical: {same}")


def test_09_end_to_end_refinement(tmp_path, capsys):
    poor = tmp_path / "poor.jsonl"
    cli(capsys, "perturb", "--count", 50, "--seed", CORPUS_SEED, "--poor-deck", poor, "--out", tmp_path / "pairs.jsonl")
    t0 = time.perf_counter()
    # one initial score plus up to three refinement iterations
    code, out = cli(capsys, "refine", poor, "--out-dir", tmp_path / "run", "--max-iters", 4, "--threshold", 8.0, "--no-svg")
    elapsed = time.perf_counter() - t0
    trace = json.loads((tmp_path / "run" / "trace.json").read_text())["slides"]
    lifted = sum(e["initial_score"] < 6.0 and e["final_score"] >= 8.0 for e in trace)
    monotone = all(all(x <= y for x, y in zip(e["best_so_far"], e["best_so_far"][1:])) for e in trace)
    ok = code == 0 and lifted / len(trace) >= 0.8 and monotone and elapsed < 10
    detail = f"{lifted}/{len(trace)} lifted from < 6.0 to >= 8.0, best-so-far monotone: {monotone}, {elapsed:.2f} s"
    record(9, "end-to-end refinement", ok, detail)


def test_10_harness_determinism(tmp_path, capsys):
    pairs_a, pairs_b = tmp_path / "pa.jsonl", tmp_path / "pb.jsonl"
    cli(capsys, "perturb", "--count", 8, "--seed", 10, "--out", pairs_a)
    cli(capsys, "perturb", "--count", 8, "--seed", 10, "--out", pairs_b)
    perturb_same = pairs_a.read_bytes() == pairs_b.read_bytes()

    eval_runs = [cli(capsys, "eval", pairs_a, "--seed", 10, *extra)[1] for extra in ((), (), ("--jobs", "4"))]
    eval_same = eval_runs[0] == eval_runs[1]
    parallel_same = eval_runs[0] == eval_runs[2]
    records = read_records(pairs_a.read_text().splitlines())
    seq = build_report(evaluate_records(records, Settings()), Settings(), 10)
    par = build_report(evaluate_records(records, Settings(), jobs=3), Settings(), 10)
    parallel_same &= json.dumps(seq, sort_keys=True) == json.dumps(par, sort_keys=True)

    rng = random.Random(10)
    rows = [
        {"id": f"r{i}", "task": "scoring", "truth": "7.00", "response_text": f"<think>t</think><answer>{rng.choice(['7.00', '7.10', '6.00', '9.50'])}</answer>"}
        for i in range(16)
    ]
    responses = tmp_path / "resp.jsonl"
    responses.write_text("".join(json.dumps(r) + "\n" for r in rows))
    reward_same = cli(capsys, "reward", responses)[1] == cli(capsys, "reward", responses)[1]

    ok = perturb_same and eval_same and reward_same and parallel_same
    detail = f"perturb {perturb_same}, eval {eval_same}, reward {reward_same}, parallel == sequential {parallel_same}"
    record(10, "harness determinism", ok, detail)
