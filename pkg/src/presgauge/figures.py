"""Report figures written as PNG files next to the command output."""

from __future__ import annotations

import os
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.ticker import MaxNLocator  # noqa: E402

_META = {"Software": None}


def _save(fig, out_dir: str, name: str) -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, name)
    fig.savefig(path, dpi=100, metadata=_META)
    plt.close(fig)
    return path


def refinement_curves(traces: Mapping[str, Sequence[float]], threshold: float, out_dir: str) -> str:
    """Score per iteration for each slide, with the acceptance threshold."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, scores in sorted(traces.items()):
        ax.plot(range(len(scores)), scores, marker="o", linewidth=1, alpha=0.7, label=name)
    ax.axhline(threshold, color="black", linestyle="--", linewidth=1, label=f"threshold {threshold:g}")
    ax.set_xlabel("iteration")
    ax.xaxis.set_major_locator(MaxNLocator(integer=True))
    ax.set_ylabel("score")
    ax.set_ylim(1, 10.2)
    if len(traces) <= 8:
        ax.legend(fontsize=7, loc="lower right")
    ax.set_title("Refinement trajectories")
    fig.tight_layout()
    return _save(fig, out_dir, "refinement_curves.png")


def tier_scores(scores: Mapping[str, Sequence[float]], out_dir: str) -> str:
    """Box plot of scores per quality tier."""
    order = [t for t in ("poor", "base", "good") if t in scores]
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.boxplot([list(scores[t]) for t in order], tick_labels=order)
    ax.set_ylabel("heuristic score")
    ax.set_ylim(1, 10.2)
    ax.set_title("Scores by variant tier")
    fig.tight_layout()
    return _save(fig, out_dir, "tier_scores.png")


def scoring_scatter(predictions: Sequence[float], truths: Sequence[float], out_dir: str) -> str:
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    ax.scatter(truths, predictions, s=12, alpha=0.7)
    ax.plot([1, 10], [1, 10], color="black", linewidth=1, linestyle="--")
    ax.set_xlim(1, 10)
    ax.set_ylim(1, 10)
    ax.set_xlabel("truth")
    ax.set_ylabel("prediction")
    ax.set_title("Scoring predictions")
    fig.tight_layout()
    return _save(fig, out_dir, "scoring_scatter.png")


def defect_f1_bars(per_category: Mapping[str, float], out_dir: str) -> str:
    names = list(per_category)
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.bar(range(len(names)), [per_category[n] for n in names])
    ax.set_xticks(range(len(names)), names, rotation=15, fontsize=8)
    ax.set_ylim(0, 1)
    ax.set_ylabel("F1")
    ax.set_title("Defect detection by category")
    fig.tight_layout()
    return _save(fig, out_dir, "defect_f1.png")
