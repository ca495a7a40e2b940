"""Figures written next to the tabular report outputs."""

from __future__ import annotations

import os
from collections.abc import Mapping, Sequence
from typing import Any

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

__all__ = ["plot_metrics", "plot_trials"]

STYLE = {
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
    "svg.hashsalt": "tutorhints",
}


def plot_trials(results: Sequence[Mapping[str, Any]], path: str | os.PathLike[str]) -> str | None:
    """Grouped bars of n1 (standard) and n2 (with feedback) for every validated trial.

    Returns the path written, or None when no trial carries validation counts.
    """
    labels, n1s, n2s, accepted = [], [], [], []
    for r in results:
        for t in r["trials"]:
            o = t.get("outcome")
            if not o:
                continue
            labels.append(f"{r['program_id']}#{t['trial_index']}")
            n1s.append(o["n1"])
            n2s.append(o["n2"])
            accepted.append(o["accepted"])
    if not labels:
        return None
    n = max(o["n"] for r in results for t in r["trials"] if (o := t.get("outcome")))
    with plt.rc_context(STYLE):
        width = max(4.0, 0.45 * len(labels) + 1.5)
        fig, ax = plt.subplots(figsize=(width, 3.2))
        xs = range(len(labels))
        ax.bar([x - 0.2 for x in xs], n1s, width=0.4, label="n1 (standard)", color="#9aa5b1")
        ax.bar([x + 0.2 for x in xs], n2s, width=0.4, label="n2 (with feedback)",
               color=["#2f855a" if a else "#c53030" for a in accepted])
        ax.set_xticks(list(xs))
        ax.set_xticklabels(labels, rotation=60, ha="right", fontsize=7)
        ax.set_ylim(0, n)
        ax.set_ylabel("passing repairs")
        ax.legend(frameon=False, loc="upper right")
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return str(path)


def plot_metrics(per_evaluator: Mapping[str, tuple[float | None, float]],
                 path: str | os.PathLike[str]) -> str:
    """Precision and coverage per evaluator, in percent."""
    names = sorted(per_evaluator)
    prec = [per_evaluator[k][0] or 0.0 for k in names]
    cov = [per_evaluator[k][1] for k in names]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(max(3.5, 1.2 * len(names) + 1.5), 3.0))
        xs = range(len(names))
        ax.bar([x - 0.2 for x in xs], prec, width=0.4, label="precision", color="#2b6cb0")
        ax.bar([x + 0.2 for x in xs], cov, width=0.4, label="coverage", color="#dd6b20")
        ax.set_xticks(list(xs))
        ax.set_xticklabels(names)
        ax.set_ylim(0, 100)
        ax.set_ylabel("%")
        ax.legend(frameon=False, loc="lower right")
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return str(path)
