"""Rubric aggregation, precision/coverage, agreement and contingency statistics."""

from __future__ import annotations

import json
import math
import os
import statistics
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations
from pathlib import Path
from typing import Any

from .validator import ContractError

__all__ = [
    "ATTRIBUTES",
    "Annotation",
    "AnnotationError",
    "MetricReport",
    "build_report",
    "chi_square_2xk",
    "cohen_kappa",
    "format_pct",
    "h_overall",
    "load_annotations",
    "mean_stderr",
    "precision_coverage",
]

ATTRIBUTES = ("h_correct", "h_informative", "h_conceal", "h_comprehensible", "e_correct")


class AnnotationError(ValueError):
    pass


@dataclass(frozen=True)
class Annotation:
    program_id: str
    evaluator_id: str
    h_correct: int
    h_informative: int
    h_conceal: int
    h_comprehensible: int
    e_correct: int = 0

    def __post_init__(self) -> None:
        for name in ATTRIBUTES:
            if getattr(self, name) not in (0, 1):
                raise AnnotationError(f"{self.program_id}/{self.evaluator_id}: {name} must be 0 or 1")
        # an incorrect hint cannot be rated informative or concealing
        if self.h_correct == 0 and (self.h_informative or self.h_conceal):
            raise AnnotationError(
                f"{self.program_id}/{self.evaluator_id}: h_correct=0 requires h_informative=0 and h_conceal=0"
            )


def h_overall(a: Annotation) -> int:
    return int(a.h_correct and a.h_informative and a.h_conceal and a.h_comprehensible)


def load_annotations(path: str | os.PathLike[str]) -> list[Annotation]:
    """One JSON object per line; blank lines ignored."""
    out = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            raw = json.loads(line)
            out.append(Annotation(**raw))
        except (json.JSONDecodeError, TypeError) as exc:
            raise AnnotationError(f"{path}:{lineno}: {exc}") from None
        except AnnotationError as exc:
            raise AnnotationError(f"{path}:{lineno}: {exc}") from None
    return out


def _records(results: Iterable[Any]) -> list[Mapping[str, Any]]:
    # accepts PipelineResult objects or their JSON records
    return [r.to_json() if hasattr(r, "to_json") else r for r in results]


def _accepted_ids(results: Iterable[Mapping[str, Any]]) -> list[str]:
    return [r["program_id"] for r in results if r["status"] == "accepted"]


def _buggy(results: Iterable[Mapping[str, Any]]) -> list[Mapping[str, Any]]:
    return [r for r in results if r["status"] != "not_buggy"]


def precision_coverage(
    results: Sequence[Mapping[str, Any]],
    annotations: Sequence[Annotation],
    evaluator: str,
) -> tuple[Fraction | None, Fraction]:
    """Exact (precision, coverage) percentages for one evaluator.

    ``results`` are result records (``program_id``/``status`` keys).  Precision
    is None when nothing was accepted.  Programs that turned out not buggy are
    excluded from the coverage denominator.
    """
    pool = _buggy(_records(results))
    accepted = _accepted_ids(pool)
    coverage = Fraction(100 * len(accepted), len(pool)) if pool else Fraction(0)
    if not accepted:
        return None, coverage
    mine = {a.program_id: a for a in annotations if a.evaluator_id == evaluator}
    missing = [pid for pid in accepted if pid not in mine]
    if missing:
        raise AnnotationError(f"evaluator {evaluator}: missing annotations for {', '.join(missing)}")
    good = sum(h_overall(mine[pid]) for pid in accepted)
    return Fraction(100 * good, len(accepted)), coverage


def mean_stderr(values: Sequence[float]) -> tuple[float, float]:
    if not values:
        raise ContractError("mean_stderr needs at least one value")
    mean = statistics.fmean(values)
    if len(values) == 1 or len(set(values)) == 1:
        return mean, 0.0
    return mean, statistics.stdev(values) / math.sqrt(len(values))


def cohen_kappa(a: Sequence[int], b: Sequence[int]) -> float:
    if len(a) != len(b):
        raise ContractError(f"length mismatch: {len(a)} vs {len(b)}")
    if not a:
        raise ContractError("cohen_kappa needs at least one pair")
    n = len(a)
    labels = set(a) | set(b)
    p_o = Fraction(sum(x == y for x, y in zip(a, b)), n)
    p_e = sum(Fraction(list(a).count(k), n) * Fraction(list(b).count(k), n) for k in labels)
    if p_e == 1:
        return 1.0 if p_o == 1 else 0.0
    return float((p_o - p_e) / (1 - p_e))


def chi_square_2xk(table: Sequence[Sequence[float]]) -> tuple[float, int]:
    """Pearson statistic and degrees of freedom for a 2 x k contingency table."""
    if len(table) != 2 or len(table[0]) != len(table[1]) or len(table[0]) < 2:
        raise ContractError("expected a 2 x k table with k >= 2")
    if any(x < 0 for row in table for x in row):
        raise ContractError("counts must be non-negative")
    rows = [sum(r) for r in table]
    cols = [table[0][j] + table[1][j] for j in range(len(table[0]))]
    if 0 in rows or 0 in cols:
        raise ContractError("table has an all-zero row or column")
    total = sum(rows)
    stat = 0.0
    for i in range(2):
        for j, col in enumerate(cols):
            expected = rows[i] * col / total
            stat += (table[i][j] - expected) ** 2 / expected
    return stat, len(cols) - 1


def format_pct(value: float | Fraction | None) -> str:
    return "—" if value is None else f"{float(value):.1f}"


@dataclass
class MetricReport:
    per_evaluator: dict[str, tuple[float | None, float]]
    precision_mean: float | None
    precision_stderr: float | None
    coverage_mean: float
    coverage_stderr: float
    kappa: dict[str, float | None]
    n_results: int
    n_accepted: int

    def to_json(self) -> dict[str, Any]:
        return {
            "per_evaluator": {
                k: {"precision": None if p is None else round(p, 1), "coverage": round(c, 1)}
                for k, (p, c) in sorted(self.per_evaluator.items())
            },
            "precision": {"mean": _r(self.precision_mean), "stderr": _r(self.precision_stderr)},
            "coverage": {"mean": _r(self.coverage_mean), "stderr": _r(self.coverage_stderr)},
            "kappa": {k: None if v is None else round(v, 4) for k, v in self.kappa.items()},
            "n_results": self.n_results,
            "n_accepted": self.n_accepted,
        }

    def table(self) -> str:
        """Plain-text table: precision as mean (stderr), coverage, then per evaluator."""
        lines = ["technique\tprecision\tcoverage"]
        prec = "—" if self.precision_mean is None else (
            f"{format_pct(self.precision_mean)} ({format_pct(self.precision_stderr)})")
        lines.append(f"all evaluators\t{prec}\t{format_pct(self.coverage_mean)}")
        for ev, (p, c) in sorted(self.per_evaluator.items()):
            lines.append(f"{ev}\t{format_pct(p)}\t{format_pct(c)}")
        if self.kappa:
            lines.append("kappa\t" + "\t".join(
                f"{k}={'—' if v is None else f'{v:.2f}'}" for k, v in self.kappa.items()))
        return "\n".join(lines)


def _r(x: float | None) -> float | None:
    return None if x is None else round(x, 1)


def _pairwise_kappa(accepted: list[str], by_eval: dict[str, dict[str, Annotation]], attr: str) -> float | None:
    values = []
    for e1, e2 in combinations(sorted(by_eval), 2):
        shared = [pid for pid in accepted if pid in by_eval[e1] and pid in by_eval[e2]]
        if not shared:
            continue
        get = (lambda a: h_overall(a)) if attr == "h_overall" else (lambda a: getattr(a, attr))
        values.append(cohen_kappa([get(by_eval[e1][p]) for p in shared],
                                  [get(by_eval[e2][p]) for p in shared]))
    return statistics.fmean(values) if values else None


def build_report(results: Sequence[Mapping[str, Any]], annotations: Sequence[Annotation]) -> MetricReport:
    """Aggregate across evaluators; kappa per attribute and on the overall bit.

    With more than two evaluators kappa is the mean over evaluator pairs.
    """
    results = _records(results)
    evaluators = sorted({a.evaluator_id for a in annotations})
    if not evaluators:
        raise AnnotationError("no annotations given")
    per = {}
    for ev in evaluators:
        p, c = precision_coverage(results, annotations, ev)
        per[ev] = (None if p is None else float(p), float(c))
    precisions = [p for p, _ in per.values() if p is not None]
    coverages = [c for _, c in per.values()]
    pm, ps = mean_stderr(precisions) if precisions else (None, None)
    cm, cs = mean_stderr(coverages)
    accepted = _accepted_ids(_buggy(results))
    by_eval: dict[str, dict[str, Annotation]] = {}
    for a in annotations:
        by_eval.setdefault(a.evaluator_id, {})[a.program_id] = a
    kappa: dict[str, float | None] = {}
    if len(evaluators) >= 2:
        for attr in ("h_overall", *ATTRIBUTES):
            kappa[attr] = _pairwise_kappa(accepted, by_eval, attr)
    return MetricReport(per, pm, ps, cm, cs, kappa, len(_buggy(results)), len(accepted))
