import json
import sys
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chi2_contingency
from sklearn.metrics import cohen_kappa_score

from tutorhints.metrics import (
    Annotation,
    AnnotationError,
    build_report,
    chi_square_2xk,
    cohen_kappa,
    format_pct,
    h_overall,
    load_annotations,
    mean_stderr,
    precision_coverage,
)
from tutorhints.validator import ContractError

from .conftest import FIXTURES

sys.path.insert(0, str(FIXTURES))
from make_fixtures import accepted_ids  # noqa: E402


def synthetic(n_programs=25, n_accepted=19, n_good=18, evaluator="e1", not_buggy=0):
    results, annotations = [], []
    for i in range(n_programs + not_buggy):
        pid = f"p{i:02d}"
        status = ("not_buggy" if i >= n_programs else "accepted" if i < n_accepted else "rejected_all_trials")
        results.append({"program_id": pid, "status": status})
        if status == "accepted":
            good = i < n_good
            annotations.append(Annotation(pid, evaluator, 1, 1, int(good), 1, 1))
    return results, annotations


def test_headline_row():
    results, annotations = synthetic()
    precision, coverage = precision_coverage(results, annotations, "e1")
    assert (precision, coverage) == (Fraction(1800, 19), Fraction(76))
    assert (format_pct(precision), format_pct(coverage)) == ("94.7", "76.0")


def test_not_buggy_programs_are_excluded_from_coverage():
    results, annotations = synthetic(not_buggy=5)
    assert precision_coverage(results, annotations, "e1")[1] == 76


def test_nothing_accepted():
    results, _ = synthetic(n_accepted=0, n_good=0)
    precision, coverage = precision_coverage(results, [], "e1")
    assert precision is None and coverage == 0
    assert format_pct(precision) == "—"


def test_missing_annotation_is_an_error():
    results, annotations = synthetic()
    with pytest.raises(AnnotationError, match="p03"):
        precision_coverage(results, [a for a in annotations if a.program_id != "p03"], "e1")


def test_mean_stderr():
    assert mean_stderr([88, 96]) == (92.0, 4.0)
    assert mean_stderr([50]) == (50.0, 0.0)
    assert mean_stderr([70, 70, 70]) == (70.0, 0.0)
    with pytest.raises(ContractError):
        mean_stderr([])


@pytest.mark.parametrize("a,b,expected", [
    ([1, 0, 1, 0], [1, 0, 1, 0], 1.0),
    ([1, 1, 0, 0], [1, 0, 1, 0], 0.0),
    ([1, 0, 1, 0], [0, 1, 0, 1], -1.0),
])
def test_kappa_closed_forms(a, b, expected):
    assert cohen_kappa(a, b) == expected


def test_kappa_degenerate_raters():
    assert cohen_kappa([1, 1, 1], [1, 1, 1]) == 1.0
    with pytest.raises(ContractError):
        cohen_kappa([1], [1, 0])


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 30).flatmap(lambda n: st.tuples(st.lists(st.integers(0, 1), min_size=n, max_size=n),
                                                       st.lists(st.integers(0, 1), min_size=n, max_size=n))))
def test_kappa_matches_sklearn(pair):
    a, b = pair
    if len(set(a) | set(b)) < 2:
        return  # sklearn yields nan when only one label appears
    assert cohen_kappa(a, b) == pytest.approx(cohen_kappa_score(a, b), abs=1e-12)


def test_chi_square_closed_form():
    assert chi_square_2xk([[10, 0], [0, 10]]) == (20.0, 1)


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 5).flatmap(lambda k: st.lists(st.lists(st.integers(1, 60), min_size=k, max_size=k),
                                                    min_size=2, max_size=2)))
def test_chi_square_matches_scipy(table):
    stat, dof = chi_square_2xk(table)
    ref = chi2_contingency(table, correction=False)
    assert stat == pytest.approx(ref[0], rel=1e-9, abs=1e-9)
    assert dof == ref[2]


@pytest.mark.parametrize("table", [[[1, 2]], [[1], [2]], [[0, 0], [1, 2]], [[-1, 2], [3, 4]]])
def test_chi_square_contract(table):
    with pytest.raises(ContractError):
        chi_square_2xk(table)


def test_annotation_invariant():
    with pytest.raises(AnnotationError):
        Annotation("p", "e", 0, 1, 0, 1)
    with pytest.raises(AnnotationError):
        Annotation("p", "e", 0, 0, 1, 1)
    assert h_overall(Annotation("p", "e", 0, 0, 0, 1)) == 0
    assert h_overall(Annotation("p", "e", 1, 1, 1, 1)) == 1


def test_load_annotations_reports_line(tmp_path):
    p = tmp_path / "a.jsonl"
    good = {"program_id": "p", "evaluator_id": "e", "h_correct": 1, "h_informative": 1,
            "h_conceal": 1, "h_comprehensible": 1}
    p.write_text(json.dumps(good) + "\n\n" + json.dumps({**good, "h_correct": 0}) + "\n")
    with pytest.raises(AnnotationError, match=":3:"):
        load_annotations(p)


def test_report_over_two_evaluators():
    results, a1 = synthetic(evaluator="e1")
    _, a2 = synthetic(n_good=19, evaluator="e2")
    report = build_report(results, a1 + a2)
    assert report.per_evaluator["e1"][0] == pytest.approx(1800 / 19)
    assert report.per_evaluator["e2"][0] == 100.0
    assert report.coverage_mean == 76.0 and report.coverage_stderr == 0.0
    # e2 rates every hint good: constant rater, so no agreement beyond chance
    assert report.kappa["h_overall"] == 0.0
    assert report.kappa["h_correct"] == 1.0
    table = report.table().splitlines()
    assert table[1] == "all evaluators\t97.4 (2.6)\t76.0"


def test_fixture_annotations(basicalgo):
    accepted = set(accepted_ids())
    results = [{"program_id": p.program_id, "status": "accepted" if p.program_id in accepted
                else "rejected_all_trials"} for p in basicalgo.programs]
    annotations = [a for f in sorted((FIXTURES / "basicalgo.annotations").glob("*.jsonl"))
                   for a in load_annotations(f)]
    report = build_report(results, annotations)
    assert format_pct(report.precision_mean) == "94.7" and format_pct(report.precision_stderr) == "0.0"
    assert format_pct(report.coverage_mean) == "76.0"
    assert report.kappa["h_overall"] == 1.0
