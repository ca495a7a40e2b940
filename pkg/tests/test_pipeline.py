import sys
from dataclasses import replace

import pytest

from tutorhints.domain import FailureKind, Mode, PipelineConfig, RuleVariant, SourceProgram
from tutorhints.gateway import Completion, FinishState
from tutorhints.pipeline import Pipeline, Status, load_results, write_run
from tutorhints.validator import decide

from .conftest import DATA_SCRIPT, FIXTURES, script_spec

sys.path.insert(0, str(FIXTURES))
from make_fixtures import FIG1_HINT, FIG2_HINT, FIG9_HINT, PLANS, TASKS  # noqa: E402


def program(corpus, pid):
    return next(p for p in corpus.programs if p.program_id == pid)


@pytest.fixture(scope="module")
def pipeline(script_config, script_backends, shared_judge):
    tutor, student = script_backends
    return Pipeline(script_config, tutor=tutor, student=student, judge=shared_judge, sample_workers=4)


@pytest.fixture(scope="module")
def corpus_run(script_config, script_backends, shared_judge, basicalgo):
    # own pipeline so the call counter only sees this run
    tutor, student = script_backends
    p = Pipeline(script_config, tutor=tutor, student=student, judge=shared_judge, sample_workers=4)
    return p.run_corpus(basicalgo, workers=4)


def pairs(result):
    return [(t.outcome.n1, t.outcome.n2) if t.outcome else t.failure_reason for t in result.trials]


def test_accepts_on_first_trial(pipeline, basicalgo):
    buggy = program(basicalgo, "palindrome_p6")
    result = pipeline.run_one(basicalgo.task("palindrome"), buggy)
    assert result.status is Status.ACCEPTED
    assert pairs(result) == [(2, 6)]
    assert result.released_hint == FIG1_HINT
    trial = result.trials[0]
    omega = trial.symbolic.omega
    assert (omega.case.case_id, omega.actual_output, omega.failure_kind) == ("c3", "1\n", FailureKind.WRONG_OUTPUT)
    # the closest passing repair is the one-token-group change back to the reference
    assert trial.symbolic.fix.source == TASKS["palindrome"]["reference"]
    assert trial.tutor_calls == 11 and trial.student_calls == 20


def test_rejects_after_three_trials(pipeline, basicalgo):
    result = pipeline.run_one(basicalgo.task("merge"), program(basicalgo, "merge_p6"))
    assert result.status is Status.REJECTED_ALL_TRIALS
    assert pairs(result) == [(8, 0), (6, 0), (5, 0)]
    assert result.released_hint is None and result.released_explanation is None
    omega = result.trials[0].symbolic.omega
    assert omega.case.stdin == "Qh   eyNFX\n"
    assert (omega.actual_output, omega.case.expected_output) == ("eQyhNFX\n", "QehyNFX\n")
    assert all(t.feedback.hint == FIG9_HINT for t in result.trials)


def test_parse_failure_consumes_a_trial(pipeline, basicalgo):
    result = pipeline.run_one(basicalgo.task("digitsum"), program(basicalgo, "digitsum_p3"))
    assert pairs(result) == ["parse_failure", (0, 7)]
    assert result.trials[0].student_calls == 0
    assert result.status is Status.ACCEPTED


def test_no_passing_repair_leaves_fix_empty(pipeline, basicalgo):
    result = pipeline.run_one(basicalgo.task("merge"), program(basicalgo, "merge_p2"))
    first = result.trials[0].symbolic
    assert first.fix is None
    assert first.omega.failure_kind is FailureKind.RUNTIME_ERROR
    assert "IndexError" in first.omega.actual_output
    assert pairs(result) == [(0, 0), (2, 5)] and result.accepted


def test_not_buggy_program_skips_backends(pipeline, basicalgo, script_config, shared_judge):
    class Exploding:
        spec = script_config.tutor_backend

        def complete(self, *a):
            raise AssertionError("backend must not be called")

    p = Pipeline(script_config, tutor=Exploding(), student=Exploding(), judge=shared_judge)
    correct = SourceProgram("palindrome_ok", "palindrome", TASKS["palindrome"]["reference"])
    result = p.run_one(basicalgo.task("palindrome"), correct)
    assert result.status is Status.NOT_BUGGY and result.trials == []


def test_corpus_outcomes_follow_plans(corpus_run):
    results, report = corpus_run
    assert report.n_programs == 25
    assert report.status_counts == {"accepted": 19, "rejected_all_trials": 6, "not_buggy": 0}
    assert report.coverage == 76.0
    for r in results:
        # "nofix" trials still validate (with zero-pass batches); "parse" trials stop at stage 2
        expected = [step if isinstance(step, tuple) else (0, 0) if step == "nofix" else None
                    for step in PLANS[r.program_id]]
        got = [(t.outcome.n1, t.outcome.n2) if t.outcome else None for t in r.trials]
        assert got == expected, r.program_id
        assert r.error is None


def test_budget_per_program(corpus_run, script_config):
    results, report = corpus_run
    n, k = script_config.n_samples, script_config.max_trials_k
    bound = 1 * k + n * k + 2 * n * k
    total = 0
    for r in results:
        calls = sum(t.tutor_calls + t.student_calls for t in r.trials)
        expected = sum(1 + n + (2 * n if t.outcome else 0) for t in r.trials)
        assert calls == expected
        assert calls <= bound
        complete = len(r.trials) == k and all(t.outcome for t in r.trials)
        assert (calls == bound) == complete
        total += calls
    assert sum(report.backend_calls.values()) == total


def _all_sentinel_student(spec):
    class Student:
        def __init__(self):
            self.spec = spec

        def complete(self, prompt, params, index, tag):
            return Completion("Explanation is bad.", index, FinishState.COMPLETE)

    return Student()


def test_all_sentinel_student_rejects(script_config, script_backends, shared_judge, basicalgo):
    tutor, _ = script_backends
    p = Pipeline(script_config, tutor=tutor, student=_all_sentinel_student(script_config.student_backend),
                 judge=shared_judge)
    result = p.run_one(basicalgo.task("palindrome"), program(basicalgo, "palindrome_p6"))
    assert pairs(result)[0] == (0, 0)
    assert result.status is Status.REJECTED_ALL_TRIALS


def test_relative_only_adds_no_hidden_conditions(script_config, script_backends, shared_judge, basicalgo):
    tutor, student = script_backends
    cfg = replace(script_config, rule_variant=RuleVariant.RELATIVE_ONLY)
    results, _ = Pipeline(cfg, tutor=tutor, student=student, judge=shared_judge,
                          sample_workers=4).run_corpus(basicalgo, workers=4)
    for r in results:
        outcomes = [t.outcome for t in r.trials if t.outcome]
        for o in outcomes:
            assert o.accepted == decide(o.n1, o.n2, o.n, variant="relative_only")
        assert r.accepted == any(o.accepted for o in outcomes)
        if r.accepted:
            assert r.trials[-1].outcome.accepted  # stops at the first acceptance


@pytest.mark.parametrize("mode", [Mode.BASE, Mode.IO, Mode.IOFIX])
def test_release_without_validation(mode, script_config, script_backends, shared_judge, basicalgo):
    tutor, student = script_backends
    cfg = replace(script_config, mode=mode)
    result = Pipeline(cfg, tutor=tutor, student=student, judge=shared_judge).run_one(
        basicalgo.task("merge"), program(basicalgo, "merge_p6"))
    assert result.status is Status.ACCEPTED
    assert result.released_hint == FIG9_HINT
    (trial,) = result.trials
    assert trial.outcome is None and trial.student_calls == 0
    assert (trial.symbolic.omega is None) == (mode is Mode.BASE)
    assert (trial.symbolic.fix is not None) == (mode is Mode.IOFIX)
    assert trial.tutor_calls == (11 if mode is Mode.IOFIX else 1)


def test_data_analysis_example(dataanalysis, shared_judge):
    def cfg(mode):
        return PipelineConfig(mode=mode, tutor_backend=script_spec(DATA_SCRIPT, "gpt-4"),
                              student_backend=script_spec(DATA_SCRIPT, "gpt-3.5-turbo"))

    task = dataanalysis.task("chickenpox")
    buggy = program(dataanalysis, "chickenpox_p28")
    io = Pipeline(cfg(Mode.IO), judge=shared_judge).run_one(task, buggy)
    assert io.status is Status.ACCEPTED and io.released_hint == FIG2_HINT
    assert io.trials[0].symbolic.omega.failure_kind is FailureKind.WRONG_OUTPUT
    full = Pipeline(cfg(Mode.FULL), judge=shared_judge).run_one(task, buggy)
    assert pairs(full) == [(2, 7)] and full.released_hint == FIG2_HINT


def test_written_results_round_trip(tmp_path, corpus_run):
    results, report = corpus_run
    write_run(tmp_path, results, report)
    loaded = load_results(tmp_path)
    assert [r["program_id"] for r in loaded] == sorted(r.program_id for r in results)
    by_id = {r.program_id: r.to_json() for r in results}
    assert all(rec == by_id[rec["program_id"]] for rec in loaded)
    assert "elapsed" not in (tmp_path / "results" / "merge_p6.json").read_text()
