"""Generate-and-validate loop over buggy programs.

One trial = symbolic data (failing case, closest passing repair) ->
tutor feedback -> simulated-student validation.  Up to ``max_trials_k``
trials per program; each trial samples afresh.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any

from .codedist import select_fix
from .domain import (
    Corpus,
    FailingCaseReport,
    FeedbackBundle,
    Mode,
    Payload,
    PipelineConfig,
    ProgrammingTask,
    ProgramRole,
    SourceProgram,
)
from .gateway import (
    BackendConfigError,
    CallCounter,
    Completion,
    FinishState,
    ParseFailure,
    ReplayMiss,
    RequestTag,
    SampleParams,
    cache_for,
    derive_seed,
    make_backend,
    parse_feedback,
    parse_program,
    sample,
)
from .judge import Judge, first_failing
from .prompts import (
    render_generation_prompt,
    render_repair_prompt,
    render_validation_prompt,
)
from .validator import ValidationOutcome, decide

__all__ = [
    "Pipeline",
    "PipelineResult",
    "RunReport",
    "Status",
    "SymbolicInfo",
    "TrialFailure",
    "TrialRecord",
    "load_results",
    "write_run",
]

log = logging.getLogger(__name__)


class Status(str, Enum):
    ACCEPTED = "accepted"
    REJECTED_ALL_TRIALS = "rejected_all_trials"
    NOT_BUGGY = "not_buggy"


class TrialFailure(Exception):
    def __init__(self, reason: str, detail: str = "") -> None:
        super().__init__(f"{reason}: {detail}" if detail else reason)
        self.reason = reason


@dataclass(frozen=True)
class SymbolicInfo:
    omega: FailingCaseReport | None = None
    fix: SourceProgram | None = None
    candidates_evaluated: int = 0

    def to_json(self) -> dict[str, Any]:
        return {
            "omega": self.omega.to_json() if self.omega else None,
            "fix": None if self.fix is None else {"program_id": self.fix.program_id, "source": self.fix.source},
            "candidates_evaluated": self.candidates_evaluated,
        }


@dataclass
class TrialRecord:
    trial_index: int
    symbolic: SymbolicInfo
    feedback: FeedbackBundle | None = None
    outcome: ValidationOutcome | None = None
    failure_reason: str | None = None  # "parse_failure" | "backend_failure"
    prompt_digests: dict[str, str] = field(default_factory=dict)
    tutor_calls: int = 0
    student_calls: int = 0

    def to_json(self) -> dict[str, Any]:
        fb = self.feedback
        return {
            "trial_index": self.trial_index,
            "symbolic": self.symbolic.to_json(),
            "feedback": None if fb is None else {"explanation": fb.explanation, "hint": fb.hint,
                                                 "raw_completion": fb.raw_completion},
            "outcome": self.outcome.to_json() if self.outcome else None,
            "failure_reason": self.failure_reason,
            "prompt_digests": dict(sorted(self.prompt_digests.items())),
            "tutor_calls": self.tutor_calls,
            "student_calls": self.student_calls,
        }


@dataclass
class PipelineResult:
    program_id: str
    task_id: str
    mode: Mode
    trials: list[TrialRecord] = field(default_factory=list)
    released_hint: str | None = None
    released_explanation: str | None = None
    status: Status = Status.REJECTED_ALL_TRIALS
    error: str | None = None

    @property
    def accepted(self) -> bool:
        return self.status is Status.ACCEPTED

    def to_json(self) -> dict[str, Any]:
        return {
            "program_id": self.program_id,
            "task_id": self.task_id,
            "mode": self.mode.value,
            "status": self.status.value,
            "released_hint": self.released_hint,
            "released_explanation": self.released_explanation,
            "error": self.error,
            "trials": [t.to_json() for t in self.trials],
        }


@dataclass
class RunReport:
    corpus: str
    mode: str
    n_programs: int
    status_counts: dict[str, int]
    coverage: float | None  # percent of buggy programs with released feedback
    backend_calls: dict[str, int]
    cache_hits: int
    judge_executions: int
    elapsed_seconds: float
    config: dict[str, Any]

    def to_json(self) -> dict[str, Any]:
        return dict(self.__dict__)


def _digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


class Pipeline:
    """Runs the three stages for programs of a corpus.

    Backends are built from the config unless passed explicitly (tests pass
    counting or fake backends).  ``sample_workers`` bounds concurrent
    requests within one sampling call.
    """

    def __init__(self, config: PipelineConfig, *, tutor=None, student=None,
                 judge: Judge | None = None, counter: CallCounter | None = None,
                 sample_workers: int = 1) -> None:
        self.config = config
        self.tutor = tutor if tutor is not None else make_backend(config.tutor_backend)
        self.student = student if student is not None else make_backend(config.student_backend)
        self.tutor_cache = cache_for(self.tutor.spec, config.cache_dir)
        self.student_cache = cache_for(self.student.spec, config.cache_dir)
        self.judge = judge or Judge(config.limits)
        self.counter = counter or CallCounter()
        self.sample_workers = sample_workers

    # -- helpers ----------------------------------------------------------

    def _params(self, temperature: float, count: int, *seed_parts: Any) -> SampleParams:
        return SampleParams(temperature, count, derive_seed(self.config.seed, *seed_parts))

    def _draw(self, backend, cache, prompt: str, params: SampleParams, tag: RequestTag) -> list[Completion]:
        return sample(backend, prompt, params, cache=cache, tag=tag, counter=self.counter,
                      workers=self.sample_workers)

    def _count_passing(self, task: ProgrammingTask, buggy: SourceProgram,
                       completions: list[Completion], label: str) -> int:
        passed = 0
        for c in completions:
            prog = parse_program(c, program_id=f"{buggy.program_id}.{label}{c.index}", task_id=task.task_id)
            if prog is not None and self.judge.evaluate(prog, task).all_passed:
                passed += 1
        return passed

    # -- stages -----------------------------------------------------------

    def stage1_symbolic(self, task: ProgrammingTask, buggy: SourceProgram, trial: int = 1,
                        record: TrialRecord | None = None) -> SymbolicInfo:
        cfg = self.config
        if cfg.mode is Mode.BASE:
            return SymbolicInfo()
        omega = first_failing(self.judge.evaluate(buggy, task))
        if cfg.mode is Mode.IO:
            return SymbolicInfo(omega=omega)
        prompt = render_repair_prompt(task, buggy)
        params = self._params(cfg.sample_temperature, cfg.n_samples, buggy.program_id, trial, "repair")
        completions = self._draw(self.tutor, self.tutor_cache, prompt, params,
                                 RequestTag(buggy.program_id, trial, "repair"))
        if record is not None:
            record.tutor_calls += len(completions)
            record.prompt_digests["repair"] = _digest(prompt)
        candidates = []
        for c in completions:
            prog = parse_program(c, program_id=f"{buggy.program_id}.t{trial}.repair{c.index}",
                                 task_id=task.task_id)
            if prog is not None:
                candidates.append((prog, self.judge.evaluate(prog, task)))
        fix = select_fix(buggy, candidates)
        if fix is not None:
            fix = replace(fix, role=ProgramRole.SELECTED_FIX)
        return SymbolicInfo(omega=omega, fix=fix, candidates_evaluated=len(candidates))

    def stage2_feedback(self, task: ProgrammingTask, buggy: SourceProgram, symbolic: SymbolicInfo,
                        trial: int = 1, record: TrialRecord | None = None) -> FeedbackBundle:
        prompt = render_generation_prompt(task, buggy, symbolic.omega, symbolic.fix)
        params = self._params(self.config.gen_temperature, 1, buggy.program_id, trial, "generation")
        (completion,) = self._draw(self.tutor, self.tutor_cache, prompt, params,
                                   RequestTag(buggy.program_id, trial, "generation"))
        if record is not None:
            record.tutor_calls += 1
            record.prompt_digests["generation"] = _digest(prompt)
        if completion.finish_state is FinishState.BACKEND_ERROR:
            raise TrialFailure("backend_failure")
        try:
            return parse_feedback(completion)
        except ParseFailure as exc:
            raise TrialFailure("parse_failure", str(exc)) from None

    def stage3_validate(self, task: ProgrammingTask, buggy: SourceProgram, feedback: FeedbackBundle,
                        trial: int = 1, record: TrialRecord | None = None) -> ValidationOutcome:
        cfg = self.config
        n = cfg.n_samples
        payload = feedback.explanation if cfg.validation_payload is Payload.EXPLANATION else feedback.hint
        augmented = render_validation_prompt(task, buggy, payload)
        standard = render_repair_prompt(task, buggy)
        pid = buggy.program_id
        aug = self._draw(self.student, self.student_cache, augmented,
                         self._params(cfg.sample_temperature, n, pid, trial, "augmented"),
                         RequestTag(pid, trial, "augmented"))
        std = self._draw(self.student, self.student_cache, standard,
                         self._params(cfg.sample_temperature, n, pid, trial, "standard"),
                         RequestTag(pid, trial, "standard"))
        if record is not None:
            record.student_calls += len(aug) + len(std)
            record.prompt_digests["augmented"] = _digest(augmented)
            record.prompt_digests["standard"] = _digest(standard)
        n2 = self._count_passing(task, buggy, aug, f"t{trial}.aug")
        n1 = self._count_passing(task, buggy, std, f"t{trial}.std")
        accepted = decide(n1, n2, n, cfg.alpha, cfg.beta, cfg.rule_variant)
        return ValidationOutcome(n1=n1, n2=n2, n=n, accepted=accepted, rule_variant=cfg.rule_variant)

    # -- drivers ----------------------------------------------------------

    def run_one(self, task: ProgrammingTask, buggy: SourceProgram) -> PipelineResult:
        cfg = self.config
        result = PipelineResult(buggy.program_id, task.task_id, cfg.mode)
        if self.judge.evaluate(buggy, task).all_passed:
            result.status = Status.NOT_BUGGY
            return result
        for trial in range(1, cfg.max_trials_k + 1):
            record = TrialRecord(trial, SymbolicInfo())
            result.trials.append(record)
            record.symbolic = self.stage1_symbolic(task, buggy, trial, record)
            try:
                feedback = self.stage2_feedback(task, buggy, record.symbolic, trial, record)
            except TrialFailure as exc:
                record.failure_reason = exc.reason
                continue
            record.feedback = feedback
            if cfg.mode is not Mode.FULL:
                accepted = True
            else:
                record.outcome = self.stage3_validate(task, buggy, feedback, trial, record)
                accepted = record.outcome.accepted
            if accepted:
                result.status = Status.ACCEPTED
                result.released_hint = feedback.hint
                result.released_explanation = feedback.explanation
                break
        return result

    def run_corpus(self, corpus: Corpus, workers: int = 1) -> tuple[list[PipelineResult], RunReport]:
        started = time.monotonic()
        jobs = [(corpus.task(p.task_id), p) for p in corpus.programs]

        def job(item: tuple[ProgrammingTask, SourceProgram]) -> PipelineResult:
            task, prog = item
            try:
                return self.run_one(task, prog)
            except (ReplayMiss, BackendConfigError):
                raise
            except Exception as exc:  # one bad program must not sink the run
                log.exception("program %s failed", prog.program_id)
                return PipelineResult(prog.program_id, task.task_id, self.config.mode,
                                      error=f"{type(exc).__name__}: {exc}")

        if workers <= 1:
            results = [job(j) for j in jobs]
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(job, jobs))
        counts = Counter(r.status.value for r in results)
        buggy = [r for r in results if r.status is not Status.NOT_BUGGY]
        coverage = round(100 * sum(r.accepted for r in buggy) / len(buggy), 1) if buggy else None
        report = RunReport(
            corpus=corpus.name,
            mode=self.config.mode.value,
            n_programs=len(results),
            status_counts={s.value: counts.get(s.value, 0) for s in Status},
            coverage=coverage,
            backend_calls=dict(sorted(self.counter.calls.items())),
            cache_hits=self.counter.cache_hits,
            judge_executions=self.judge.executions,
            elapsed_seconds=round(time.monotonic() - started, 3),
            config=self.config.to_json(),
        )
        return results, report


# ---------------------------------------------------------------------------
# run artifacts

RESULTS_SUBDIR = "results"
REPORT_FILE = "run_report.json"


def _dump(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def write_run(output_dir: str | os.PathLike[str], results: list[PipelineResult], report: RunReport) -> Path:
    out = Path(output_dir)
    rdir = out / RESULTS_SUBDIR
    rdir.mkdir(parents=True, exist_ok=True)
    for r in results:
        (rdir / f"{r.program_id}.json").write_text(_dump(r.to_json()), encoding="utf-8")
    (out / REPORT_FILE).write_text(_dump(report.to_json()), encoding="utf-8")
    return out


def load_results(output_dir: str | os.PathLike[str]) -> list[dict[str, Any]]:
    """Result records of a run directory, sorted by program id."""
    rdir = Path(output_dir) / RESULTS_SUBDIR
    if not rdir.is_dir():
        return []
    return [json.loads(p.read_text(encoding="utf-8")) for p in sorted(rdir.glob("*.json"))]
