"""Run programs in an isolated child process and compare their output.

Each execution gets a fresh temporary working directory with the task's
auxiliary files copied in.  The child runs under a small bootstrap that
denies sockets and writes outside that directory; wall time is enforced by
killing the whole process group.
"""

from __future__ import annotations

import hashlib
import math
import os
import re
import shutil
import signal
import subprocess
import sys
import tempfile
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .domain import (
    ComparatorSpec,
    ExecLimits,
    FailingCaseReport,
    FailureKind,
    ProgrammingTask,
    SourceProgram,
    TestCase,
)

__all__ = [
    "ExecStatus",
    "ExecutionResult",
    "Judge",
    "SuiteReport",
    "compare_output",
    "evaluate_suite",
    "first_failing",
    "run_program",
]

GUARD = Path(__file__).with_name("_guard.py")
STDERR_EXCERPT = 2000
KILL_GRACE = 1.0
ENV_ALLOWLIST = ("PATH", "LANG", "LC_ALL", "LC_CTYPE", "SYSTEMROOT", "TZ")


class ExecStatus(str, Enum):
    OK = "ok"
    NONZERO_EXIT = "nonzero_exit"
    TIMEOUT = "timeout"
    SPAWN_ERROR = "spawn_error"


@dataclass(frozen=True)
class ExecutionResult:
    case_id: str
    stdout: str
    stderr: str
    exit_status: ExecStatus
    wall_time: float


@dataclass(frozen=True)
class SuiteReport:
    program_id: str
    per_case: tuple[tuple[TestCase, ExecutionResult, bool], ...]

    @property
    def all_passed(self) -> bool:
        return all(passed for _, _, passed in self.per_case)

    @property
    def n_passed(self) -> int:
        return sum(1 for _, _, passed in self.per_case if passed)


# ---------------------------------------------------------------------------
# output comparison

_NUMBER = re.compile(r"[-+]?(?:\d+\.\d*|\.\d+|\d+)(?:[eE][-+]?\d+)?")


def _normalize(text: str) -> str:
    lines = [line.rstrip() for line in text.replace("\r\n", "\n").split("\n")]
    while lines and not lines[-1]:
        lines.pop()
    return "\n".join(lines)


def _runs(text: str) -> list[str | float]:
    out: list[str | float] = []
    pos = 0
    for m in _NUMBER.finditer(text):
        if m.start() > pos:
            out.append(text[pos : m.start()])
        out.append(float(m.group()))
        pos = m.end()
    if pos < len(text):
        out.append(text[pos:])
    return out


def compare_output(actual: str, expected: str, comparator: ComparatorSpec | None = None) -> bool:
    """Return True when ``actual`` matches ``expected`` under ``comparator``.

    Both comparators first strip trailing whitespace on every line and drop
    trailing blank lines.  The numeric comparator then splits each side into
    number and non-number runs and compares numbers with a relative tolerance.
    """
    comparator = comparator or ComparatorSpec()
    a, e = _normalize(actual), _normalize(expected)
    if comparator.kind == "default":
        return a == e
    ra, re_ = _runs(a), _runs(e)
    if len(ra) != len(re_):
        return False
    for x, y in zip(ra, re_):
        if isinstance(x, float) and isinstance(y, float):
            if not (x == y or math.isclose(x, y, rel_tol=comparator.rel_tol)):
                return False
        elif x != y:
            return False
    return True


# ---------------------------------------------------------------------------
# execution


def _child_env() -> dict[str, str]:
    env = {k: os.environ[k] for k in ENV_ALLOWLIST if k in os.environ}
    env.setdefault("PATH", "/usr/bin:/bin")
    env["PYTHONIOENCODING"] = "utf-8"
    env["PYTHONDONTWRITEBYTECODE"] = "1"
    return env


def _clean_stderr(err: str, workdir: Path) -> str:
    """Make tracebacks reproducible across runs and interpreter versions.

    Drops the temp directory prefix, the bootstrap's own frames, and caret
    marker lines.
    """
    for root in {str(workdir), os.path.realpath(workdir)}:
        err = err.replace(root + os.sep, "")
    out: list[str] = []
    skipping = False
    for line in err.splitlines(keepends=True):
        if line.startswith('  File "'):
            skipping = not line.startswith('  File "main.py"')
            if skipping:
                continue
        elif skipping and line.startswith("    "):
            continue
        elif line.strip() and not line.strip(" ^~\n"):
            continue  # position markers some interpreter versions add under a frame
        else:
            skipping = False
        out.append(line)
    return "".join(out)


def _kill_group(proc: subprocess.Popen) -> None:
    try:
        os.killpg(proc.pid, signal.SIGKILL)
    except (ProcessLookupError, PermissionError):
        pass


def run_program(
    program: SourceProgram,
    case: TestCase,
    task: ProgrammingTask,
    limits: ExecLimits | None = None,
    interpreter: str | None = None,
) -> ExecutionResult:
    """Execute ``program`` on one test case in a fresh staged directory."""
    limits = limits or ExecLimits()
    interpreter = interpreter or sys.executable
    workdir = Path(tempfile.mkdtemp(prefix="tutorhints-run-"))
    start = time.monotonic()
    try:
        for rel, data in task.aux_files:
            target = workdir / rel
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_bytes(data)
        prog_path = workdir / "main.py"
        prog_path.write_text(program.source, encoding="utf-8")
        cmd = [interpreter, "-I", "-B", str(GUARD), str(limits.memory_cap), str(prog_path),
               *(case.argv or ())]
        try:
            proc = subprocess.Popen(
                cmd,
                cwd=workdir,
                env=_child_env(),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                start_new_session=True,
            )
        except OSError as exc:
            return ExecutionResult(case.case_id, "", str(exc), ExecStatus.SPAWN_ERROR,
                                   time.monotonic() - start)
        stdin = (case.stdin or "").encode("utf-8")
        try:
            out, err = proc.communicate(stdin, timeout=limits.wall_time_per_test)
            status = ExecStatus.OK if proc.returncode == 0 else ExecStatus.NONZERO_EXIT
        except subprocess.TimeoutExpired:
            _kill_group(proc)
            try:
                out, err = proc.communicate(timeout=KILL_GRACE)
            except subprocess.TimeoutExpired:  # pragma: no cover - stuck pipes
                out, err = b"", b""
            status = ExecStatus.TIMEOUT
        finally:
            _kill_group(proc)
            proc.wait()
        return ExecutionResult(
            case.case_id,
            out.decode("utf-8", errors="replace"),
            _clean_stderr(err.decode("utf-8", errors="replace"), workdir),
            status,
            time.monotonic() - start,
        )
    finally:
        shutil.rmtree(workdir, ignore_errors=True)


def _judge_case(program, case, task, limits, interpreter):
    result = run_program(program, case, task, limits, interpreter)
    passed = result.exit_status is ExecStatus.OK and compare_output(
        result.stdout, case.expected_output, task.comparator
    )
    return case, result, passed


def evaluate_suite(
    program: SourceProgram,
    task: ProgrammingTask,
    limits: ExecLimits | None = None,
    workers: int = 1,
    interpreter: str | None = None,
) -> SuiteReport:
    """Run every case of the task's suite; never stops early."""
    limits = limits or ExecLimits()
    if workers <= 1:
        rows = [_judge_case(program, c, task, limits, interpreter) for c in task.suite]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(lambda c: _judge_case(program, c, task, limits, interpreter),
                                 task.suite))
    return SuiteReport(program.program_id, tuple(rows))


def first_failing(report: SuiteReport) -> FailingCaseReport | None:
    """The earliest failing case in suite order, or None if all passed."""
    for case, result, passed in report.per_case:
        if passed:
            continue
        if result.exit_status is ExecStatus.OK:
            return FailingCaseReport(case, result.stdout, FailureKind.WRONG_OUTPUT)
        kind = FailureKind.TIMEOUT if result.exit_status is ExecStatus.TIMEOUT else FailureKind.RUNTIME_ERROR
        excerpt = result.stderr[:STDERR_EXCERPT]
        if kind is FailureKind.TIMEOUT and not excerpt:
            excerpt = "Time limit exceeded"
        return FailingCaseReport(case, excerpt, kind)
    return None


class Judge:
    """Suite evaluator with a per-instance memo keyed by (task, source).

    Candidate programs sampled from a model are frequently byte-identical, so
    the pipeline reuses reports for repeated sources.  Student programs are
    assumed deterministic.
    """

    def __init__(self, limits: ExecLimits | None = None, workers: int = 1,
                 interpreter: str | None = None) -> None:
        self.limits = limits or ExecLimits()
        self.workers = workers
        self.interpreter = interpreter
        self._memo: dict[tuple[str, str], SuiteReport] = {}
        self._locks: dict[tuple[str, str], threading.Lock] = {}
        self._guard = threading.Lock()
        self.executions = 0

    def evaluate(self, program: SourceProgram, task: ProgrammingTask) -> SuiteReport:
        key = (task.task_id, hashlib.sha256(program.source.encode("utf-8")).hexdigest())
        with self._guard:
            lock = self._locks.setdefault(key, threading.Lock())
        with lock:
            cached = self._memo.get(key)
            if cached is None:
                cached = evaluate_suite(program, task, self.limits, self.workers, self.interpreter)
                with self._guard:
                    self._memo[key] = cached
                    self.executions += 1
        if cached.program_id == program.program_id:
            return cached
        return SuiteReport(program.program_id, cached.per_case)
