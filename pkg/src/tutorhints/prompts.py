"""The three prompt templates: feedback generation, fixing with an
explanation, and fixing without one.

Placeholder values are inserted verbatim (braces in a task description are
never interpreted) with trailing newlines trimmed so block spacing is fixed.
"""

from __future__ import annotations

from .domain import FailingCaseReport, ProgrammingTask, SourceProgram

__all__ = [
    "SENTINEL",
    "format_failing_case",
    "render_generation_prompt",
    "render_repair_prompt",
    "render_validation_prompt",
]

SENTINEL = "Explanation is bad."

GENERATION_HEADER = (
    "I'm working on a Python programming problem. The current program below is not "
    "working well. Can you help by giving a hint?"
)
GENERATION_QUESTIONS = (
    "(1) Can you describe the bug(s) in this program and the required fixes?\n"
    "(2) Can you provide a concise single-sentence hint about one bug in this program? "
    "The hint should not be too detailed as I want to think about the fixes by myself. "
    "However, the hint should not be too abstract, as I need some help."
)

VALIDATION_HEADER = (
    "I'm working on a Python programming problem. The current program below is not "
    "working well. Can you help in fixing this program according to a given explanation "
    "of the bug(s)? Below I first provide the problem description, the current buggy "
    "program, and then the explanation of the bug(s)."
)
VALIDATION_INSTRUCTIONS = (
    f'If anything in the explanation above is incorrect or too confusing, please say "{SENTINEL}" '
    "and stop. If all the reasoning in the explanation above is correct and easy to understand, "
    "then please fix the buggy program according to the explanation above. In this case, note "
    "that the explanation above may not cover all bugs (if there are multiple bugs) in the buggy "
    "program, so you need to think to resolve the remaining bugs by yourself."
)

REPAIR_HEADER = (
    "I'm working on a Python programming problem. The current program below is not "
    "working well. Can you help in fixing this program with as few changes as possible? "
    "Below I first provide the problem description and then the current buggy program."
)
REPAIR_REQUEST = (
    "Can you fix the above buggy program? Make sure that you make minimal possible changes "
    "needed to fix the program."
)


def _block(label: str, value: str) -> str:
    return f"{label}\n{value.rstrip(chr(10))}"


def _join(*parts: str) -> str:
    return "\n\n".join(parts)


def format_failing_case(omega: FailingCaseReport) -> str:
    """Render the failing-case triplet the way an online judge reports it."""
    case = omega.case
    shown_input = case.stdin if case.stdin is not None else " ".join(case.argv or ())
    return (
        f"For Input: {shown_input.rstrip(chr(10))}\n"
        f"Your Code's output is: {omega.actual_output.rstrip(chr(10))}\n"
        f"It's Correct output is: {case.expected_output.rstrip(chr(10))}"
    )


def render_generation_prompt(
    task: ProgrammingTask,
    buggy: SourceProgram,
    omega: FailingCaseReport | None = None,
    fix: SourceProgram | None = None,
) -> str:
    parts = [GENERATION_HEADER, _block("Problem description:", task.description)]
    if omega is not None:
        parts.append(_block("Failing test case:", format_failing_case(omega)))
    parts.append(_block("Buggy program:", buggy.source))
    if fix is not None:
        parts.append(_block("The fixed program of the buggy program above:", fix.source))
    parts.append(GENERATION_QUESTIONS)
    return _join(*parts)


def render_validation_prompt(task: ProgrammingTask, buggy: SourceProgram, payload: str) -> str:
    """Augmented repair prompt carrying an explanation (or hint) as ``payload``."""
    if not payload or not payload.strip():
        raise ValueError("validation payload must be non-empty")
    return _join(
        VALIDATION_HEADER,
        _block("Problem description:", task.description),
        _block("Buggy program:", buggy.source),
        _block("The explanation of the bug(s) in the buggy program:", payload),
        VALIDATION_INSTRUCTIONS,
    )


def render_repair_prompt(task: ProgrammingTask, buggy: SourceProgram) -> str:
    return _join(
        REPAIR_HEADER,
        _block("Problem description:", task.description),
        _block("Buggy program:", buggy.source),
        REPAIR_REQUEST,
    )
