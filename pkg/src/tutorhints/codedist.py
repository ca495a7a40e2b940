"""Lexical tokenization and token-level edit distance for Python source.

The lexer is deliberately small: it only has to produce a stable token
stream for ranking candidate fixes, not a faithful parse.  Whitespace and
indentation are dropped, comments are kept, and a ``newline`` token marks
the end of each logical line.
"""

from __future__ import annotations

import keyword
import re
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from .domain import SourceProgram
    from .judge import SuiteReport

__all__ = ["Token", "TokenSeq", "render", "select_fix", "token_edit_distance", "tokenize"]

KINDS = ("keyword", "identifier", "number", "string", "operator", "punctuation", "comment", "newline")

KEYWORDS = frozenset(keyword.kwlist)

# longest first so that greedy matching picks "**=" over "**"
OPERATORS = sorted(
    """
    **= //= >>= <<= ... -> := == != <= >= ** // << >> += -= *= /= %= @= &= |= ^=
    + - * / % @ & | ^ ~ < > =
    """.split(),
    key=len,
    reverse=True,
)
PUNCTUATION = frozenset("()[]{},:;.")
OPEN_BRACKETS, CLOSE_BRACKETS = "([{", ")]}"
WHITESPACE = " \t\r\f\v"
STRING_PREFIXES = frozenset({"r", "u", "b", "f", "br", "rb", "fr", "rf"})

_NUMBER = re.compile(
    r"""
    0[xX](?:_?[0-9a-fA-F])+
  | 0[bB](?:_?[01])+
  | 0[oO](?:_?[0-7])+
  | (?: [0-9](?:_?[0-9])* (?:\.(?:[0-9](?:_?[0-9])*)?)?
      | \.[0-9](?:_?[0-9])* )
    (?:[eE][-+]?[0-9](?:_?[0-9])*)?
    [jJ]?
    """,
    re.VERBOSE | re.ASCII,
)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str


TokenSeq = tuple[Token, ...]


def _is_ident_start(ch: str) -> bool:
    return ch == "_" or ch.isalpha()


def _is_ident_char(ch: str) -> bool:
    return ch == "_" or ch.isalnum()


def _scan_string(src: str, i: int, quote_start: int) -> tuple[int, bool]:
    """Scan a string literal whose quote is at ``quote_start``.

    Returns (end index, terminated).  An unterminated single-line string runs
    to the end of its line; an unterminated triple-quoted one to end of input.
    """
    q = src[quote_start]
    n = len(src)
    if src.startswith(q * 3, quote_start):
        delim = q * 3
        j = quote_start + 3
        while j < n:
            if src[j] == "\\":
                j += 2
                continue
            if src.startswith(delim, j):
                return j + 3, True
            j += 1
        return n, False
    j = quote_start + 1
    while j < n:
        c = src[j]
        if c == "\\":
            if j + 1 < n and src[j + 1] == "\n":
                j += 2
                continue
            j += 2
            continue
        if c == q:
            return j + 1, True
        if c == "\n":
            return j, False
        j += 1
    return n, False


def _lex(source: str) -> list[tuple[Token, bool]]:
    """Tokens paired with a flag telling whether they run to end of line."""
    out: list[tuple[Token, bool]] = []
    i, n = 0, len(source)
    depth = 0
    line_has_code = False

    def emit(kind: str, text: str, to_eol: bool = False) -> None:
        nonlocal line_has_code
        out.append((Token(kind, text), to_eol))
        if kind != "comment":
            line_has_code = True

    while i < n:
        c = source[i]
        if c == "\n":
            if depth == 0 and line_has_code:
                out.append((Token("newline", "\n"), False))
                line_has_code = False
            i += 1
            continue
        if c in WHITESPACE:
            i += 1
            continue
        if c == "\\" and i + 1 < n and source[i + 1] == "\n":
            i += 2  # explicit line continuation
            continue
        if c == "#":
            j = source.find("\n", i)
            j = n if j == -1 else j
            emit("comment", source[i:j].rstrip(WHITESPACE), to_eol=True)
            i = j
            continue
        if _is_ident_start(c):
            j = i + 1
            while j < n and _is_ident_char(source[j]):
                j += 1
            word = source[i:j]
            if j < n and source[j] in "'\"" and word.lower() in STRING_PREFIXES:
                end, ok = _scan_string(source, i, j)
                text = source[i:end]
                emit("string", text.rstrip(WHITESPACE) if not ok else text, to_eol=not ok)
                i = end
                continue
            emit("keyword" if word in KEYWORDS else "identifier", word)
            i = j
            continue
        if c in "'\"":
            end, ok = _scan_string(source, i, i)
            text = source[i:end]
            emit("string", text.rstrip(WHITESPACE) if not ok else text, to_eol=not ok)
            i = end
            continue
        m = _NUMBER.match(source, i) if (c.isascii() and c.isdigit()) or c == "." else None
        if m:
            emit("number", m.group())
            i = m.end()
            continue
        for op in OPERATORS:
            if source.startswith(op, i):
                emit("operator", op)
                i += len(op)
                break
        else:
            if c in OPEN_BRACKETS:
                depth += 1
            elif c in CLOSE_BRACKETS and depth > 0:
                depth -= 1
            emit("punctuation", c)
            i += 1
    return out


def tokenize(source: str) -> TokenSeq:
    """Split ``source`` into a token sequence. Total and deterministic."""
    return tuple(tok for tok, _ in _lex(source))


def render(tokens: Iterable[Token]) -> str:
    """Join token texts with single separators so the result re-lexes to ``tokens``.

    The separator is a space, except after tokens that run to end of line
    (comments, unterminated strings), which are followed by a line break.
    """
    parts: list[str] = []
    for tok in tokens:
        parts.append(tok.text)
        parts.append("\n" if _runs_to_eol(tok) else " ")
    return "".join(parts[:-1])


def _runs_to_eol(tok: Token) -> bool:
    if tok.kind == "comment":
        return True
    if tok.kind == "string":
        # re-lexing the text alone reveals whether it was terminated
        lexed = _lex(tok.text)
        return bool(lexed) and lexed[0][1]
    return False


def token_edit_distance(a: Sequence[Token], b: Sequence[Token]) -> int:
    """Levenshtein distance over tokens; two tokens match iff kind and text match."""
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ta in enumerate(a, 1):
        cur = [i]
        for j, tb in enumerate(b, 1):
            cost = 0 if ta == tb else 1
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + cost))
        prev = cur
    return prev[-1]


def select_fix(
    buggy: SourceProgram,
    candidates: Sequence[tuple[SourceProgram, SuiteReport]],
) -> SourceProgram | None:
    """Closest suite-passing candidate to ``buggy``; earliest index wins ties."""
    base = tokenize(buggy.source)
    best: tuple[int, int] | None = None
    chosen = None
    for idx, (prog, report) in enumerate(candidates):
        if not report.all_passed:
            continue
        key = (token_edit_distance(base, tokenize(prog.source)), idx)
        if best is None or key < best:
            best, chosen = key, prog
    return chosen
