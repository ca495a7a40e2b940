"""Model backends, the replay cache, and completion parsing.

Every completion is addressed by a request digest over the canonicalized
(prompt, model, temperature, count, index, seed).  The replay cache stores
one JSON file per digest; any backend consults it before going to the
network, and the ``scripted_replay`` backend serves from it exclusively.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import tempfile
import textwrap
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Protocol

import httpx

from .codedist import tokenize
from .domain import BackendSpec, FeedbackBundle, ProgramRole, SourceProgram
from .prompts import SENTINEL

__all__ = [
    "BackendConfigError",
    "ChatBackend",
    "Completion",
    "FinishState",
    "ParseFailure",
    "ReplayBackend",
    "ReplayCache",
    "ReplayMiss",
    "RequestTag",
    "SampleParams",
    "ScriptBackend",
    "derive_seed",
    "make_backend",
    "parse_feedback",
    "parse_program",
    "request_digest",
    "sample",
]

log = logging.getLogger(__name__)

CACHE_ENV_VAR = "TUTORHINTS_CACHE_DIR"


class BackendConfigError(RuntimeError):
    """Backend cannot be used as configured (missing token, bad path)."""


class ReplayMiss(RuntimeError):
    """A replay-only backend was asked for a completion it has not recorded."""


class ParseFailure(ValueError):
    pass


class FinishState(str, Enum):
    COMPLETE = "complete"
    TRUNCATED = "truncated"
    BACKEND_ERROR = "backend_error"


@dataclass(frozen=True)
class SampleParams:
    temperature: float
    count: int = 1
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0 <= self.temperature <= 2:
            raise ValueError("temperature must be within [0, 2]")
        if self.count < 1:
            raise ValueError("count must be >= 1")


@dataclass(frozen=True)
class Completion:
    text: str
    index: int
    finish_state: FinishState = FinishState.COMPLETE


@dataclass(frozen=True)
class RequestTag:
    """Where a request comes from. Logged with cache entries; never part of the digest."""

    program_id: str = ""
    trial: int = 0
    stage: str = ""  # "generation" | "repair" | "augmented" | "standard"


def derive_seed(*parts: Any) -> int:
    h = hashlib.sha256(":".join(str(p) for p in parts).encode("utf-8")).digest()
    return int.from_bytes(h[:8], "big") >> 1


def request_digest(prompt: str, model: str, params: SampleParams, index: int) -> str:
    canon = json.dumps(
        {
            "prompt": prompt,
            "model": model,
            "temperature": repr(float(params.temperature)),
            "count": params.count,
            "index": index,
            "seed": params.seed,
        },
        sort_keys=True,
        ensure_ascii=False,
        separators=(",", ":"),
    )
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


class ReplayCache:
    """Directory of ``<digest>.json`` files; writes are atomic renames."""

    def __init__(self, root: str | os.PathLike[str]) -> None:
        self.root = Path(root)

    def path(self, digest: str) -> Path:
        return self.root / f"{digest}.json"

    def get(self, digest: str) -> Completion | None:
        p = self.path(digest)
        try:
            body = json.loads(p.read_text(encoding="utf-8"))
        except FileNotFoundError:
            return None
        texts = body["completions"]
        return Completion(texts[0], body["request"]["index"], FinishState(body.get("finish_state", "complete")))

    def put(self, digest: str, request: dict[str, Any], completion: Completion, tag: RequestTag | None) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        body = {
            "request": request,
            "completions": [completion.text],
            "finish_state": completion.finish_state.value,
            "tag": None if tag is None else {"program_id": tag.program_id, "trial": tag.trial, "stage": tag.stage},
        }
        fd, tmp = tempfile.mkstemp(dir=self.root, suffix=".tmp")
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(body, fh, indent=1, sort_keys=True, ensure_ascii=False)
        os.replace(tmp, self.path(digest))

    def __len__(self) -> int:
        return sum(1 for _ in self.root.glob("*.json")) if self.root.is_dir() else 0


class Backend(Protocol):
    spec: BackendSpec

    def complete(self, prompt: str, params: SampleParams, index: int, tag: RequestTag | None) -> Completion:
        ...


class CallCounter:
    """Tally of completions requested, by model name; thread-safe."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self.calls: dict[str, int] = {}
        self.cache_hits = 0

    def add(self, model: str, hit: bool) -> None:
        with self._lock:
            self.calls[model] = self.calls.get(model, 0) + 1
            if hit:
                self.cache_hits += 1


class ChatBackend:
    """Chat-completion HTTP backend (``messages/model/temperature/n`` schema)."""

    RETRY_STATUS = {429, 500, 502, 503, 504}

    def __init__(self, spec: BackendSpec, *, transport: httpx.BaseTransport | None = None,
                 max_retries: int = 3, backoff: float = 0.5, timeout: float = 120.0) -> None:
        self.spec = spec
        self.token: str | None = None
        if spec.auth_env_var:
            self.token = os.environ.get(spec.auth_env_var)
            if not self.token:
                raise BackendConfigError(
                    f"environment variable {spec.auth_env_var} is not set for backend {spec.model_name!r}"
                )
        self.max_retries = max_retries
        self.backoff = backoff
        self._client = httpx.Client(transport=transport, timeout=timeout)

    def complete(self, prompt: str, params: SampleParams, index: int, tag: RequestTag | None) -> Completion:
        body = {
            "model": self.spec.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": params.temperature,
            "n": 1,
            "seed": derive_seed(params.seed, index),
        }
        headers = {"Authorization": f"Bearer {self.token}"} if self.token else {}
        for attempt in range(self.max_retries + 1):
            try:
                resp = self._client.post(self.spec.endpoint_or_path, json=body, headers=headers)
                if resp.status_code in self.RETRY_STATUS:
                    raise httpx.HTTPStatusError("retryable", request=resp.request, response=resp)
                resp.raise_for_status()
                choice = resp.json()["choices"][0]
                text = choice["message"]["content"] or ""
                state = FinishState.TRUNCATED if choice.get("finish_reason") == "length" else FinishState.COMPLETE
                return Completion(text, index, state)
            except (httpx.TransportError, httpx.HTTPStatusError) as exc:
                status = getattr(getattr(exc, "response", None), "status_code", None)
                if status is not None and status not in self.RETRY_STATUS:
                    log.warning("backend %s returned %s", self.spec.model_name, status)
                    break
                if attempt < self.max_retries:
                    time.sleep(self.backoff * (2**attempt))
                    continue
                log.warning("backend %s unreachable after %d retries: %s",
                            self.spec.model_name, self.max_retries, exc)
            except (KeyError, IndexError, ValueError) as exc:
                log.warning("malformed response from %s: %s", self.spec.model_name, exc)
                break
        return Completion("", index, FinishState.BACKEND_ERROR)


class ReplayBackend:
    """Serves recorded completions only; a miss is an environment error."""

    def __init__(self, spec: BackendSpec) -> None:
        self.spec = spec
        root = Path(spec.endpoint_or_path)
        if not root.is_dir():
            raise BackendConfigError(f"replay cache {root} does not exist")

    def complete(self, prompt: str, params: SampleParams, index: int, tag: RequestTag | None) -> Completion:
        raise ReplayMiss(
            f"no recorded completion for model {self.spec.model_name!r} "
            f"(program={getattr(tag, 'program_id', '?')}, trial={getattr(tag, 'trial', '?')}, "
            f"stage={getattr(tag, 'stage', '?')}, index={index})"
        )


class ScriptBackend:
    """Answers from a hand-written script keyed by program, trial and stage.

    Script file layout::

        {"programs": {"<program_id>": {"trials": [
            {"generation": "...", "repair": [...], "augmented": [...], "standard": [...]}
        ]}}}

    Used to author replay fixtures via ``record-fixture``.  Requests the
    script does not cover come back as backend errors.
    """

    def __init__(self, spec: BackendSpec) -> None:
        self.spec = spec
        path = Path(spec.endpoint_or_path)
        if not path.is_file():
            raise BackendConfigError(f"script file {path} does not exist")
        self.script = json.loads(path.read_text(encoding="utf-8"))

    def complete(self, prompt: str, params: SampleParams, index: int, tag: RequestTag | None) -> Completion:
        try:
            trial = self.script["programs"][tag.program_id]["trials"][tag.trial - 1]
            entry = trial[tag.stage]
            text = entry if isinstance(entry, str) else entry[index]
        except (KeyError, IndexError, TypeError, AttributeError):
            return Completion("", index, FinishState.BACKEND_ERROR)
        return Completion(text, index, FinishState.COMPLETE)


def make_backend(spec: BackendSpec, **kwargs: Any) -> Backend:
    if spec.kind == "http_chat":
        return ChatBackend(spec, **kwargs)
    if spec.kind == "scripted_replay":
        return ReplayBackend(spec)
    if spec.kind == "script":
        return ScriptBackend(spec)
    raise BackendConfigError(f"unknown backend kind {spec.kind!r}")


def cache_for(spec: BackendSpec, cache_dir: str | None = None) -> ReplayCache | None:
    """The cache a backend reads from: its own path for replay, else config/env."""
    if spec.kind == "scripted_replay":
        return ReplayCache(spec.endpoint_or_path)
    root = cache_dir or os.environ.get(CACHE_ENV_VAR)
    return ReplayCache(root) if root else None


def sample(
    backend: Backend,
    prompt: str,
    params: SampleParams,
    *,
    cache: ReplayCache | None = None,
    tag: RequestTag | None = None,
    counter: CallCounter | None = None,
    workers: int = 1,
) -> list[Completion]:
    """Draw ``params.count`` completions in index order.

    Cached completions are served without touching the backend; fresh ones
    (other than backend errors) are written to the cache.
    """
    model = backend.spec.model_name

    def one(index: int) -> Completion:
        digest = request_digest(prompt, model, params, index)
        if cache is not None:
            hit = cache.get(digest)
            if hit is not None:
                if counter is not None:
                    counter.add(model, True)
                return Completion(hit.text, index, hit.finish_state)
        completion = backend.complete(prompt, params, index, tag)
        if counter is not None:
            counter.add(model, False)
        if cache is not None and completion.finish_state is not FinishState.BACKEND_ERROR:
            request = {
                "model": model,
                "temperature": params.temperature,
                "count": params.count,
                "index": index,
                "seed": params.seed,
                "prompt_sha256": hashlib.sha256(prompt.encode("utf-8")).hexdigest(),
            }
            cache.put(digest, request, completion, tag)
        return completion

    if workers <= 1 or params.count == 1:
        return [one(i) for i in range(params.count)]
    with ThreadPoolExecutor(max_workers=min(workers, params.count)) as pool:
        return list(pool.map(one, range(params.count)))


# ---------------------------------------------------------------------------
# parsing

_MARKER = re.compile(
    r"""^[ \t]*(?:[#>]+[ \t]*)?(?:\*\*|__)?[ \t]*
        (?:\((?P<a>[12])\)|(?P<b>[12])[.)])
        (?:\*\*|__)?""",
    re.MULTILINE | re.VERBOSE,
)
_FENCE = re.compile(r"^[ \t]*(```|~~~)[^\n]*\n(.*?)^[ \t]*\1[ \t]*$", re.MULTILINE | re.DOTALL)
# "Hint: ..." / "**Bug and fix:** ..." but not "Use this:" ending its line
_LEADING_LABEL = re.compile(r"^\s*(?:\*\*|__)?[A-Za-z][A-Za-z \-]{0,40}:(?:\*\*|__)?[ \t]*(?=\S)")
_CODE_LINE = re.compile(
    r"""^(?:[ \t]+\S
        |(?:def|class|import|from|for|while|if|elif|else|try|except|finally|with|return|print|pass|break|continue|raise|assert|global|lambda)\b
        |[A-Za-z_][\w.\[\]'"]*\s*(?:[-+*/%|&^]?=|\()
        |[#@)\]}])""",
    re.VERBOSE,
)


def _strip_fences(text: str) -> str:
    text = _FENCE.sub(lambda m: m.group(2), text)
    return text.replace("```", "").strip()


def parse_feedback(completion: Completion) -> FeedbackBundle:
    """Extract (explanation, hint) from a completion answering the two numbered questions."""
    if completion.finish_state is not FinishState.COMPLETE:
        raise ParseFailure(f"completion is {completion.finish_state.value}")
    text = completion.text
    # markers inside code fences are not answer headings
    masked = _FENCE.sub(lambda m: " " * len(m.group(0)), text)
    first = second = None
    for m in _MARKER.finditer(masked):
        num = m.group("a") or m.group("b")
        if num == "1" and first is None:
            first = m
        elif num == "2" and first is not None and m.start() > first.end():
            second = m
            break
    if first is None or second is None:
        raise ParseFailure("could not find both numbered answers")
    explanation = _strip_fences(text[first.end() : second.start()])
    hint_part = _strip_fences(text[second.end() :])
    explanation = _LEADING_LABEL.sub("", explanation, count=1).strip()
    hint_part = _LEADING_LABEL.sub("", hint_part, count=1).strip()
    # the hint answer ends at the first blank line
    hint = re.split(r"\n\s*\n", hint_part, maxsplit=1)[0].strip()
    if not explanation or not hint:
        raise ParseFailure("an answer section is empty")
    return FeedbackBundle(explanation=explanation, hint=hint, raw_completion=text)


def _looks_like_code(text: str) -> bool:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        return False
    code = sum(1 for ln in lines if _CODE_LINE.match(ln))
    if code * 2 <= len(lines):
        return False
    return any(tok.kind in ("keyword", "operator") for tok in tokenize(text))


def parse_program(
    completion: Completion, *, program_id: str = "", task_id: str = ""
) -> SourceProgram | None:
    """Extract a candidate program; None when the completion holds no usable code."""
    if completion.finish_state is not FinishState.COMPLETE:
        return None
    text = completion.text
    blocks = [m.group(2) for m in _FENCE.finditer(text)]
    if blocks:
        source = textwrap.dedent(blocks[-1])
    elif SENTINEL in text:
        return None
    elif _looks_like_code(text):
        source = text
    else:
        return None
    if not source.strip():
        return None
    if not source.endswith("\n"):
        source += "\n"
    return SourceProgram(program_id or "candidate", task_id, source, ProgramRole.CANDIDATE_FIX)
