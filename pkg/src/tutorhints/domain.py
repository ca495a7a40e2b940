"""Domain types, corpus ingestion and run configuration."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields, replace
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Any

__all__ = [
    "BackendSpec",
    "ComparatorSpec",
    "ConfigError",
    "Corpus",
    "CorpusError",
    "ExecLimits",
    "FailingCaseReport",
    "FailureKind",
    "FeedbackBundle",
    "Mode",
    "Payload",
    "PipelineConfig",
    "ProgramRole",
    "ProgrammingTask",
    "RuleVariant",
    "SourceProgram",
    "TestCase",
    "TestSuite",
    "load_config",
    "load_corpus",
    "save_corpus",
]

LANGUAGE_EXTENSIONS = {"python": ".py"}


class CorpusError(ValueError):
    """Raised when a corpus directory is malformed. The message names the path."""


class ConfigError(ValueError):
    """Raised for out-of-range or unknown configuration values."""


class ProgramRole(str, Enum):
    BUGGY = "buggy"
    CANDIDATE_FIX = "candidate_fix"
    SELECTED_FIX = "selected_fix"


class FailureKind(str, Enum):
    WRONG_OUTPUT = "wrong_output"
    RUNTIME_ERROR = "runtime_error"
    TIMEOUT = "timeout"


class Mode(str, Enum):
    BASE = "base"
    IO = "io"
    IOFIX = "iofix"
    FULL = "full"


class Payload(str, Enum):
    EXPLANATION = "explanation"
    HINT = "hint"


class RuleVariant(str, Enum):
    FULL = "full"
    ABSOLUTE_ONLY = "absolute_only"
    NO_BETA = "no_beta"
    RELATIVE_ONLY = "relative_only"


@dataclass(frozen=True)
class ComparatorSpec:
    kind: str = "default"  # "default" | "numeric"
    rel_tol: float = 1e-6

    def __post_init__(self) -> None:
        if self.kind not in ("default", "numeric"):
            raise ValueError(f"unknown comparator kind {self.kind!r}")

    def to_json(self) -> dict[str, Any]:
        if self.kind == "default":
            return {"kind": "default"}
        return {"kind": self.kind, "rel_tol": self.rel_tol}


@dataclass(frozen=True)
class TestCase:
    __test__ = False  # not a pytest class

    case_id: str
    expected_output: str
    stdin: str | None = None
    argv: tuple[str, ...] | None = None

    def to_json(self) -> dict[str, Any]:
        return {
            "id": self.case_id,
            "stdin": self.stdin,
            "argv": list(self.argv) if self.argv is not None else None,
            "expected_output": self.expected_output,
        }


@dataclass(frozen=True)
class TestSuite:
    __test__ = False

    cases: tuple[TestCase, ...]

    def __len__(self) -> int:
        return len(self.cases)

    def __iter__(self):
        return iter(self.cases)


@dataclass(frozen=True)
class ProgrammingTask:
    task_id: str
    description: str
    suite: TestSuite
    aux_files: tuple[tuple[str, bytes], ...] = ()
    comparator: ComparatorSpec = ComparatorSpec()

    def __post_init__(self) -> None:
        if not self.task_id:
            raise ValueError("task_id must be non-empty")
        if len(self.suite) < 1:
            raise ValueError(f"task {self.task_id}: suite needs at least one test case")


@dataclass(frozen=True)
class SourceProgram:
    program_id: str
    task_id: str
    source: str
    role: ProgramRole = ProgramRole.BUGGY

    def __post_init__(self) -> None:
        if not self.source:
            raise ValueError(f"program {self.program_id}: source is empty")


@dataclass(frozen=True)
class FailingCaseReport:
    case: TestCase
    actual_output: str
    failure_kind: FailureKind

    def to_json(self) -> dict[str, Any]:
        return {
            "case": self.case.to_json(),
            "actual_output": self.actual_output,
            "failure_kind": self.failure_kind.value,
        }


@dataclass(frozen=True)
class FeedbackBundle:
    explanation: str
    hint: str
    raw_completion: str


@dataclass(frozen=True)
class Corpus:
    name: str
    subject_language: str
    tasks: tuple[ProgrammingTask, ...]
    programs: tuple[SourceProgram, ...]

    def task(self, task_id: str) -> ProgrammingTask:
        for t in self.tasks:
            if t.task_id == task_id:
                return t
        raise KeyError(task_id)

    def pairs(self) -> list[tuple[ProgrammingTask, list[SourceProgram]]]:
        return [(t, [p for p in self.programs if p.task_id == t.task_id]) for t in self.tasks]

    def __len__(self) -> int:
        return len(self.programs)


# ---------------------------------------------------------------------------
# corpus I/O


def _read_meta(path: Path) -> dict[str, str]:
    meta: dict[str, str] = {}
    if not path.exists():
        return meta
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise CorpusError(f"{path}:{lineno}: expected key=value")
        key, value = line.split("=", 1)
        meta[key.strip()] = value.strip()
    return meta


def _parse_case(raw: Any, path: Path, index: int) -> TestCase:
    if not isinstance(raw, dict):
        raise CorpusError(f"{path}: case #{index} is not an object")
    try:
        case_id = str(raw["id"])
        expected = raw["expected_output"]
    except KeyError as exc:
        raise CorpusError(f"{path}: case #{index} missing field {exc.args[0]!r}") from None
    if not isinstance(expected, str):
        raise CorpusError(f"{path}: case {case_id!r} expected_output must be a string")
    stdin = raw.get("stdin")
    if stdin is not None and not isinstance(stdin, str):
        raise CorpusError(f"{path}: case {case_id!r} stdin must be a string or null")
    argv = raw.get("argv")
    if argv is not None:
        if not isinstance(argv, list) or not all(isinstance(a, str) for a in argv):
            raise CorpusError(f"{path}: case {case_id!r} argv must be a list of strings")
        argv = tuple(argv)
    return TestCase(case_id=case_id, expected_output=expected, stdin=stdin, argv=argv)


def _load_task(task_dir: Path) -> ProgrammingTask:
    desc_path = task_dir / "description.md"
    tests_path = task_dir / "tests.json"
    if not desc_path.is_file():
        raise CorpusError(f"{desc_path}: missing task description")
    if not tests_path.is_file():
        raise CorpusError(f"{tests_path}: missing test suite")
    try:
        data = json.loads(tests_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CorpusError(f"{tests_path}: malformed JSON ({exc})") from None
    if not isinstance(data, dict) or not isinstance(data.get("cases"), list):
        raise CorpusError(f"{tests_path}: expected an object with a 'cases' list")
    cases = tuple(_parse_case(c, tests_path, i) for i, c in enumerate(data["cases"]))
    if not cases:
        raise CorpusError(f"{tests_path}: suite has no test cases")
    seen: set[str] = set()
    for c in cases:
        if c.case_id in seen:
            raise CorpusError(f"{tests_path}: duplicate case id {c.case_id!r}")
        seen.add(c.case_id)
    comp_raw = data.get("comparator") or {}
    try:
        comparator = ComparatorSpec(
            kind=comp_raw.get("kind", "default"), rel_tol=float(comp_raw.get("rel_tol", 1e-6))
        )
    except (ValueError, TypeError, AttributeError) as exc:
        raise CorpusError(f"{tests_path}: bad comparator ({exc})") from None

    aux: list[tuple[str, bytes]] = []
    aux_dir = task_dir / "aux"
    if aux_dir.is_dir():
        for f in sorted(aux_dir.rglob("*")):
            if f.is_file():
                aux.append((f.relative_to(aux_dir).as_posix(), f.read_bytes()))
    return ProgrammingTask(
        task_id=task_dir.name,
        description=desc_path.read_text(encoding="utf-8"),
        suite=TestSuite(cases),
        aux_files=tuple(aux),
        comparator=comparator,
    )


def load_corpus(root_path: str | os.PathLike[str]) -> Corpus:
    """Load a corpus directory.

    Tasks and programs are returned in sorted directory order; test cases keep
    their declaration order from ``tests.json``.
    """
    root = Path(root_path)
    if not root.is_dir():
        raise CorpusError(f"{root}: corpus directory not found")
    meta = _read_meta(root / "corpus.meta")
    language = meta.get("subject_language", "python")
    ext = LANGUAGE_EXTENSIONS.get(language)
    if ext is None:
        raise CorpusError(f"{root / 'corpus.meta'}: unsupported subject_language {language!r}")

    tasks_dir = root / "tasks"
    tasks: list[ProgrammingTask] = []
    if tasks_dir.is_dir():
        for task_dir in sorted(p for p in tasks_dir.iterdir() if p.is_dir()):
            tasks.append(_load_task(task_dir))
    task_ids = {t.task_id for t in tasks}

    programs: list[SourceProgram] = []
    seen: dict[str, Path] = {}
    programs_dir = root / "programs"
    if programs_dir.is_dir():
        for group in sorted(programs_dir.iterdir()):
            if not group.is_dir():
                continue
            if group.name not in task_ids:
                raise CorpusError(f"{group}: programs reference unknown task {group.name!r}")
            for f in sorted(group.iterdir()):
                if not f.is_file() or f.suffix != ext:
                    continue
                pid = f.stem
                if pid in seen:
                    raise CorpusError(f"{f}: duplicate program id {pid!r} (also {seen[pid]})")
                seen[pid] = f
                source = f.read_text(encoding="utf-8")
                if not source:
                    raise CorpusError(f"{f}: empty program source")
                programs.append(SourceProgram(pid, group.name, source, ProgramRole.BUGGY))

    return Corpus(
        name=meta.get("name", root.name),
        subject_language=language,
        tasks=tuple(tasks),
        programs=tuple(programs),
    )


def save_corpus(corpus: Corpus, root_path: str | os.PathLike[str]) -> Path:
    """Write ``corpus`` in the on-disk layout read by :func:`load_corpus`."""
    root = Path(root_path)
    root.mkdir(parents=True, exist_ok=True)
    (root / "corpus.meta").write_text(
        f"name={corpus.name}\nsubject_language={corpus.subject_language}\n", encoding="utf-8"
    )
    ext = LANGUAGE_EXTENSIONS[corpus.subject_language]
    for task in corpus.tasks:
        tdir = root / "tasks" / task.task_id
        tdir.mkdir(parents=True, exist_ok=True)
        (tdir / "description.md").write_text(task.description, encoding="utf-8")
        body = {"cases": [c.to_json() for c in task.suite], "comparator": task.comparator.to_json()}
        (tdir / "tests.json").write_text(json.dumps(body, indent=2) + "\n", encoding="utf-8")
        for rel, data in task.aux_files:
            target = tdir / "aux" / rel
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_bytes(data)
    for prog in corpus.programs:
        pdir = root / "programs" / prog.task_id
        pdir.mkdir(parents=True, exist_ok=True)
        (pdir / f"{prog.program_id}{ext}").write_text(prog.source, encoding="utf-8")
    return root


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class BackendSpec:
    kind: str  # "http_chat" | "scripted_replay" | "script"
    endpoint_or_path: str
    model_name: str = ""
    auth_env_var: str | None = None

    KINDS = ("http_chat", "scripted_replay", "script")

    def __post_init__(self) -> None:
        if self.kind not in self.KINDS:
            raise ConfigError(f"backend kind must be one of {self.KINDS}, got {self.kind!r}")

    @classmethod
    def parse(cls, value: Any) -> BackendSpec:
        """Build from a mapping or a ``kind:target[@model]`` shorthand string."""
        if isinstance(value, BackendSpec):
            return value
        if isinstance(value, dict):
            unknown = set(value) - {"kind", "endpoint_or_path", "model_name", "auth_env_var"}
            if unknown:
                raise ConfigError(f"unknown backend fields: {sorted(unknown)}")
            return cls(**value)
        if isinstance(value, str):
            text = value.strip()
            if text.startswith("{"):
                return cls.parse(json.loads(text))
            kind, sep, target = text.partition(":")
            if not sep:
                raise ConfigError(f"backend must look like kind:target, got {value!r}")
            model = ""
            if "@" in target:
                target, model = target.rsplit("@", 1)
            return cls(kind=kind, endpoint_or_path=target, model_name=model)
        raise ConfigError(f"cannot interpret backend spec {value!r}")

    def to_json(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "endpoint_or_path": self.endpoint_or_path,
            "model_name": self.model_name,
            "auth_env_var": self.auth_env_var,
        }


@dataclass(frozen=True)
class ExecLimits:
    wall_time_per_test: float = 5.0
    memory_cap: int = 512 * 1024 * 1024
    network_allowed: bool = False

    def __post_init__(self) -> None:
        if not self.wall_time_per_test > 0:
            raise ConfigError("wall_time_per_test must be > 0")
        if self.memory_cap <= 0:
            raise ConfigError("memory_cap must be > 0")
        if self.network_allowed:
            raise ConfigError("network_allowed must be false")


def _default_tutor() -> BackendSpec:
    return BackendSpec("http_chat", "https://api.openai.com/v1/chat/completions", "gpt-4", "OPENAI_API_KEY")


def _default_student() -> BackendSpec:
    return BackendSpec(
        "http_chat", "https://api.openai.com/v1/chat/completions", "gpt-3.5-turbo", "OPENAI_API_KEY"
    )


@dataclass(frozen=True)
class PipelineConfig:
    n_samples: int = 10
    max_trials_k: int = 3
    alpha: Fraction = Fraction(1, 2)
    beta: Fraction = Fraction(1, 4)
    gen_temperature: float = 0.0
    sample_temperature: float = 0.5
    mode: Mode = Mode.FULL
    validation_payload: Payload = Payload.EXPLANATION
    rule_variant: RuleVariant = RuleVariant.FULL
    tutor_backend: BackendSpec = field(default_factory=_default_tutor)
    student_backend: BackendSpec = field(default_factory=_default_student)
    seed: int = 0
    limits: ExecLimits = ExecLimits()
    cache_dir: str | None = None

    def __post_init__(self) -> None:
        errors = []
        if not isinstance(self.n_samples, int) or self.n_samples < 1:
            errors.append("n_samples")
        if not isinstance(self.max_trials_k, int) or self.max_trials_k < 1:
            errors.append("max_trials_k")
        if not 0 <= self.alpha <= 1:
            errors.append("alpha")
        if not 0 <= self.beta <= 1:
            errors.append("beta")
        if not 0 <= self.gen_temperature <= 2:
            errors.append("gen_temperature")
        if not 0 <= self.sample_temperature <= 2:
            errors.append("sample_temperature")
        if errors:
            raise ConfigError(f"invalid config values: {', '.join(errors)}")

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, Enum):
                v = v.value
            elif isinstance(v, Fraction):
                v = str(v)
            elif isinstance(v, BackendSpec):
                v = v.to_json()
            elif isinstance(v, ExecLimits):
                v = {"wall_time_per_test": v.wall_time_per_test, "memory_cap": v.memory_cap,
                     "network_allowed": v.network_allowed}
            out[f.name] = v
        return out


CONFIG_FIELDS = tuple(f.name for f in fields(PipelineConfig))


def _to_fraction(name: str, value: Any) -> Fraction:
    if isinstance(value, bool):
        raise ConfigError(f"{name}: expected a number")
    try:
        # str() keeps 0.1 as 1/10 rather than its binary expansion
        return Fraction(str(value)) if isinstance(value, float) else Fraction(value)
    except (ValueError, TypeError, ZeroDivisionError):
        raise ConfigError(f"{name}: expected a number, got {value!r}") from None


def coerce_field(name: str, value: Any) -> Any:
    """Convert a raw JSON/CLI value to the type of PipelineConfig field ``name``."""
    try:
        if name in ("n_samples", "max_trials_k", "seed"):
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise ConfigError(f"{name}: expected an integer, got {value!r}")
            return int(value)
        if name in ("alpha", "beta"):
            return _to_fraction(name, value)
        if name in ("gen_temperature", "sample_temperature"):
            return float(value)
        if name == "mode":
            return Mode(value)
        if name == "validation_payload":
            return Payload(value)
        if name == "rule_variant":
            return RuleVariant(value)
        if name in ("tutor_backend", "student_backend"):
            return BackendSpec.parse(value)
        if name == "limits":
            if isinstance(value, ExecLimits):
                return value
            if not isinstance(value, dict):
                raise ConfigError("limits: expected an object")
            return ExecLimits(**value)
        if name == "cache_dir":
            return None if value in (None, "") else str(value)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{name}: {exc}") from None
    raise ConfigError(f"unknown config field {name!r}")


def config_from_mapping(data: dict[str, Any], base: PipelineConfig | None = None) -> PipelineConfig:
    unknown = sorted(set(data) - set(CONFIG_FIELDS))
    if unknown:
        raise ConfigError(f"unknown config fields: {', '.join(unknown)}")
    values = {k: coerce_field(k, v) for k, v in data.items()}
    return replace(base or PipelineConfig(), **values)


def load_config(path: str | os.PathLike[str]) -> PipelineConfig:
    """Read a JSON config; absent fields keep their defaults. An empty file is allowed."""
    p = Path(path)
    text = p.read_text(encoding="utf-8")
    if not text.strip():
        return PipelineConfig()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: malformed JSON ({exc})") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{p}: config must be a JSON object")
    return config_from_mapping(data)
