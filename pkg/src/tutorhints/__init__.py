"""Tutor-style hint generation for buggy programs, with simulated-student validation."""

from .domain import (
    BackendSpec,
    Corpus,
    ExecLimits,
    Mode,
    Payload,
    PipelineConfig,
    ProgrammingTask,
    RuleVariant,
    SourceProgram,
    load_config,
    load_corpus,
)
from .pipeline import Pipeline, PipelineResult, Status
from .validator import decide

__version__ = "0.1.0"

__all__ = [
    "BackendSpec",
    "Corpus",
    "ExecLimits",
    "Mode",
    "Payload",
    "Pipeline",
    "PipelineConfig",
    "PipelineResult",
    "ProgrammingTask",
    "RuleVariant",
    "SourceProgram",
    "Status",
    "decide",
    "load_config",
    "load_corpus",
]
