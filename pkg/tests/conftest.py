from __future__ import annotations

import sys
from pathlib import Path

import pytest

from tutorhints.domain import BackendSpec, ExecLimits, PipelineConfig, load_corpus
from tutorhints.gateway import make_backend
from tutorhints.judge import Judge

FIXTURES = Path(__file__).parent / "fixtures"
BASICALGO = FIXTURES / "basicalgo"
DATAANALYSIS = FIXTURES / "dataanalysis"
BASIC_SCRIPT = FIXTURES / "basicalgo.script.json"
DATA_SCRIPT = FIXTURES / "dataanalysis.script.json"
GOLDEN = Path(__file__).parent / "golden"


def script_spec(script: Path, model: str) -> BackendSpec:
    return BackendSpec("script", str(script), model)


@pytest.fixture(scope="session")
def basicalgo():
    return load_corpus(BASICALGO)


@pytest.fixture(scope="session")
def dataanalysis():
    return load_corpus(DATAANALYSIS)


@pytest.fixture(scope="session")
def shared_judge():
    # one memo for the whole session: fixture programs repeat across tests
    return Judge(ExecLimits())


@pytest.fixture(scope="session")
def script_config():
    return PipelineConfig(
        tutor_backend=script_spec(BASIC_SCRIPT, "gpt-4"),
        student_backend=script_spec(BASIC_SCRIPT, "gpt-3.5-turbo"),
    )


@pytest.fixture(scope="session")
def script_backends(script_config):
    return make_backend(script_config.tutor_backend), make_backend(script_config.student_backend)


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("tests.test_acceptance")
    if acceptance is not None and acceptance.OUTCOMES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(acceptance.OUTCOMES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
