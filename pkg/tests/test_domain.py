import json
import shutil
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tutorhints.domain import (
    CONFIG_FIELDS,
    BackendSpec,
    ComparatorSpec,
    ConfigError,
    Corpus,
    CorpusError,
    ExecLimits,
    Mode,
    PipelineConfig,
    ProgrammingTask,
    RuleVariant,
    SourceProgram,
    TestCase,
    TestSuite,
    config_from_mapping,
    load_config,
    load_corpus,
    save_corpus,
)

from .conftest import BASICALGO, DATAANALYSIS


def test_basicalgo_shape(basicalgo):
    assert basicalgo.name == "BasicAlgo-fixture"
    assert basicalgo.subject_language == "python"
    assert len(basicalgo.tasks) == 5
    assert len(basicalgo) == 25
    for task, progs in basicalgo.pairs():
        assert len(progs) == 5, task.task_id
        assert all(p.task_id == task.task_id for p in progs)


def test_suite_keeps_declaration_order(basicalgo):
    pal = basicalgo.task("palindrome")
    assert [c.case_id for c in pal.suite] == ["c1", "c2", "c3", "c4", "c5", "c6"]
    assert pal.suite.cases[2].stdin == "hq\n"


def test_aux_files_and_comparator(dataanalysis):
    task = dataanalysis.task("chickenpox")
    assert task.comparator.kind == "numeric"
    assert [rel for rel, _ in task.aux_files] == ["nis.csv"]
    assert task.aux_files[0][1].startswith(b"SEX")


def test_unknown_task_key_raises():
    with pytest.raises(KeyError):
        load_corpus(BASICALGO).task("nope")


def test_programs_for_unknown_task(tmp_path):
    root = tmp_path / "c"
    shutil.copytree(BASICALGO, root)
    (root / "programs" / "ghost").mkdir()
    (root / "programs" / "ghost" / "ghost_p1.py").write_text("print(1)\n")
    with pytest.raises(CorpusError, match="ghost"):
        load_corpus(root)


def test_duplicate_program_ids(tmp_path):
    root = tmp_path / "c"
    shutil.copytree(BASICALGO, root)
    shutil.copy(root / "programs" / "merge" / "merge_p1.py", root / "programs" / "digitsum" / "merge_p1.py")
    with pytest.raises(CorpusError, match="duplicate"):
        load_corpus(root)


def test_missing_corpus_names_path(tmp_path):
    with pytest.raises(CorpusError, match=str(tmp_path / "absent")):
        load_corpus(tmp_path / "absent")


def test_malformed_tests_json_names_file(tmp_path):
    root = tmp_path / "c"
    shutil.copytree(BASICALGO, root)
    bad = root / "tasks" / "merge" / "tests.json"
    bad.write_text("{not json")
    with pytest.raises(CorpusError, match="tests.json"):
        load_corpus(root)


def test_empty_suite_is_rejected():
    with pytest.raises(ValueError):
        ProgrammingTask("t", "d", TestSuite(()))


def test_empty_source_is_rejected():
    with pytest.raises(ValueError):
        SourceProgram("p", "t", "")


@pytest.mark.parametrize("root", [BASICALGO, DATAANALYSIS])
def test_save_load_round_trip(tmp_path, root):
    corpus = load_corpus(root)
    again = load_corpus(save_corpus(corpus, tmp_path / "copy"))
    assert again == corpus


case_ids = st.lists(st.from_regex(r"[a-z][a-z0-9]{0,6}", fullmatch=True), min_size=1, max_size=8, unique=True)


@settings(max_examples=40, deadline=None)
@given(ids=case_ids)
def test_round_trip_preserves_any_case_order(tmp_path_factory, ids):
    cases = tuple(TestCase(i, f"{i}\n", stdin=f"{n}\n") for n, i in enumerate(ids))
    task = ProgrammingTask("t", "desc\n", TestSuite(cases), comparator=ComparatorSpec("numeric", 1e-3))
    corpus = Corpus("x", "python", (task,), (SourceProgram("t_p1", "t", "print(1)\n"),))
    back = load_corpus(save_corpus(corpus, tmp_path_factory.mktemp("rt")))
    assert [c.case_id for c in back.task("t").suite] == ids
    assert back == corpus


# -- configuration -----------------------------------------------------------


def test_defaults():
    cfg = PipelineConfig()
    assert (cfg.n_samples, cfg.max_trials_k) == (10, 3)
    assert (cfg.alpha, cfg.beta) == (Fraction(1, 2), Fraction(1, 4))
    assert (cfg.gen_temperature, cfg.sample_temperature) == (0.0, 0.5)
    assert cfg.mode is Mode.FULL and cfg.rule_variant is RuleVariant.FULL
    assert cfg.tutor_backend.model_name == "gpt-4"
    assert cfg.student_backend.model_name == "gpt-3.5-turbo"
    assert cfg.limits == ExecLimits(5.0, 512 * 1024 * 1024, False)


def test_empty_config_file_gives_defaults(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("")
    assert load_config(p) == PipelineConfig()
    p.write_text("{}")
    assert load_config(p) == PipelineConfig()


def test_single_trial_is_allowed():
    assert config_from_mapping({"max_trials_k": 1}).max_trials_k == 1


@pytest.mark.parametrize("field,value", [("alpha", 1.5), ("beta", -0.1), ("n_samples", 0),
                                         ("max_trials_k", 0), ("sample_temperature", 3)])
def test_out_of_range_fields_are_named(field, value):
    with pytest.raises(ConfigError, match=field):
        config_from_mapping({field: value})


def test_unknown_field_rejected():
    with pytest.raises(ConfigError, match="bogus"):
        config_from_mapping({"bogus": 1})


def test_alpha_float_is_exact():
    assert config_from_mapping({"alpha": 0.1}).alpha == Fraction(1, 10)
    assert config_from_mapping({"alpha": "3/5"}).alpha == Fraction(3, 5)


def test_network_cannot_be_enabled():
    with pytest.raises(ConfigError):
        ExecLimits(network_allowed=True)


def test_config_json_round_trip(tmp_path):
    cfg = config_from_mapping({"mode": "io", "alpha": "2/5", "seed": 9,
                               "tutor_backend": "scripted_replay:/tmp/x@m"})
    p = tmp_path / "c.json"
    p.write_text(json.dumps(cfg.to_json()))
    assert load_config(p) == cfg
    assert set(cfg.to_json()) == set(CONFIG_FIELDS)


@pytest.mark.parametrize("text,expected", [
    ("script:/a/b.json@gpt-4", BackendSpec("script", "/a/b.json", "gpt-4")),
    ("scripted_replay:/cache", BackendSpec("scripted_replay", "/cache", "")),
    ('{"kind": "http_chat", "endpoint_or_path": "http://h/v1", "model_name": "m", "auth_env_var": "K"}',
     BackendSpec("http_chat", "http://h/v1", "m", "K")),
])
def test_backend_shorthand(text, expected):
    assert BackendSpec.parse(text) == expected


def test_backend_kind_validated():
    with pytest.raises(ConfigError):
        BackendSpec.parse("ftp:somewhere")
