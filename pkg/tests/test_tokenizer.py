import pytest
from hypothesis import given, settings, strategies as st

from micropencil.dataset import default_vocab, trace_records
from micropencil.engine import run_trace
from micropencil.parser import lex
from micropencil.samplers import GrammarConfig, make_rng, sample_program_traced
from micropencil.suite import BitInstance, build_task
from micropencil.tokenizer import OutOfVocabulary, VocabConfig, Vocabulary, program_names

from conftest import identity_program


def test_three_ids_for_root_context():
    v = default_vocab("spaced")
    assert len(v.tokenize(v.render(lex("[call] [call] Exp2")))) == 3


def test_atomic_mode_keeps_dotted_symbols_whole():
    v = default_vocab("atomic")
    ids = v.tokenize(v.render(lex("arg0= [call] O.obj1")))
    assert v.detokenize(ids) == "arg0= [call] O.obj1"


def test_empty_text():
    v = default_vocab()
    assert v.tokenize("") == [] and v.detokenize([]) == ""


def test_oov_raises():
    v = default_vocab()
    with pytest.raises(OutOfVocabulary):
        v.tokenize("[call] zebra")
    assert v.oov("[call] zebra") == ["zebra"]


def test_no_duplicate_tokens():
    for mode in ("spaced", "atomic"):
        v = default_vocab(mode)
        assert len(set(v.tokens)) == len(v)


def test_export_load_round_trip(tmp_path):
    v = default_vocab()
    v.export(tmp_path / "vocab.txt")
    w = Vocabulary.load(tmp_path / "vocab.txt")
    assert w.tokens == v.tokens and w.n_structural == v.n_structural


def test_extended_keeps_frozen_ids():
    v = default_vocab()
    w = v.extended(program_names(identity_program()))
    assert w.tokens[: len(v)] == v.tokens
    assert "foo" in w and "bar" in w
    assert "foo" not in v


@pytest.mark.parametrize("mode", ["spaced", "atomic"])
def test_suite_trace_round_trip(mode):
    v = default_vocab(mode)
    t = run_trace(build_task("RPC_add", BitInstance(3, (True, True, False), (False, True, True))))
    for rec in trace_records("x", t, v):
        for text in (rec.prompt_text, rec.completion_text):
            assert v.detokenize(v.tokenize(text)) == text


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_sampled_programs_in_vocab(seed):
    v = default_vocab()
    _, t = sample_program_traced(GrammarConfig(), make_rng(seed, 2, 0))
    for rec in trace_records("x", t, v):
        assert v.oov(rec.prompt_text) == [] and v.oov(rec.completion_text) == []


def test_bad_mode():
    with pytest.raises(ValueError):
        VocabConfig(mode="bytes")
