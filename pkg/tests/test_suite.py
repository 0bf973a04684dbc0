import itertools

import pytest
from hypothesis import given, settings, strategies as st

from micropencil import syntax as S
from micropencil.engine import run_trace
from micropencil.errors import InvalidInstance
from micropencil.oracle import eval_expr, final_view
from micropencil.suite import (
    BIT_TASKS,
    LINE_BANDS,
    BitInstance,
    CnfInstance,
    SuiteEntry,
    build_task,
    check_result,
    default_manifest,
    make_instance,
    read_manifest,
    semantic_oracle,
    suite_stats,
    to_bits,
    to_int,
    write_manifest,
)


def test_manifest_counts():
    m = default_manifest()
    tasks = [e.task for e in m]
    for t in BIT_TASKS:
        assert tasks.count(t) == 9
    assert tasks.count("sat_solve") == 180
    assert tasks.count("sat_verify") == 36


def test_manifest_round_trip(tmp_path):
    m = default_manifest(4)
    write_manifest(m, tmp_path / "m.jsonl")
    assert read_manifest(tmp_path / "m.jsonl") == m


def test_instances_deterministic():
    e = SuiteEntry("sat_solve", {"vars": 3, "clauses": 4, "index": 2}, 7)
    assert e.instance() == e.instance()
    assert make_instance("RPC_mult", {"length": 8}, 0).a.count(True) == 2


@given(st.integers(0, 2**12 - 1))
def test_bit_helpers(n):
    assert to_int(to_bits(n, 12)) == n


def test_bad_instances():
    with pytest.raises(InvalidInstance):
        BitInstance(3, (True,))
    with pytest.raises(InvalidInstance):
        CnfInstance(2, ((3,),))
    with pytest.raises(InvalidInstance):
        build_task("RPC_add", BitInstance(2, (True, False)))


@pytest.mark.parametrize("task", ["copy_bits", "flip_bits"])
def test_copy_and_flip(task):
    inst = BitInstance(5, (True, False, False, True, True))
    p = build_task(task, inst)
    view = final_view(p, run_trace(p).result)
    assert check_result(task, inst, view) == []


def test_mult_all_three_bit_pairs():
    for a, b in itertools.product(range(8), repeat=2):
        inst = BitInstance(3, to_bits(a, 3), to_bits(b, 3))
        p = build_task("RPC_mult", inst)
        view = final_view(p, eval_expr(p))
        assert check_result("RPC_mult", inst, view) == []


clauses = st.lists(
    st.lists(st.integers(1, 3).flatmap(lambda v: st.sampled_from([v, -v])), min_size=1, max_size=3),
    min_size=1,
    max_size=4,
)


@settings(max_examples=40, deadline=None)
@given(clauses, st.lists(st.booleans(), min_size=3, max_size=3))
def test_sat_tasks_against_enumeration(cls, asg):
    cnf = tuple(tuple(c) for c in cls)
    inst = CnfInstance(3, cnf, tuple(asg))
    p = build_task("sat_verify", inst)
    assert check_result("sat_verify", inst, final_view(p, eval_expr(p))) == []
    solve = CnfInstance(3, cnf)
    p = build_task("sat_solve", solve)
    view = final_view(p, run_trace(p).result)
    assert check_result("sat_solve", solve, view) == []
    assert (view[("O.out", "Att.value")] == S.TRUE) == solve.satisfiable()


def test_check_result_flags_wrong_output():
    inst = BitInstance(2, (True, False))
    want = semantic_oracle("copy_bits", inst)
    bad = dict(want)
    bad[("O.q0", "Att.value")] = S.FALSE
    assert check_result("copy_bits", inst, bad)


def test_stats_summary():
    runs = []
    for n in (2, 3):
        inst = BitInstance(n, (True,) * n)
        runs.append(("copy_bits", run_trace(build_task("copy_bits", inst))))
    st_ = suite_stats(runs)["copy_bits"].summary()
    assert st_["programs"] == 2
    assert st_["lines_min"] == len(runs[0][1].steps)
    assert st_["ctx_min"] <= st_["ctx_max"]
    assert set(LINE_BANDS) >= {"copy_bits", "sat_solve"}
