import time

import pytest
from hypothesis import given, settings

from micropencil import syntax as S
from micropencil.engine import CHANNELS, Context, generate_step, iter_trace, pencil_reduce, run_trace
from micropencil.errors import StepBudgetExceeded, UnbalancedMarkers
from micropencil.oracle import eval_expr, final_view
from micropencil.parser import compile_source, lex, make_call, render
from micropencil.suite import BitInstance, build_task

from conftest import identity_program, walk_program
from test_oracle import lower, trees

# contexts shown in the identity-function walkthrough, in display order
WALKTHROUGH = [
    "[call] [call] Exp2",
    "[call] [call] App(foo (Exp1))",
    "[call] [call] App(foo (Exp1)) arg0= [call] [call] Exp1",
    "[call] [call] App(foo (Exp1)) arg0= [call] [call] App(bar (O.obj1))",
    "[call] [call] App(foo (Exp1)) arg0= [call] [call] App(bar (O.obj1)) arg0 = [call] O.obj1",
    "[call] [call] App(foo (Exp1)) arg0= [call] [call] App(bar (O.obj1)) arg0 = Eff(empty) O.obj1",
    "[call] [call] App(foo (Exp1)) arg0= [call] Eff(empty) [call] Env(Bind(x O.obj1)) [call] Exp4",
    "[call] [call] App(foo (Exp1)) arg0= [call] Eff(empty) [call] Env(Bind(x O.obj1)) [call] LookupVar(x)",
    "[call] [call] App(foo (Exp1)) arg0= [call] Eff(empty) [call] Env(Bind(x O.obj1)) Eff(empty) O.obj1",
    "[call] [call] App(foo (Exp1)) arg0= [call] Eff(empty) Eff(empty) O.obj1",
    "[call] [call] App(foo (Exp1)) arg0= Eff(empty) O.obj1",
]
# (context index, completion) pairs shown alongside
WALKTHROUGH_COMPLETIONS = [
    (0, "=> [call] App(foo (Exp1)) [ret]"),
    (2, "=> [call] App(bar (O.obj1)) [ret]"),
]


def is_subsequence(small, big):
    it = iter(big)
    return all(any(x == y for y in it) for x in small)


def test_walkthrough_contexts_in_order():
    t = run_trace(identity_program())
    contexts = [list(s.context) for s in t.steps]
    assert is_subsequence([lex(c) for c in WALKTHROUGH], contexts)
    for i, comp in WALKTHROUGH_COMPLETIONS:
        step = next(s for s in t.steps if list(s.context) == lex(WALKTHROUGH[i]))
        assert list(step.completion) == lex(comp)
    assert t.result.value == "O.obj1" and t.result.effects == []


def test_walkthrough_first_step():
    t = run_trace(identity_program())
    assert render(t.steps[0].context) == "[call] [call] Exp2"
    assert t.steps[0].kind == "ExpRef"


def test_pencil_reduce_uses_last_call():
    toks = ["a", "[call]", "b", "[call]", "c", "=>", "d", "[ret]"]
    assert pencil_reduce(toks) == ["a", "[call]", "b", "d"]


@pytest.mark.parametrize("toks", [["a", "=>", "d", "[ret]"], ["x", "y"], []])
def test_pencil_reduce_unbalanced(toks):
    with pytest.raises(UnbalancedMarkers):
        pencil_reduce(toks)


def test_object_root_single_call():
    p = S.Program()
    p.root = p.new_expr(S.ObjectLiteral("O.x"))
    t = run_trace(p)
    assert t.result.value == "O.x"
    assert any(render(s.context).endswith("[call] O.x") for s in t.steps)


def test_adjacent_effects_combine():
    p = compile_source('def f(o): return Seq(Assert(o, Attr("k"), true_), Assert(o, Attr("n"), o))\n')
    make_call(p, "f", ["O.a"])
    t = run_trace(p)
    assert t.result.effects == [("O.a", "Att.k", "True"), ("O.a", "Att.n", "O.a")]
    last = t.steps[-1]
    assert last.kind == "Eff"
    assert render(last.completion).startswith("=> Eff(Assertion(O.a Att.k True) Assertion(O.a Att.n O.a))")


def test_replay_from_printed_context():
    p = build_task("copy_bits", BitInstance(3, (True, False, True)))
    t = run_trace(p)
    for step in t.steps[::7]:
        printed = render(step.context)
        assert generate_step(p, lex(printed)) == list(step.completion)


def test_context_round_trip():
    t = run_trace(identity_program())
    for step in t.steps:
        assert Context.from_tokens(step.context).tokens() == list(step.context)


def test_step_budget():
    with pytest.raises(StepBudgetExceeded):
        run_trace(identity_program(), max_steps=3)
    with pytest.raises(StepBudgetExceeded):
        list(iter_trace(identity_program(), max_steps=3))


def test_runs_are_deterministic():
    p = build_task("flip_bits", BitInstance(4, (True, True, False, True)))
    a, b = run_trace(p), run_trace(p)
    assert [(s.context, s.completion) for s in a.steps] == [(s.context, s.completion) for s in b.steps]


@pytest.mark.parametrize("n", [4, 8, 16, 32])
def test_tail_loop_constant_context(n):
    base = run_trace(walk_program(4)).max_context
    t = run_trace(walk_program(n))
    assert t.result.value == f"O.n{n - 1}"
    assert t.max_context == base


def test_non_tail_recursion_grows():
    src = 'def down(l): return If(HasAttr(l, Attr("next")), Seq(down(LookupAttr(l, Attr("next"))), l), l)\n'
    sizes = []
    for n in (4, 8):
        p = compile_source(src)
        p.state = [(f"O.n{i}", "Att.next", f"O.n{i + 1}") for i in range(n - 1)]
        make_call(p, "down", ["O.n0"])
        sizes.append(run_trace(p).max_context)
    assert sizes[1] > sizes[0]


def test_channels_within_table():
    p = build_task("RPC_add", BitInstance(3, (True, False, True), (True, True, False)))
    for step in run_trace(p).steps:
        assert step.channels <= CHANNELS[step.kind], (step.index, step.kind, step.channels)


def test_identity_runtime():
    start = time.perf_counter()
    run_trace(identity_program())
    assert time.perf_counter() - start < 1.0


@settings(max_examples=200, deadline=None)
@given(trees)
def test_engine_agrees_with_oracle_on_try_trees(tree):
    p = S.Program()
    p.root = lower(tree, p)
    want = eval_expr(p)
    got = run_trace(p).result
    assert got.value == want.value
    assert final_view(p, got) == final_view(p, want)
