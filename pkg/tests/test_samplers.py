import math
from collections import Counter

import pytest

from micropencil.engine import run_trace
from micropencil.errors import CompilationFailure
from micropencil.oracle import eval_expr, final_view
from micropencil.samplers import (
    FIGURE_PLAN,
    LEAVES,
    GrammarConfig,
    Plan,
    compile_plan,
    make_rng,
    match_skeleton,
    realizable,
    realize_plan,
    sample_plan,
    sample_plan_example,
    sample_program_traced,
    sample_skeleton,
    wrapper_mask,
)


def test_config_text_round_trip(tmp_path):
    cfg = GrammarConfig().with_overrides({"max_lines": "96", "p_leaf": "0.5", "p_eff": "0.1",
                                          "p_env": "0.1", "p_seq": "0.1", "p_if": "0.1", "p_try": "0.1"})
    path = tmp_path / "g.cfg"
    path.write_text(cfg.to_text())
    assert GrammarConfig.load(path) == cfg


def test_config_rejects_bad_groups():
    with pytest.raises(ValueError):
        GrammarConfig(p_leaf=0.9)
    with pytest.raises(ValueError):
        GrammarConfig().with_overrides({"no_such_key": "1"})


def test_leaf_only_when_p_leaf_is_one():
    cfg = GrammarConfig().with_overrides(
        {"p_leaf": "1", "p_eff": "0", "p_env": "0", "p_seq": "0", "p_if": "0", "p_try": "0"}
    )
    rng = make_rng(3)
    for _ in range(200):
        skel = sample_skeleton(cfg, rng)
        assert len(skel) == 1 and skel[0] in LEAVES


def test_leaf_frequencies_within_three_sigma():
    cfg = GrammarConfig()
    rng = make_rng(11)
    n = 3000
    counts = Counter(sample_skeleton(cfg, rng)[-1] for _ in range(n))
    p = 1 / 3
    sigma = math.sqrt(n * p * (1 - p))
    for leaf in LEAVES:
        assert abs(counts[leaf] - n * p) <= 3 * sigma, counts


def test_masks():
    assert wrapper_mask(["TailApp"], 12) == {"Eff"}
    assert "Env" not in wrapper_mask(["Eff", "Env", "LookupVar"], 12)
    assert wrapper_mask(["LookupVar"] * 12, 12) == set()


def test_sampled_skeletons_are_realizable_and_capped():
    cfg = GrammarConfig()
    rng = make_rng(5)
    for _ in range(500):
        skel = sample_skeleton(cfg, rng)
        assert realizable(skel) and len(skel) <= cfg.max_depth


def test_unrealizable_plan_rejected():
    plan = Plan(("Seq", "TailApp"))
    assert not realizable(plan.skeleton)
    with pytest.raises(CompilationFailure):
        compile_plan(plan, GrammarConfig(), make_rng(0))


def test_figure_plan_realized():
    assert realizable(FIGURE_PLAN)
    cfg = GrammarConfig()
    rng = make_rng(0)
    from micropencil.samplers import _plan_requirements

    ex = realize_plan(_plan_requirements(FIGURE_PLAN, cfg, rng), cfg, rng)
    step = ex.trace.steps[ex.match]
    assert tuple(step.labels[-len(FIGURE_PLAN):]) == FIGURE_PLAN
    assert match_skeleton(ex.trace, FIGURE_PLAN) == ex.match


def test_plan_examples_match():
    cfg = GrammarConfig()
    for i in range(40):
        ex = sample_plan_example(cfg, make_rng(1, i))
        assert match_skeleton(ex.trace, ex.plan.skeleton) == ex.match


def test_plan_sampling_deterministic():
    a = sample_plan(GrammarConfig(), make_rng(9, 1))
    b = sample_plan(GrammarConfig(), make_rng(9, 1))
    assert a == b


@pytest.mark.parametrize("seed", range(30))
def test_sampled_program_agrees_with_oracle(seed):
    cfg = GrammarConfig()
    prog, trace = sample_program_traced(cfg, make_rng(seed, 2))
    assert len(trace.steps) <= cfg.max_lines
    want = eval_expr(prog)
    assert trace.result.value == want.value
    assert final_view(prog, trace.result) == final_view(prog, want)
    assert run_trace(prog).result == trace.result
