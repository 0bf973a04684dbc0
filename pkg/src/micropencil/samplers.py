"""Training-program generators.

Two samplers share one program builder:

* ``sample_program`` draws surrounding code from the context grammar (K)
  and fills its hole with a side expression from the expression grammar (E).
* ``sample_plan`` draws a stack skeleton bottom-up; ``compile_plan`` turns it
  into an expression whose evaluation puts exactly those frame labels at the
  bottom of the stack; ``embed_plan`` wraps it in sampled K-code and keeps
  only executions where ``match_skeleton`` finds the configuration.

Every generated program is a call ``main(v0 v1 ..)`` whose parameters are
bound to the plan and environment objects.  Functions are fresh, non-recursive
and closed over their own parameters, so every sampled program terminates.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import syntax as S
from .engine import Engine, Trace, iter_trace, run_trace
from .errors import (
    CompilationFailure,
    DynamicError,
    RejectionLimitExceeded,
    StepBudgetExceeded,
)

LEAVES = ("LookupVar", "LookupAttr", "TailApp")
WRAPPERS = ("Eff", "Env", "Seq", "If", "Try")
FRAME_ALPHABET = ("Env", "Eff", "Seq", "If", "Try", "LookupVar", "LookupAttr", "TailApp")
ATTRS = ("Att.value", "Att.next", "Att.k")

FIGURE_PLAN = (
    "Eff", "Env", "Seq", "Eff", "Env", "Eff", "Eff", "If", "Try", "Seq", "Eff", "TailApp",
)

_GROUPS = {
    "skeleton": ("p_leaf", "p_eff", "p_env", "p_seq", "p_if", "p_try"),
    "leaf": ("leaf_var", "leaf_attr", "leaf_tail"),
    "context": ("k_base", "k_let", "k_seq", "k_if", "k_try", "k_attr", "k_appL", "k_appR"),
    "expr": ("q_atom", "q_attr", "q_app", "q_seq", "q_if", "q_try", "q_let", "q_eff"),
    "atom": ("r_var", "r_env", "r_plan", "r_lit", "r_obj"),
    "cond": ("c_hasattr", "c_equal", "c_expr"),
}


def _u(n):
    return field(default=1.0 / n)


@dataclass(frozen=True)
class GrammarConfig:
    p_leaf: float = _u(6)
    p_eff: float = _u(6)
    p_env: float = _u(6)
    p_seq: float = _u(6)
    p_if: float = _u(6)
    p_try: float = _u(6)
    leaf_var: float = _u(3)
    leaf_attr: float = _u(3)
    leaf_tail: float = _u(3)
    k_base: float = _u(8)
    k_let: float = _u(8)
    k_seq: float = _u(8)
    k_if: float = _u(8)
    k_try: float = _u(8)
    k_attr: float = _u(8)
    k_appL: float = _u(8)
    k_appR: float = _u(8)
    q_atom: float = _u(8)
    q_attr: float = _u(8)
    q_app: float = _u(8)
    q_seq: float = _u(8)
    q_if: float = _u(8)
    q_try: float = _u(8)
    q_let: float = _u(8)
    q_eff: float = _u(8)
    r_var: float = _u(5)
    r_env: float = _u(5)
    r_plan: float = _u(5)
    r_lit: float = _u(5)
    r_obj: float = _u(5)
    c_hasattr: float = _u(3)
    c_equal: float = _u(3)
    c_expr: float = _u(3)
    max_depth: int = 12
    max_size: int = 64
    max_effects: int = 8
    max_bindings: int = 8
    max_lines: int = 128
    max_plan_lines: int = 512
    rejection_limit: int = 64
    n_env: int = 2
    n_plan: int = 1
    n_obj: int = 2
    n_noise: int = 2

    def __post_init__(self):
        for group, keys in _GROUPS.items():
            vals = [getattr(self, k) for k in keys]
            if any(v < 0 for v in vals):
                raise ValueError(f"negative probability in {group} group")
            if abs(sum(vals) - 1.0) > 1e-6:
                raise ValueError(f"{group} probabilities sum to {sum(vals):.6f}, not 1")
        if self.max_depth < 1 or self.max_size < 2 or self.n_env < 1 or self.n_plan < 1:
            raise ValueError("budgets too small")

    def group(self, name: str) -> dict[str, float]:
        return {k: getattr(self, k) for k in _GROUPS[name]}

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            lines.append(f"{f.name} = {getattr(self, f.name)!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "GrammarConfig":
        return cls().with_overrides(_parse_kv(text))

    @classmethod
    def load(cls, path: str | Path) -> "GrammarConfig":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))

    def with_overrides(self, kv: dict[str, str]) -> "GrammarConfig":
        types = {f.name: f.type for f in fields(self)}
        vals = {}
        for k, v in kv.items():
            if k not in types:
                raise ValueError(f"unknown config key {k!r}")
            vals[k] = int(v) if types[k] in (int, "int") else float(v)
        return replace(self, **vals)


def _parse_kv(text: str) -> dict[str, str]:
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {n}: expected key = value")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def make_rng(seed: int, *key: int) -> np.random.Generator:
    """Counter-based stream keyed by (seed, key...)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, *key])))


def _choose(rng, weights: dict[str, float], allowed=None) -> str:
    names = [k for k in weights if allowed is None or k in allowed]
    w = np.array([weights[k] for k in names], dtype=float)
    if not names or w.sum() <= 0:
        raise CompilationFailure("no production left after masking")
    return names[int(rng.choice(len(names), p=w / w.sum()))]


# -- plans -------------------------------------------------------------------


@dataclass(frozen=True)
class Plan:
    skeleton: tuple[str, ...]
    env_req: dict = field(default_factory=dict)
    eff_req: tuple = ()

    def __post_init__(self):
        if not self.skeleton or self.skeleton[-1] not in LEAVES:
            raise ValueError("skeleton must end in a leaf label")
        if any(lab not in FRAME_ALPHABET for lab in self.skeleton):
            raise ValueError(f"unknown frame label in {self.skeleton}")

    def __str__(self):
        return " -> ".join(self.skeleton)


def wrapper_mask(skeleton: Sequence[str], max_depth: int) -> set[str]:
    """Wrappers that may be placed outside ``skeleton`` (stop is always allowed)."""
    if len(skeleton) >= max_depth:
        return set()
    if skeleton[0] in ("Env", "TailApp"):
        # a call frame is always opened inside an effect-separation frame
        return {"Eff"}
    allowed = set(WRAPPERS)
    i = 0
    while i < len(skeleton) and skeleton[i] == "Eff":
        i += 1
    if i < len(skeleton) and skeleton[i] in ("Env", "TailApp"):
        # an Env directly above effect frames would make the call a tail call
        allowed.discard("Env")
    return allowed


def realizable(skeleton: Sequence[str]) -> bool:
    if not skeleton or skeleton[-1] not in LEAVES:
        return False
    for j in range(len(skeleton) - 1, 0, -1):
        if skeleton[j - 1] not in wrapper_mask(skeleton[j:], len(skeleton) + 1):
            return False
    return True


def sample_skeleton(cfg: GrammarConfig, rng) -> tuple[str, ...]:
    leaf = _choose(rng, dict(zip(LEAVES, (cfg.leaf_var, cfg.leaf_attr, cfg.leaf_tail))))
    skel = [leaf]
    weights = cfg.group("skeleton")
    label_of = {"p_eff": "Eff", "p_env": "Env", "p_seq": "Seq", "p_if": "If", "p_try": "Try"}
    while True:
        mask = wrapper_mask(skel, cfg.max_depth)
        allowed = {"p_leaf"} | {k for k, lab in label_of.items() if lab in mask}
        pick = _choose(rng, weights, allowed)
        if pick == "p_leaf":
            return tuple(skel)
        skel.insert(0, label_of[pick])


def sample_plan(cfg: GrammarConfig, rng) -> Plan:
    skel = sample_skeleton(cfg, rng)
    return _plan_requirements(skel, cfg, rng)


def _plan_requirements(skel: Sequence[str], cfg: GrammarConfig, rng) -> Plan:
    top = main_bindings(cfg)
    env_req, eff_req = {}, ()
    if skel[-1] == "LookupVar":
        var = list(top)[int(rng.integers(len(top)))]
        env_req = {var: top[var]}
    elif skel[-1] == "LookupAttr":
        objs = list(top.values()) + [f"O.obj{i}" for i in range(cfg.n_obj)]
        o = objs[int(rng.integers(len(objs)))]
        a = ("Att.next", "Att.k")[int(rng.integers(2))]
        v = objs[int(rng.integers(len(objs)))]
        eff_req = ((o, a, v),)
    return Plan(tuple(skel), env_req, eff_req)


def main_bindings(cfg: GrammarConfig) -> dict[str, str]:
    objs = [f"O.plan{i}" for i in range(cfg.n_plan)] + [f"O.env{i}" for i in range(cfg.n_env)]
    return {f"v{i}": o for i, o in enumerate(objs)}


# -- program builder -----------------------------------------------------------


class Builder:
    """Accumulates definitions for one program and tracks budgets."""

    def __init__(self, cfg: GrammarConfig, rng):
        self.cfg = cfg
        self.rng = rng
        self.program = S.Program()
        self.n_funcs = 1  # f0 is main
        self.size = 0
        self.pending = 0
        self.effects = 0
        self.bindings = 0
        self.state: dict[tuple[str, str], str] = {}

    # pools
    def pool(self) -> list[str]:
        c = self.cfg
        return (
            [f"O.plan{i}" for i in range(c.n_plan)]
            + [f"O.env{i}" for i in range(c.n_env)]
            + [f"O.obj{i}" for i in range(c.n_obj)]
            + [f"O.noise{i}" for i in range(c.n_noise)]
        )

    def pick(self, seq):
        return seq[int(self.rng.integers(len(seq)))]

    def new(self, form: S.Form) -> str:
        return self.program.new_expr(form)

    def lit(self, sym: str) -> str:
        return self.new(S.ObjectLiteral(sym))

    def fresh_fun(self, params: Sequence[str], body: str) -> str:
        name = f"f{self.n_funcs}"
        self.n_funcs += 1
        self.program.add_fun(name, params, body)
        return name

    def call(self, func: str, args: Sequence[str]) -> str:
        return self.new(S.App(func, tuple(args)))

    def pass_scope(self, scope: dict) -> list[str]:
        return [self.new(S.LookupVar(v)) for v in scope]

    # -- expression grammar

    def _room(self, arity: int) -> bool:
        return self.size + 1 + arity + self.pending <= self.cfg.max_size

    def expr(self, scope: dict, depth: int) -> str:
        """Sample a side expression; the caller reserved one node for it."""
        self.pending -= 1
        c = self.cfg
        arity = {"q_atom": 0, "q_attr": 1, "q_app": 2, "q_seq": 2, "q_if": 3, "q_try": 2, "q_let": 2, "q_eff": 2}
        allowed = {"q_atom"}
        if depth < c.max_depth:
            allowed |= {k for k, n in arity.items() if self._room(n)}
        if self.effects >= c.max_effects:
            allowed.discard("q_eff")
        if self.bindings >= c.max_bindings:
            allowed -= {"q_let", "q_app"}
        kind = _choose(self.rng, c.group("expr"), allowed)
        self.size += 1
        self.pending += arity[kind]
        d = depth + 1
        if kind == "q_atom":
            return self.atom(scope)
        if kind == "q_attr":
            return self.new(S.LookupAttr(self.expr(scope, d), self.pick(ATTRS)))
        if kind == "q_app":
            # App(E, E): the first E becomes the body of a closed one-parameter function
            self.bindings += 1
            body = self.expr({"v0": None}, d)
            arg = self.expr(scope, d)
            return self.call(self.fresh_fun(("v0",), body), (arg,))
        if kind == "q_seq":
            return self.new(S.Seq(self.expr(scope, d), self.expr(scope, d)))
        if kind == "q_if":
            self.pending -= 1
            test = self.cond(scope, d)
            return self.new(S.If(test, self.expr(scope, d), self.expr(scope, d)))
        if kind == "q_try":
            return self.new(S.Try(self.expr(scope, d), self.expr(scope, d)))
        if kind == "q_let":
            self.bindings += 1
            bound = self.expr(scope, d)
            var = _fresh_var(scope)
            inner = dict(scope)
            inner[var] = None
            body = self.expr(inner, d)
            f = self.fresh_fun((var, *scope), body)
            return self.call(f, (bound, *self.pass_scope(scope)))
        # q_eff: a small assertion
        self.effects += 1
        self.pending -= 2
        self.size += 2
        return self.assertion(scope)

    def cond(self, scope: dict, depth: int) -> str:
        c = self.cfg
        allowed = {"c_expr"}
        if self._room(1):
            allowed.add("c_hasattr")
        if self._room(2):
            allowed.add("c_equal")
        kind = _choose(self.rng, c.group("cond"), allowed)
        if kind == "c_expr":
            self.pending += 1
            return self.expr(scope, depth)
        self.size += 1
        if kind == "c_hasattr":
            self.pending += 1
            return self.new(S.HasAttr(self.expr(scope, depth + 1), self.pick(ATTRS)))
        self.pending += 2
        return self.new(S.Equal(self.expr(scope, depth + 1), self.expr(scope, depth + 1)))

    def atom(self, scope: dict) -> str:
        c = self.cfg
        allowed = {"r_plan", "r_lit", "r_obj"}
        if scope:
            allowed.add("r_var")
        env_vars = [v for v, o in scope.items() if o and o.startswith("O.env")]
        if env_vars:
            allowed.add("r_env")
        kind = _choose(self.rng, c.group("atom"), allowed)
        if kind == "r_var":
            return self.new(S.LookupVar(self.pick(list(scope))))
        if kind == "r_env":
            return self.new(S.LookupVar(self.pick(env_vars)))
        if kind == "r_plan":
            return self.lit(f"O.plan{int(self.rng.integers(c.n_plan))}")
        if kind == "r_lit":
            return self.lit(self.pick(S.SPECIALS))
        return self.lit(self.pick([f"O.obj{i}" for i in range(c.n_obj)]))

    def assertion(self, scope: dict) -> str:
        """Assert(target, attribute, value) on noise or environment objects."""
        c = self.cfg
        env_vars = [v for v, o in scope.items() if o and o.startswith("O.env")]
        if env_vars and self.rng.random() < 0.5:
            target = self.new(S.LookupVar(self.pick(env_vars)))
            return self.new(S.Assert(target, "Att.value", self.lit(self.pick((S.TRUE, S.FALSE)))))
        target = self.lit(f"O.noise{int(self.rng.integers(c.n_noise))}")
        value = self.lit(self.pick(self.pool()[: c.n_plan + c.n_env]))
        return self.new(S.Assert(target, "Att.k", value))

    # -- context grammar

    def context(self, scope: dict, depth: int, hole) -> str:
        """Sample K and plug ``hole(scope)`` into every insertion point."""
        c = self.cfg
        arity = {"k_base": 0, "k_let": 1, "k_seq": 1, "k_if": 1, "k_try": 0, "k_attr": 0, "k_appL": 2, "k_appR": 2}
        allowed = {"k_base"}
        if depth < c.max_depth:
            allowed |= {k for k, n in arity.items() if self._room(n)}
        if self.bindings >= c.max_bindings:
            allowed -= {"k_let", "k_appL", "k_appR"}
        kind = _choose(self.rng, c.group("context"), allowed)
        if kind == "k_base":
            return hole(scope)
        self.size += 1
        self.pending += arity[kind]
        d = depth + 1
        if kind == "k_let":
            self.bindings += 1
            bound = self.expr(scope, d)
            var = _fresh_var(scope)
            inner = dict(scope)
            inner[var] = None
            body = self.context(inner, d, hole)
            f = self.fresh_fun((var, *scope), body)
            return self.call(f, (bound, *self.pass_scope(scope)))
        if kind == "k_seq":
            first = self.expr(scope, d)
            return self.new(S.Seq(first, self.context(scope, d, hole)))
        if kind == "k_if":
            self.pending -= 1
            test = self.cond(scope, d)
            return self.new(S.If(test, self.context(scope, d, hole), self.context(scope, d, hole)))
        if kind == "k_try":
            return self.new(S.Try(self.context(scope, d, hole), self.context(scope, d, hole)))
        if kind == "k_attr":
            return self.new(S.LookupAttr(self.context(scope, d, hole), self.pick(ATTRS)))
        # App(K, E) / App(E, K): K in an argument of a fresh two-parameter function
        self.bindings += 2
        body = self.expr({"v0": None, "v1": None}, d)
        if kind == "k_appL":
            args = (self.context(scope, d, hole), self.expr(scope, d))
        else:
            args = (self.expr(scope, d), self.context(scope, d, hole))
        return self.call(self.fresh_fun(("v0", "v1"), body), args)

    # -- finishing

    def finish(self, body: str, extra_state: Sequence[tuple[str, str, str]] = ()) -> S.Program:
        top = main_bindings(self.cfg)
        self.program.add_fun("f0", tuple(top), body)
        args = [self.lit(o) for o in top.values()]
        self.program.root = self.call("f0", args)
        pool = self.pool()
        state = {}
        for o in pool:
            state[(o, "Att.value")] = self.pick((S.TRUE, S.FALSE))
            state[(o, "Att.next")] = self.pick(pool)
            state[(o, "Att.k")] = self.pick(pool)
        for o, a, v in extra_state:
            state[(o, a)] = v
        self.program.state = [(o, a, v) for (o, a), v in state.items()]
        return self.program


def _fresh_var(scope: dict) -> str:
    i = 0
    while f"v{i}" in scope:
        i += 1
    return f"v{i}"


# -- plan compilation ----------------------------------------------------------


@dataclass
class CompiledPlan:
    plan: Plan
    builder: Builder
    expr: str
    state: list[tuple[str, str, str]]


def compile_plan(plan: Plan, cfg: GrammarConfig, rng) -> CompiledPlan:
    """Realize ``plan`` as an expression in a fresh builder.

    Deeper parts of the skeleton go into Seq.x, If.test and Try.second so the
    planned labels stay contiguous at the bottom of the stack.  Call frames
    (Env, TailApp) come from non-tail applications of fresh functions.
    """
    if not realizable(plan.skeleton):
        raise CompilationFailure(f"skeleton {plan} cannot occur in a trace")
    b = Builder(cfg, rng)
    state: list[tuple[str, str, str]] = list(plan.eff_req)
    scope = main_bindings(cfg)

    def side() -> str:
        return b.lit(b.pick((S.TRUE, S.FALSE, S.UNIT, "O.plan0")))

    def effect(sc) -> str:
        b.effects += 1
        return b.assertion(sc)

    def call_frame(labels, sc) -> str:
        # non-tail App: its separation frame is the Eff above Env/TailApp
        params = tuple(sc)
        if labels[0] == "TailApp":
            body = b.new(S.LookupVar(params[0])) if params else b.lit(S.UNIT)
            f = b.fresh_fun(params, body)
            return b.call(f, b.pass_scope(sc))
        inner = dict(sc)
        body = comp(labels[1:], True, inner)
        f = b.fresh_fun(params, body)
        b.bindings += len(params)
        return b.call(f, b.pass_scope(sc))

    def comp(labels, tail, sc, after_eff=False) -> str:
        head, rest = labels[0], labels[1:]
        if head == "LookupVar":
            var = next(iter(plan.env_req), None) or next(iter(sc))
            return b.new(S.LookupVar(var))
        if head == "LookupAttr":
            o, a, _ = plan.eff_req[0] if plan.eff_req else ("O.plan0", "Att.k", None)
            holders = [v for v, obj in sc.items() if obj == o]
            target = b.new(S.LookupVar(b.pick(holders))) if holders and rng.random() < 0.5 else b.lit(o)
            return b.new(S.LookupAttr(target, a))
        if head in ("TailApp", "Env"):
            if tail:
                raise CompilationFailure("call frame requested in tail position")
            return call_frame(labels, sc)
        if head == "Seq":
            return b.new(S.Seq(comp(rest, False, sc), side()))
        if head == "If":
            return b.new(S.If(comp(rest, False, sc), side(), side()))
        if head == "Try":
            body = b.lit(S.FAIL)
            if rng.random() < 0.5:
                body = b.new(S.Seq(effect(sc), body))
            return b.new(S.Try(body, comp(rest, False, sc)))
        if head == "Eff":
            if rest and rest[0] in ("Env", "TailApp"):
                if tail:
                    raise CompilationFailure("call frame requested in tail position")
                call = call_frame(rest, sc)
                # a bare call would merge its separation frame into the parent
                # effect frame, so it needs its own Seq after another Eff
                if after_eff or rng.random() < 0.5:
                    return b.new(S.Seq(effect(sc), call))
                return call
            return b.new(S.Seq(effect(sc), comp(rest, tail, sc, after_eff=True)))
        raise CompilationFailure(f"unknown label {head}")

    expr = b.new(S.Seq(comp(list(plan.skeleton), False, scope), b.lit("O.plan0")))
    return CompiledPlan(plan, b, expr, state)


def embed_plan(compiled: CompiledPlan, cfg: GrammarConfig, rng) -> S.Program:
    """Place the planned expression inside sampled surrounding code."""
    b = compiled.builder
    b.rng = rng
    b.size, b.pending = 0, 0
    body = b.context(main_bindings(cfg), 0, lambda scope: compiled.expr)
    return b.finish(body, compiled.state)


def frame_labels(step) -> tuple[str, ...]:
    return tuple(step.labels)


def match_skeleton(trace: Trace, skeleton: Sequence[str]) -> int | None:
    """Index of the first step whose innermost frame labels equal ``skeleton``."""
    n = len(skeleton)
    want = tuple(skeleton)
    for step in trace.steps:
        if len(step.labels) >= n and tuple(step.labels[-n:]) == want:
            return step.index
    return None


# -- top-level samplers ----------------------------------------------------------


@dataclass
class PlanExample:
    plan: Plan
    program: S.Program
    trace: Trace
    match: int
    attempts: int
    plans_tried: int = 1


def _execute(program: S.Program, cfg: GrammarConfig) -> Trace | None:
    if S.errors(S.validate(program)):
        raise CompilationFailure("generated program fails validation")
    try:
        return run_trace(program, max_steps=cfg.max_lines)
    except (DynamicError, StepBudgetExceeded):
        return None


def run_until_match(program: S.Program, skeleton: Sequence[str], max_steps: int) -> Trace | None:
    """Execute until the first step matching ``skeleton``; None on error or budget."""
    if S.errors(S.validate(program)):
        raise CompilationFailure("generated program fails validation")
    eng = Engine(program)
    trace = Trace(program, eng.header)
    n = len(skeleton)
    want = tuple(skeleton)
    try:
        for step in iter_trace(program, max_steps=max_steps, engine=eng):
            trace.steps.append(step)
            if step.labels[-n:] == want and len(step.labels) >= n:
                trace.n_steps = len(trace.steps)
                return trace
    except (DynamicError, StepBudgetExceeded):
        return None
    return None


def realize_plan(plan: Plan, cfg: GrammarConfig, rng) -> PlanExample:
    """Compile, embed and execute until the skeleton is matched.

    Only the prefix of the execution up to the matched step is run; the
    matched step is the supervised example.
    """
    for attempt in range(1, cfg.rejection_limit + 1):
        try:
            compiled = compile_plan(plan, cfg, rng)
            program = embed_plan(compiled, cfg, rng)
        except CompilationFailure:
            continue
        trace = run_until_match(program, plan.skeleton, cfg.max_plan_lines)
        if trace is not None:
            return PlanExample(plan, program, trace, trace.steps[-1].index, attempt)
    raise RejectionLimitExceeded(f"plan {plan} not realized in {cfg.rejection_limit} attempts")


def sample_plan_example(cfg: GrammarConfig, rng, max_plans: int = 16) -> PlanExample:
    for k in range(1, max_plans + 1):
        plan = sample_plan(cfg, rng)
        try:
            ex = realize_plan(plan, cfg, rng)
        except RejectionLimitExceeded:
            continue
        ex.plans_tried = k
        return ex
    raise RejectionLimitExceeded(f"no plan realized after {max_plans} plans")


def sample_program(cfg: GrammarConfig, rng) -> S.Program:
    """Draw K[E] inside ``main`` and keep it if it runs within the line cap."""
    prog, _ = sample_program_traced(cfg, rng)
    return prog


def sample_program_traced(cfg: GrammarConfig, rng) -> tuple[S.Program, Trace]:
    for _ in range(cfg.rejection_limit):
        b = Builder(cfg, rng)
        b.pending = 1
        scope = main_bindings(cfg)
        try:
            # the hole expression only uses main's parameters, which every
            # template keeps in scope, so one symbol serves all insertion points
            inner = b.expr(scope, 0)
            body = b.context(scope, 0, lambda sc: inner)
        except CompilationFailure:
            continue
        prog = b.finish(body)
        trace = _execute(prog, cfg)
        if trace is not None:
            return prog, trace
    raise RejectionLimitExceeded(f"no program within {cfg.max_lines} lines in {cfg.rejection_limit} attempts")
