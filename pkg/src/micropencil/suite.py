"""Held-out evaluation suite: bit-list arithmetic and SAT programs.

Bits are stored little-endian in ``next``-linked lists of objects, one
``value`` attribute per node.  A CNF is a ``next``-linked list of clause
objects; each clause points (``lits``) to a linked list of literal objects
whose ``var`` attribute names a variable object and whose ``pos`` attribute
holds the polarity.  A literal is satisfied when the variable's value equals
its polarity.
"""

from __future__ import annotations

import itertools
import json
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Iterable, Iterator

import numpy as np

from . import syntax as S
from .errors import InvalidInstance
from .oracle import final_view
from .parser import compile_source, make_call

SUITE_SOURCE = '''
def copy_bits(b1, b2):
    return Seq(Assert(b2, Attr("value"), LookupAttr(b1, Attr("value"))),
               If(HasAttr(b1, Attr("next")),
                  copy_bits(LookupAttr(b1, Attr("next")), LookupAttr(b2, Attr("next"))),
                  unit_))

def not_(p):
    return If(p, false_, true_)

def flip_bits(b1, b2):
    return Seq(Assert(b2, Attr("value"), not_(LookupAttr(b1, Attr("value")))),
               If(HasAttr(b1, Attr("next")),
                  flip_bits(LookupAttr(b1, Attr("next")), LookupAttr(b2, Attr("next"))),
                  unit_))

def exor_(p, q):
    return If(p, If(q, false_, true_), If(q, true_, false_))

def and_(p, q):
    return If(p, q, false_)

def or_(p, q):
    return If(p, true_, q)

def rpc_sum_(a1, a2, c):
    return exor_(a1, exor_(a2, c))

def rpc_carry_(a1, a2, c):
    return or_(and_(a1, a2), and_(c, or_(a1, a2)))

def RPC_add(b1, b2, b3, c):
    return RPC_aux(b1, b2, b3, c,
                   rpc_carry_(LookupAttr(b1, Attr("value")), LookupAttr(b2, Attr("value")), c))

def RPC_aux(b1, b2, b3, c, nc):
    return Seq(Assert(b3, Attr("value"),
                      rpc_sum_(LookupAttr(b1, Attr("value")), LookupAttr(b2, Attr("value")), c)),
               If(HasAttr(b1, Attr("next")),
                  RPC_add(LookupAttr(b1, Attr("next")), LookupAttr(b2, Attr("next")),
                          LookupAttr(b3, Attr("next")), nc),
                  Assert(LookupAttr(b3, Attr("next")), Attr("value"), nc)))

def RPC_mult(b1, b2, b3):
    return Seq(If(LookupAttr(b1, Attr("value")), RPC_add(b2, b3, b3, false_), unit_),
               If(HasAttr(b1, Attr("next")),
                  RPC_mult(LookupAttr(b1, Attr("next")), b2, LookupAttr(b3, Attr("next"))),
                  unit_))

def eval_clause(l):
    return If(Equal(LookupAttr(LookupAttr(l, Attr("var")), Attr("value")), LookupAttr(l, Attr("pos"))),
              true_,
              If(HasAttr(l, Attr("next")), eval_clause(LookupAttr(l, Attr("next"))), false_))

def eval_cnf(c):
    return If(eval_clause(LookupAttr(c, Attr("lits"))),
              If(HasAttr(c, Attr("next")), eval_cnf(LookupAttr(c, Attr("next"))), true_),
              false_)

def sat_verify(cnf, out_):
    return Assert(out_, Attr("value"), eval_cnf(cnf))

def sat_assign(var, cnf_head_, out_):
    return If(HasAttr(var, Attr("next")),
              Try(Seq(Assert(var, Attr("value"), true_),
                      sat_assign(LookupAttr(var, Attr("next")), cnf_head_, out_)),
                  Seq(Assert(var, Attr("value"), false_),
                      sat_assign(LookupAttr(var, Attr("next")), cnf_head_, out_))),
              Try(Seq(Assert(var, Attr("value"), true_),
                      If(eval_cnf(cnf_head_), Assert(out_, Attr("value"), true_), fail_)),
                  Seq(Assert(var, Attr("value"), false_),
                      If(eval_cnf(cnf_head_), Assert(out_, Attr("value"), true_), fail_))))

def sat_solve(var_head_, cnf_head_, out_):
    return Try(sat_assign(var_head_, cnf_head_, out_), Assert(out_, Attr("value"), false_))
'''

BIT_TASKS = ("copy_bits", "flip_bits", "RPC_add", "RPC_mult")
SAT_TASKS = ("sat_verify", "sat_solve")
TASKS = BIT_TASKS + SAT_TASKS

BIT_LENGTHS = range(2, 11)
SAT_VARS = range(2, 5)
SAT_CLAUSES = range(1, 7)
PER_COMBO = {"sat_verify": 2, "sat_solve": 10}

OUT = "O.out"
VALUE, NEXT = "Att.value", "Att.next"

# published per-program trace-line bands for the bit tasks
LINE_BANDS = {
    "copy_bits": (78, 422),
    "flip_bits": (108, 572),
    "RPC_add": (469, 2365),
    "RPC_mult": (80, 7552),
    "sat_solve": (188, 5020),
    "sat_verify": (69, 628),
}


def _b(bit: bool) -> str:
    return S.TRUE if bit else S.FALSE


def suite_program() -> S.Program:
    return compile_source(SUITE_SOURCE)


def suite_names() -> tuple[str, ...]:
    """Identifiers and attribute names the suite prints, for the vocabulary."""
    p = suite_program()
    names: list[str] = []
    for fd in p.fundefs.values():
        names.append(fd.name)
        names.extend(fd.params)
    for ed in p.expdefs.values():
        a = getattr(ed.form, "attr", None)
        if a:
            names.append(a[4:])
    names.append("out")
    return tuple(dict.fromkeys(names))


# -- instances ---------------------------------------------------------------


@dataclass(frozen=True)
class BitInstance:
    length: int
    a: tuple[bool, ...]
    b: tuple[bool, ...] = ()

    def __post_init__(self):
        if self.length < 1 or len(self.a) != self.length or (self.b and len(self.b) != self.length):
            raise InvalidInstance(f"bit vectors must have length {self.length}")


@dataclass(frozen=True)
class CnfInstance:
    num_vars: int
    clauses: tuple[tuple[int, ...], ...]  # signed 1-based variable indices
    assignment: tuple[bool, ...] = ()

    def __post_init__(self):
        if self.num_vars < 1 or not self.clauses:
            raise InvalidInstance("need at least one variable and one clause")
        for cl in self.clauses:
            if not cl or any(x == 0 or abs(x) > self.num_vars for x in cl):
                raise InvalidInstance(f"bad clause {cl}")
        if self.assignment and len(self.assignment) != self.num_vars:
            raise InvalidInstance("assignment length mismatch")

    def satisfied_by(self, assignment: Iterable[bool]) -> bool:
        asg = tuple(assignment)
        return all(any(asg[abs(x) - 1] == (x > 0) for x in cl) for cl in self.clauses)

    def satisfiable(self) -> bool:
        return any(
            self.satisfied_by(bits) for bits in itertools.product((True, False), repeat=self.num_vars)
        )


def to_int(bits: Iterable[bool]) -> int:
    return sum(1 << i for i, b in enumerate(bits) if b)


def to_bits(n: int, width: int) -> tuple[bool, ...]:
    return tuple(bool((n >> i) & 1) for i in range(width))


def _linked(prefix: str, n: int, values: Iterable[bool] | None = None) -> list[tuple[str, str, str]]:
    objs = [f"O.{prefix}{i}" for i in range(n)]
    out = [(objs[i], NEXT, objs[i + 1]) for i in range(n - 1)]
    if values is not None:
        out += [(o, VALUE, _b(v)) for o, v in zip(objs, values)]
    return out


def _cnf_state(inst: CnfInstance) -> list[tuple[str, str, str]]:
    state = _linked("v", inst.num_vars, inst.assignment or None)
    state += _linked("c", len(inst.clauses))
    k = 0
    for ci, cl in enumerate(inst.clauses):
        first = k
        for j, lit in enumerate(cl):
            lo = f"O.l{k}"
            state.append((lo, "Att.var", f"O.v{abs(lit) - 1}"))
            state.append((lo, "Att.pos", _b(lit > 0)))
            if j + 1 < len(cl):
                state.append((lo, NEXT, f"O.l{k + 1}"))
            k += 1
        state.append((f"O.c{ci}", "Att.lits", f"O.l{first}"))
    return state


def build_task(task: str, instance) -> S.Program:
    """Program whose root calls the task entry point on the encoded instance."""
    p = suite_program()
    if task in BIT_TASKS:
        if not isinstance(instance, BitInstance):
            raise InvalidInstance(f"{task} needs a BitInstance")
        n = instance.length
        if task in ("copy_bits", "flip_bits"):
            p.state = _linked("p", n, instance.a) + _linked("q", n)
            make_call(p, task, ["O.p0", "O.q0"])
        elif task == "RPC_add":
            if not instance.b:
                raise InvalidInstance("RPC_add needs two operands")
            p.state = _linked("p", n, instance.a) + _linked("q", n, instance.b) + _linked("r", n + 1)
            make_call(p, task, ["O.p0", "O.q0", "O.r0", S.FALSE])
        else:
            if not instance.b:
                raise InvalidInstance("RPC_mult needs two operands")
            p.state = (
                _linked("p", n, instance.a)
                + _linked("q", n, instance.b)
                + _linked("r", 2 * n, [False] * (2 * n))
            )
            make_call(p, task, ["O.p0", "O.q0", "O.r0"])
    elif task in SAT_TASKS:
        if not isinstance(instance, CnfInstance):
            raise InvalidInstance(f"{task} needs a CnfInstance")
        if task == "sat_verify" and not instance.assignment:
            raise InvalidInstance("sat_verify needs an assignment")
        p.state = _cnf_state(instance)
        if task == "sat_verify":
            make_call(p, task, ["O.c0", OUT])
        else:
            p.state = [t for t in p.state if t[1] != VALUE]
            make_call(p, task, ["O.v0", "O.c0", OUT])
    else:
        raise InvalidInstance(f"unknown task {task!r}")
    return p.reachable()


def semantic_oracle(task: str, instance) -> dict[tuple[str, str], str]:
    """Attribute values the final state must contain."""
    if task in ("copy_bits", "flip_bits"):
        bits = instance.a if task == "copy_bits" else tuple(not x for x in instance.a)
        return {(f"O.q{i}", VALUE): _b(x) for i, x in enumerate(bits)}
    if task == "RPC_add":
        n = instance.length
        s = to_bits(to_int(instance.a) + to_int(instance.b), n + 1)
        return {(f"O.r{i}", VALUE): _b(x) for i, x in enumerate(s)}
    if task == "RPC_mult":
        n = instance.length
        s = to_bits(to_int(instance.a) * to_int(instance.b), 2 * n)
        return {(f"O.r{i}", VALUE): _b(x) for i, x in enumerate(s)}
    if task == "sat_verify":
        return {(OUT, VALUE): _b(instance.satisfied_by(instance.assignment))}
    if task == "sat_solve":
        return {(OUT, VALUE): _b(instance.satisfiable())}
    raise InvalidInstance(f"unknown task {task!r}")


def check_result(task: str, instance, view: dict[tuple[str, str], str]) -> list[str]:
    """Problems with a final state view; empty when the run is correct."""
    problems = []
    for key, want in semantic_oracle(task, instance).items():
        got = view.get(key)
        if got != want:
            problems.append(f"{key[0]} {key[1]}: expected {want}, got {got}")
    if task == "sat_solve" and view.get((OUT, VALUE)) == S.TRUE:
        asg = []
        for i in range(instance.num_vars):
            v = view.get((f"O.v{i}", VALUE))
            if v not in (S.TRUE, S.FALSE):
                problems.append(f"O.v{i} left unassigned")
            asg.append(v == S.TRUE)
        if not problems and not instance.satisfied_by(asg):
            problems.append(f"reported assignment {asg} does not satisfy the CNF")
    return problems


# -- suite enumeration ---------------------------------------------------------


@dataclass(frozen=True)
class SuiteEntry:
    task: str
    params: dict
    seed: int

    def to_json(self) -> str:
        return json.dumps({"task": self.task, "params": self.params, "seed": self.seed}, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "SuiteEntry":
        d = json.loads(line)
        return cls(d["task"], d["params"], int(d["seed"]))

    @property
    def name(self) -> str:
        ps = "-".join(f"{k}{v}" for k, v in sorted(self.params.items()))
        return f"{self.task}-{ps}"

    def instance(self):
        return make_instance(self.task, self.params, self.seed)

    def program(self) -> S.Program:
        return build_task(self.task, self.instance())


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, *key])))


def _sample_clauses(rng, num_vars: int, num_clauses: int) -> tuple[tuple[int, ...], ...]:
    out = []
    for _ in range(num_clauses):
        width = int(rng.integers(1, min(3, num_vars) + 1))
        vs = rng.choice(num_vars, size=width, replace=False) + 1
        signs = rng.integers(0, 2, size=width) * 2 - 1
        out.append(tuple(int(v * s) for v, s in zip(vs, signs)))
    return tuple(out)


def make_instance(task: str, params: dict, seed: int):
    """Deterministic instance for (task, params, seed)."""
    tid = TASKS.index(task)
    if task in BIT_TASKS:
        n = int(params["length"])
        rng = _rng(seed, tid, n)
        a = tuple(bool(x) for x in rng.integers(0, 2, size=n))
        b = tuple(bool(x) for x in rng.integers(0, 2, size=n))
        if task == "RPC_mult":
            # sparse multiplier: floor(n/4) set bits at random positions
            ones = int(params.get("ones", n // 4))
            if not 0 <= ones <= n:
                raise InvalidInstance(f"cannot place {ones} set bits in {n}")
            pos = set(int(i) for i in rng.choice(n, size=ones, replace=False))
            a = tuple(i in pos for i in range(n))
        return BitInstance(n, a, b)
    nv, nc, k = int(params["vars"]), int(params["clauses"]), int(params.get("index", 0))
    rng = _rng(seed, tid, nv, nc, k)
    clauses = _sample_clauses(rng, nv, nc)
    asg = tuple(bool(x) for x in rng.integers(0, 2, size=nv)) if task == "sat_verify" else ()
    return CnfInstance(nv, clauses, asg)


def default_manifest(seed: int = 0) -> list[SuiteEntry]:
    out = [SuiteEntry(t, {"length": n}, seed) for t in BIT_TASKS for n in BIT_LENGTHS]
    for t in SAT_TASKS:
        for nv in SAT_VARS:
            for nc in SAT_CLAUSES:
                for k in range(PER_COMBO[t]):
                    out.append(SuiteEntry(t, {"vars": nv, "clauses": nc, "index": k}, seed))
    return out


def write_manifest(entries: Iterable[SuiteEntry], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for e in entries:
            fh.write(e.to_json() + "\n")


def read_manifest(path) -> list[SuiteEntry]:
    with open(path, encoding="utf-8") as fh:
        return [SuiteEntry.from_json(line) for line in fh if line.strip()]


# -- statistics ----------------------------------------------------------------


@dataclass
class TaskStats:
    task: str
    programs: int = 0
    lines: list[int] = field(default_factory=list)
    ctx_min: int | None = None
    ctx_max: int | None = None
    last_ops: Counter = field(default_factory=Counter)
    tokens_total: int = 0
    tokens_correct: int = 0

    @property
    def total_lines(self) -> int:
        return sum(self.lines)

    def summary(self) -> dict:
        d = {
            "task": self.task,
            "programs": self.programs,
            "trace_lines": self.total_lines,
            "lines_min": min(self.lines, default=0),
            "lines_max": max(self.lines, default=0),
            "avg_lines": round(self.total_lines / self.programs, 1) if self.programs else 0.0,
            "ctx_min": self.ctx_min,
            "ctx_max": self.ctx_max,
            "last_ops": dict(sorted(self.last_ops.items())),
        }
        if self.tokens_total:
            d["token_accuracy"] = self.tokens_correct / self.tokens_total
        return d


def suite_stats(runs: Iterable[tuple[str, object]]) -> dict[str, TaskStats]:
    """Aggregate per-task statistics from (task, Trace) pairs.

    Context length counts the full prompt: header tokens plus the dynamic
    context of the step.
    """
    out: dict[str, TaskStats] = {}
    for task, trace in runs:
        st = out.setdefault(task, TaskStats(task))
        st.programs += 1
        st.lines.append(len(trace.steps))
        h = len(trace.header)
        for step in trace.steps:
            n = h + len(step.context)
            st.ctx_min = n if st.ctx_min is None else min(st.ctx_min, n)
            st.ctx_max = n if st.ctx_max is None else max(st.ctx_max, n)
            st.last_ops[step.kind] += 1
    return out


def iter_suite(entries: Iterable[SuiteEntry]) -> Iterator[tuple[SuiteEntry, object, S.Program]]:
    for e in entries:
        inst = e.instance()
        yield e, inst, build_task(e.task, inst)


def verify_run(entry: SuiteEntry, instance, program: S.Program, result) -> list[str]:
    return check_result(entry.task, instance, final_view(program, result))


def as_dict(instance) -> dict:
    return asdict(instance)
