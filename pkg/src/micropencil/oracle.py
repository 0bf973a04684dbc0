"""Big-step reference evaluator.

Independent of the trace engine: it walks definitions recursively and keeps
state in an undo-logged store, so it shares no code path with the small-step
rewriting it is used to check.
"""

from __future__ import annotations

import sys
from contextlib import contextmanager
from dataclasses import dataclass, field

from . import syntax as S
from .errors import (
    BudgetExhausted,
    InvalidMark,
    MissingAttribute,
    UnboundVariable,
    UndefinedSymbol,
)

DEFAULT_BUDGET = 100_000

Triple = tuple[str, str, str]


class Store:
    """Attribute state: initial triples plus an append-only assertion log."""

    def __init__(self, base: list[Triple] | None = None):
        self.base = list(base or [])
        self.log: list[Triple] = []
        self._current: dict[tuple[str, str], str] = {}
        self._undo: list[tuple[tuple[str, str], str | None]] = []
        for o, a, v in self.base:
            self._current[(o, a)] = v

    def get(self, o: str, a: str) -> str | None:
        return self._current.get((o, a))

    def has(self, o: str, a: str) -> bool:
        return (o, a) in self._current

    def assert_(self, o: str, a: str, v: str) -> None:
        key = (o, a)
        self._undo.append((key, self._current.get(key)))
        self._current[key] = v
        self.log.append((o, a, v))

    def checkpoint(self) -> int:
        return len(self.log)

    def rollback(self, mark: int) -> None:
        if not 0 <= mark <= len(self.log):
            raise InvalidMark(f"mark {mark} outside log of length {len(self.log)}")
        while len(self.log) > mark:
            self.log.pop()
            key, prev = self._undo.pop()
            if prev is None:
                del self._current[key]
            else:
                self._current[key] = prev

    def view(self) -> dict[tuple[str, str], str]:
        return dict(self._current)


def checkpoint(store: Store) -> int:
    return store.checkpoint()


def rollback(store: Store, mark: int) -> None:
    store.rollback(mark)


@dataclass
class EvalResult:
    value: str
    effects: list[Triple] = field(default_factory=list)


@contextmanager
def _deep_recursion(limit: int = 50_000):
    old = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old, limit))
    try:
        yield
    finally:
        sys.setrecursionlimit(old)


class _Evaluator:
    def __init__(self, program: S.Program, store: Store, budget: int):
        self.p = program
        self.store = store
        self.budget = budget
        self.steps = 0

    def tick(self):
        self.steps += 1
        if self.steps > self.budget:
            raise BudgetExhausted(f"more than {self.budget} reductions")

    def operand(self, sym: str, env: list) -> str:
        if S.is_object(sym):
            self.tick()
            return sym
        return self.expr(sym, env)

    def expr(self, sym: str, env: list) -> str:
        ed = self.p.expdefs.get(sym)
        if ed is None:
            raise UndefinedSymbol(sym)
        self.tick()
        f = ed.form
        ev = self.operand
        store = self.store
        if isinstance(f, S.ObjectLiteral):
            return f.obj
        if isinstance(f, S.LookupVar):
            frame = env[-1] if env else ()
            for name, value in frame:
                if name == f.var:
                    return value
            raise UnboundVariable(f.var)
        if isinstance(f, S.App):
            fd = self.p.fundefs.get(f.func)
            if fd is None:
                raise UndefinedSymbol(f.func)
            vals = []
            for a in f.args:
                v = ev(a, env)
                if v == S.FAIL:
                    return S.FAIL
                vals.append(v)
            env.append(list(zip(fd.params, vals)))
            try:
                return self.expr(fd.body, env)
            finally:
                env.pop()
        if isinstance(f, S.If):
            t = ev(f.test, env)
            if t == S.FAIL:
                return S.FAIL
            return ev(f.then if t == S.TRUE else f.orelse, env)
        if isinstance(f, S.Equal):
            left = ev(f.left, env)
            if left == S.FAIL:
                return S.FAIL
            right = ev(f.right, env)
            if right == S.FAIL:
                return S.FAIL
            return S.TRUE if left == right else S.FALSE
        if isinstance(f, S.HasAttr):
            o = ev(f.obj, env)
            if o == S.FAIL:
                return S.FAIL
            return S.TRUE if store.has(o, f.attr) else S.FALSE
        if isinstance(f, S.LookupAttr):
            o = ev(f.obj, env)
            if o == S.FAIL:
                return S.FAIL
            v = store.get(o, f.attr)
            if v is None:
                raise MissingAttribute(f"{o} {f.attr}")
            return v
        if isinstance(f, S.Assert):
            o = ev(f.obj, env)
            if o == S.FAIL:
                return S.FAIL
            v = ev(f.value, env)
            if v == S.FAIL:
                return S.FAIL
            store.assert_(o, f.attr, v)
            return S.UNIT
        if isinstance(f, S.Seq):
            if ev(f.first, env) == S.FAIL:
                return S.FAIL
            return ev(f.second, env)
        if isinstance(f, S.Try):
            mark = store.checkpoint()
            v = ev(f.body, env)
            if v != S.FAIL:
                return v
            store.rollback(mark)
            return ev(f.handler, env)
        raise TypeError(f"unknown form {f!r}")


def eval_expr(
    program: S.Program,
    expr: str | None = None,
    env: list | None = None,
    store: Store | None = None,
    budget: int = DEFAULT_BUDGET,
) -> EvalResult:
    """Evaluate ``expr`` (default: the program root) and return value and effects.

    ``env`` is a stack of frames, each a list of (variable, object) pairs; only
    the last frame is visible.  ``store`` defaults to the program's state.
    """
    if budget <= 0:
        raise ValueError("budget must be positive")
    expr = program.root if expr is None else expr
    store = Store(program.state) if store is None else store
    env = [list(f) for f in env] if env else []
    start = store.checkpoint()
    ev = _Evaluator(program, store, budget)
    with _deep_recursion():
        value = ev.operand(expr, env)
    return EvalResult(value, store.log[start:])


def final_view(program: S.Program, result: EvalResult) -> dict[tuple[str, str], str]:
    """Current-value view after applying ``result.effects`` to the program state."""
    view = {(o, a): v for o, a, v in program.state}
    for o, a, v in result.effects:
        view[(o, a)] = v
    return view
