"""MicroPy syntax and runtime entities.

Symbols are plain strings whose spelling fixes their namespace:

    ExpN          expression symbol
    O.name        object symbol (True, False, Fail, Unit are the special objects)
    Att.name      attribute symbol
    name          function or variable symbol (namespace fixed by position)

Keeping symbols as strings lets the trace engine work directly on printed
tokens without a translation layer.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Iterator


class Namespace(Enum):
    FUNCTION = "function"
    EXPRESSION = "expression"
    VARIABLE = "variable"
    OBJECT = "object"
    ATTRIBUTE = "attribute"


TRUE = "True"
FALSE = "False"
FAIL = "Fail"
UNIT = "Unit"
SPECIALS = (TRUE, FALSE, FAIL, UNIT)

# spellings used by the decorated source form
SOURCE_SPECIALS = {"true_": TRUE, "false_": FALSE, "fail_": FAIL, "unit_": UNIT}

_EXP_RE = re.compile(r"Exp[0-9]+\Z")
_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")

# words that may not be used as function or variable names because the
# printed context would become ambiguous
KEYWORDS = frozenset(
    {
        "App", "LookupVar", "If", "Equal", "HasAttr", "Assert", "LookupAttr",
        "Seq", "Try", "Eff", "Env", "Bind", "Assertion", "TailApp", "Args",
        "let", "be", "in", "State", "empty", "FD", "lambda", "D", "O", "Att",
        "Root",
    }
    | set(SPECIALS)
)


def obj(name: str) -> str:
    if name in SPECIALS:
        return name
    return f"O.{name}"


def attr(name: str) -> str:
    return f"Att.{name}"


def is_expr_symbol(tok: str) -> bool:
    return _EXP_RE.match(tok) is not None


def is_object(tok: str) -> bool:
    return tok in SPECIALS or (tok.startswith("O.") and _IDENT_RE.match(tok[2:]) is not None)


def is_attribute(tok: str) -> bool:
    return tok.startswith("Att.") and _IDENT_RE.match(tok[4:]) is not None


def is_identifier(tok: str) -> bool:
    return (
        _IDENT_RE.match(tok) is not None
        and tok not in KEYWORDS
        and not is_expr_symbol(tok)
    )


def exp_index(tok: str) -> int:
    return int(tok[3:])


# -- expression forms -------------------------------------------------------


class Form:
    """Base for the right-hand side of an expression definition."""

    keyword = ""

    def operands(self) -> tuple[str, ...]:
        """Expression-valued operands (expression symbols or object literals)."""
        raise NotImplementedError

    def tokens(self) -> list[str]:
        raise NotImplementedError


def _group(items: Iterable[str]) -> list[str]:
    return ["(", *items, ")"]


@dataclass(frozen=True)
class App(Form):
    func: str
    args: tuple[str, ...]
    keyword = "App"

    def operands(self):
        return self.args

    def tokens(self):
        return ["App", "(", self.func, *_group(self.args), ")"]


@dataclass(frozen=True)
class LookupVar(Form):
    var: str
    keyword = "LookupVar"

    def operands(self):
        return ()

    def tokens(self):
        return ["LookupVar", "(", self.var, ")"]


@dataclass(frozen=True)
class If(Form):
    test: str
    then: str
    orelse: str
    keyword = "If"

    def operands(self):
        return (self.test, self.then, self.orelse)

    def tokens(self):
        return ["If", *_group(self.operands())]


@dataclass(frozen=True)
class Equal(Form):
    left: str
    right: str
    keyword = "Equal"

    def operands(self):
        return (self.left, self.right)

    def tokens(self):
        return ["Equal", *_group(self.operands())]


@dataclass(frozen=True)
class HasAttr(Form):
    obj: str
    attr: str
    keyword = "HasAttr"

    def operands(self):
        return (self.obj,)

    def tokens(self):
        return ["HasAttr", "(", self.obj, self.attr, ")"]


@dataclass(frozen=True)
class Assert(Form):
    obj: str
    attr: str
    value: str
    keyword = "Assert"

    def operands(self):
        return (self.obj, self.value)

    def tokens(self):
        return ["Assert", "(", self.obj, self.attr, self.value, ")"]


@dataclass(frozen=True)
class LookupAttr(Form):
    obj: str
    attr: str
    keyword = "LookupAttr"

    def operands(self):
        return (self.obj,)

    def tokens(self):
        return ["LookupAttr", "(", self.obj, self.attr, ")"]


@dataclass(frozen=True)
class Seq(Form):
    first: str
    second: str
    keyword = "Seq"

    def operands(self):
        return (self.first, self.second)

    def tokens(self):
        return ["Seq", *_group(self.operands())]


@dataclass(frozen=True)
class Try(Form):
    body: str
    handler: str
    keyword = "Try"

    def operands(self):
        return (self.body, self.handler)

    def tokens(self):
        return ["Try", *_group(self.operands())]


@dataclass(frozen=True)
class ObjectLiteral(Form):
    obj: str

    def operands(self):
        return ()

    def tokens(self):
        return [self.obj]


# -- definitions and programs ------------------------------------------------


@dataclass(frozen=True)
class FunDef:
    name: str
    params: tuple[str, ...]
    body: str

    def tokens(self) -> list[str]:
        return ["FD", self.name, "=", "lambda", *_group(self.params), self.body, ";"]


@dataclass(frozen=True)
class ExprDef:
    name: str
    form: Form

    def tokens(self) -> list[str]:
        return [f"D.{self.name}", "=", *self.form.tokens()]


@dataclass
class Program:
    fundefs: dict[str, FunDef] = field(default_factory=dict)
    expdefs: dict[str, ExprDef] = field(default_factory=dict)
    state: list[tuple[str, str, str]] = field(default_factory=list)
    root: str | None = None

    def add_fun(self, name: str, params: Iterable[str], body: str) -> FunDef:
        fd = FunDef(name, tuple(params), body)
        self.fundefs[name] = fd
        return fd

    def add_expr(self, name: str, form: Form) -> str:
        self.expdefs[name] = ExprDef(name, form)
        return name

    def fresh_exp(self) -> str:
        # fast path: symbols numbered densely from Exp1
        n = len(self.expdefs)
        if f"Exp{n + 1}" not in self.expdefs and (n == 0 or f"Exp{n}" in self.expdefs):
            return f"Exp{n + 1}"
        n = max((exp_index(k) for k in self.expdefs), default=0)
        return f"Exp{n + 1}"

    def new_expr(self, form: Form) -> str:
        return self.add_expr(self.fresh_exp(), form)

    def copy(self) -> "Program":
        return Program(dict(self.fundefs), dict(self.expdefs), list(self.state), self.root)

    def reachable(self) -> "Program":
        """Restrict to the definitions reachable from the root."""
        keep_f: dict[str, FunDef] = {}
        keep_e: dict[str, ExprDef] = {}
        todo = [self.root] if self.root else []
        while todo:
            sym = todo.pop()
            if sym in keep_e or sym not in self.expdefs:
                continue
            ed = self.expdefs[sym]
            keep_e[sym] = ed
            todo.extend(s for s in ed.form.operands() if is_expr_symbol(s))
            if isinstance(ed.form, App) and ed.form.func in self.fundefs:
                fd = self.fundefs[ed.form.func]
                if fd.name not in keep_f:
                    keep_f[fd.name] = fd
                    todo.append(fd.body)
        fundefs = {k: v for k, v in self.fundefs.items() if k in keep_f}
        expdefs = {k: v for k, v in self.expdefs.items() if k in keep_e}
        return Program(fundefs, expdefs, list(self.state), self.root)

    def objects(self) -> set[str]:
        out = set()
        for ed in self.expdefs.values():
            out.update(s for s in ed.form.operands() if is_object(s))
            if isinstance(ed.form, ObjectLiteral):
                out.add(ed.form.obj)
        for o, _, v in self.state:
            out.update((o, v))
        if self.root and is_object(self.root):
            out.add(self.root)
        return out


# -- validation --------------------------------------------------------------


@dataclass(frozen=True)
class Diagnostic:
    symbol: str
    rule: str
    severity: str = "error"

    def __str__(self):
        return f"{self.severity}: {self.rule}: {self.symbol}"


def _expansion_cycle(program: Program) -> Iterator[str]:
    """Yield expression symbols lying on a cycle that does not pass through App."""
    color: dict[str, int] = {}

    def children(sym):
        ed = program.expdefs.get(sym)
        if ed is None or isinstance(ed.form, App):
            return []
        return [s for s in ed.form.operands() if is_expr_symbol(s)]

    for start in program.expdefs:
        if start in color:
            continue
        stack = [(start, iter(children(start)))]
        color[start] = 1
        while stack:
            sym, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                color[sym] = 2
                stack.pop()
            elif color.get(nxt) == 1:
                yield nxt
            elif nxt not in color:
                color[nxt] = 1
                stack.append((nxt, iter(children(nxt))))


def validate(program: Program) -> list[Diagnostic]:
    """Check the static invariants of a program.

    Unbound variables are reported as warnings only; bindings are dynamic, so
    the program may still run (and fail at runtime).
    """
    diags: list[Diagnostic] = []
    err = lambda sym, rule: diags.append(Diagnostic(sym, rule))

    if program.root is None:
        err("<root>", "no root expression")
    elif is_expr_symbol(program.root):
        if program.root not in program.expdefs:
            err(program.root, "undefined expression symbol")
    elif not is_object(program.root):
        err(program.root, "root must be an expression symbol or object")

    for name, fd in program.fundefs.items():
        if name != fd.name or not is_identifier(name):
            err(name, "bad function name")
        if len(set(fd.params)) != len(fd.params):
            err(name, "duplicate parameter")
        for p in fd.params:
            if not is_identifier(p):
                err(p, "bad variable name")
            if p in program.fundefs:
                err(p, "symbol declared in two namespaces")
        if fd.body not in program.expdefs:
            err(fd.body, "undefined expression symbol")

    bound = {p for fd in program.fundefs.values() for p in fd.params}
    for name, ed in program.expdefs.items():
        if not is_expr_symbol(name) or name != ed.name:
            err(name, "bad expression name")
        form = ed.form
        for s in form.operands():
            if is_expr_symbol(s):
                if s not in program.expdefs:
                    err(s, "undefined expression symbol")
            elif not is_object(s):
                err(s, f"operand of {name} is neither expression nor object")
        if isinstance(form, (HasAttr, LookupAttr, Assert)) and not is_attribute(form.attr):
            err(form.attr, f"attribute position of {name} holds a non-attribute")
        if isinstance(form, App) and form.func not in program.fundefs:
            err(form.func, "undefined function symbol")
        if isinstance(form, App) and form.func in program.fundefs:
            if len(program.fundefs[form.func].params) != len(form.args):
                err(name, "arity mismatch")
        if isinstance(form, LookupVar):
            if not is_identifier(form.var):
                err(form.var, "bad variable name")
            elif form.var not in bound:
                diags.append(Diagnostic(form.var, "unbound variable", "warning"))
        if isinstance(form, ObjectLiteral) and not is_object(form.obj):
            err(form.obj, "object literal is not an object symbol")

    for sym in _expansion_cycle(program):
        err(sym, "cyclic expression definition")

    for triple in program.state:
        o, a, v = triple
        if not (is_object(o) and is_attribute(a) and is_object(v)):
            err(" ".join(triple), "malformed state triple")
    return diags


def errors(diags: list[Diagnostic]) -> list[Diagnostic]:
    return [d for d in diags if d.severity == "error"]
