"""Reading and writing the textual formats.

Three renderings of a token list are supported:

``compact`` glued form, ``App(foo (Exp1))``, ``Env(Bind(x O.obj1))``
``atomic``  one space between every token, symbols such as ``O.obj1`` intact
``spaced``  like ``atomic`` but dotted symbols and tags split:
            ``O . obj1``, ``arg0 =``

All three lex back to the same token list.
"""

from __future__ import annotations

import ast as pyast
import re
from dataclasses import dataclass
from typing import Iterable, Sequence, Union

from . import syntax as S
from .syntax import Program

CALL, RET, ARROW = "[call]", "[ret]", "=>"

# words rendered without a space before their opening parenthesis
CALLABLE = frozenset(
    {
        "App", "LookupVar", "If", "Equal", "HasAttr", "Assert", "LookupAttr",
        "Seq", "Try", "Eff", "Env", "Bind", "Assertion", "TailApp", "Args",
        "let", "be", "lambda", "State", "Root",
    }
)

_TAG_RE = re.compile(r"(arg[0-9]+|x|test|first|second|obj|val|left|right)=\Z")
_LEX_RE = re.compile(
    r"\s*(?:(\[call\]|\[ret\]|=>)"
    r"|([A-Za-z_][A-Za-z0-9_]*(?:\.[A-Za-z_][A-Za-z0-9_]*)?=?)"
    r"|([().,;=]))"
)
_DOTTED_PREFIX = ("O", "Att", "D")


class ParseError(ValueError):
    def __init__(self, msg: str, line: int = 0, col: int = 0):
        super().__init__(f"{line}:{col}: {msg}" if line else msg)
        self.line = line
        self.col = col


@dataclass(frozen=True)
class Tok:
    text: str
    line: int
    col: int


def _lex_positions(text: str) -> list[Tok]:
    out: list[Tok] = []
    for lineno, line in enumerate(text.split("\n"), 1):
        pos = 0
        stripped = line.split("#", 1)[0]
        while pos < len(stripped):
            if stripped[pos:].strip() == "":
                break
            m = _LEX_RE.match(stripped, pos)
            if m is None or m.end() == pos:
                col = pos + len(stripped[pos:]) - len(stripped[pos:].lstrip()) + 1
                raise ParseError(f"unexpected character {stripped[col - 1]!r}", lineno, col)
            tok = m.group(1) or m.group(2) or m.group(3)
            out.append(Tok(tok, lineno, m.start(m.lastindex) + 1))
            pos = m.end()
    return _normalize(out)


def _normalize(toks: list[Tok]) -> list[Tok]:
    # rejoin the spaced forms "O . x" and "arg0 ="
    out: list[Tok] = []
    i = 0
    while i < len(toks):
        t = toks[i]
        if (
            t.text in _DOTTED_PREFIX
            and i + 2 < len(toks)
            and toks[i + 1].text == "."
        ):
            out.append(Tok(f"{t.text}.{toks[i + 2].text}", t.line, t.col))
            i += 3
            continue
        if (
            i + 1 < len(toks)
            and toks[i + 1].text == "="
            and _TAG_RE.match(t.text + "=")
            and not (out and out[-1].text == "FD")
        ):
            out.append(Tok(t.text + "=", t.line, t.col))
            i += 2
            continue
        out.append(t)
        i += 1
    return out


def lex(text: str) -> list[str]:
    """Split any of the three renderings into canonical tokens (commas dropped)."""
    return [t.text for t in _lex_positions(text) if t.text != ","]


def render(tokens: Sequence[str], style: str = "compact") -> str:
    if style == "atomic":
        return " ".join(tokens)
    if style == "spaced":
        return " ".join(spaced_pieces(tokens))
    if style != "compact":
        raise ValueError(f"unknown style {style!r}")
    parts: list[str] = []
    prev = None
    for t in tokens:
        if prev is None:
            parts.append(t)
        elif prev == "(" or t in (")", ";") or (t == "(" and prev in CALLABLE):
            parts.append(t)
        else:
            parts.append(" " + t)
        prev = t
    return "".join(parts)


def spaced_pieces(tokens: Iterable[str]) -> list[str]:
    out: list[str] = []
    for t in tokens:
        if "." in t and t.split(".", 1)[0] in _DOTTED_PREFIX:
            head, tail = t.split(".", 1)
            out.extend((head, ".", tail))
        elif len(t) > 1 and t.endswith("=") and _TAG_RE.match(t):
            out.extend((t[:-1], "="))
        else:
            out.append(t)
    return out


# -- generic terms -----------------------------------------------------------

Term = Union[str, tuple]  # atom, or (head | None, [children])


def parse_terms(tokens: Sequence[str], start: int = 0, stop: int | None = None) -> list[Term]:
    """Parse a flat token run into terms; ``Head ( ... )`` and ``( ... )`` nest."""
    stop = len(tokens) if stop is None else stop
    out: list[Term] = []
    stack: list[tuple] = []
    cur = out
    i = start
    while i < stop:
        t = tokens[i]
        if t == "(":
            node = (None, [])
            cur.append(node)
            stack.append(cur)
            cur = node[1]
        elif t == ")":
            if not stack:
                raise ParseError(f"unbalanced ')' at token {i}")
            cur = stack.pop()
        elif i + 1 < stop and tokens[i + 1] == "(" and t in CALLABLE:
            node = (t, [])
            cur.append(node)
            stack.append(cur)
            cur = node[1]
            i += 1
        else:
            cur.append(t)
        i += 1
    if stack:
        raise ParseError("unbalanced '('")
    return out


def term_tokens(term: Term) -> list[str]:
    if isinstance(term, str):
        return [term]
    head, kids = term
    out = [] if head is None else [head]
    out.append("(")
    for k in kids:
        out.extend(term_tokens(k))
    out.append(")")
    return out


# -- forms -------------------------------------------------------------------


def _atoms(kids: list, what: str) -> list[str]:
    out = []
    for k in kids:
        if not isinstance(k, str):
            raise ParseError(f"nested group not allowed in {what}")
        out.append(k)
    return out


def form_from_term(term: Term) -> S.Form:
    if isinstance(term, str):
        if S.is_object(term):
            return S.ObjectLiteral(term)
        raise ParseError(f"bad expression form {term!r}")
    head, kids = term
    if head == "App":
        if not kids or not isinstance(kids[0], str):
            raise ParseError("App needs a function symbol")
        func = kids[0]
        rest = kids[1:]
        if len(rest) == 1 and not isinstance(rest[0], str) and rest[0][0] is None:
            args = _atoms(rest[0][1], "App arguments")
        else:
            args = _atoms(rest, "App arguments")
        return S.App(func, tuple(args))
    arity = {
        "LookupVar": (S.LookupVar, 1), "If": (S.If, 3), "Equal": (S.Equal, 2),
        "HasAttr": (S.HasAttr, 2), "Assert": (S.Assert, 3),
        "LookupAttr": (S.LookupAttr, 2), "Seq": (S.Seq, 2), "Try": (S.Try, 2),
    }
    if head not in arity:
        raise ParseError(f"unknown form {head!r}")
    cls, n = arity[head]
    args = _atoms(kids, head)
    if len(args) != n:
        raise ParseError(f"{head} takes {n} arguments, got {len(args)}")
    return cls(*args)


# -- definition blocks -------------------------------------------------------


def _matching(toks: list[Tok], i: int) -> int:
    depth = 0
    for j in range(i, len(toks)):
        if toks[j].text == "(":
            depth += 1
        elif toks[j].text == ")":
            depth -= 1
            if depth == 0:
                return j
    t = toks[i]
    raise ParseError("unclosed '('", t.line, t.col)


def _expect(toks: list[Tok], i: int, text: str) -> int:
    if i >= len(toks):
        last = toks[-1] if toks else Tok("", 0, 0)
        raise ParseError(f"expected {text!r} at end of input", last.line, last.col)
    if toks[i].text != text:
        raise ParseError(f"expected {text!r}, got {toks[i].text!r}", toks[i].line, toks[i].col)
    return i + 1


def parse_assertions(tokens: Sequence[str]) -> list[tuple[str, str, str]]:
    """Triples from a run of ``Assertion(O A V)`` terms (``empty`` allowed)."""
    out = []
    for term in parse_terms(tokens):
        if term == "empty":
            continue
        if isinstance(term, str) or term[0] != "Assertion" or len(term[1]) != 3:
            raise ParseError(f"bad assertion {term!r}")
        out.append(tuple(_atoms(term[1], "Assertion")))
    return out


def parse_defs(text: str, strict: bool = True) -> Program:
    """Read definition blocks, state and root marker.

    With ``strict`` the result must pass :func:`syntax.validate`; otherwise
    the program is returned as read (useful for partial headers).
    """
    toks = _lex_positions(text) if isinstance(text, str) else [Tok(t, 0, 0) for t in text]
    prog = Program()
    i = 0
    while i < len(toks):
        t = toks[i]
        if t.text == ",":
            i += 1
        elif t.text == "FD":
            name = toks[i + 1].text if i + 1 < len(toks) else ""
            i = _expect(toks, i + 2, "=")
            i = _expect(toks, i, "lambda")
            if i >= len(toks) or toks[i].text != "(":
                raise ParseError("expected parameter list", t.line, t.col)
            j = _matching(toks, i)
            params = tuple(x.text for x in toks[i + 1 : j] if x.text != ",")
            if j + 1 >= len(toks):
                raise ParseError("missing function body", t.line, t.col)
            body = toks[j + 1].text
            i = j + 2
            if i < len(toks) and toks[i].text == ";":
                i += 1
            if name in prog.fundefs:
                raise ParseError(f"duplicate definition of function {name}", t.line, t.col)
            prog.add_fun(name, params, body)
        elif t.text.startswith("D."):
            name = t.text[2:]
            i = _expect(toks, i + 1, "=")
            if i >= len(toks):
                raise ParseError("missing expression form", t.line, t.col)
            if i + 1 < len(toks) and toks[i + 1].text == "(":
                j = _matching(toks, i + 1)
                piece = [x.text for x in toks[i : j + 1] if x.text != ","]
                i = j + 1
            else:
                piece = [toks[i].text]
                i += 1
            if name in prog.expdefs:
                raise ParseError(f"duplicate definition of {name}", t.line, t.col)
            try:
                form = form_from_term(parse_terms(piece)[0])
            except ParseError as e:
                raise ParseError(str(e), t.line, t.col) from None
            prog.add_expr(name, form)
        elif t.text == "State":
            j = _matching(toks, i + 1)
            prog.state.extend(parse_assertions([x.text for x in toks[i + 2 : j]]))
            i = j + 1
        elif t.text == "Root":
            i = _expect(toks, i + 1, "(")
            if prog.root is not None:
                raise ParseError("duplicate root marker", t.line, t.col)
            prog.root = toks[i].text
            i = _expect(toks, i + 1, ")")
        else:
            raise ParseError(f"unexpected token {t.text!r}", t.line, t.col)
    if strict:
        errs = S.errors(S.validate(prog))
        if errs:
            raise ParseError("; ".join(map(str, errs)))
    return prog


def header_tokens(program: Program) -> list[str]:
    """FunDefs, ExpDefs and State block as one token run (no root)."""
    out: list[str] = []
    for fd in program.fundefs.values():
        out.extend(fd.tokens())
    for ed in sorted(program.expdefs.values(), key=lambda e: S.exp_index(e.name)):
        out.extend(ed.tokens())
    out.append("State")
    out.append("(")
    if program.state:
        for o, a, v in program.state:
            out.extend(("Assertion", "(", o, a, v, ")"))
    else:
        out.append("empty")
    out.append(")")
    return out


def print_defs(program: Program, style: str = "compact") -> str:
    """One definition per line; parse_defs reads it back."""
    lines = [render(fd.tokens(), style) for fd in program.fundefs.values()]
    for ed in sorted(program.expdefs.values(), key=lambda e: S.exp_index(e.name)):
        lines.append(render(ed.tokens(), style))
    for o, a, v in program.state:
        lines.append(render(["State", "(", "Assertion", "(", o, a, v, ")", ")"], style))
    if program.root is not None:
        lines.append(render(["Root", "(", program.root, ")"], style))
    return "\n".join(lines) + "\n"


def make_call(program: Program, func: str, args: Sequence[str]) -> str:
    """Add ``App(func (args))`` as a new expression and make it the root."""
    program.root = program.new_expr(S.App(func, tuple(args)))
    return program.root


# -- decorated source form ---------------------------------------------------

_PRIMS = {
    "If": (S.If, "eee"),
    "Seq": (S.Seq, "ee"),
    "Try": (S.Try, "ee"),
    "Equal": (S.Equal, "ee"),
    "HasAttr": (S.HasAttr, "ea"),
    "LookupAttr": (S.LookupAttr, "ea"),
    "Assert": (S.Assert, "eae"),
}


class UnsupportedConstruct(ParseError):
    pass


def compile_source(source: str, program: Program | None = None) -> Program:
    """Compile ``def f(args): return <expr>`` definitions into a program.

    Every sub-expression gets its own expression symbol, numbered in
    post-order continuing after any symbols already in ``program``.
    """
    prog = program if program is not None else Program()
    mod = pyast.parse(source)
    funcs = [n for n in mod.body if isinstance(n, pyast.FunctionDef)]
    for n in mod.body:
        if not isinstance(n, pyast.FunctionDef):
            raise UnsupportedConstruct("only function definitions allowed", n.lineno, n.col_offset + 1)
    names = {f.name for f in funcs} | set(prog.fundefs)
    counter = [max((S.exp_index(k) for k in prog.expdefs), default=0)]

    def emit(form: S.Form) -> str:
        counter[0] += 1
        return prog.add_expr(f"Exp{counter[0]}", form)

    def attr_of(node) -> str:
        if (
            isinstance(node, pyast.Call)
            and isinstance(node.func, pyast.Name)
            and node.func.id == "Attr"
            and len(node.args) == 1
            and isinstance(node.args[0], pyast.Constant)
            and isinstance(node.args[0].value, str)
        ):
            return S.attr(node.args[0].value)
        raise UnsupportedConstruct("expected Attr(\"name\")", node.lineno, node.col_offset + 1)

    def expr(node, params) -> str:
        if isinstance(node, pyast.Name):
            if node.id in params:
                return emit(S.LookupVar(node.id))
            if node.id in S.SOURCE_SPECIALS:
                return emit(S.ObjectLiteral(S.SOURCE_SPECIALS[node.id]))
            raise UnsupportedConstruct(f"unknown name {node.id}", node.lineno, node.col_offset + 1)
        if isinstance(node, pyast.Call) and isinstance(node.func, pyast.Name) and not node.keywords:
            fn = node.func.id
            if fn in _PRIMS:
                cls, sig = _PRIMS[fn]
                if len(node.args) != len(sig):
                    raise UnsupportedConstruct(f"{fn} takes {len(sig)} arguments", node.lineno, node.col_offset + 1)
                ops = [attr_of(a) if k == "a" else expr(a, params) for a, k in zip(node.args, sig)]
                return emit(cls(*ops))
            if fn in names:
                args = tuple(expr(a, params) for a in node.args)
                return emit(S.App(fn, args))
            raise UnsupportedConstruct(f"unknown function {fn}", node.lineno, node.col_offset + 1)
        raise UnsupportedConstruct(
            f"unsupported construct {type(node).__name__}", node.lineno, node.col_offset + 1
        )

    for f in funcs:
        body = [s for s in f.body if not (isinstance(s, pyast.Expr) and isinstance(s.value, pyast.Constant))]
        if len(body) != 1 or not isinstance(body[0], pyast.Return) or body[0].value is None:
            raise UnsupportedConstruct("body must be a single return", f.lineno, f.col_offset + 1)
        params = tuple(a.arg for a in f.args.args)
        if f.name in prog.fundefs:
            raise ParseError(f"duplicate definition of function {f.name}", f.lineno, 1)
        prog.add_fun(f.name, params, expr(body[0].value, set(params)))
    return prog
