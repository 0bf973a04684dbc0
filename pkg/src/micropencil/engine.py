"""Small-step PENCIL execution of MicroPy.

The execution state is a token sequence.  ``[call]`` opens a frame; the frame
after the last ``[call]`` is the active one.  Every step generates one
completion for the active frame, either

* a pure extension (``arg0= [call] [call] Exp1``), appended as is, or
* a rewrite ``=> gamma [ret]``; reduction drops the active frame together
  with its ``[call]`` and appends ``gamma`` in its place.

Frame shapes (after ``[call]``)::

    ExpK                              expand the definition
    O                                 constant -> Eff(empty) O
    LookupVar(x)                      read the nearest Env frame
    App(f (E1 ..)) arg0= Eff(e) O ..  evaluate arguments, then call
    TailApp(f Args(O ..))             fetch f -> let(xs) be(Os) in Body
    let(xs) be(Os) in Body            -> [call] Env(Bind(x O) ..) [call] Body
    Env(..) Eff(e) .. O               return from a procedure
    Eff(e) .. O                       combine effects and return
    If/Seq/Try/Equal/HasAttr/LookupAttr/Assert with positional tags

A call in tail position (every frame between it and the nearest Env frame is
an effect-only frame) returns a bare ``TailApp(..)`` instead of opening a new
frame; it travels up past the callee's Env frame and is re-opened in the
caller's call frame, so iteration runs in constant stack depth.

Effects live in ``Eff(...)`` terms inside the context.  Attribute reads
consult them newest-first, then the initial ``State`` block.  A failing
``Try`` body simply discards its frame, which rolls its effects back.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Sequence

from . import syntax as S
from .errors import (
    DynamicError,
    InvalidProgram,
    MissingAttribute,
    StepBudgetExceeded,
    StuckContext,
    UnbalancedMarkers,
    UnboundVariable,
    UndefinedSymbol,
)
from .oracle import EvalResult
from .parser import ARROW, CALL, RET, header_tokens, parse_terms, render, term_tokens

EXPDEFS, FUNDEFS, ENV, STATE = "ExpDefs", "FunDefs", "Env", "State/Effects"
R, W = "R", "W"

# permitted (channel, mode) pairs per step kind; an extension of the
# retrieval/update table with the TailApp fetch and the no-channel rewrites
CHANNELS: dict[str, frozenset] = {
    "ExpRef": frozenset({(EXPDEFS, R)}),
    "App": frozenset({(FUNDEFS, R), (ENV, W)}),
    "TailApp": frozenset({(FUNDEFS, R)}),
    "LookupVar": frozenset({(ENV, R)}),
    "LookupAttr": frozenset({(STATE, R)}),
    "HasAttr": frozenset({(STATE, R)}),
    "Assert": frozenset({(STATE, W)}),
    "Seq": frozenset(),
    "If": frozenset(),
    "Try": frozenset(),
    "Equal": frozenset(),
    "ObjLit": frozenset(),
    "Eff": frozenset(),
}

STEP_KINDS = tuple(CHANNELS)

_SLOT_TAGS = {
    "Seq": ("x=",),
    "If": ("test=",),
    "Equal": ("left=", "right="),
    "HasAttr": ("obj=",),
    "LookupAttr": ("obj=",),
    "Assert": ("obj=", "val="),
}


# -- effect terms ------------------------------------------------------------


def eff_tokens(effects: Sequence[tuple[str, str, str]]) -> list[str]:
    if not effects:
        return ["Eff", "(", "empty", ")"]
    out = ["Eff", "("]
    for o, a, v in effects:
        out.extend(("Assertion", "(", o, a, v, ")"))
    out.append(")")
    return out


def eff_triples(term) -> list[tuple[str, str, str]]:
    head, kids = term
    assert head == "Eff"
    out = []
    for k in kids:
        if k == "empty":
            continue
        out.append(tuple(k[1]))
    return out


def _is_eff(term) -> bool:
    return isinstance(term, tuple) and term[0] == "Eff"


def _is_tailapp(term) -> bool:
    return isinstance(term, tuple) and term[0] == "TailApp"


# -- context -----------------------------------------------------------------


class Context:
    """Token sequence split into the prefix before the first ``[call]`` and frames."""

    __slots__ = ("base", "frames")

    def __init__(self, base: list[str] | None = None, frames: list[list[str]] | None = None):
        self.base = base if base is not None else []
        self.frames = frames if frames is not None else []

    @classmethod
    def from_tokens(cls, tokens: Sequence[str]) -> "Context":
        ctx = cls()
        ctx._append(list(tokens))
        return ctx

    def tokens(self) -> list[str]:
        out = list(self.base)
        for f in self.frames:
            out.append(CALL)
            out.extend(f)
        return out

    def __len__(self):
        return len(self.base) + sum(len(f) + 1 for f in self.frames)

    def copy(self) -> "Context":
        return Context(list(self.base), [list(f) for f in self.frames])

    def is_terminal(self) -> bool:
        return not self.frames

    def _append(self, toks: list[str]) -> None:
        cur = self.frames[-1] if self.frames else self.base
        for t in toks:
            if t == CALL:
                cur = []
                self.frames.append(cur)
            elif t in (ARROW, RET):
                raise UnbalancedMarkers(f"stray {t} in appended tokens")
            else:
                cur.append(t)

    def apply(self, completion: Sequence[str]) -> None:
        """Extend with ``completion`` and perform the PENCIL reduction if it has one."""
        if completion and completion[0] == ARROW:
            if completion[-1] != RET:
                raise UnbalancedMarkers("rewrite completion must end in [ret]")
            if not self.frames:
                raise UnbalancedMarkers("no open [call] to return from")
            gamma = list(completion[1:-1])
            if not gamma:
                raise UnbalancedMarkers("empty rewrite")
            self.frames.pop()
            self._append(gamma)
        else:
            self._append(list(completion))

    def labels(self) -> list[str]:
        """Frame labels along the stack, outermost first; empty frames skipped."""
        out = []
        for f in self.frames:
            if f:
                out.append(frame_label(f))
        return out


def frame_label(frame: Sequence[str]) -> str:
    head = frame[0]
    if S.is_expr_symbol(head):
        return "ExpRef"
    if S.is_object(head):
        return "ObjLit"
    return head


def pencil_reduce(tokens: Sequence[str]) -> list[str]:
    """``alpha [call] beta => gamma [ret]`` becomes ``alpha gamma``."""
    toks = list(tokens)
    if not toks or toks[-1] != RET:
        raise UnbalancedMarkers("sequence does not end in [ret]")
    try:
        arrow = len(toks) - 1 - toks[::-1].index(ARROW)
    except ValueError:
        raise UnbalancedMarkers("no => marker") from None
    opener = None
    for i in range(arrow - 1, -1, -1):
        if toks[i] == CALL:
            opener = i
            break
    if opener is None:
        raise UnbalancedMarkers("no [call] before =>")
    gamma = toks[arrow + 1 : -1]
    if ARROW in gamma or RET in gamma or ARROW in toks[:arrow] or RET in toks[:arrow]:
        raise UnbalancedMarkers("nested completion markers")
    return toks[:opener] + gamma


def _slot(sym: str) -> list[str]:
    # constants are evaluated under a single [call]; expressions get a
    # second one that collects their effects
    if S.is_object(sym):
        return [CALL, sym]
    return [CALL, CALL, sym]


def _slot_results(rest: list) -> list[tuple[str, list, str]]:
    out = []
    i = 0
    while i < len(rest):
        if i + 2 >= len(rest):
            raise StuckContext(f"incomplete slot {rest[i:]}")
        tag, eff, val = rest[i], rest[i + 1], rest[i + 2]
        if not isinstance(tag, str) or not _is_eff(eff) or not isinstance(val, str):
            raise StuckContext(f"malformed slot {rest[i:i + 3]}")
        out.append((tag, eff_triples(eff), val))
        i += 3
    return out


# -- the engine --------------------------------------------------------------


@dataclass(frozen=True)
class TraceStep:
    index: int
    context: tuple[str, ...]
    completion: tuple[str, ...]
    kind: str
    channels: frozenset
    labels: tuple[str, ...] = ()

    def prompt_text(self, style: str = "compact") -> str:
        return render(self.context, style)

    def completion_text(self, style: str = "compact") -> str:
        return render(self.completion, style)


@dataclass
class Trace:
    program: S.Program
    header: list[str]
    steps: list[TraceStep] = field(default_factory=list)
    result: EvalResult | None = None
    max_context: int = 0
    n_steps: int = 0

    def __len__(self):
        return len(self.steps)


class Engine:
    """Completion generator for one program.

    The static part of the prompt (definitions and initial state) is held
    parsed; everything dynamic is read from the context tokens alone.
    """

    def __init__(self, program: S.Program, check: bool = True):
        if check:
            errs = S.errors(S.validate(program))
            if errs:
                raise InvalidProgram("; ".join(map(str, errs)))
        self.program = program
        self.header = header_tokens(program)
        self._state = {}
        for o, a, v in program.state:
            self._state[(o, a)] = v
        self._touched: set = set()

    # channel accessors; every retrieval goes through one of these

    def _expdef(self, sym):
        self._touched.add((EXPDEFS, R))
        ed = self.program.expdefs.get(sym)
        if ed is None:
            raise UndefinedSymbol(sym)
        return ed.form

    def _fundef(self, name):
        self._touched.add((FUNDEFS, R))
        fd = self.program.fundefs.get(name)
        if fd is None:
            raise UndefinedSymbol(name)
        return fd

    def _lookup_var(self, ctx: Context, var: str) -> str:
        self._touched.add((ENV, R))
        for f in reversed(ctx.frames):
            if f and f[0] == "Env":
                env = parse_terms(f)[0]
                for bind in env[1]:
                    if bind[1][0] == var:
                        return bind[1][1]
                raise UnboundVariable(var)
        raise UnboundVariable(var)

    def _read_attr(self, ctx: Context, o: str, a: str) -> str | None:
        self._touched.add((STATE, R))
        for f in reversed(ctx.frames):
            for i in range(len(f) - 5, -1, -1):
                if f[i] == "Assertion" and f[i + 2] == o and f[i + 3] == a:
                    return f[i + 4]
        b = ctx.base
        for i in range(len(b) - 5, -1, -1):
            if b[i] == "Assertion" and b[i + 2] == o and b[i + 3] == a:
                return b[i + 4]
        return self._state.get((o, a))

    def _tail_position(self, ctx: Context) -> bool:
        for f in reversed(ctx.frames[:-1]):
            if not f or f[0] == "Eff":
                continue
            return f[0] == "Env"
        return False

    # -- step generation

    def init(self) -> Context:
        root = self.program.root
        if root is None:
            raise InvalidProgram("no root expression")
        return Context.from_tokens(_slot(root))

    def step(self, ctx: Context) -> tuple[list[str], str, frozenset]:
        """Return (completion, step kind, channels touched) for ``ctx``."""
        if ctx.is_terminal():
            raise StuckContext("context is terminal")
        frame = ctx.frames[-1]
        if not frame:
            raise StuckContext("empty active frame")
        self._touched = set()
        comp, kind = self._rule(ctx, frame)
        return comp, kind, frozenset(self._touched)

    def _rule(self, ctx: Context, frame: list[str]) -> tuple[list[str], str]:
        head = frame[0]
        if S.is_expr_symbol(head):
            if len(frame) != 1:
                raise StuckContext(f"junk after {head}")
            return [ARROW, CALL, *self._expdef(head).tokens(), RET], "ExpRef"
        if S.is_object(head):
            if len(frame) != 1:
                raise StuckContext(f"junk after {head}")
            return [ARROW, *eff_tokens(()), head, RET], "ObjLit"

        terms = parse_terms(frame)
        first = terms[0]
        if isinstance(first, str):
            raise StuckContext(f"no rule for frame {frame[:8]}")
        kw = first[0]

        if kw == "LookupVar":
            v = self._lookup_var(ctx, first[1][0])
            return [ARROW, *eff_tokens(()), v, RET], "LookupVar"
        if kw == "Eff":
            return self._combine(ctx, terms)
        if kw == "Env":
            return self._return(terms)
        if kw == "App":
            return self._app(ctx, first, terms[1:])
        if kw == "TailApp":
            return self._fetch(first)
        if kw == "let":
            return self._bind(terms)
        if kw == "Try":
            return self._try(first, terms[1:])
        if kw in _SLOT_TAGS:
            return self._primitive(ctx, kw, first, terms[1:])
        raise StuckContext(f"no rule for frame {frame[:8]}")

    def _combine(self, ctx, terms):
        effs = []
        i = 0
        while i < len(terms) and _is_eff(terms[i]):
            effs.extend(eff_triples(terms[i]))
            i += 1
        if i != len(terms) - 1:
            raise StuckContext("effect frame without a single result")
        last = terms[i]
        if isinstance(last, str):
            return [ARROW, *eff_tokens(effs), last, RET], "Eff"
        if _is_tailapp(last):
            call = term_tokens(last)
            if self._tail_position(ctx):
                return [ARROW, *eff_tokens(effs), *call, RET], "Eff"
            return [ARROW, CALL, *eff_tokens(effs), CALL, *call, RET], "Eff"
        raise StuckContext("effect frame with non-value result")

    def _return(self, terms):
        effs = []
        for t in terms[1:-1]:
            if not _is_eff(t):
                raise StuckContext("Env frame with non-effect content")
            effs.extend(eff_triples(t))
        last = terms[-1]
        if len(terms) < 2:
            raise StuckContext("Env frame without result")
        if isinstance(last, str):
            return [ARROW, *eff_tokens(effs), last, RET], "App"
        if _is_tailapp(last):
            return [ARROW, *eff_tokens(effs), *term_tokens(last), RET], "TailApp"
        raise StuckContext("Env frame with non-value result")

    def _app(self, ctx, first, rest):
        kids = first[1]
        func, args = kids[0], [a for a in kids[1][1]]
        done = _slot_results(rest)
        effs = [t for _, e, _ in done for t in e]
        if done and done[-1][2] == S.FAIL:
            return [ARROW, *eff_tokens(effs), S.FAIL, RET], "App"
        if len(done) < len(args):
            return [f"arg{len(done)}=", *_slot(args[len(done)])], "App"
        vals = [v for _, _, v in done]
        call = ["TailApp", "(", func, "Args", "(", *vals, ")", ")"]
        if self._tail_position(ctx):
            return [ARROW, *eff_tokens(effs), *call, RET], "App"
        return [ARROW, *eff_tokens(effs), CALL, *call, RET], "App"

    def _fetch(self, first):
        func = first[1][0]
        vals = list(first[1][1][1])
        fd = self._fundef(func)
        if len(fd.params) != len(vals):
            raise DynamicError(f"{func} expects {len(fd.params)} arguments, got {len(vals)}")
        return [
            ARROW, CALL, "let", "(", *fd.params, ")", "be", "(", *vals, ")", "in", fd.body, RET
        ], "TailApp"

    def _bind(self, terms):
        if len(terms) != 4 or terms[2] != "in":
            raise StuckContext("malformed let frame")
        params, vals, body = terms[0][1], terms[1][1], terms[3]
        self._touched.add((ENV, W))
        env = ["Env", "("]
        for x, v in zip(params, vals):
            env.extend(("Bind", "(", x, v, ")"))
        env.append(")")
        return [ARROW, CALL, *env, CALL, body, RET], "App"

    def _try(self, first, rest):
        body, handler = first[1]
        if not rest:
            return ["first=", *_slot(body)], "Try"
        (tag, effs, val), = _slot_results(rest)
        if tag == "first=" and val == S.FAIL:
            return [ARROW, CALL, *term_tokens(first), "second=", *_slot(handler), RET], "Try"
        return [ARROW, *eff_tokens(effs), val, RET], "Try"

    def _primitive(self, ctx, kw, first, rest):
        tags = _SLOT_TAGS[kw]
        kids = first[1]
        done = _slot_results(rest)
        effs = [t for _, e, _ in done for t in e]
        vals = [v for _, _, v in done]
        if vals and vals[-1] == S.FAIL:
            return [ARROW, *eff_tokens(effs), S.FAIL, RET], kw
        if kw in ("Seq", "If"):
            if not done:
                return [tags[0], *_slot(kids[0])], kw
            if kw == "Seq":
                nxt = kids[1]
            else:
                nxt = kids[1] if vals[0] == S.TRUE else kids[2]
            return [ARROW, CALL, *eff_tokens(effs), CALL, nxt, RET], kw
        operands = [kids[0], kids[2]] if kw == "Assert" else (
            [kids[0]] if kw in ("HasAttr", "LookupAttr") else list(kids)
        )
        if len(done) < len(operands):
            return [tags[len(done)], *_slot(operands[len(done)])], kw
        if kw == "Equal":
            return [ARROW, *eff_tokens(effs), S.TRUE if vals[0] == vals[1] else S.FALSE, RET], kw
        o, a = vals[0], kids[1]
        if kw == "HasAttr":
            has = self._read_attr(ctx, o, a) is not None
            return [ARROW, *eff_tokens(effs), S.TRUE if has else S.FALSE, RET], kw
        if kw == "LookupAttr":
            v = self._read_attr(ctx, o, a)
            if v is None:
                raise MissingAttribute(f"{o} {a}")
            return [ARROW, *eff_tokens(effs), v, RET], kw
        # Assert
        self._touched.add((STATE, W))
        return [ARROW, *eff_tokens(effs + [(o, a, vals[1])]), S.UNIT, RET], kw


def result_of(ctx: Context) -> EvalResult:
    if not ctx.is_terminal():
        raise StuckContext("context not terminal")
    terms = parse_terms(ctx.base)
    if len(terms) != 2 or not _is_eff(terms[0]) or not isinstance(terms[1], str):
        raise StuckContext(f"bad terminal context {ctx.base[:10]}")
    return EvalResult(terms[1], eff_triples(terms[0]))


def iter_trace(
    program: S.Program, max_steps: int | None = None, engine: Engine | None = None
) -> Iterator[TraceStep]:
    """Yield steps until the context is terminal.

    Raises StepBudgetExceeded once ``max_steps`` completions were produced
    without reaching the end.
    """
    eng = engine or Engine(program)
    ctx = eng.init()
    i = 0
    while not ctx.is_terminal():
        if max_steps is not None and i >= max_steps:
            raise StepBudgetExceeded(f"not finished after {max_steps} steps")
        comp, kind, chans = eng.step(ctx)
        yield TraceStep(i, tuple(ctx.tokens()), tuple(comp), kind, chans, tuple(ctx.labels()))
        ctx.apply(comp)
        i += 1
    return None


def run_trace(program: S.Program, max_steps: int | None = None, keep_steps: bool = True) -> Trace:
    eng = Engine(program)
    trace = Trace(program, eng.header)
    ctx = eng.init()
    i = 0
    while not ctx.is_terminal():
        if max_steps is not None and i >= max_steps:
            raise StepBudgetExceeded(f"not finished after {max_steps} steps")
        comp, kind, chans = eng.step(ctx)
        trace.max_context = max(trace.max_context, len(ctx))
        if keep_steps:
            trace.steps.append(
                TraceStep(i, tuple(ctx.tokens()), tuple(comp), kind, chans, tuple(ctx.labels()))
            )
        ctx.apply(comp)
        i += 1
    trace.result = result_of(ctx)
    trace.n_steps = i
    return trace


def generate_step(program: S.Program, context_tokens: Sequence[str]) -> list[str]:
    """Completion for a printed context, rebuilt from its tokens."""
    eng = Engine(program)
    return eng.step(Context.from_tokens(context_tokens))[0]
