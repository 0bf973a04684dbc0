"""Whitespace tokenizer with a frozen vocabulary over printed traces.

Two print modes are supported.  In ``spaced`` mode (the default) dotted
symbols and positional tags are split (``O . env0``, ``arg0 =``), so an object
name and an attribute name with the same spelling share one token.  In
``atomic`` mode every canonical token is one piece.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from . import syntax as S
from .errors import MicroPyError
from .parser import ARROW, CALL, RET, render

MODES = ("spaced", "atomic")

KEYWORD_TOKENS = (
    "App", "LookupVar", "If", "Equal", "HasAttr", "Assert", "LookupAttr", "Seq", "Try",
    "Eff", "Env", "Bind", "Assertion", "TailApp", "Args", "let", "be", "in", "empty",
    "State", "Root", "FD", "lambda",
)
PUNCT = ("(", ")", ";", "=")
TAG_NAMES = ("x", "test", "first", "second", "obj", "val", "left", "right")

# name families shared by the samplers and the evaluation suite
NAME_FAMILIES = ("f", "v", "env", "plan", "noise", "obj", "a", "p", "q", "r", "c", "l", "n")


class OutOfVocabulary(MicroPyError):
    def __init__(self, piece: str):
        super().__init__(f"out-of-vocabulary piece {piece!r}")
        self.piece = piece


@dataclass(frozen=True)
class VocabConfig:
    mode: str = "spaced"
    max_exp: int = 1024
    max_name_index: int = 64
    max_args: int = 12
    fixed_names: tuple[str, ...] = ()

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")


def structural_tokens(cfg: VocabConfig) -> list[str]:
    out = [CALL, ARROW, RET, *KEYWORD_TOKENS, *S.SPECIALS, *PUNCT]
    tags = [f"arg{i}" for i in range(cfg.max_args)] + list(TAG_NAMES)
    if cfg.mode == "spaced":
        out += [".", "O", "Att", "D"]
        out += [t for t in tags if t not in out]
    else:
        out += [t + "=" for t in tags]
    return out


def name_inventory(cfg: VocabConfig) -> list[str]:
    names = [f"{fam}{i}" for fam in NAME_FAMILIES for i in range(cfg.max_name_index)]
    seen = set(names)
    for n in cfg.fixed_names:
        if n not in seen:
            names.append(n)
            seen.add(n)
    return names


def symbol_tokens(cfg: VocabConfig, reserved: set[str]) -> list[str]:
    out = [f"Exp{i}" for i in range(1, cfg.max_exp + 1)]
    names = [n for n in name_inventory(cfg)]
    if cfg.mode == "spaced":
        out += [n for n in names if n not in reserved]
    else:
        out += names
        out += [f"O.{n}" for n in names]
        out += [f"Att.{n}" for n in names]
        out += [f"D.Exp{i}" for i in range(1, cfg.max_exp + 1)]
    return out


@dataclass
class Vocabulary:
    config: VocabConfig
    tokens: list[str] = field(default_factory=list)
    n_structural: int = 0

    def __post_init__(self):
        self.ids = {t: i for i, t in enumerate(self.tokens)}
        if len(self.ids) != len(self.tokens):
            raise ValueError("duplicate vocabulary entries")

    @classmethod
    def build(cls, cfg: VocabConfig | None = None) -> "Vocabulary":
        cfg = cfg or VocabConfig()
        struct = structural_tokens(cfg)
        syms = symbol_tokens(cfg, set(struct))
        return cls(cfg, struct + syms, len(struct))

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, piece):
        return piece in self.ids

    def render(self, tokens: Sequence[str]) -> str:
        """Print canonical tokens in this vocabulary's mode."""
        return render(tokens, self.config.mode)

    def tokenize(self, text: str) -> list[int]:
        if text == "":
            return []
        ids = self.ids
        try:
            return [ids[p] for p in text.split(" ")]
        except KeyError as e:
            raise OutOfVocabulary(e.args[0]) from None

    def detokenize(self, ids: Iterable[int]) -> str:
        return " ".join(self.tokens[i] for i in ids)

    def oov(self, text: str) -> list[str]:
        return [p for p in text.split(" ") if p and p not in self.ids]

    def extended(self, names: Iterable[str]) -> "Vocabulary":
        """Copy with extra identifiers appended after the frozen ids."""
        extra = []
        for n in names:
            pieces = [n] if self.config.mode == "spaced" else [n, f"O.{n}", f"Att.{n}"]
            extra += [p for p in pieces if p not in self.ids and p not in extra]
        return Vocabulary(self.config, self.tokens + extra, self.n_structural)

    def export(self, path: str | Path) -> None:
        Path(path).write_text("".join(f"{t}\t{i}\n" for i, t in enumerate(self.tokens)), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path, cfg: VocabConfig | None = None) -> "Vocabulary":
        toks = []
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            tok, idx = line.rsplit("\t", 1)
            if int(idx) != len(toks):
                raise ValueError(f"non-dense id {idx} for {tok!r}")
            toks.append(tok)
        cfg = cfg or VocabConfig()
        return cls(cfg, toks, len(structural_tokens(cfg)))


def program_names(program: S.Program) -> list[str]:
    """Bare identifiers a program prints (functions, variables, object and attribute names)."""
    names = []
    for fd in program.fundefs.values():
        names += [fd.name, *fd.params]
    for ed in program.expdefs.values():
        f = ed.form
        if isinstance(f, S.App):
            names.append(f.func)
        if isinstance(f, S.LookupVar):
            names.append(f.var)
        names += [t.split(".", 1)[1] for t in f.tokens() if S.is_object(t) and "." in t or S.is_attribute(t)]
    for o, a, v in program.state:
        names += [t.split(".", 1)[1] for t in (o, a, v) if "." in t]
    return list(dict.fromkeys(names))


def export_vocab(path: str | Path, cfg: VocabConfig | None = None) -> Vocabulary:
    vocab = Vocabulary.build(cfg)
    vocab.export(path)
    return vocab
