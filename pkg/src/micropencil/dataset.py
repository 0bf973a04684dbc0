"""Dataset records and deterministic two-stream generation."""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from functools import lru_cache
from typing import Iterable, Iterator

from .engine import Trace, TraceStep
from .samplers import GrammarConfig, make_rng, sample_plan_example, sample_program_traced
from .suite import suite_names
from .tokenizer import VocabConfig, Vocabulary

PLAN_STREAM, PROGRAM_STREAM = 1, 2
BASE_NAMES = ("value", "next", "k", "out")
CHUNK = 32


@lru_cache(maxsize=4)
def default_vocab(mode: str = "spaced") -> Vocabulary:
    return Vocabulary.build(VocabConfig(mode=mode, fixed_names=BASE_NAMES + suite_names()))


@dataclass(frozen=True)
class DatasetRecord:
    program_id: str
    step_index: int
    prompt_text: str
    completion_text: str
    step_kind: str
    token_counts: dict
    source: str = "program"

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, ensure_ascii=False)

    @classmethod
    def from_json(cls, line: str) -> "DatasetRecord":
        return cls(**json.loads(line))


class _Header:
    """Rendered and token-counted definitions header, shared by every step of a trace."""

    def __init__(self, header: list[str], vocab: Vocabulary):
        self.text = vocab.render(header)
        self.n = len(vocab.tokenize(self.text))


def step_record(
    program_id: str, header: list[str] | _Header, step: TraceStep, vocab: Vocabulary, source: str
) -> DatasetRecord:
    h = header if isinstance(header, _Header) else _Header(header, vocab)
    ctx = vocab.render(step.context)
    prompt = f"{h.text} {ctx}" if h.text and ctx else h.text or ctx
    completion = vocab.render(step.completion)
    counts = {"prompt": h.n + len(vocab.tokenize(ctx)), "completion": len(vocab.tokenize(completion))}
    return DatasetRecord(program_id, step.index, prompt, completion, step.kind, counts, source)


def trace_records(program_id: str, trace: Trace, vocab: Vocabulary, source: str = "program") -> Iterator[DatasetRecord]:
    h = _Header(trace.header, vocab)
    for step in trace.steps:
        yield step_record(program_id, h, step, vocab, source)


# per-index workers; module level so process pools can pickle them


def _plan_chunk(args) -> list[list[str]]:
    cfg, seed, start, stop, mode = args
    vocab = default_vocab(mode)
    out = []
    for i in range(start, stop):
        ex = sample_plan_example(cfg, make_rng(seed, PLAN_STREAM, i))
        step = ex.trace.steps[-1]
        out.append([step_record(f"plan-{seed}-{i}", ex.trace.header, step, vocab, "plan").to_json()])
    return out


def _program_chunk(args) -> list[list[str]]:
    cfg, seed, start, stop, mode = args
    vocab = default_vocab(mode)
    out = []
    for j in range(start, stop):
        _, trace = sample_program_traced(cfg, make_rng(seed, PROGRAM_STREAM, j))
        out.append([r.to_json() for r in trace_records(f"prog-{seed}-{j}", trace, vocab)])
    return out


def _stream(fn, cfg, seed, mode, pool, workers) -> Iterator[str]:
    """Records of one sampler in index order, computed chunk by chunk."""
    start = 0
    width = CHUNK * workers
    while True:
        jobs = [(cfg, seed, s, s + CHUNK, mode) for s in range(start, start + width, CHUNK)]
        results = pool.map(fn, jobs) if pool else map(fn, jobs)
        for chunk in results:
            for recs in chunk:
                yield from recs
        start += width


def is_plan_slot(r: int, mix: float) -> bool:
    """Quota rule: slot r draws from the plan stream iff the plan quota grows at r."""
    return math.floor((r + 1) * mix + 1e-12) > math.floor(r * mix + 1e-12)


def generate(
    cfg: GrammarConfig, seed: int, count: int, mix: float = 0.5, workers: int = 1, mode: str = "spaced"
) -> Iterator[str]:
    """Yield ``count`` JSON lines; a pure function of (cfg, seed, count, mix, mode)."""
    if not 0.0 <= mix <= 1.0:
        raise ValueError("mix must lie in [0, 1]")
    pool = ProcessPoolExecutor(workers) if workers > 1 else None
    try:
        plans = _stream(_plan_chunk, cfg, seed, mode, pool, max(workers, 1))
        progs = _stream(_program_chunk, cfg, seed, mode, pool, max(workers, 1))
        for r in range(count):
            yield next(plans) if is_plan_slot(r, mix) else next(progs)
    finally:
        if pool:
            pool.shutdown(cancel_futures=True)


def read_records(lines: Iterable[str]) -> Iterator[DatasetRecord]:
    for line in lines:
        if line.strip():
            yield DatasetRecord.from_json(line)
