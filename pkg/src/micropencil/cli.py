"""Command-line front end.

Exit codes: 0 success, 2 validation failure, 3 step budget exhausted,
4 dynamic error, 5 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from collections import Counter, defaultdict
from contextlib import contextmanager

from .dataset import default_vocab, generate, read_records, trace_records
from .engine import run_trace
from .errors import DynamicError, MicroPyError, StepBudgetExceeded
from .oracle import final_view
from .parser import ParseError, parse_defs
from .samplers import GrammarConfig
from .suite import LINE_BANDS, check_result, default_manifest, iter_suite, read_manifest, suite_stats
from .tokenizer import program_names

EXIT_OK, EXIT_INVALID, EXIT_BUDGET, EXIT_DYNAMIC, EXIT_IO = 0, 2, 3, 4, 5

# bin edges for trace-length histograms
LENGTH_BINS = (0, 16, 32, 64, 128, 256, 512, 1024, 2048, 4096, 8192, 16384)


class CliError(Exception):
    def __init__(self, msg: str, code: int):
        super().__init__(msg)
        self.code = code


@contextmanager
def _open_out(path):
    if path in (None, "-"):
        yield sys.stdout
        return
    try:
        fh = open(path, "w", encoding="utf-8")
    except OSError as e:
        raise CliError(f"cannot write {path}: {e}", EXIT_IO) from e
    with fh:
        yield fh


def _read_text(path) -> str:
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as e:
        raise CliError(f"cannot read {path}: {e}", EXIT_IO) from e


def _config(args) -> GrammarConfig:
    try:
        cfg = GrammarConfig.load(args.config) if args.config else GrammarConfig()
        overrides = dict(kv.split("=", 1) for kv in args.set or [])
        return cfg.with_overrides({k.strip(): v.strip() for k, v in overrides.items()})
    except OSError as e:
        raise CliError(f"cannot read config: {e}", EXIT_IO) from e
    except ValueError as e:
        raise CliError(f"bad config: {e}", EXIT_INVALID) from e


def histogram(values, edges=LENGTH_BINS) -> list[dict]:
    counts = Counter()
    for v in values:
        for lo, hi in zip(edges, edges[1:]):
            if lo <= v < hi:
                counts[(lo, hi)] += 1
                break
        else:
            counts[(edges[-1], None)] += 1
    return [{"lo": lo, "hi": hi, "count": n} for (lo, hi), n in sorted(counts.items(), key=lambda x: x[0][0])]


# -- commands ------------------------------------------------------------------


def cmd_gen(args) -> int:
    cfg = _config(args)
    with _open_out(args.out) as fh:
        for line in generate(cfg, args.seed, args.count, args.mix, args.workers, args.mode):
            fh.write(line + "\n")
    return EXIT_OK


def cmd_trace(args) -> int:
    text = _read_text(args.program)
    try:
        program = parse_defs(text)
    except (ParseError, MicroPyError) as e:
        raise CliError(f"invalid program: {e}", EXIT_INVALID) from e
    vocab = default_vocab(args.mode).extended(program_names(program))
    try:
        trace = run_trace(program, max_steps=args.max_steps)
    except StepBudgetExceeded as e:
        raise CliError(str(e), EXIT_BUDGET) from e
    except DynamicError as e:
        raise CliError(f"dynamic error: {type(e).__name__}: {e}", EXIT_DYNAMIC) from e
    with _open_out(args.out) as fh:
        for rec in trace_records(args.program_id, trace, vocab):
            fh.write(rec.to_json() + "\n")
            if args.print_every and rec.step_index % args.print_every == 0:
                print(f"step {rec.step_index}: {rec.step_kind}", file=sys.stderr)
    res = trace.result
    print(json.dumps({"steps": len(trace.steps), "value": res.value, "effects": len(res.effects)}), file=sys.stderr)
    return EXIT_OK


def _manifest(args):
    if args.manifest:
        try:
            return read_manifest(args.manifest)
        except OSError as e:
            raise CliError(f"cannot read manifest: {e}", EXIT_IO) from e
        except (ValueError, KeyError) as e:
            raise CliError(f"bad manifest: {e}", EXIT_INVALID) from e
    return default_manifest(args.seed)


def _token_accuracy(gold: str, pred: str) -> tuple[int, int]:
    g, p = gold.split(" "), pred.split(" ")
    correct = sum(1 for a, b in zip(g, p) if a == b)
    return correct, max(len(g), len(p))


def cmd_eval(args) -> int:
    entries = _manifest(args)
    preds = None
    if args.predictions:
        preds = {}
        for rec in read_records(_read_text(args.predictions).splitlines()):
            preds[(rec.program_id, rec.step_index)] = rec.completion_text
    vocab = default_vocab(args.mode)
    runs, failures = [], []
    acc = defaultdict(lambda: [0, 0])
    used = 0
    with _open_out(args.records_out) if args.records_out else _null() as rec_fh:
        for entry, inst, program in iter_suite(entries):
            trace = run_trace(program, max_steps=args.max_steps)
            problems = check_result(entry.task, inst, final_view(program, trace.result))
            if problems:
                failures.append({"program": entry.name, "problems": problems})
            runs.append((entry.task, trace))
            if preds is None and rec_fh is None:
                continue
            for rec in trace_records(entry.name, trace, vocab):
                if rec_fh is not None:
                    rec_fh.write(rec.to_json() + "\n")
                if preds is not None:
                    key = (rec.program_id, rec.step_index)
                    if key not in preds:
                        raise CliError(f"no prediction for {key}", EXIT_INVALID)
                    used += 1
                    c, n = _token_accuracy(rec.completion_text, preds[key])
                    acc[entry.task][0] += c
                    acc[entry.task][1] += n
    if preds is not None and used != len(preds):
        raise CliError(f"{len(preds) - used} predictions do not match any suite step", EXIT_INVALID)
    stats = suite_stats(runs)
    report = {"programs": len(entries), "semantic_failures": failures, "tasks": {}}
    for task, st in stats.items():
        d = st.summary()
        d["band"] = LINE_BANDS.get(task)
        if preds is not None:
            c, n = acc[task]
            d["token_accuracy"] = c / n if n else None
        report["tasks"][task] = d
    with _open_out(args.out) as fh:
        fh.write(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return EXIT_INVALID if failures else EXIT_OK


@contextmanager
def _null():
    yield None


def cmd_stats(args) -> int:
    out = {}
    if args.dataset:
        lines = defaultdict(int)
        kinds = Counter()
        ctx = []
        for rec in read_records(_read_text(args.dataset).splitlines()):
            lines[rec.program_id] += 1
            kinds[rec.step_kind] += 1
            ctx.append(rec.token_counts["prompt"])
        total = sum(kinds.values()) or 1
        out["dataset"] = {
            "records": sum(kinds.values()),
            "programs": len(lines),
            "length_histogram": histogram(lines.values()),
            "last_op_profile": {k: v / total for k, v in sorted(kinds.items())},
            "ctx_min": min(ctx, default=0),
            "ctx_max": max(ctx, default=0),
        }
    if args.manifest or not args.dataset:
        entries = _manifest(args)
        runs = [(e.task, run_trace(p, max_steps=args.max_steps)) for e, _, p in iter_suite(entries)]
        stats = suite_stats(runs)
        pooled = Counter()
        for st in stats.values():
            pooled.update(st.last_ops)
        total = sum(pooled.values()) or 1
        out["suite"] = {
            "tasks": {t: st.summary() for t, st in stats.items()},
            "length_histogram": histogram(len(t.steps) for _, t in runs),
            "last_op_profile": {k: v / total for k, v in sorted(pooled.items())},
        }
    with _open_out(args.out) as fh:
        fh.write(json.dumps(out, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_vocab(args) -> int:
    vocab = default_vocab(args.mode)
    try:
        vocab.export(args.out)
    except OSError as e:
        raise CliError(f"cannot write {args.out}: {e}", EXIT_IO) from e
    print(f"{len(vocab)} tokens ({vocab.n_structural} structural)", file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="micropencil", description="MicroPy PENCIL trace tools")
    sub = ap.add_subparsers(dest="cmd", required=True)

    def common(p, seed=True):
        p.add_argument("--mode", choices=("spaced", "atomic"), default="spaced", help="token print mode")
        p.add_argument("--out", default=None, help="output file (default stdout)")
        if seed:
            p.add_argument("--seed", type=int, default=0)

    g = sub.add_parser("gen", help="generate a training dataset")
    common(g)
    g.add_argument("--config", help="key = value grammar config file")
    g.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
    g.add_argument("--count", type=int, default=1000, help="number of records")
    g.add_argument("--mix", type=float, default=0.5, help="fraction of plan-sampler records")
    g.add_argument("--workers", type=int, default=1)
    g.set_defaults(fn=cmd_gen)

    t = sub.add_parser("trace", help="trace one program file")
    common(t, seed=False)
    t.add_argument("program")
    t.add_argument("--max-steps", type=int, default=None)
    t.add_argument("--print-every", type=int, default=0, help="progress line on stderr every N steps")
    t.add_argument("--program-id", default="program")
    t.set_defaults(fn=cmd_trace)

    e = sub.add_parser("eval", help="verify the evaluation suite and score predictions")
    common(e)
    e.add_argument("--manifest")
    e.add_argument("--predictions", help="records whose completion_text is the prediction")
    e.add_argument("--records-out", help="also write the ground-truth suite records here")
    e.add_argument("--max-steps", type=int, default=100_000)
    e.set_defaults(fn=cmd_eval)

    s = sub.add_parser("stats", help="plot-ready statistics for the suite or a dataset")
    common(s)
    s.add_argument("--manifest")
    s.add_argument("--dataset")
    s.add_argument("--max-steps", type=int, default=100_000)
    s.set_defaults(fn=cmd_stats)

    v = sub.add_parser("vocab", help="export the vocabulary")
    common(v, seed=False)
    v.set_defaults(fn=cmd_vocab)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.cmd == "vocab" and not args.out:
        args.out = "vocab.txt"
    try:
        return args.fn(args)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code
    except StepBudgetExceeded as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_BUDGET
    except DynamicError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_DYNAMIC
    except MicroPyError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INVALID
    except BrokenPipeError:
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
