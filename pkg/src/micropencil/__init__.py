"""MicroPy programs executed as PENCIL-style reducing traces."""

from .engine import Context, TraceStep, iter_trace, pencil_reduce, run_trace
from .oracle import eval_expr
from .parser import compile_source, parse_defs, print_defs
from .syntax import Program

__all__ = [
    "Context",
    "Program",
    "TraceStep",
    "compile_source",
    "eval_expr",
    "iter_trace",
    "parse_defs",
    "pencil_reduce",
    "print_defs",
    "run_trace",
]
