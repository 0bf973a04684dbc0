import pytest

from micropencil.parser import compile_source, make_call, parse_defs

IDENTITY_DEFS = """\
FD foo = lambda(x) Exp3;
FD bar = lambda(x) Exp4;
D.Exp1 = App(bar (O.obj1))
D.Exp2 = App(foo (Exp1))
D.Exp3 = LookupVar(x)
D.Exp4 = LookupVar(x)
Root(Exp2)
"""

# walks a linked list to its last node by self tail recursion
WALK_SOURCE = """
def walk(l):
    return If(HasAttr(l, Attr("next")), walk(LookupAttr(l, Attr("next"))), l)
"""


def identity_program():
    return parse_defs(IDENTITY_DEFS)


def walk_program(n: int):
    p = compile_source(WALK_SOURCE)
    p.state = [(f"O.n{i}", "Att.next", f"O.n{i + 1}") for i in range(n - 1)]
    make_call(p, "walk", ["O.n0"])
    return p


@pytest.fixture
def identity():
    return identity_program()
