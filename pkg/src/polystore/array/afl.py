"""Parser and shape checker for the functional array language.

    expr  := NAME | NAME '(' [arg (',' arg)*] ')'
    arg   := expr | NUMBER | pred
    pred  := cmp ('and' cmp)*
    cmp   := atom OP atom          OP in = <> != < <= > >=
    atom  := NAME | NUMBER

Operators: scan, count, distinct, filter, multiply, dwt_haar, bin_hist, subarray.
Names starting with ``$`` are placeholders for container results.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from ..errors import ParseError, ShapeError
from .haar import is_power_of_two

OPERATORS = {
    # name: (min args, max args)
    "scan": (1, 1),
    "count": (1, 1),
    "distinct": (1, 1),
    "filter": (2, 2),
    "multiply": (2, 2),
    "dwt_haar": (1, 1),
    "bin_hist": (3, 3),
    "subarray": (3, 5),
}

VALUE_ATTR = "val"


class AflSyntaxError(ParseError):
    pass


@dataclass(frozen=True)
class Ref:
    name: str
    pos: int = field(default=-1, compare=False)


@dataclass(frozen=True)
class Num:
    value: float
    is_int: bool


@dataclass(frozen=True)
class Cmp:
    op: str
    left: object  # Ref | Num
    right: object


@dataclass(frozen=True)
class Pred:
    conjuncts: tuple


@dataclass(frozen=True)
class Call:
    op: str
    args: tuple
    pos: int = field(default=-1, compare=False)


_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<num>-?(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>\$?[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op><>|!=|<=|>=|[=<>(),])
""", re.VERBOSE)


def _tokens(text):
    out, pos = [], 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise AflSyntaxError(f"unexpected character {text[pos]!r}", pos)
        if m.lastgroup != "ws":
            out.append((m.lastgroup, m.group(), pos))
        pos = m.end()
    out.append(("eof", None, len(text)))
    return out


class _Parser:
    def __init__(self, text):
        self.toks = _tokens(text)
        self.i = 0

    def peek(self, k=0):
        return self.toks[self.i + k]

    def take(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def fail(self, msg):
        kind, val, pos = self.peek()
        shown = "end of input" if kind == "eof" else repr(val)
        return AflSyntaxError(f"{msg}, found {shown}", pos)

    def expect(self, val):
        if self.peek()[1] != val or self.peek()[0] != "op":
            raise self.fail(f"expected {val!r}")
        return self.take()

    def parse(self):
        node = self.expr()
        if self.peek()[0] != "eof":
            raise self.fail("unexpected trailing input")
        return node

    def expr(self):
        kind, val, pos = self.peek()
        if kind != "name":
            raise self.fail("expected array name or operator")
        self.take()
        if self.peek()[1] == "(" and self.peek()[0] == "op":
            if val not in OPERATORS:
                raise AflSyntaxError(f"unknown operator {val!r}", pos)
            self.take()
            args = []
            if self.peek()[1] != ")":
                args.append(self.arg())
                while self.peek()[1] == "," and self.peek()[0] == "op":
                    self.take()
                    args.append(self.arg())
            self.expect(")")
            lo, hi = OPERATORS[val]
            if not lo <= len(args) <= hi:
                raise AflSyntaxError(f"{val} takes {lo}..{hi} arguments, got {len(args)}", pos)
            return Call(val, tuple(args), pos)
        return Ref(val, pos)

    def atom(self):
        kind, val, pos = self.peek()
        if kind == "num":
            self.take()
            is_int = re.fullmatch(r"-?\d+", val) is not None
            return Num(int(val) if is_int else float(val), is_int)
        if kind == "name":
            # a call may appear as an array argument
            if self.peek(1)[1] == "(":
                return self.expr()
            self.take()
            return Ref(val, pos)
        raise self.fail("expected argument")

    def arg(self):
        first = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] in ("=", "<>", "!=", "<", "<=", ">", ">="):
            conj = [self.cmp(first)]
            while self.peek()[0] == "name" and self.peek()[1].lower() == "and":
                self.take()
                conj.append(self.cmp(self.atom()))
            return Pred(tuple(conj))
        return first

    def cmp(self, left):
        if isinstance(left, Call):
            raise self.fail("comparison operands must be names or numbers")
        kind, val, pos = self.peek()
        if kind != "op" or val not in ("=", "<>", "!=", "<", "<=", ">", ">="):
            raise self.fail("expected comparison operator")
        self.take()
        right = self.atom()
        if isinstance(right, Call):
            raise AflSyntaxError("comparison operands must be names or numbers", pos)
        return Cmp("<>" if val == "!=" else val, left, right)


def parse(text: str):
    return _Parser(text).parse()


def array_refs(node) -> list[str]:
    """Array names referenced by an expression, in order, placeholders included."""
    out = []

    def walk(n, array_position=True):
        if isinstance(n, Ref):
            if array_position and n.name not in out:
                out.append(n.name)
        elif isinstance(n, Call):
            for k, a in enumerate(n.args):
                walk(a, _is_array_arg(n.op, k))
    walk(node)
    return out


def _is_array_arg(op, k):
    if op in ("filter",):
        return k == 0
    if op == "bin_hist":
        return k in (0, 1)
    if op == "subarray":
        return k == 0
    return True


def operators(node) -> list[str]:
    out = []

    def walk(n):
        if isinstance(n, Call):
            out.append(n.op)
            for a in n.args:
                walk(a)
    walk(node)
    return out


def to_text(node) -> str:
    if isinstance(node, Ref):
        return node.name
    if isinstance(node, Num):
        return repr(node.value)
    if isinstance(node, Pred):
        return " and ".join(f"{to_text(c.left)} {c.op} {to_text(c.right)}" for c in node.conjuncts)
    return f"{node.op}(" + ", ".join(to_text(a) for a in node.args) + ")"


# ---------------------------------------------------------------- shape checking

@dataclass(frozen=True)
class ArrayType:
    dims: tuple  # ((name, length or None), ...)
    holey: bool = False

    @property
    def rank(self):
        return len(self.dims)


SCALAR = "scalar"


def product_dims(a_dims, b_dims):
    """Output dimension names/lengths of ``multiply`` for (m,k) x (k,n)."""
    left, right = a_dims[0], b_dims[1]
    name = right[0]
    if name == left[0]:
        name = name + "_2"
    return (left, (name, right[1]))


def subarray_bounds(op_args, rank):
    bounds = []
    for a in op_args:
        if not isinstance(a, Num) or not a.is_int:
            raise ShapeError("subarray bounds must be integers")
        bounds.append(int(a.value))
    if len(bounds) != 2 * rank:
        raise ShapeError(f"subarray of a rank-{rank} array needs {2 * rank} bounds")
    return bounds[:rank], bounds[rank:]


def infer(node, shape_of):
    """Static result type of ``node``; ``shape_of(name)`` gives an :class:`ArrayType`.

    Raises :class:`ShapeError` on ill-typed expressions.
    """
    if isinstance(node, Ref):
        return shape_of(node.name)
    if not isinstance(node, Call):
        raise ShapeError(f"expected an array expression, got {to_text(node)!r}")
    op, args = node.op, node.args
    if op == "scan":
        return _array(infer(args[0], shape_of), op)
    if op == "count":
        _array(infer(args[0], shape_of), op)
        return SCALAR
    if op == "distinct":
        _array(infer(args[0], shape_of), op)
        return ArrayType((("i", None),))
    if op == "filter":
        src = _array(infer(args[0], shape_of), op)
        pred = args[1]
        if not isinstance(pred, Pred):
            raise ShapeError("filter needs a predicate such as 'val > 0'")
        names = {d for d, _ in src.dims} | {VALUE_ATTR}
        for c in pred.conjuncts:
            for side in (c.left, c.right):
                if isinstance(side, Ref) and side.name not in names:
                    raise ShapeError(f"filter predicate refers to unknown attribute {side.name!r}")
        return ArrayType(src.dims, True)
    if op == "multiply":
        a = _array(infer(args[0], shape_of), op)
        b = _array(infer(args[1], shape_of), op)
        if a.rank != 2 or b.rank != 2:
            raise ShapeError("multiply needs two rank-2 operands")
        if a.holey or b.holey:
            raise ShapeError("multiply needs fully populated operands")
        if a.dims[1][1] is not None and b.dims[0][1] is not None and a.dims[1][1] != b.dims[0][1]:
            raise ShapeError(f"multiply: inner dimensions differ "
                             f"({a.dims[1][1]} vs {b.dims[0][1]})")
        return ArrayType(product_dims(a.dims, b.dims))
    if op == "dwt_haar":
        src = _array(infer(args[0], shape_of), op)
        if src.rank not in (1, 2) or src.holey:
            raise ShapeError("dwt_haar needs a fully populated rank-1 or rank-2 array")
        n = src.dims[-1][1]
        if n is not None and not is_power_of_two(n):
            n = 1 << (n.bit_length() - 1)
        return ArrayType(src.dims[:-1] + ((src.dims[-1][0], n),))
    if op == "bin_hist":
        src = _array(infer(args[0], shape_of), op)
        edges = _array(infer(args[1], shape_of), op)
        nbins = args[2]
        if not isinstance(nbins, Num) or not nbins.is_int or nbins.value < 2:
            raise ShapeError("bin_hist bin count must be an integer >= 2")
        if src.rank not in (1, 2) or src.holey:
            raise ShapeError("bin_hist needs a fully populated rank-1 or rank-2 array")
        n = src.dims[-1][1]
        if n is not None and not is_power_of_two(n):
            raise ShapeError("bin_hist needs a power-of-two coefficient length")
        scales = None if n is None else n.bit_length()
        if edges.rank != 2 or (edges.dims[1][1] not in (None, 2)) or (
                scales is not None and edges.dims[0][1] not in (None, scales)):
            raise ShapeError(f"bin_hist edges must be a ({scales} x 2) array of [lo, hi]")
        width = None if scales is None else scales * int(nbins.value)
        return ArrayType(src.dims[:-1] + (("bin", width),))
    if op == "subarray":
        src = _array(infer(args[0], shape_of), op)
        lo, hi = subarray_bounds(args[1:], src.rank)
        dims = []
        for (name, length), a, b in zip(src.dims, lo, hi):
            if a < 0 or b < a or (length is not None and b >= length):
                raise ShapeError(f"subarray bounds [{a}, {b}] out of range for dimension {name}")
            dims.append((name, b - a + 1))
        return ArrayType(tuple(dims), src.holey)
    raise ShapeError(f"unknown operator {op}")


def _array(t, op):
    if t == SCALAR:
        raise ShapeError(f"{op} needs an array operand, got a scalar")
    return t
