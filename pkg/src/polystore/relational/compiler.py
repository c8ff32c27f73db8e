"""Turns a parsed SELECT into Python closures and runs it.

Expressions are type-checked against the catalog, then rendered as Python
source over a row tuple ``r`` and compiled once per statement, so the inner
loops run one Python-level call per row.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import islice
from operator import itemgetter

from ..errors import CatalogError, ExecutionError
from .relation import Relation
from .sql import (FLOAT64, INT64, TEXT, Agg, BinOp, Column, Comparison, Func, Literal, Neg,
                  Select, SelectItem)


# ---------------------------------------------------------------- runtime helpers

def _idiv(a, b):
    if b == 0:
        raise ExecutionError("division by zero")
    q = abs(a) // abs(b)
    return q if (a >= 0) == (b >= 0) else -q


def _imod(a, b):
    if b == 0:
        raise ExecutionError("division by zero")
    return a - b * _idiv(a, b)


def _fdiv(a, b):
    if b == 0:
        raise ExecutionError("division by zero")
    return a / b


def _fmod(a, b):
    if b == 0:
        raise ExecutionError("division by zero")
    return math.fmod(a, b)


def _sqrt(x):
    if x < 0:
        raise ExecutionError("SQRT of a negative number")
    return math.sqrt(x)


def _ln(x):
    if x <= 0:
        raise ExecutionError("LN of a non-positive number")
    return math.log(x)


_NAMESPACE = {
    "_idiv": _idiv, "_imod": _imod, "_fdiv": _fdiv, "_fmod": _fmod,
    "_sqrt": _sqrt, "_ln": _ln, "_floor": math.floor, "abs": abs, "min": min, "max": max,
}

_CMP = {"=": "==", "<>": "!=", "<": "<", "<=": "<=", ">": ">", ">=": ">="}


def _compile(src):
    return eval(src, dict(_NAMESPACE))


# ---------------------------------------------------------------- resolution

@dataclass(frozen=True)
class Col:
    """A column resolved to its offset in the (possibly joined) input row."""
    index: int
    type: str
    name: str


class Scope:
    """Column lookup over the one or two tables of a FROM clause."""

    def __init__(self, refs):
        # refs: list of (ref_name, Relation)
        self.refs = refs
        self.entries = []  # (ref, column, type, offset)
        offset = 0
        for ref, rel in refs:
            for col, typ in rel.schema:
                self.entries.append((ref, col, typ, offset))
                offset += 1
        self.width = offset

    def resolve(self, column: Column) -> Col:
        matches = [e for e in self.entries
                   if e[1] == column.name and (column.table is None or e[0] == column.table)]
        if column.table is not None and not any(e[0] == column.table for e in self.entries):
            raise CatalogError(f"unknown table reference {column.table!r} at position {column.pos}")
        if not matches:
            raise CatalogError(f"unknown column {column.name!r} at position {column.pos}")
        if len(matches) > 1:
            raise CatalogError(f"ambiguous column {column.name!r} at position {column.pos}")
        _, col, typ, offset = matches[0]
        return Col(offset, typ, col)

    def table_of(self, index):
        start = 0
        for n, (_, rel) in enumerate(self.refs):
            if index < start + len(rel.schema):
                return n
            start += len(rel.schema)
        raise IndexError(index)


def resolve(expr, scope: Scope):
    if isinstance(expr, Column):
        return scope.resolve(expr)
    if isinstance(expr, Literal):
        return expr
    if isinstance(expr, BinOp):
        return BinOp(expr.op, resolve(expr.left, scope), resolve(expr.right, scope))
    if isinstance(expr, Neg):
        return Neg(resolve(expr.operand, scope))
    if isinstance(expr, Func):
        return Func(expr.name, tuple(resolve(a, scope) for a in expr.args))
    if isinstance(expr, Agg):
        return Agg(expr.name, None if expr.arg is None else resolve(expr.arg, scope))
    if isinstance(expr, Comparison):
        return Comparison(expr.op, resolve(expr.left, scope), resolve(expr.right, scope))
    raise ExecutionError(f"unsupported expression {expr!r}")


def columns_of(expr):
    if isinstance(expr, Col):
        return {expr.index}
    if isinstance(expr, BinOp) or isinstance(expr, Comparison):
        return columns_of(expr.left) | columns_of(expr.right)
    if isinstance(expr, Neg):
        return columns_of(expr.operand)
    if isinstance(expr, Func):
        out = set()
        for a in expr.args:
            out |= columns_of(a)
        return out
    if isinstance(expr, Agg):
        return set() if expr.arg is None else columns_of(expr.arg)
    return set()


def has_aggregate(expr):
    if isinstance(expr, Agg):
        return True
    if isinstance(expr, (BinOp, Comparison)):
        return has_aggregate(expr.left) or has_aggregate(expr.right)
    if isinstance(expr, Neg):
        return has_aggregate(expr.operand)
    if isinstance(expr, Func):
        return any(has_aggregate(a) for a in expr.args)
    return False


def shift(expr, delta):
    """Re-base column offsets, used when pushing predicates below a join."""
    if isinstance(expr, Col):
        return Col(expr.index + delta, expr.type, expr.name)
    if isinstance(expr, BinOp):
        return BinOp(expr.op, shift(expr.left, delta), shift(expr.right, delta))
    if isinstance(expr, Comparison):
        return Comparison(expr.op, shift(expr.left, delta), shift(expr.right, delta))
    if isinstance(expr, Neg):
        return Neg(shift(expr.operand, delta))
    if isinstance(expr, Func):
        return Func(expr.name, tuple(shift(a, delta) for a in expr.args))
    return expr


# ---------------------------------------------------------------- code generation

class Codegen:
    """Renders resolved expressions to Python source.

    ``replacements`` maps whole sub-expressions (group keys, aggregates) to
    source snippets; in grouped mode any bare column left over is an error.
    """

    def __init__(self, replacements=None, grouped=False):
        self.replacements = replacements or {}
        self.grouped = grouped

    def gen(self, expr):
        if expr in self.replacements:
            return self.replacements[expr]
        if isinstance(expr, Literal):
            return f"({expr.value!r})", expr.type
        if isinstance(expr, Col):
            if self.grouped:
                raise ExecutionError(
                    f"column {expr.name!r} must appear in GROUP BY or inside an aggregate")
            return f"r[{expr.index}]", expr.type
        if isinstance(expr, Neg):
            src, typ = self.gen(expr.operand)
            if typ == TEXT:
                raise ExecutionError("cannot negate text")
            return f"(-{src})", typ
        if isinstance(expr, BinOp):
            ls, lt = self.gen(expr.left)
            rs, rt = self.gen(expr.right)
            if TEXT in (lt, rt):
                raise ExecutionError(f"operator {expr.op} is not defined for text")
            both_int = lt == INT64 and rt == INT64
            typ = INT64 if both_int else FLOAT64
            if expr.op == "/":
                return (f"_idiv({ls}, {rs})" if both_int else f"_fdiv({ls}, {rs})"), typ
            if expr.op == "%":
                return (f"_imod({ls}, {rs})" if both_int else f"_fmod({ls}, {rs})"), typ
            return f"({ls} {expr.op} {rs})", typ
        if isinstance(expr, Func):
            parts = [self.gen(a) for a in expr.args]
            types = {t for _, t in parts}
            srcs = ", ".join(s for s, _ in parts)
            if expr.name in ("LEAST", "GREATEST"):
                if TEXT in types and len(types) > 1:
                    raise ExecutionError(f"{expr.name} mixes text and numbers")
                typ = TEXT if TEXT in types else (FLOAT64 if FLOAT64 in types else INT64)
                fn = "min" if expr.name == "LEAST" else "max"
                return f"{fn}({srcs})", typ
            if TEXT in types:
                raise ExecutionError(f"{expr.name} is not defined for text")
            if expr.name == "SQRT":
                return f"_sqrt({srcs})", FLOAT64
            if expr.name == "LN":
                return f"_ln({srcs})", FLOAT64
            if expr.name == "FLOOR":
                return f"_floor({srcs})", INT64
            if expr.name == "ABS":
                return f"abs({srcs})", parts[0][1]
        if isinstance(expr, Comparison):
            ls, lt = self.gen(expr.left)
            rs, rt = self.gen(expr.right)
            if (lt == TEXT) != (rt == TEXT):
                raise ExecutionError(f"cannot compare {lt} with {rt}")
            return f"({ls} {_CMP[expr.op]} {rs})", "bool"
        if isinstance(expr, Agg):
            raise ExecutionError(f"aggregate {expr.name} is not allowed here")
        raise ExecutionError(f"unsupported expression {expr!r}")


def _predicate(conjuncts):
    cg = Codegen()
    srcs = [cg.gen(c)[0] for c in conjuncts]
    return _compile("lambda r: " + " and ".join(srcs))


def _unique_names(names):
    seen = {}
    out = []
    for name in names:
        if name in seen:
            seen[name] += 1
            candidate = f"{name}_{seen[name]}"
            while candidate in seen:
                seen[name] += 1
                candidate = f"{name}_{seen[name]}"
            seen[candidate] = 0
            out.append(candidate)
        else:
            seen[name] = 0
            out.append(name)
    return out


def _item_name(item: SelectItem, n: int):
    if item.alias:
        return item.alias
    if isinstance(item.expr, Column):
        return item.expr.name
    if isinstance(item.expr, Agg):
        return item.expr.name.lower()
    return f"col{n}"


# ---------------------------------------------------------------- execution

def execute_select(stmt: Select, lookup):
    """Run ``stmt``; ``lookup(name, pos)`` returns a :class:`Relation`.

    Returns a Relation, or an int for a bare ``SELECT COUNT(*)``.
    """
    tables = [lookup(t.name, t.pos) for t in stmt.tables]
    refs = [t.ref for t in stmt.tables]
    if len(set(refs)) != len(refs):
        raise CatalogError(f"table reference {refs[0]!r} used twice; add an alias")
    scope = Scope(list(zip(refs, tables)))
    left_width = len(tables[0].schema)

    where = [resolve(c, scope) for c in stmt.where]
    for c in where:
        if has_aggregate(c):
            raise ExecutionError("aggregates are not allowed in WHERE")
        Codegen().gen(c)  # type check

    join_key = None
    if len(tables) == 2:
        candidates = [resolve(stmt.join_on, scope)] if stmt.join_on is not None else \
            [c for c in where if c.op == "="]
        for cond in candidates:
            lcols, rcols = columns_of(cond.left), columns_of(cond.right)
            if lcols and rcols:
                lside = {scope.table_of(i) for i in lcols}
                rside = {scope.table_of(i) for i in rcols}
                if lside == {0} and rside == {1}:
                    join_key = (cond.left, cond.right)
                elif lside == {1} and rside == {0}:
                    join_key = (cond.right, cond.left)
            if join_key is not None:
                if stmt.join_on is None:
                    where.remove(cond)
                break
        if stmt.join_on is not None and join_key is None:
            raise ExecutionError("join condition must compare a column of each table")

    rows = _source_rows(tables, where, join_key, scope, left_width)

    items = stmt.items
    if items is None:
        if stmt.group_by:
            raise ExecutionError("SELECT * cannot be combined with GROUP BY")
        names = _unique_names([c for _, rel in scope.refs for c in rel.columns])
        types = [t for _, rel in scope.refs for t in rel.types]
        out = rows if isinstance(rows, list) else list(rows)
        if stmt.distinct:
            out = list(dict.fromkeys(out))
        if stmt.limit is not None:
            out = out[:stmt.limit]
        return Relation("result", tuple(zip(names, types)), out)

    resolved_items = [resolve(item.expr, scope) for item in items]
    names = _unique_names([_item_name(it, n) for n, it in enumerate(items)])

    aggregated = bool(stmt.group_by) or any(has_aggregate(e) for e in resolved_items)

    if (aggregated and not stmt.group_by and len(items) == 1
            and resolved_items[0] == Agg("COUNT", None) and not stmt.distinct):
        n = 0
        for _ in rows:
            n += 1
        return n

    if aggregated:
        group_exprs = []
        aliases = {it.alias: e for it, e in zip(items, resolved_items) if it.alias}
        for g in stmt.group_by:
            try:
                group_exprs.append(resolve(g, scope))
            except CatalogError:
                if isinstance(g, Column) and g.table is None and g.name in aliases:
                    group_exprs.append(aliases[g.name])
                else:
                    raise
        for g in group_exprs:
            if has_aggregate(g):
                raise ExecutionError("aggregates are not allowed in GROUP BY")
        out_rows, types = _aggregate(rows, group_exprs, resolved_items)
    else:
        cg = Codegen()
        gens = [cg.gen(e) for e in resolved_items]
        types = [t for _, t in gens]
        if all(isinstance(e, Col) for e in resolved_items):
            idx = [e.index for e in resolved_items]
            getter = itemgetter(*idx)
            if len(idx) == 1:
                if stmt.distinct:
                    out_rows = [(v,) for v in dict.fromkeys(map(getter, rows))]
                else:
                    out_rows = [(v,) for v in map(getter, rows)]
            else:
                out_rows = list(dict.fromkeys(map(getter, rows)) if stmt.distinct
                                else map(getter, rows))
        else:
            fn = _compile("lambda r: (" + "".join(s + ", " for s, _ in gens) + ")")
            out_rows = list(dict.fromkeys(map(fn, rows)) if stmt.distinct else map(fn, rows))
        if stmt.limit is not None:
            out_rows = out_rows[:stmt.limit]
        return Relation("result", tuple(zip(names, types)), out_rows)

    if stmt.distinct:
        out_rows = list(dict.fromkeys(out_rows))
    if stmt.limit is not None:
        out_rows = list(islice(out_rows, stmt.limit))
    return Relation("result", tuple(zip(names, types)), out_rows)


def _source_rows(tables, where, join_key, scope, left_width):
    if len(tables) == 1:
        rows = tables[0].rows
        if where:
            rows = filter(_predicate(where), rows)
        return rows

    left_preds, right_preds, cross_preds = [], [], []
    for c in where:
        sides = {scope.table_of(i) for i in columns_of(c)}
        if sides == {0} or not sides:
            left_preds.append(c)
        elif sides == {1}:
            right_preds.append(shift(c, -left_width))
        else:
            cross_preds.append(c)
    left = tables[0].rows
    right = tables[1].rows
    if left_preds:
        left = filter(_predicate(left_preds), left)
    if right_preds:
        right = filter(_predicate(right_preds), right)

    if join_key is None:
        right = list(right)

        def joined():
            for lrow in left:
                for rrow in right:
                    yield lrow + rrow
    else:
        lsrc, ltype = Codegen().gen(join_key[0])
        rsrc, rtype = Codegen().gen(shift(join_key[1], -left_width))
        if (ltype == TEXT) != (rtype == TEXT):
            raise ExecutionError(f"cannot join {ltype} with {rtype}")
        lkey = _compile("lambda r: " + lsrc)
        rkey = _compile("lambda r: " + rsrc)
        index = {}
        for rrow in right:
            k = rkey(rrow)
            bucket = index.get(k)
            if bucket is None:
                index[k] = [rrow]
            else:
                bucket.append(rrow)

        def joined():
            get = index.get
            for lrow in left:
                bucket = get(lkey(lrow))
                if bucket:
                    for rrow in bucket:
                        yield lrow + rrow

    rows = joined()
    if cross_preds:
        rows = filter(_predicate(cross_preds), rows)
    return rows


def _aggregate(rows, group_exprs, items):
    replacements = {}
    key_types = []
    for n, g in enumerate(group_exprs):
        _, typ = Codegen().gen(g)
        key_types.append(typ)
        replacements[g] = (f"k[{n}]", typ)

    aggs = []

    def collect(expr):
        if isinstance(expr, Agg):
            if expr not in aggs:
                aggs.append(expr)
        elif isinstance(expr, (BinOp, Comparison)):
            collect(expr.left)
            collect(expr.right)
        elif isinstance(expr, Neg):
            collect(expr.operand)
        elif isinstance(expr, Func):
            for a in expr.args:
                collect(a)

    for e in items:
        collect(e)

    init_parts, upd_lines, agg_types = [], [], []
    plain = Codegen()
    for j, agg in enumerate(aggs):
        if agg.arg is None:
            init_parts.append("1")
            upd_lines.append(f"    a[{j}] += 1")
            agg_types.append(INT64)
            continue
        if has_aggregate(agg.arg):
            raise ExecutionError("nested aggregates are not allowed")
        src, typ = plain.gen(agg.arg)
        if agg.name == "COUNT":
            init_parts.append("1")
            upd_lines.append(f"    a[{j}] += 1")
            agg_types.append(INT64)
        elif agg.name == "SUM":
            if typ == TEXT:
                raise ExecutionError("SUM is not defined for text")
            init_parts.append(src)
            upd_lines.append(f"    a[{j}] += {src}")
            agg_types.append(typ)
        else:
            cmp = "<" if agg.name == "MIN" else ">"
            init_parts.append(src)
            upd_lines.append(f"    v = {src}\n    if v {cmp} a[{j}]:\n        a[{j}] = v")
            agg_types.append(typ)
        replacements[agg] = (f"a[{j}]", agg_types[-1])
    for j, agg in enumerate(aggs):
        replacements.setdefault(agg, (f"a[{j}]", agg_types[j]))

    ns = dict(_NAMESPACE)
    src = "def _init(r):\n    return [" + ", ".join(init_parts) + "]\n"
    src += "def _upd(r, a):\n" + ("\n".join(upd_lines) if upd_lines else "    pass") + "\n"
    exec(src, ns)
    init, upd = ns["_init"], ns["_upd"]

    if group_exprs:
        keyf = _compile("lambda r: (" + "".join(
            Codegen().gen(g)[0] + ", " for g in group_exprs) + ")")
    else:
        keyf = None

    groups = {}
    if keyf is None:
        acc = None
        for r in rows:
            if acc is None:
                acc = init(r)
            else:
                upd(r, acc)
        if acc is None:
            acc = []
            for agg, typ in zip(aggs, agg_types):
                if agg.name in ("MIN", "MAX"):
                    raise ExecutionError(f"{agg.name} over empty input")
                acc.append(0.0 if typ == FLOAT64 else 0)
        groups[()] = acc
    else:
        get = groups.get
        for r in rows:
            k = keyf(r)
            acc = get(k)
            if acc is None:
                groups[k] = init(r)
            else:
                upd(r, acc)

    out_cg = Codegen(replacements, grouped=True)
    gens = [out_cg.gen(e) for e in items]
    outf = _compile("lambda k, a: (" + "".join(s + ", " for s, _ in gens) + ")")
    out_rows = [outf(k, a) for k, a in groups.items()]
    return out_rows, [t for _, t in gens]
