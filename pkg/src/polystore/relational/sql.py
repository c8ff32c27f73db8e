"""Tokenizer, AST and recursive-descent parser for the relational dialect.

Supported statements::

    SELECT [DISTINCT] items FROM t [a] [JOIN u [b] ON x = y | , u [b]]
        [WHERE cmp AND cmp ...] [GROUP BY expr, ...] [LIMIT n]
    CREATE TABLE t (col type, ...)
    CREATE TABLE t AS SELECT ...
    DROP TABLE t
    INSERT INTO t VALUES (...), (...)

No subqueries, ORDER BY, OR, outer joins or NULL.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from ..errors import ParseError

INT64 = "int64"
FLOAT64 = "float64"
TEXT = "text"
TYPES = (INT64, FLOAT64, TEXT)

TYPE_ALIASES = {
    "int64": INT64, "int": INT64, "integer": INT64, "bigint": INT64,
    "float64": FLOAT64, "float": FLOAT64, "double": FLOAT64, "real": FLOAT64,
    "text": TEXT, "varchar": TEXT, "string": TEXT,
}

KEYWORDS = frozenset("""
    SELECT DISTINCT FROM WHERE GROUP BY LIMIT AS JOIN INNER ON AND OR NOT
    CREATE TABLE DROP INSERT INTO VALUES ORDER HAVING UNION NULL
""".split())

AGGREGATES = frozenset({"COUNT", "SUM", "MIN", "MAX"})
FUNCTIONS = {"SQRT": 1, "LN": 1, "FLOOR": 1, "ABS": 1, "LEAST": None, "GREATEST": None}
COMPARATORS = ("=", "<>", "!=", "<", "<=", ">", ">=")


class SqlSyntaxError(ParseError):
    pass


@dataclass(frozen=True)
class Token:
    kind: str  # ident | keyword | int | float | string | op | eof
    value: object
    pos: int


_TOKEN_RE = re.compile(r"""
    (?P<ws>\s+)
  | (?P<float>(?:\d+\.\d*|\.\d+)(?:[eE][+-]?\d+)?|\d+[eE][+-]?\d+)
  | (?P<int>\d+)
  | (?P<ident>\$?[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op><>|!=|<=|>=|[=<>+\-*/%(),.;])
""", re.VERBOSE)


def tokenize(text: str) -> list[Token]:
    tokens = []
    pos = 0
    n = len(text)
    while pos < n:
        if text[pos] == "'":
            start = pos
            pos += 1
            chunks = []
            while True:
                end = text.find("'", pos)
                if end < 0:
                    raise SqlSyntaxError("unterminated string literal", start)
                chunks.append(text[pos:end])
                if text.startswith("''", end):
                    chunks.append("'")
                    pos = end + 2
                    continue
                pos = end + 1
                break
            tokens.append(Token("string", "".join(chunks), start))
            continue
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise SqlSyntaxError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        value = m.group()
        if kind == "ident":
            if value.upper() in KEYWORDS:
                tokens.append(Token("keyword", value.upper(), pos))
            else:
                tokens.append(Token("ident", value, pos))
        elif kind == "int":
            tokens.append(Token("int", int(value), pos))
        elif kind == "float":
            tokens.append(Token("float", float(value), pos))
        elif kind == "op":
            tokens.append(Token("op", value, pos))
        pos = m.end()
    tokens.append(Token("eof", None, n))
    return tokens


# ---------------------------------------------------------------- AST

@dataclass(frozen=True)
class Literal:
    value: object
    type: str


@dataclass(frozen=True)
class Column:
    table: str | None
    name: str
    pos: int = field(default=-1, compare=False)


@dataclass(frozen=True)
class BinOp:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class Neg:
    operand: object


@dataclass(frozen=True)
class Func:
    name: str
    args: tuple


@dataclass(frozen=True)
class Agg:
    name: str
    arg: object  # None means COUNT(*)


@dataclass(frozen=True)
class Comparison:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class SelectItem:
    expr: object
    alias: str | None = None


@dataclass(frozen=True)
class TableRef:
    name: str
    alias: str | None = None
    pos: int = field(default=-1, compare=False)

    @property
    def ref(self):
        return self.alias or self.name


@dataclass(frozen=True)
class Select:
    items: tuple | None  # None means SELECT *
    tables: tuple  # one or two TableRef
    join_on: Comparison | None = None
    where: tuple = ()
    group_by: tuple = ()
    distinct: bool = False
    limit: int | None = None


@dataclass(frozen=True)
class CreateTable:
    name: str
    columns: tuple  # ((name, type), ...)


@dataclass(frozen=True)
class CreateTableAs:
    name: str
    query: Select


@dataclass(frozen=True)
class DropTable:
    name: str


@dataclass(frozen=True)
class Insert:
    name: str
    rows: tuple
    query: Select | None = None  # INSERT INTO t SELECT ...


# ---------------------------------------------------------------- parser

class _Parser:
    def __init__(self, text):
        self.text = text
        self.tokens = tokenize(text)
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def advance(self) -> Token:
        t = self.tokens[self.i]
        self.i += 1
        return t

    def error(self, message, tok=None):
        tok = tok or self.tok
        shown = "end of input" if tok.kind == "eof" else repr(tok.value)
        return SqlSyntaxError(f"{message}, found {shown}", tok.pos)

    def at_keyword(self, *words):
        return self.tok.kind == "keyword" and self.tok.value in words

    def at_op(self, *ops):
        return self.tok.kind == "op" and self.tok.value in ops

    def keyword(self, word):
        if not self.at_keyword(word):
            raise self.error(f"expected {word}")
        return self.advance()

    def op(self, symbol):
        if not self.at_op(symbol):
            raise self.error(f"expected {symbol!r}")
        return self.advance()

    def ident(self, what="identifier"):
        if self.tok.kind != "ident":
            raise self.error(f"expected {what}")
        return self.advance()

    # statements

    def statement(self):
        if self.at_keyword("SELECT"):
            stmt = self.select()
        elif self.at_keyword("CREATE"):
            stmt = self.create()
        elif self.at_keyword("DROP"):
            self.advance()
            self.keyword("TABLE")
            stmt = DropTable(self.ident("table name").value)
        elif self.at_keyword("INSERT"):
            stmt = self.insert()
        else:
            raise self.error("expected SELECT, CREATE, DROP or INSERT")
        if self.at_op(";"):
            self.advance()
        if self.tok.kind != "eof":
            raise self.error("unexpected trailing input")
        return stmt

    def create(self):
        self.keyword("CREATE")
        self.keyword("TABLE")
        name = self.ident("table name").value
        if self.at_keyword("AS"):
            self.advance()
            return CreateTableAs(name, self.select())
        self.op("(")
        columns = []
        while True:
            col = self.ident("column name").value
            type_tok = self.tok
            if type_tok.kind != "ident" or type_tok.value.lower() not in TYPE_ALIASES:
                raise self.error("expected column type")
            self.advance()
            columns.append((col, TYPE_ALIASES[type_tok.value.lower()]))
            if self.at_op(","):
                self.advance()
                continue
            self.op(")")
            break
        return CreateTable(name, tuple(columns))

    def insert(self):
        self.keyword("INSERT")
        self.keyword("INTO")
        name = self.ident("table name").value
        if self.at_keyword("SELECT"):
            return Insert(name, (), self.select())
        self.keyword("VALUES")
        rows = []
        while True:
            self.op("(")
            row = [self.literal_value()]
            while self.at_op(","):
                self.advance()
                row.append(self.literal_value())
            self.op(")")
            rows.append(tuple(row))
            if not self.at_op(","):
                break
            self.advance()
        return Insert(name, tuple(rows))

    def literal_value(self):
        sign = 1
        if self.at_op("-"):
            self.advance()
            sign = -1
        t = self.tok
        if t.kind in ("int", "float"):
            self.advance()
            return sign * t.value
        if t.kind == "string" and sign == 1:
            self.advance()
            return t.value
        raise self.error("expected literal")

    def select(self):
        self.keyword("SELECT")
        distinct = False
        if self.at_keyword("DISTINCT"):
            self.advance()
            distinct = True
        if self.at_op("*"):
            self.advance()
            items = None
        else:
            items = [self.select_item()]
            while self.at_op(","):
                self.advance()
                items.append(self.select_item())
            items = tuple(items)
        self.keyword("FROM")
        tables = [self.table_ref()]
        join_on = None
        if self.at_op(","):
            self.advance()
            tables.append(self.table_ref())
        elif self.at_keyword("JOIN", "INNER"):
            if self.at_keyword("INNER"):
                self.advance()
            self.keyword("JOIN")
            tables.append(self.table_ref())
            self.keyword("ON")
            join_on = self.comparison()
            if join_on.op != "=":
                raise SqlSyntaxError("join condition must be an equality", self.tokens[self.i - 1].pos)
        if self.at_op(",") or self.at_keyword("JOIN", "INNER"):
            raise self.error("at most one join is supported")
        where = ()
        if self.at_keyword("WHERE"):
            self.advance()
            conj = [self.comparison()]
            while self.at_keyword("AND"):
                self.advance()
                conj.append(self.comparison())
            where = tuple(conj)
        group_by = ()
        if self.at_keyword("GROUP"):
            self.advance()
            self.keyword("BY")
            exprs = [self.expr()]
            while self.at_op(","):
                self.advance()
                exprs.append(self.expr())
            group_by = tuple(exprs)
        limit = None
        if self.at_keyword("LIMIT"):
            self.advance()
            if self.tok.kind != "int":
                raise self.error("expected integer LIMIT")
            limit = self.advance().value
        return Select(items, tuple(tables), join_on, where, group_by, distinct, limit)

    def select_item(self):
        expr = self.expr()
        alias = None
        if self.at_keyword("AS"):
            self.advance()
            alias = self.ident("alias").value
        elif self.tok.kind == "ident":
            alias = self.advance().value
        return SelectItem(expr, alias)

    def table_ref(self):
        t = self.ident("table name")
        alias = None
        if self.at_keyword("AS"):
            self.advance()
            alias = self.ident("alias").value
        elif self.tok.kind == "ident":
            alias = self.advance().value
        return TableRef(t.value, alias, t.pos)

    def comparison(self):
        left = self.expr()
        if not self.at_op(*COMPARATORS):
            raise self.error("expected comparison operator")
        op = self.advance().value
        if op == "!=":
            op = "<>"
        return Comparison(op, left, self.expr())

    # expressions

    def expr(self):
        node = self.term()
        while self.at_op("+", "-"):
            op = self.advance().value
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.factor()
        while self.at_op("*", "/", "%"):
            op = self.advance().value
            node = BinOp(op, node, self.factor())
        return node

    def factor(self):
        if self.at_op("-"):
            self.advance()
            operand = self.factor()
            if isinstance(operand, Literal) and operand.type != TEXT:
                return Literal(-operand.value, operand.type)
            return Neg(operand)
        return self.primary()

    def primary(self):
        t = self.tok
        if t.kind == "int":
            self.advance()
            return Literal(t.value, INT64)
        if t.kind == "float":
            self.advance()
            return Literal(t.value, FLOAT64)
        if t.kind == "string":
            self.advance()
            return Literal(t.value, TEXT)
        if t.kind == "op" and t.value == "(":
            self.advance()
            node = self.expr()
            self.op(")")
            return node
        if t.kind == "ident":
            self.advance()
            upper = t.value.upper()
            if self.at_op("(") and upper in AGGREGATES:
                self.advance()
                if upper == "COUNT" and self.at_op("*"):
                    self.advance()
                    arg = None
                else:
                    arg = self.expr()
                self.op(")")
                return Agg(upper, arg)
            if self.at_op("(") and upper in FUNCTIONS:
                self.advance()
                args = [self.expr()]
                while self.at_op(","):
                    self.advance()
                    args.append(self.expr())
                self.op(")")
                arity = FUNCTIONS[upper]
                if arity is not None and len(args) != arity:
                    raise SqlSyntaxError(f"{upper} takes {arity} argument(s)", t.pos)
                return Func(upper, tuple(args))
            if self.at_op("("):
                raise SqlSyntaxError(f"unknown function {t.value}", t.pos)
            if self.at_op("."):
                self.advance()
                col = self.ident("column name")
                return Column(t.value, col.value, t.pos)
            return Column(None, t.value, t.pos)
        raise self.error("expected expression")


def parse(text: str):
    """Parse one statement; raises :class:`SqlSyntaxError` with a character position."""
    return _Parser(text).statement()


def split_statements(text: str) -> list[str]:
    """Split a script on top-level semicolons (quote-aware)."""
    parts, start, i, n = [], 0, 0, len(text)
    while i < n:
        c = text[i]
        if c == "'":
            i += 1
            while i < n:
                if text[i] == "'":
                    if text.startswith("''", i):
                        i += 2
                        continue
                    break
                i += 1
        elif c == ";":
            parts.append(text[start:i])
            start = i + 1
        i += 1
    parts.append(text[start:])
    return [p.strip() for p in parts if p.strip()]


def table_names(stmt) -> list[str]:
    """Names of the tables a parsed statement reads or writes, in order of appearance."""
    if isinstance(stmt, Select):
        return [t.name for t in stmt.tables]
    if isinstance(stmt, (CreateTableAs, Insert)) and stmt.query is not None:
        return [stmt.name] + table_names(stmt.query)
    return [stmt.name]


def format_literal(value) -> str:
    if isinstance(value, str):
        return "'" + value.replace("'", "''") + "'"
    return repr(value)
