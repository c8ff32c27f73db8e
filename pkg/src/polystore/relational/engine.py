"""Embedded relational engine: catalog of row-store tables plus the SQL executor."""

from __future__ import annotations

import csv
import io
import threading
from contextlib import ExitStack
from pathlib import Path

from .._locks import RWLock
from ..errors import CatalogError, ExecutionError, LoadError, SchemaError
from . import sql
from .compiler import execute_select
from .relation import Relation, check_identifier, check_schema, coerce, coerce_row
from .sql import FLOAT64, INT64, TEXT, TYPE_ALIASES


class RelationalEngine:
    """Catalog of named :class:`Relation` objects.

    Reads take a shared per-table lock; DDL and loads take it exclusively.
    """

    name = "relational"

    def __init__(self):
        self._tables: dict[str, Relation] = {}
        self._locks: dict[str, RWLock] = {}
        self._catalog = threading.Lock()

    # ------------------------------------------------------------ catalog

    def __contains__(self, name):
        return name in self._tables

    def names(self):
        return sorted(self._tables)

    def table(self, name) -> Relation:
        try:
            return self._tables[name]
        except KeyError:
            raise CatalogError(f"unknown table {name!r}") from None

    def _lock(self, name) -> RWLock:
        with self._catalog:
            return self._locks.setdefault(name, RWLock())

    def create_table(self, name, schema, meta=None):
        check_identifier(name, "table name")
        schema = check_schema(schema)
        with self._catalog:
            if name in self._tables:
                raise CatalogError(f"table {name!r} already exists")
            self._tables[name] = Relation(name, schema, [], dict(meta or {}))
            self._locks.setdefault(name, RWLock())

    def store(self, relation: Relation, replace=False, validate=True):
        """Register a fully built relation under ``relation.name``."""
        check_identifier(relation.name, "table name")
        if validate:
            relation.schema = check_schema(relation.schema)
            relation.rows = [coerce_row(r, relation.schema) if len(r) == len(relation.schema)
                             else _arity_error(n, r, relation.schema)
                             for n, r in enumerate(relation.rows)]
        with self._lock(relation.name).write():
            with self._catalog:
                if relation.name in self._tables and not replace:
                    raise CatalogError(f"table {relation.name!r} already exists")
                self._tables[relation.name] = relation

    def drop_table(self, name, missing_ok=False):
        if name not in self._tables:
            if missing_ok:
                return
            raise CatalogError(f"unknown table {name!r}")
        with self._lock(name).write():
            with self._catalog:
                self._tables.pop(name, None)

    def insert(self, name, rows):
        table = self.table(name)
        with self._lock(name).write():
            new = []
            for n, row in enumerate(rows):
                if len(row) != len(table.schema):
                    _arity_error(n, row, table.schema)
                new.append(coerce_row(row, table.schema))
            table.rows.extend(new)
        return len(new)

    def nbytes(self):
        return sum(t.nbytes() for t in list(self._tables.values()))

    # ------------------------------------------------------------ loading

    def load_csv(self, name, source) -> int:
        """Append rows from a CSV source (path, text stream, or string).

        The first line is the header ``col:type,...``; it defines the schema
        when the table does not exist yet and must match it otherwise.
        Text fields may be single-quoted with ``''`` as the escape.
        """
        if isinstance(source, (str, Path)) and Path(source).exists():
            with open(source, newline="", encoding="utf-8") as fh:
                return self._load_stream(name, fh)
        if isinstance(source, str):
            return self._load_stream(name, io.StringIO(source))
        return self._load_stream(name, source)

    def _load_stream(self, name, stream):
        reader = csv.reader(stream, quotechar="'", doublequote=True, skipinitialspace=False)
        try:
            header = next(reader)
        except StopIteration:
            raise LoadError("missing header", line=1) from None
        schema = []
        for field in header:
            col, sep, typ = field.strip().partition(":")
            if not sep or typ.strip().lower() not in TYPE_ALIASES:
                raise LoadError(f"bad header field {field!r}; expected name:type", line=1)
            schema.append((col.strip(), TYPE_ALIASES[typ.strip().lower()]))
        try:
            schema = check_schema(schema)
        except SchemaError as exc:
            raise LoadError(str(exc), line=1) from None
        if name in self._tables:
            if tuple(self._tables[name].schema) != schema:
                raise LoadError(f"header does not match schema of {name!r}", line=1)
        else:
            self.create_table(name, schema)
        arity = len(schema)
        rows = []
        for record in reader:
            line = reader.line_num
            if not record or record == [""]:
                continue
            if len(record) != arity:
                raise LoadError(f"expected {arity} values, found {len(record)}", line=line)
            try:
                rows.append(tuple(_parse_field(v, t) for v, (_, t) in zip(record, schema)))
            except (ValueError, SchemaError) as exc:
                raise LoadError(f"unparseable value: {exc}", line=line) from None
        table = self.table(name)
        with self._lock(name).write():
            table.rows.extend(rows)
        return len(rows)

    # ------------------------------------------------------------ execution

    def execute(self, text, bindings=None):
        """Run one statement. ``bindings`` renames query-visible tables to catalog names."""
        stmt = sql.parse(text)
        return self.execute_parsed(stmt, bindings)

    def execute_script(self, text, bindings=None):
        result = None
        for part in sql.split_statements(text):
            result = self.execute(part, bindings)
        return result

    def execute_parsed(self, stmt, bindings=None):
        bindings = bindings or {}

        def real(name):
            return bindings.get(name, name)

        if isinstance(stmt, sql.Select):
            return self._select(stmt, real)
        if isinstance(stmt, sql.CreateTable):
            self.create_table(real(stmt.name), stmt.columns)
            return None
        if isinstance(stmt, sql.CreateTableAs):
            result = self._select(stmt.query, real)
            if not isinstance(result, Relation):
                result = Relation("result", (("count", INT64),), [(result,)])
            result.name = real(stmt.name)
            self.store(result, validate=False)
            return None
        if isinstance(stmt, sql.DropTable):
            self.drop_table(real(stmt.name))
            return None
        if isinstance(stmt, sql.Insert):
            rows = stmt.rows
            if stmt.query is not None:
                result = self._select(stmt.query, real)
                rows = result.rows if isinstance(result, Relation) else [(result,)]
            self.insert(real(stmt.name), rows)
            return len(rows)
        raise ExecutionError(f"unsupported statement {stmt!r}")

    def _select(self, stmt, real):
        names = sorted({real(t.name) for t in stmt.tables})

        def lookup(name, pos):
            target = real(name)
            if target not in self._tables:
                raise CatalogError(f"unknown table {name!r} at position {pos}")
            return self._tables[target]

        with ExitStack() as stack:
            for n in names:
                if n in self._tables:
                    stack.enter_context(self._lock(n).read())
            return execute_select(stmt, lookup)


def _arity_error(n, row, schema):
    raise SchemaError(f"row {n} has {len(row)} values, expected {len(schema)}")


def _parse_field(raw, typ):
    if typ == INT64:
        return coerce(int(raw.strip()), INT64)
    if typ == FLOAT64:
        return float(raw.strip())
    return raw


__all__ = ["RelationalEngine", "Relation", "INT64", "FLOAT64", "TEXT"]
