from __future__ import annotations

import re
from dataclasses import dataclass, field

from ..errors import SchemaError
from .sql import FLOAT64, INT64, KEYWORDS, TEXT, TYPES

_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")


def check_identifier(name, what="identifier"):
    if not isinstance(name, str) or not _IDENT.match(name) or name.upper() in KEYWORDS:
        raise SchemaError(f"invalid {what} {name!r}")
    return name


def check_schema(schema):
    schema = tuple((check_identifier(c, "column name"), t) for c, t in schema)
    seen = set()
    for col, typ in schema:
        if typ not in TYPES:
            raise SchemaError(f"column {col}: unknown type {typ!r}")
        if col in seen:
            raise SchemaError(f"duplicate column name {col!r}")
        seen.add(col)
    return schema


def coerce(value, typ):
    """Coerce ``value`` to ``typ`` or raise ``SchemaError``. int64 widens to float64."""
    if typ == INT64:
        if isinstance(value, bool) or not isinstance(value, int):
            if isinstance(value, float) and value.is_integer():
                return int(value)
            raise SchemaError(f"{value!r} is not an int64")
        if not -(2**63) <= value < 2**63:
            raise SchemaError(f"{value!r} overflows int64")
        return value
    if typ == FLOAT64:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise SchemaError(f"{value!r} is not a float64")
        return float(value)
    if not isinstance(value, str):
        raise SchemaError(f"{value!r} is not text")
    return value


@dataclass
class Relation:
    """A named table: ordered typed schema plus a list of row tuples.

    ``meta`` carries side information attached by casts, e.g. the array
    dimensions of a cell table.
    """

    name: str
    schema: tuple
    rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def columns(self):
        return [c for c, _ in self.schema]

    @property
    def types(self):
        return [t for _, t in self.schema]

    def __len__(self):
        return len(self.rows)

    def validate(self):
        check_schema(self.schema)
        arity = len(self.schema)
        for n, row in enumerate(self.rows):
            if len(row) != arity:
                raise SchemaError(f"row {n} has {len(row)} values, expected {arity}")
            for value, (col, typ) in zip(row, self.schema):
                try:
                    coerce(value, typ)
                except SchemaError as exc:
                    raise SchemaError(f"row {n}, column {col}: {exc}") from None
        return self

    def nbytes(self):
        """Cheap size estimate used by usage snapshots (8 bytes per cell)."""
        return 8 * len(self.schema) * len(self.rows)

    def to_dicts(self):
        cols = self.columns
        return [dict(zip(cols, r)) for r in self.rows]


def coerce_row(row, schema):
    return tuple(coerce(v, t) for v, (_, t) in zip(row, schema))


__all__ = ["Relation", "check_identifier", "check_schema", "coerce", "coerce_row",
           "INT64", "FLOAT64", "TEXT"]
