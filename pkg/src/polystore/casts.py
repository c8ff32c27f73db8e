"""Data-model translations used by the migrator.

Conventions:

* relational -> array: integer dimension columns (default: every column but
  the last) must cover a dense box with origin 0; the value column (default:
  the last) widens to float64.
* array -> relational: one ``(d1, ..., dk, val)`` row per populated cell, in
  row-major order. The table's ``meta["dims"]`` records the array shape.
* relational <-> document: the key column (default: the first) becomes the
  document key; every other column becomes a text field.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .array.engine import DenseArray
from .errors import CastError, SchemaError
from .keyvalue import Document
from .relational.relation import FLOAT64, INT64, TEXT, Relation, check_schema, coerce

MODELS = ("relational", "array", "document")


@dataclass(frozen=True)
class CastSpec:
    source_model: str
    target_model: str
    dims: tuple | None = None      # dimension columns (relational <-> array)
    value: str | None = None       # value column name
    key: str | None = None         # key column (relational <-> document)
    fill: float | None = None      # fill for missing cells (relational -> array)
    schema: tuple | None = None    # column types when rebuilding rows from documents

    def __post_init__(self):
        for m in (self.source_model, self.target_model):
            if m not in MODELS:
                raise CastError(f"unknown data model {m!r}")

    def to_json(self):
        d = {k: v for k, v in asdict(self).items() if v is not None}
        if "dims" in d:
            d["dims"] = list(d["dims"])
        if "schema" in d:
            d["schema"] = [list(c) for c in d["schema"]]
        return d

    @classmethod
    def from_json(cls, d):
        d = dict(d)
        if "dims" in d:
            d["dims"] = tuple(d["dims"])
        if "schema" in d:
            d["schema"] = tuple(tuple(c) for c in d["schema"])
        return cls(**d)

    def dumps(self):
        return json.dumps(self.to_json(), sort_keys=True)


# ---------------------------------------------------------------- relational <-> array

def relation_to_array(rel: Relation, spec: CastSpec, name="result") -> DenseArray:
    cols = rel.columns
    if len(cols) < 2 and spec.dims is None:
        raise CastError("relation -> array needs at least one dimension column and a value")
    dims = list(spec.dims) if spec.dims is not None else cols[:-1]
    value = spec.value if spec.value is not None else cols[-1]
    types = dict(rel.schema)
    for d in dims:
        if d not in types:
            raise CastError(f"unknown dimension column {d!r}")
        if types[d] != INT64:
            raise CastError(f"dimension column {d!r} has type {types[d]}, expected int64")
    if value not in types:
        raise CastError(f"unknown value column {value!r}")
    if types[value] == TEXT:
        raise CastError(f"value column {value!r} is text; arrays hold float64")
    if not rel.rows:
        raise CastError("cannot build an array from an empty relation")
    didx = [cols.index(d) for d in dims]
    vidx = cols.index(value)
    idx = np.array([[r[i] for i in didx] for r in rel.rows], dtype=np.int64)
    vals = np.array([r[vidx] for r in rel.rows], dtype=np.float64)
    if (idx < 0).any():
        raise CastError("dimension values must be non-negative")
    shape = tuple(int(m) + 1 for m in idx.max(axis=0))
    flat = np.ravel_multi_index(idx.T, shape)
    order = np.sort(flat)
    dup = order[1:][order[1:] == order[:-1]]
    if dup.size:
        raise CastError(f"duplicate dimension tuple {np.unravel_index(int(dup[0]), shape)}")
    total = math.prod(shape)
    if spec.fill is None and len(flat) != total:
        present = np.zeros(total, dtype=bool)
        present[flat] = True
        missing = int(np.argmin(present))
        where = tuple(int(x) for x in np.unravel_index(missing, shape))
        raise CastError(f"relation is not dense: missing cell {where}")
    out = np.full(total, np.nan if spec.fill is None else float(spec.fill))
    out[flat] = vals
    if np.isnan(vals).any():
        raise CastError("NaN values cannot be stored in an array")
    return DenseArray(name, tuple(zip(dims, shape)), out.reshape(shape), total)


def cells_to_array(rel: Relation, name="result") -> DenseArray:
    """Rebuild an array from a cell table carrying ``meta["dims"]`` (holes become NaN)."""
    dims = rel.meta.get("dims")
    if dims is None:
        return relation_to_array(rel, CastSpec("relational", "array"), name)
    dims = tuple((n, int(l)) for n, l in dims)
    shape = tuple(l for _, l in dims)
    out = np.full(shape, np.nan)
    if rel.rows:
        k = len(dims)
        cols = rel.columns
        didx = [cols.index(n) for n, _ in dims]
        vidx = cols.index("val")
        idx = np.array([[r[i] for i in didx] for r in rel.rows], dtype=np.int64).reshape(-1, k)
        out[tuple(idx.T)] = np.array([r[vidx] for r in rel.rows], dtype=np.float64)
    return DenseArray(name, dims, out, len(rel.rows))


def array_to_relation(arr: DenseArray, spec: CastSpec | None = None, name="result") -> Relation:
    dims = list(spec.dims) if spec is not None and spec.dims is not None else arr.dim_names
    value = spec.value if spec is not None and spec.value is not None else "val"
    if len(dims) != arr.rank:
        raise CastError(f"{len(dims)} dimension names for a rank-{arr.rank} array")
    schema = check_schema([(d, INT64) for d in dims] + [(value, FLOAT64)])
    flat = arr.values.ravel()
    keep = ~np.isnan(flat)
    positions = np.nonzero(keep)[0]
    coords = np.unravel_index(positions, arr.shape)
    columns = [c.tolist() for c in coords] + [flat[keep].tolist()]
    rows = list(zip(*columns))
    return Relation(name, schema, rows, {"dims": [list(d) for d in arr.dims], "kept": len(rows)})


# ---------------------------------------------------------------- relational <-> document

def _text(value):
    return value if isinstance(value, str) else repr(value)


def relation_to_documents(rel: Relation, spec: CastSpec) -> list[Document]:
    cols = rel.columns
    key = spec.key if spec.key is not None else cols[0]
    if key not in cols:
        raise CastError(f"unknown key column {key!r}")
    k = cols.index(key)
    docs = {}
    for row in rel.rows:
        dkey = _text(row[k]).encode("utf-8")
        if dkey in docs:
            raise CastError(f"duplicate key {row[k]!r}")
        docs[dkey] = {c: _text(v) for i, (c, v) in enumerate(zip(cols, row)) if i != k}
    return [Document(key_, fields) for key_, fields in sorted(docs.items())]


def documents_to_relation(docs, spec: CastSpec, name="result") -> Relation:
    if isinstance(docs, Relation):
        return Relation(name, docs.schema, list(docs.rows), dict(docs.meta))
    docs = list(docs)
    key = spec.key or "key"
    if spec.schema is not None:
        schema = check_schema(spec.schema)
    else:
        names = sorted({f for d in docs for f in d.fields})
        schema = check_schema([(key, TEXT)] + [(f, TEXT) for f in names])
    cols = [c for c, _ in schema]
    if key not in cols:
        raise CastError(f"key column {key!r} is not in the target schema")
    rows = []
    for d in docs:
        row = []
        for c, t in schema:
            raw = d.key.decode("utf-8") if c == key else d.fields.get(c)
            if raw is None:
                raise CastError(f"document {d.key!r} has no field {c!r}")
            try:
                row.append(_parse(raw, t))
            except (ValueError, SchemaError) as exc:
                raise CastError(f"document {d.key!r}, field {c!r}: {exc}") from None
        rows.append(tuple(row))
    return Relation(name, schema, rows)


def _parse(raw, typ):
    if typ == INT64:
        return coerce(int(raw), INT64)
    if typ == FLOAT64:
        return float(raw)
    return raw


def convert(obj, spec: CastSpec, name="result"):
    """Translate an in-memory object between data models according to ``spec``."""
    src, dst = spec.source_model, spec.target_model
    if isinstance(obj, (int, float)) and not isinstance(obj, bool):
        raise CastError("a scalar result cannot be cast into another scope")
    if src == dst:
        if src == "relational" and isinstance(obj, Relation):
            return Relation(name, obj.schema, obj.rows, dict(obj.meta))
        if src == "array" and isinstance(obj, DenseArray):
            return obj
        if src == "array" and isinstance(obj, Relation):
            return cells_to_array(obj, name)
        if src == "document":
            return obj
    if src == "relational" and dst == "array":
        if isinstance(obj, DenseArray):
            return obj
        return relation_to_array(obj, spec, name)
    if src == "array" and dst == "relational":
        if isinstance(obj, Relation):
            obj = cells_to_array(obj)
        return array_to_relation(obj, spec, name)
    if src == "relational" and dst == "document":
        return relation_to_documents(obj, spec)
    if src == "document" and dst == "relational":
        return documents_to_relation(obj, spec, name)
    if src == "document" and dst == "array":
        return relation_to_array(documents_to_relation(obj, spec), spec, name)
    if src == "array" and dst == "document":
        return relation_to_documents(array_to_relation(obj), spec)
    raise CastError(f"no cast from {src} to {dst} for {type(obj).__name__}")
