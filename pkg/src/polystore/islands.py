"""Islands, shims and the migrator's engine-facing half.

An island bundles a data model, a query language and member engines. A shim
turns island-language text into something one member engine can run; casts
move objects between engines and data models.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import casts
from .array import afl
from .array.afl import ArrayType, Call, Num, Pred, Ref
from .array.engine import ArrayEngine, DenseArray
from .casts import CastSpec
from .errors import CatalogError, PolystoreError, ShapeError, Untranslatable
from .keyvalue import KeyValueEngine
from .relational import sql as sqlmod
from .relational.engine import RelationalEngine
from .relational.relation import Relation

RELATIONAL_ENGINE = "relational"
ARRAY_ENGINE = "array"
KV_ENGINE = "keyvalue"

_TEMP_IDS = itertools.count()

ENGINE_MODELS = {
    RELATIONAL_ENGINE: ("relational", "array"),
    ARRAY_ENGINE: ("array",),
    KV_ENGINE: ("document",),
}


@dataclass(frozen=True)
class Island:
    name: str
    model: str
    language: str  # sql | afl | kv
    engines: tuple
    operators: frozenset
    degenerate: bool = False

    def shim(self, engine):
        if engine not in self.engines:
            raise CatalogError(f"engine {engine!r} is not a member of island {self.name}")
        return SHIMS[(self.language, engine)]


_SQL_READ = frozenset({"select"})
_SQL_ALL = frozenset({"select", "create", "drop", "insert"})
_AFL = frozenset(afl.OPERATORS)
_KV_READ = frozenset({"scan", "get", "termcount"})

REGISTRY = {
    "RELATIONAL": Island("RELATIONAL", "relational", "sql", (RELATIONAL_ENGINE,), _SQL_READ),
    "ARRAY": Island("ARRAY", "array", "afl", (ARRAY_ENGINE, RELATIONAL_ENGINE), _AFL),
    "TEXT": Island("TEXT", "document", "kv", (KV_ENGINE,), _KV_READ),
    "D_REL": Island("D_REL", "relational", "sql", (RELATIONAL_ENGINE,), _SQL_ALL, True),
    "D_ARR": Island("D_ARR", "array", "afl", (ARRAY_ENGINE,), _AFL, True),
    "D_KV": Island("D_KV", "document", "kv", (KV_ENGINE,), _KV_READ | {"put"}, True),
}


def registry_islands() -> list[Island]:
    return list(REGISTRY.values())


def get_island(name) -> Island:
    try:
        return REGISTRY[name]
    except KeyError:
        raise CatalogError(f"unknown island {name!r}") from None


@dataclass
class Engines:
    relational: RelationalEngine = field(default_factory=RelationalEngine)
    array: ArrayEngine = field(default_factory=ArrayEngine)
    keyvalue: KeyValueEngine = field(default_factory=KeyValueEngine)

    def get(self, name):
        try:
            return {RELATIONAL_ENGINE: self.relational, ARRAY_ENGINE: self.array,
                    KV_ENGINE: self.keyvalue}[name]
        except KeyError:
            raise CatalogError(f"unknown engine {name!r}") from None

    def resident_bytes(self):
        return {RELATIONAL_ENGINE: self.relational.nbytes(), ARRAY_ENGINE: self.array.nbytes(),
                KV_ENGINE: self.keyvalue.nbytes()}


# ---------------------------------------------------------------- language helpers

def parse_island_text(language, text):
    if language == "sql":
        return sqlmod.parse(text)
    if language == "afl":
        return afl.parse(text)
    from .keyvalue import parse as kv_parse
    return kv_parse(text)


def referenced_objects(text, island) -> list[str]:
    """Sorted object names a piece of island text mentions; placeholders excluded."""
    isl = get_island(island) if isinstance(island, str) else island
    node = parse_island_text(isl.language, text)
    if isl.language == "sql":
        names = sqlmod.table_names(node)
    elif isl.language == "afl":
        names = afl.array_refs(node)
    else:
        names = [node.store]
    return sorted({n for n in names if not n.startswith("$")})


def check_operators(island: Island, text):
    node = parse_island_text(island.language, text)
    if island.language == "sql":
        kind = {sqlmod.Select: "select", sqlmod.CreateTable: "create",
                sqlmod.CreateTableAs: "create", sqlmod.DropTable: "drop",
                sqlmod.Insert: "insert"}[type(node)]
        used = {kind}
    elif island.language == "afl":
        used = set(afl.operators(node))
    else:
        used = {node.op}
    bad = used - island.operators
    if bad:
        raise PolystoreError(f"island {island.name} does not support {', '.join(sorted(bad))}")
    return node


# ---------------------------------------------------------------- shims

@dataclass
class NativeQuery:
    """A translated query: native statements plus a result adapter."""

    engine: str
    text: str
    run: object = None  # callable(engines, bindings) -> result


class IdentityShim:
    """Island language is the engine's native language."""

    def __init__(self, engine):
        self.engine = engine

    def check(self, text):
        return None

    def translate(self, text, shapes=None) -> NativeQuery:
        engine = self.engine
        return NativeQuery(engine, text,
                           lambda engines, bindings: engines.get(engine).execute(text, bindings))


class ArrayOnRelationalShim:
    """ARRAY-island operators rewritten as SQL over cell tables.

    An array ``X`` lives in the relational engine as a table
    ``(d1, ..., dk, val)`` with the shape in ``meta["dims"]``. ``multiply``
    becomes a join on the inner dimension with ``GROUP BY``/``SUM``, the slow
    path. The Haar transform and binning have no translation.
    """

    engine = RELATIONAL_ENGINE
    UNSUPPORTED = frozenset({"dwt_haar", "bin_hist"})

    def check(self, text):
        node = afl.parse(text) if isinstance(text, str) else text
        self._check(node, root=True, under_count=False)
        return node

    def _check(self, node, root, under_count):
        if not isinstance(node, Call):
            return
        if node.op in self.UNSUPPORTED:
            raise Untranslatable(f"{node.op} has no relational translation")
        if node.op == "distinct" and not (root or under_count):
            raise Untranslatable("distinct is only translatable as the final step")
        for k, a in enumerate(node.args):
            if isinstance(a, Call):
                self._check(a, root=False, under_count=(node.op == "count" and root))

    def translate(self, text, shapes=None) -> NativeQuery:
        """``shapes(name)`` -> (table name, ArrayType) for every referenced array."""
        node = self.check(text)
        statements = []
        temps = []

        def tmp():
            name = f"_shim{next(_TEMP_IDS)}"
            temps.append(name)
            return name

        def table_for(n):
            """Return (table, ArrayType) for node ``n``, emitting CTAS steps as needed."""
            if isinstance(n, Ref):
                return shapes(n.name)
            if n.op == "scan":
                return table_for(n.args[0])
            select, typ = select_for(n)
            name = tmp()
            statements.append(f"CREATE TABLE {name} AS {select}")
            return name, typ

        def select_for(n):
            op, args = n.op, n.args
            if op == "filter":
                t, typ = table_for(args[0])
                cond = " AND ".join(_sql_cmp(c) for c in args[1].conjuncts)
                names = {d for d, _ in typ.dims} | {"val"}
                for c in args[1].conjuncts:
                    for side in (c.left, c.right):
                        if isinstance(side, Ref) and side.name not in names:
                            raise ShapeError(f"filter predicate refers to unknown "
                                             f"attribute {side.name!r}")
                return f"SELECT * FROM {t} WHERE {cond}", ArrayType(typ.dims, True)
            if op == "multiply":
                ta, a = table_for(args[0])
                tb, b = table_for(args[1])
                out_type = afl.infer(Call("multiply", (Ref("$a"), Ref("$b"))),
                                     {"$a": a, "$b": b}.__getitem__)
                (ai, _), (ak, _) = a.dims
                (bk, _), (bj, _) = b.dims
                (oi, _), (oj, _) = out_type.dims
                return (f"SELECT x.{ai} AS {oi}, y.{bj} AS {oj}, SUM(x.val * y.val) AS val "
                        f"FROM {ta} x JOIN {tb} y ON x.{ak} = y.{bk} "
                        f"GROUP BY x.{ai}, y.{bj}"), out_type
            if op == "subarray":
                t, typ = table_for(args[0])
                lo, hi = afl.subarray_bounds(args[1:], typ.rank)
                out_type = afl.infer(Call("subarray", (Ref("$a"),) + args[1:]),
                                     {"$a": typ}.__getitem__)
                proj = ", ".join(f"{d} - {a} AS {d}" for (d, _), a in zip(typ.dims, lo))
                cond = " AND ".join(f"{d} >= {a} AND {d} <= {b}"
                                    for (d, _), a, b in zip(typ.dims, lo, hi))
                return f"SELECT {proj}, val FROM {t} WHERE {cond}", out_type
            if op == "distinct":
                t, typ = table_for(args[0])
                return f"SELECT DISTINCT val FROM {t}", afl.ArrayType((("i", None),))
            raise Untranslatable(f"{op} has no relational translation")

        root = node
        while isinstance(root, Call) and root.op == "scan":
            root = root.args[0]
        if isinstance(root, Ref):
            t, typ = table_for(root)
            final, final_type, kind = f"SELECT * FROM {t}", typ, "array"
        elif root.op == "count":
            inner = root.args[0]
            while isinstance(inner, Call) and inner.op == "scan":
                inner = inner.args[0]
            t, _ = table_for(inner)
            final, final_type, kind = f"SELECT COUNT(*) FROM {t}", afl.SCALAR, "scalar"
        elif root.op == "distinct":
            final, final_type = select_for(root)
            kind = "distinct"
        else:
            final, final_type = select_for(root)
            kind = "array"

        script = statements + [final]
        native_text = ";\n".join(script)

        def run(engines, bindings=None):
            rel = engines.relational
            try:
                result = None
                for stmt in script:
                    result = rel.execute(stmt)
            finally:
                for t in temps:
                    rel.drop_table(t, missing_ok=True)
            if kind == "scalar":
                return result
            if kind == "distinct":
                vals = sorted(r[0] for r in result.rows)
                if not vals:
                    raise ShapeError("distinct of an array with no populated cells")
                return DenseArray("result", (("i", len(vals)),), np.array(vals, dtype=float),
                                  len(vals))
            return _rows_to_array(result, final_type)

        return NativeQuery(RELATIONAL_ENGINE, native_text, run)


def _sql_atom(a):
    if isinstance(a, Num):
        return repr(a.value)
    return a.name


def _sql_cmp(c):
    return f"{_sql_atom(c.left)} {c.op} {_sql_atom(c.right)}"


def _rows_to_array(rel: Relation, typ: ArrayType) -> DenseArray:
    dims = tuple((n, int(l)) for n, l in typ.dims)
    shape = tuple(l for _, l in dims)
    out = np.full(shape, np.nan)
    if rel.rows:
        cols = rel.columns
        didx = [cols.index(n) for n, _ in dims]
        vidx = cols.index("val")
        data = np.array(rel.rows, dtype=np.float64)
        idx = data[:, didx].astype(np.int64)
        out[tuple(idx.T)] = data[:, vidx]
    return DenseArray("result", dims, out, len(rel.rows))


SHIMS = {
    ("sql", RELATIONAL_ENGINE): IdentityShim(RELATIONAL_ENGINE),
    ("afl", ARRAY_ENGINE): IdentityShim(ARRAY_ENGINE),
    ("afl", RELATIONAL_ENGINE): ArrayOnRelationalShim(),
    ("kv", KV_ENGINE): IdentityShim(KV_ENGINE),
}


def check_translatable(island, engine, text):
    """Raise :class:`Untranslatable` if ``engine`` cannot run ``text`` for ``island``."""
    isl = get_island(island) if isinstance(island, str) else island
    check_operators(isl, text)
    isl.shim(engine).check(text)


def shim_translate(island, engine, text, shapes=None) -> NativeQuery:
    """Translate island text for one member engine.

    For the array-on-relational shim, ``shapes(name)`` must return the cell
    table name and :class:`ArrayType` of each referenced array.
    """
    isl = get_island(island) if isinstance(island, str) else island
    check_operators(isl, text)
    return isl.shim(engine).translate(text, shapes)


def cell_table_shapes(engines: Engines, bindings=None):
    bindings = bindings or {}

    def lookup(name):
        table = bindings.get(name)
        if table is None:
            # Unbound arrays follow the <array>_cells naming convention.
            table = f"{name}_cells" if f"{name}_cells" in engines.relational else name
        rel = engines.relational.table(table)
        dims = rel.meta.get("dims")
        if dims is None:
            raise CatalogError(f"table {table!r} is not an array cell table")
        dims = tuple((n, int(l)) for n, l in dims)
        kept = rel.meta.get("kept", len(rel.rows))
        size = 1
        for _, l in dims:
            size *= l
        return table, ArrayType(dims, kept < size)
    return lookup


def execute_on(island, engine, text, engines: Engines, bindings=None):
    """Run island text on one member engine and return the island-model result."""
    isl = get_island(island) if isinstance(island, str) else island
    native = shim_translate(isl, engine, text, cell_table_shapes(engines, bindings))
    return native.run(engines, bindings)


# ---------------------------------------------------------------- object placement

def fetch(engines: Engines, engine, model, name):
    """Read an object out of an engine as an in-memory value of ``model``."""
    if engine == RELATIONAL_ENGINE:
        rel = engines.relational.table(name)
        if model == "array":
            return casts.cells_to_array(rel, name)
        return rel
    if engine == ARRAY_ENGINE:
        return engines.array.get(name)
    if engine == KV_ENGINE:
        return engines.keyvalue.scan(name, "")
    raise CatalogError(f"unknown engine {engine!r}")


def place(engines: Engines, engine, model, name, obj):
    """Register an in-memory value in ``engine`` under ``name`` as ``model``."""
    if model not in ENGINE_MODELS.get(engine, ()):
        raise PolystoreError(f"engine {engine} cannot hold {model} objects")
    if engine == RELATIONAL_ENGINE:
        if model == "array":
            if isinstance(obj, DenseArray):
                obj = casts.array_to_relation(obj, None, name)
            elif not isinstance(obj, Relation) or "dims" not in obj.meta:
                raise PolystoreError("array objects in the relational engine need cell layout")
        if not isinstance(obj, Relation):
            raise PolystoreError(f"cannot store {type(obj).__name__} as a table")
        obj = Relation(name, obj.schema, obj.rows, dict(obj.meta))
        engines.relational.store(obj, validate=False)
    elif engine == ARRAY_ENGINE:
        if not isinstance(obj, DenseArray):
            raise PolystoreError(f"cannot store {type(obj).__name__} as an array")
        engines.array.put(DenseArray(name, obj.dims, obj.values, obj.kept))
    else:
        store = engines.keyvalue.create_store(name)
        docs = obj
        if isinstance(obj, Relation):
            docs = casts.relation_to_documents(obj, CastSpec("relational", "document"))
        for d in docs:
            store.put(d.key, d.fields)
    return name


def drop(engines: Engines, engine, name):
    if engine == RELATIONAL_ENGINE:
        engines.relational.drop_table(name, missing_ok=True)
    elif engine == ARRAY_ENGINE:
        engines.array.drop(name, missing_ok=True)
    else:
        engines.keyvalue.drop(name, missing_ok=True)


def cast_migrate(obj, from_engine, to_engine, spec: CastSpec, engines: Engines, target=None):
    """Copy object ``obj`` from one engine to another, translating its data model.

    ``obj`` is either a name resident in ``from_engine`` or an in-memory
    result value. Returns the name of the new object in ``to_engine``.
    """
    if isinstance(obj, str):
        value = fetch(engines, from_engine, spec.source_model, obj)
        target = target or f"{obj}_{to_engine}"
    else:
        value = obj
        if target is None:
            raise PolystoreError("target name required when migrating an in-memory value")
    converted = casts.convert(value, spec, target)
    return place(engines, to_engine, spec.target_model, target, converted)
