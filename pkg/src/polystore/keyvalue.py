"""Embedded ordered key-value store holding text documents.

The engine keeps named stores; each store is a sorted map from byte-string
keys to ``{field: text}`` documents. Its query language is a handful of calls::

    scan(store, 'prefix')
    get(store, 'key')
    termcount(store, 'prefix', 'field')
    put(store, 'key', 'field', 'value', ...)       -- native interface only
"""

from __future__ import annotations

import bisect
import io
import json
import re
import string
import threading
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from ._locks import RWLock
from .errors import CatalogError, ExecutionError, LoadError, ParseError
from .relational.relation import Relation, check_identifier


@dataclass
class Document:
    key: bytes
    fields: dict = field(default_factory=dict)


def _key(k) -> bytes:
    if isinstance(k, bytes):
        return k
    if isinstance(k, str):
        return k.encode("utf-8")
    raise TypeError(f"document keys are strings or bytes, got {type(k).__name__}")


def _is_punct(ch):
    return ch in string.punctuation or unicodedata.category(ch).startswith("P")


def tokenize(text: str) -> list[str]:
    """Split on Unicode whitespace, lowercase, strip surrounding punctuation."""
    out = []
    for raw in text.split():
        start, end = 0, len(raw)
        while start < end and _is_punct(raw[start]):
            start += 1
        while end > start and _is_punct(raw[end - 1]):
            end -= 1
        if start < end:
            out.append(raw[start:end].lower())
    return out


class DocumentStore:
    """One sorted key space. Concurrent scans, exclusive puts."""

    def __init__(self, name):
        self.name = name
        self._keys: list[bytes] = []
        self._docs: dict[bytes, dict] = {}
        self._lock = RWLock()
        self._bytes = 0

    def __len__(self):
        return len(self._keys)

    def put(self, key, fields):
        key = _key(key)
        fields = {str(f): str(v) for f, v in dict(fields).items()}
        with self._lock.write():
            old = self._docs.get(key)
            if old is None:
                bisect.insort(self._keys, key)
                self._bytes += len(key)
            else:
                self._bytes -= sum(len(f) + len(v) for f, v in old.items())
            self._docs[key] = fields
            self._bytes += sum(len(f) + len(v) for f, v in fields.items())

    def get(self, key):
        with self._lock.read():
            fields = self._docs.get(_key(key))
            return None if fields is None else Document(_key(key), dict(fields))

    def scan(self, prefix=b"") -> list[Document]:
        prefix = _key(prefix)
        with self._lock.read():
            i = bisect.bisect_left(self._keys, prefix)
            out = []
            while i < len(self._keys) and self._keys[i].startswith(prefix):
                k = self._keys[i]
                out.append(Document(k, dict(self._docs[k])))
                i += 1
            return out

    def termcount(self, prefix, field_name) -> list[tuple[str, int]]:
        counts = Counter()
        for doc in self.scan(prefix):
            text = doc.fields.get(field_name)
            if text is not None:
                counts.update(tokenize(text))
        return sorted(counts.items())

    def nbytes(self):
        return self._bytes


class KeyValueEngine:
    name = "keyvalue"

    def __init__(self):
        self._stores: dict[str, DocumentStore] = {}
        self._catalog = threading.Lock()

    def __contains__(self, name):
        return name in self._stores

    def names(self):
        return sorted(self._stores)

    def create_store(self, name, exist_ok=False) -> DocumentStore:
        check_identifier(name, "store name")
        with self._catalog:
            if name in self._stores:
                if exist_ok:
                    return self._stores[name]
                raise CatalogError(f"store {name!r} already exists")
            store = self._stores[name] = DocumentStore(name)
            return store

    def store(self, name) -> DocumentStore:
        try:
            return self._stores[name]
        except KeyError:
            raise CatalogError(f"unknown store {name!r}") from None

    def drop(self, name, missing_ok=False):
        with self._catalog:
            if name not in self._stores and not missing_ok:
                raise CatalogError(f"unknown store {name!r}")
            self._stores.pop(name, None)

    def put(self, store, key, fields):
        self.create_store(store, exist_ok=True).put(key, fields)

    def scan(self, store, prefix=""):
        return self.store(store).scan(prefix)

    def termcount(self, store, prefix, field_name):
        return self.store(store).termcount(prefix, field_name)

    def nbytes(self):
        return sum(s.nbytes() for s in list(self._stores.values()))

    def load_jsonl(self, name, source) -> int:
        """Upsert ``{"key": ..., "fields": {...}}`` lines into store ``name``."""
        if isinstance(source, (str, Path)) and Path(source).exists():
            stream = open(source, encoding="utf-8")
        elif isinstance(source, str):
            stream = io.StringIO(source)
        else:
            stream = source
        store = self.create_store(name, exist_ok=True)
        n = 0
        with stream:
            for lineno, line in enumerate(stream, 1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                    key, fields = rec["key"], rec["fields"]
                    if not isinstance(fields, dict):
                        raise TypeError("fields must be an object")
                except (ValueError, KeyError, TypeError) as exc:
                    raise LoadError(f"bad record: {exc}", line=lineno) from None
                store.put(key, fields)
                n += 1
        return n

    # ------------------------------------------------------------ query language

    def execute(self, text, bindings=None):
        """Run one call. ``scan``/``get`` return documents, ``termcount`` a relation."""
        call = parse(text)
        bindings = bindings or {}
        store = bindings.get(call.store, call.store)
        if call.op == "scan":
            return self.scan(store, *call.args)
        if call.op == "get":
            doc = self.store(store).get(call.args[0])
            return [] if doc is None else [doc]
        if call.op == "termcount":
            rows = self.termcount(store, *call.args)
            return Relation("result", (("term", "text"), ("count", "int64")), rows)
        if call.op == "put":
            key, rest = call.args[0], call.args[1:]
            self.put(store, key, dict(zip(rest[0::2], rest[1::2])))
            return None
        raise ExecutionError(f"unknown operation {call.op}")


# ---------------------------------------------------------------- parser

TEXT_OPS = {"scan": (1, 1), "get": (1, 1), "termcount": (2, 2), "put": (3, None)}


class KvSyntaxError(ParseError):
    pass


@dataclass(frozen=True)
class KvCall:
    op: str
    store: str
    args: tuple


_KV_TOKEN = re.compile(r"\s*(?:(?P<name>\$?[A-Za-z_][A-Za-z0-9_]*)|(?P<str>')|(?P<op>[(),]))")


def parse(text: str) -> KvCall:
    pos = 0
    toks = []
    while True:
        while pos < len(text) and text[pos].isspace():
            pos += 1
        if pos >= len(text):
            break
        m = _KV_TOKEN.match(text, pos)
        if m is None:
            raise KvSyntaxError(f"unexpected character {text[pos]!r}", pos)
        if m.lastgroup == "str":
            start = m.start("str")
            i = start + 1
            chunks = []
            while True:
                end = text.find("'", i)
                if end < 0:
                    raise KvSyntaxError("unterminated string literal", start)
                chunks.append(text[i:end])
                if text.startswith("''", end):
                    chunks.append("'")
                    i = end + 2
                    continue
                i = end + 1
                break
            toks.append(("str", "".join(chunks), start))
            pos = i
        else:
            toks.append((m.lastgroup, m.group(m.lastgroup), m.start(m.lastgroup)))
            pos = m.end()
    toks.append(("eof", None, len(text)))

    def expect(k, kind, value=None):
        t = toks[k]
        if t[0] != kind or (value is not None and t[1] != value):
            what = value or kind
            shown = "end of input" if t[0] == "eof" else repr(t[1])
            raise KvSyntaxError(f"expected {what}, found {shown}", t[2])
        return t

    op = expect(0, "name")
    if op[1] not in TEXT_OPS:
        raise KvSyntaxError(f"unknown operation {op[1]!r}", op[2])
    expect(1, "op", "(")
    store = expect(2, "name")
    args = []
    k = 3
    while toks[k][0] == "op" and toks[k][1] == ",":
        args.append(expect(k + 1, "str")[1])
        k += 2
    expect(k, "op", ")")
    expect(k + 1, "eof")
    lo, hi = TEXT_OPS[op[1]]
    if len(args) < lo or (hi is not None and len(args) > hi):
        raise KvSyntaxError(f"{op[1]} takes {lo} string argument(s) after the store", op[2])
    if op[1] == "put" and len(args) % 2 == 0:
        raise KvSyntaxError("put needs a key followed by field/value pairs", op[2])
    return KvCall(op[1], store[1], tuple(args))
