"""Polystore query language: nested island scopes around island-native text.

A query is one scope call, optionally prefixed with ``TRAINING:``::

    ARRAY(multiply(RELATIONAL(select * from A), B))

Inside a body, a registered island name immediately followed by ``(`` opens
a nested scope. Single-quoted strings (``''`` escapes a quote) are opaque.
Everything else is passed through untouched, so serialising the tree gives
back the input text exactly.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import ParseError
from .islands import REGISTRY, get_island, referenced_objects

TRAINING_PREFIX = "TRAINING:"
_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")


class PolyParseError(ParseError):
    pass


@dataclass
class ScopeNode:
    island: str
    segments: list  # str | ScopeNode
    start: int = field(default=-1, compare=False)

    @property
    def children(self):
        return [s for s in self.segments if isinstance(s, ScopeNode)]

    def body(self):
        return "".join(s if isinstance(s, str) else s.serialize() for s in self.segments)

    def serialize(self):
        return f"{self.island}({self.body()})"


@dataclass
class PolyAst:
    root: ScopeNode
    training: bool = False
    prefix: str = ""
    suffix: str = ""


def reserialize(ast: PolyAst) -> str:
    return ast.prefix + ast.root.serialize() + ast.suffix


def poly_parse(text: str, islands=None) -> PolyAst:
    names = set(islands if islands is not None else REGISTRY)
    n = len(text)
    i = 0
    while i < n and text[i].isspace():
        i += 1
    training = text.startswith(TRAINING_PREFIX, i)
    if training:
        i += len(TRAINING_PREFIX)
        while i < n and text[i].isspace():
            i += 1
    prefix = text[:i]
    m = _IDENT.match(text, i)
    if m is None:
        raise PolyParseError("expected an island scope such as RELATIONAL(...)", i)
    name, j = m.group(), m.end()
    if j >= n or text[j] != "(":
        if name not in names:
            raise PolyParseError(f"unknown island name {name!r}", i)
        raise PolyParseError(f"expected '(' after island name {name}", j)
    if name not in names:
        raise PolyParseError(f"unknown island name {name!r}", i)
    root, end = _scope(text, i, name, j + 1, names)
    rest = text[end:]
    if rest.strip():
        offset = end + len(rest) - len(rest.lstrip())
        if rest.lstrip().startswith(")"):
            raise PolyParseError("unbalanced parentheses: unexpected ')'", offset)
        raise PolyParseError("unexpected text after the outermost scope", offset)
    return PolyAst(root, training, prefix, rest)


def _skip_string(text, pos):
    """Return the index just past the string literal opening at ``pos``."""
    i = pos + 1
    while True:
        end = text.find("'", i)
        if end < 0:
            raise PolyParseError("unterminated string literal", pos)
        if text.startswith("''", end):
            i = end + 2
            continue
        return end + 1


def _scope(text, start, island, body_start, names):
    n = len(text)
    segments = []
    pos = buf = body_start
    depth = 0
    while pos < n:
        c = text[pos]
        if c == "'":
            pos = _skip_string(text, pos)
        elif c == "(":
            depth += 1
            pos += 1
        elif c == ")":
            if depth == 0:
                if pos > buf:
                    segments.append(text[buf:pos])
                return ScopeNode(island, segments, start), pos + 1
            depth -= 1
            pos += 1
        elif c.isalpha() or c == "_":
            m = _IDENT.match(text, pos)
            if m is None:
                # Non-ASCII letters never start an island name.
                pos += 1
                continue
            word, end = m.group(), m.end()
            prev = text[pos - 1] if pos else ""
            boundary = not (prev.isalnum() or prev in "_$")
            if boundary and word in names and end < n and text[end] == "(":
                if pos > buf:
                    segments.append(text[buf:pos])
                child, pos = _scope(text, pos, word, end + 1, names)
                segments.append(child)
                buf = pos
            else:
                pos = end
        else:
            pos += 1
    raise PolyParseError(f"unbalanced parentheses: scope {island} opened here is never closed",
                         body_start - 1)


# ---------------------------------------------------------------- decomposition

@dataclass
class Container:
    id: str
    island: str
    engines: tuple
    text: str
    objects: list
    node: ScopeNode = field(repr=False, compare=False, default=None)

    @property
    def placeholder(self):
        return "$" + self.id


@dataclass
class Placeholder:
    ref: str  # "c0" or "r1"

    @property
    def text(self):
        return "$" + self.ref


@dataclass
class RemainderNode:
    id: str
    island: str
    segments: list  # str | Placeholder | RemainderNode

    @property
    def inputs(self):
        return [s.ref if isinstance(s, Placeholder) else s.id
                for s in self.segments if not isinstance(s, str)]

    @property
    def local_text(self):
        """Body with every cross-scope input replaced by ``$c<i>`` / ``$r<i>``."""
        return "".join(s if isinstance(s, str) else
                       (s.text if isinstance(s, Placeholder) else "$" + s.id)
                       for s in self.segments)

    def render(self):
        return "".join(s if isinstance(s, str) else
                       (s.text if isinstance(s, Placeholder) else f"{s.island}({s.render()})")
                       for s in self.segments)


@dataclass
class Remainder:
    """Cross-scope skeleton. ``root`` is a bare placeholder when the query is single-island."""

    root: object  # RemainderNode | Placeholder

    @property
    def trivial(self):
        return isinstance(self.root, Placeholder)

    @property
    def island(self):
        return None if self.trivial else self.root.island

    @property
    def text(self):
        return self.root.text if self.trivial else self.root.render()

    def nodes(self):
        """Remainder nodes in evaluation order (inputs before consumers)."""
        out = []

        def walk(node):
            for s in node.segments:
                if isinstance(s, RemainderNode):
                    walk(s)
            out.append(node)
        if not self.trivial:
            walk(self.root)
        return out


def _single_island(node: ScopeNode) -> bool:
    return all(c.island == node.island and _single_island(c) for c in node.children)


def _flatten(node: ScopeNode) -> str:
    return "".join(s if isinstance(s, str) else _flatten(s) for s in node.segments)


def decompose(ast, registry=None):
    """Split a parsed query into containers and a remainder.

    Every maximal single-island subtree becomes one container whose text is
    the subtree with nested same-island scopes inlined.
    """
    registry = registry or REGISTRY
    root = ast.root if isinstance(ast, PolyAst) else ast
    containers = []
    rcount = [0]

    def visit(node):
        if _single_island(node):
            cid = f"c{len(containers)}"
            text = _flatten(node)
            island = registry[node.island] if node.island in registry else get_island(node.island)
            containers.append(Container(cid, node.island, island.engines, text,
                                        referenced_objects(text, island), node))
            return Placeholder(cid)
        rid = f"r{rcount[0]}"
        rcount[0] += 1
        segs = [s if isinstance(s, str) else visit(s) for s in node.segments]
        return RemainderNode(rid, node.island, segs)

    return containers, Remainder(visit(root))


def substitute(containers, remainder: Remainder) -> ScopeNode:
    """Rebuild the scope tree from a decomposition (inverse of :func:`decompose`)."""
    by_id = {c.id: c for c in containers}

    def build(x):
        if isinstance(x, Placeholder):
            return by_id[x.ref].node
        return ScopeNode(x.island, [s if isinstance(s, str) else build(s) for s in x.segments])

    return build(remainder.root)
