"""Query signatures: the monitor's lookup key.

A signature has three parts. The structure hash covers the whole scope tree
with literals replaced by typed holes and object names by ``@``; container
numbering never enters it. ``objects`` is the sorted set of referenced
names and ``constants`` the literals in query order.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass

from ..islands import REGISTRY, referenced_objects
from ..polyparser import substitute

_TOKEN = re.compile(r"""
    (?P<str>'(?:[^']|'')*')
  | (?P<name>\$?[A-Za-z_][A-Za-z0-9_]*)
  | (?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<ws>\s+)
  | (?P<other>.)
""", re.VERBOSE | re.DOTALL)


@dataclass(frozen=True)
class Signature:
    structure: str
    objects: tuple
    constants: tuple  # ((type tag, text), ...)

    def to_json(self):
        return {"structure": self.structure, "objects": list(self.objects),
                "constants": [list(c) for c in self.constants]}

    @classmethod
    def from_json(cls, d):
        return cls(d["structure"], tuple(d["objects"]), tuple(tuple(c) for c in d["constants"]))


def normalize(text, objects):
    """Split query text into its structural skeleton and its literal constants."""
    objects = set(objects)
    parts, constants = [], []
    for m in _TOKEN.finditer(text):
        kind, tok = m.lastgroup, m.group()
        if kind == "ws":
            parts.append(" ")
        elif kind == "str":
            parts.append("?text")
            constants.append(("text", tok[1:-1].replace("''", "'")))
        elif kind == "num":
            typ = "int" if tok.isdigit() else "float"
            parts.append("?" + typ)
            constants.append((typ, tok))
        elif kind == "name":
            if tok in objects:
                parts.append("@")
            elif tok in REGISTRY:
                parts.append(tok)
            else:
                parts.append(tok.lower())
        else:
            parts.append(tok)
    skeleton = re.sub(r" ?([(),]) ?", r"\1", "".join(parts)).strip()
    return skeleton, constants


def signature_of(containers, remainder) -> Signature:
    objects = set()
    for c in containers:
        objects.update(c.objects)
    for node in remainder.nodes():
        objects.update(referenced_objects(node.local_text, node.island))
    text = substitute(containers, remainder).serialize()
    skeleton, constants = normalize(text, objects)
    digest = hashlib.sha256(skeleton.encode("utf-8")).hexdigest()
    return Signature(digest, tuple(sorted(objects)), tuple(constants))
