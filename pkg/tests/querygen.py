"""Random nested polystore query texts with their expected scope trees.

Bodies are syntactic noise (not valid island languages): the generator
exercises scope recognition, quoting and nesting only.
"""

import random

ISLANDS = ["RELATIONAL", "ARRAY", "TEXT", "D_REL", "D_ARR", "D_KV"]
_NOISE = ["select * from A", "multiply(", "x", " , ", "f(g(1))", "count(*)", "a > 5",
          "'quoted ( ARRAY( text'", "'it''s)'", "ARRAYS", "xRELATIONAL(1)", "\t", "B",
          "scan(s, 'n/')", "RELATIONAL_X(2)", "é", "$c9"]


def gen_tree(rng: random.Random, depth=0, max_depth=4):
    """Return (island, [segment, ...]) where segments are str or child trees."""
    island = rng.choice(ISLANDS)
    segments = []
    for _ in range(rng.randint(0, 4)):
        if depth < max_depth and rng.random() < 0.35:
            if segments and isinstance(segments[-1], str) and \
                    (segments[-1][-1:].isalnum() or segments[-1][-1:] in "_$"):
                # Keep the island name at a word boundary.
                segments.append(" ")
            segments.append(gen_tree(rng, depth + 1, max_depth))
        else:
            piece = rng.choice(_NOISE)
            if piece.endswith("(") and rng.random() < 0.8:
                piece += rng.choice(["y)", "1, 2)", ")"])
            elif piece.endswith("("):
                piece = piece[:-1]
            segments.append(piece)
    return island, segments


def render(tree):
    island, segments = tree
    return island + "(" + "".join(s if isinstance(s, str) else render(s) for s in segments) + ")"


def gen_query(rng: random.Random):
    tree = gen_tree(rng)
    prefix = rng.choice(["", "", "TRAINING:", "TRAINING: ", "  "])
    return prefix + render(tree) + rng.choice(["", " ", "\n"]), tree


def islands_of(tree):
    island, segments = tree
    out = {island}
    for s in segments:
        if not isinstance(s, str):
            out |= islands_of(s)
    return out


def maximal_single_island(tree, parent_island=None):
    """Brute-force count of maximal single-island subtrees that are not the root."""
    count = 0
    for s in tree[1]:
        if isinstance(s, str):
            continue
        if len(islands_of(s)) == 1:
            count += 1
        else:
            count += maximal_single_island(s, tree[0])
    return count


def shape(node):
    """Scope tree of a parsed node in the generator's form, text merged."""
    segs = []
    for s in node.segments:
        if isinstance(s, str):
            if segs and isinstance(segs[-1], str):
                segs[-1] += s
            else:
                segs.append(s)
        else:
            segs.append(shape(s))
    return node.island, segs


def normalize_tree(tree):
    island, segments = tree
    segs = []
    for s in segments:
        if isinstance(s, str):
            if not s:
                continue
            if segs and isinstance(segs[-1], str):
                segs[-1] += s
            else:
                segs.append(s)
        else:
            segs.append(normalize_tree(s))
    return island, segs


# ---------------------------------------------------------------- executable cross-island queries

SIZES = (2, 3)
WORDS = ("alarm", "stable", "drop", "rise", "lead")


def build_fixture(ps, rng: random.Random):
    """Random small objects: arrays M<r><c>, cell tables R<r><c> and a note store."""
    import numpy as np
    from polystore.relational.relation import FLOAT64, INT64, Relation

    data = {}
    for r in SIZES:
        for c in SIZES:
            m = np.array([[float(rng.randint(-4, 4)) for _ in range(c)] for _ in range(r)])
            ps.add_array(f"M{r}{c}", [(f"r{r}", r), (f"c{c}", c)], m)
            t = np.array([[float(rng.randint(-4, 4)) for _ in range(c)] for _ in range(r)])
            rows = [(i, j, float(t[i, j])) for i in range(r) for j in range(c)]
            rng.shuffle(rows)
            ps.add_relation(Relation(f"R{r}{c}", (("d0", INT64), ("d1", INT64), ("val", FLOAT64)),
                                     rows))
            data[f"M{r}{c}"], data[f"R{r}{c}"] = m, t
    docs = [(f"n/{k}", {"text": " ".join(rng.choice(WORDS) for _ in range(rng.randint(1, 5)))})
            for k in range(rng.randint(1, 6))]
    ps.add_documents("notes", docs)
    data["notes"] = docs
    return data


def _matrix(rng, data, r, c, depth):
    """(text, value, (row dim, col dim)) for an ARRAY-island expression of shape r x c."""
    import numpy as np

    roll = rng.random()
    if depth >= 2 or roll < 0.3:
        return f"M{r}{c}", data[f"M{r}{c}"], (f"r{r}", f"c{c}")
    if roll < 0.5:
        k = rng.randint(1, 3)
        cols = rng.choice(["*", f"d0, d1, val * {k} AS val", f"d0, d1, val + {k} AS val"])
        val = data[f"R{r}{c}"] * k if "*" in cols[1:] else (
            data[f"R{r}{c}"] + k if "+" in cols else data[f"R{r}{c}"])
        return f"RELATIONAL(select {cols} from R{r}{c})", val, ("d0", "d1")
    if roll < 0.6:
        text, val, dims = _matrix(rng, data, r, c, depth + 1)
        return f"ARRAY(scan({text}))", val, dims
    m = rng.choice(SIZES)
    lt, lv, ld = _matrix(rng, data, r, m, depth + 1)
    rt, rv, rd = _matrix(rng, data, m, c, depth + 1)
    return f"multiply({lt}, {rt})", lv @ rv, (ld[0], rd[1])


def gen_valid_query(rng: random.Random, data):
    """Return (query text, kind, expected) where kind says how to compare."""
    import numpy as np

    r, c = rng.choice(SIZES), rng.choice(SIZES)
    text, val, dims = _matrix(rng, data, r, c, 0)
    form = rng.randrange(7)
    if form == 0:
        return f"ARRAY({text})", "matrix", val
    if form == 1:
        return f"ARRAY(count({text}))", "scalar", float(val.size)
    if form == 2:
        k = rng.randint(-3, 3)
        return f"ARRAY(filter({text}, val > {k}))", "matrix", np.where(val > k, val, np.nan)
    if form == 3:
        return f"ARRAY(distinct({text}))", "vector", np.unique(val)
    if form == 4:
        return (f"RELATIONAL(select {dims[0]}, SUM(val) AS s from ARRAY({text}) "
                f"group by {dims[0]})", "rows", sorted((i, float(s)) for i, s in enumerate(val.sum(axis=1))))
    if form == 5:
        k = rng.randint(-3, 3)
        return (f"RELATIONAL(select COUNT(*) from ARRAY({text}) where val > {k})", "scalar",
                float((val > k).sum()))
    k = rng.randint(0, 2)
    counts = {}
    for _, f in data["notes"]:
        for w in f["text"].split():
            counts[w] = counts.get(w, 0) + 1
    return (f"RELATIONAL(select term, count from TEXT(termcount(notes, 'n/', 'text')) "
            f"where count > {k})", "rows", sorted((w, float(n)) for w, n in counts.items() if n > k))


def check_value(value, kind, expected, rel=1e-9):
    """Compare an engine result with the numpy/python oracle."""
    import math

    import numpy as np

    if kind == "scalar":
        return math.isclose(float(value), expected, rel_tol=rel, abs_tol=1e-9)
    if kind in ("matrix", "vector"):
        got = value.values
        return got.shape == expected.shape and np.allclose(got, expected, rtol=rel, atol=1e-9,
                                                           equal_nan=True)
    rows = sorted(tuple(float(v) if isinstance(v, (int, float)) else v for v in row)
                  for row in value.rows)
    return len(rows) == len(expected) and all(
        a[0] == b[0] and math.isclose(a[1], b[1], rel_tol=rel, abs_tol=1e-9)
        for a, b in zip(rows, expected))
