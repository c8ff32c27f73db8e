import random

import pytest
from hypothesis import given, settings, strategies as st

from polystore.errors import ParseError
from polystore.islands import referenced_objects
from polystore.polyparser import (PolyParseError, ScopeNode, decompose, poly_parse, reserialize,
                                  substitute)
from polystore.middleware import Polystore
from querygen import (build_fixture, gen_query, gen_valid_query, islands_of,
                      maximal_single_island, normalize_tree, shape)

EXAMPLE = "ARRAY(multiply(RELATIONAL(select * from A),B))"


def test_example_tree():
    ast = poly_parse(EXAMPLE)
    assert ast.root.island == "ARRAY"
    kids = ast.root.children
    assert [k.island for k in kids] == ["RELATIONAL"]
    assert kids[0].body() == "select * from A"


def test_single_scope():
    ast = poly_parse("RELATIONAL(select * from A)")
    assert ast.root.children == [] and not ast.training


def test_quotes_are_opaque():
    q = "RELATIONAL(select * from A where note = '(ARRAY(')"
    ast = poly_parse(q)
    assert ast.root.children == []
    assert reserialize(ast) == q


def test_training_prefix():
    ast = poly_parse("TRAINING: " + EXAMPLE)
    assert ast.training and reserialize(ast) == "TRAINING: " + EXAMPLE


def test_decompose_example():
    containers, rem = decompose(poly_parse(EXAMPLE))
    assert [(c.id, c.island, c.text) for c in containers] == [("c0", "RELATIONAL", "select * from A")]
    assert rem.island == "ARRAY" and rem.text == "multiply($c0,B)"


def test_decompose_single_island():
    containers, rem = decompose(poly_parse("RELATIONAL(select count(*) from T)"))
    assert len(containers) == 1 and rem.trivial and rem.text == "$c0"


def test_decompose_two_siblings():
    q = "ARRAY(multiply(RELATIONAL(select * from A), RELATIONAL(select * from B)))"
    containers, rem = decompose(poly_parse(q))
    assert [c.text for c in containers] == ["select * from A", "select * from B"]
    assert rem.text == "multiply($c0, $c1)"


def test_nested_same_island_is_one_container():
    containers, rem = decompose(poly_parse("ARRAY(count(ARRAY(scan(B))))"))
    assert len(containers) == 1 and rem.trivial and containers[0].text == "count(scan(B))"


def test_intermediate_remainder_nodes():
    q = "ARRAY(multiply(ARRAY(scan(RELATIONAL(select * from A))), B))"
    containers, rem = decompose(poly_parse(q))
    assert [n.local_text for n in rem.nodes()] == ["scan($c0)", "multiply($r1, B)"]


@pytest.mark.parametrize("text, island, expected", [
    ("select * from A", "RELATIONAL", ["A"]),
    ("multiply($c0,B)", "ARRAY", ["B"]),
    ("select a from T where b = 'X'", "RELATIONAL", ["T"]),
    ("termcount(notes, 'p', 'f')", "TEXT", ["notes"]),
])
def test_referenced_objects(text, island, expected):
    assert referenced_objects(text, island) == expected


@pytest.mark.parametrize("bad, pos", [
    ("FOO(x)", 0),
    ("ARRAY(count(A)", 5),
    ("ARRAY(count(A)))", 15),
    ("RELATIONAL(select 'abc)", 18),
    ("", 0),
    ("ARRAY count(A)", 5),
    ("ARRAY(x) junk", 9),
])
def test_errors_have_positions(bad, pos):
    with pytest.raises(PolyParseError) as err:
        poly_parse(bad)
    assert err.value.position == pos
    assert isinstance(err.value, ParseError)


def test_nested_unregistered_name_is_text():
    ast = poly_parse("ARRAY(FOO(x))")
    assert ast.root.children == []


def test_generated_round_trip():
    rng = random.Random(7)
    for _ in range(300):
        q, tree = gen_query(rng)
        ast = poly_parse(q)
        assert reserialize(ast) == q
        assert shape(ast.root) == normalize_tree(tree)


def test_container_count_matches_brute_force():
    rng = random.Random(11)
    ps = Polystore()
    data = build_fixture(ps, rng)
    for _ in range(200):
        q, _, _ = gen_valid_query(rng, data)
        ast = poly_parse(q)
        containers, rem = decompose(ast)
        tree = shape(ast.root)
        expected = 1 if len(islands_of(tree)) == 1 else maximal_single_island(tree)
        assert len(containers) == expected
        assert rem.trivial == (len(islands_of(tree)) == 1)
        assert substitute(containers, rem) == ast.root


@settings(max_examples=400, deadline=None)
@given(st.text(alphabet="AR()'x ,TEXTRELATIONALé_$", max_size=40))
def test_fuzz_errors_not_crashes(text):
    try:
        ast = poly_parse(text)
    except PolyParseError as exc:
        assert 0 <= exc.position <= len(text)
    else:
        assert reserialize(ast) == text


def test_scope_node_equality_ignores_position():
    a = ScopeNode("ARRAY", ["x"], 0)
    b = ScopeNode("ARRAY", ["x"], 5)
    assert a == b
