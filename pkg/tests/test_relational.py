import random

import pytest
from hypothesis import given, settings, strategies as st

from polystore.canonical import canonicalize
from polystore.errors import CatalogError, LoadError, ParseError, SchemaError
from polystore.relational import sql
from polystore.relational.engine import RelationalEngine
from polystore.relational.relation import INT64, Relation


@pytest.fixture
def eng():
    e = RelationalEngine()
    e.execute("CREATE TABLE T (a int64, b int64)")
    e.execute("INSERT INTO T VALUES (3, 1), (7, 2), (9, 4)")
    return e


def test_create_table_registers_arity():
    e = RelationalEngine()
    e.execute("CREATE TABLE T (a int64, b text)")
    assert len(e.table("T").schema) == 2


def test_create_twice_is_duplicate():
    e = RelationalEngine()
    e.execute("CREATE TABLE T (a int64)")
    with pytest.raises(CatalogError):
        e.execute("CREATE TABLE T (a int64)")


def test_repeated_column_rejected():
    with pytest.raises(SchemaError):
        RelationalEngine().execute("CREATE TABLE T (a int64, a text)")


def test_load_csv_counts_rows():
    e = RelationalEngine()
    n = e.load_csv("T", "a:int64,b:float64,c:text\n1,1.5,x\n2,2.5,'y, z'\n3,3.5,'it''s'\n")
    assert n == 3
    assert e.table("T").rows[2] == (3, 3.5, "it's")
    assert e.table("T").rows[1][2] == "y, z"


def test_load_csv_empty_body():
    assert RelationalEngine().load_csv("T", "a:int64\n") == 0


def test_load_csv_arity_error_names_line():
    e = RelationalEngine()
    with pytest.raises(LoadError) as err:
        e.load_csv("T", "a:int64,b:int64,c:int64\n1,2,3\n4,5\n")
    assert err.value.line == 3


def test_load_csv_bad_header_is_line_1():
    with pytest.raises(LoadError) as err:
        RelationalEngine().load_csv("T", "a-int\n1\n")
    assert err.value.line == 1


def test_count_star(eng):
    assert eng.execute("SELECT COUNT(*) FROM T") == 3


def test_distinct():
    e = RelationalEngine()
    e.load_csv("T", "x:int64\n1\n1\n2\n")
    assert sorted(e.execute("SELECT DISTINCT x FROM T").rows) == [(1,), (2,)]


def test_where_filter(eng):
    assert sorted(eng.execute("SELECT a, b FROM T WHERE a > 5").rows) == [(7, 2), (9, 4)]


def test_join_group_by_and_arithmetic(eng):
    eng.execute("CREATE TABLE U (a int64, w float64)")
    eng.execute("INSERT INTO U VALUES (3, 0.5), (9, 2.0), (9, 1.0)")
    out = eng.execute("SELECT t.a AS a, SUM(t.b * u.w) AS s FROM T t JOIN U u ON t.a = u.a "
                      "GROUP BY t.a")
    assert sorted(out.rows) == [(3, 0.5), (9, 12.0)]


def test_ctas_and_insert_select(eng):
    eng.execute("CREATE TABLE V AS SELECT a, b * 2 AS b2 FROM T WHERE a < 8")
    eng.execute("INSERT INTO V SELECT a, b FROM T WHERE a = 9")
    assert sorted(eng.execute("SELECT * FROM V").rows) == [(3, 2), (7, 4), (9, 4)]


def test_functions():
    e = RelationalEngine()
    e.load_csv("T", "x:float64\n-2.5\n4.0\n")
    out = e.execute("SELECT ABS(x) AS a, FLOOR(x) AS f, LEAST(x, 0) AS l, GREATEST(x, 0) AS g "
                    "FROM T")
    assert sorted(out.rows) == [(2.5, -3.0, -2.5, 0.0), (4.0, 4.0, 0.0, 4.0)]


def test_text_literal_escape():
    e = RelationalEngine()
    e.load_csv("T", "s:text\n'it''s'\nother\n")
    assert e.execute("SELECT COUNT(*) FROM T WHERE s = 'it''s'") == 1


def test_limit(eng):
    assert len(eng.execute("SELECT a FROM T LIMIT 2").rows) == 2


def test_unknown_table_and_column(eng):
    with pytest.raises(CatalogError):
        eng.execute("SELECT * FROM Nope")
    with pytest.raises(CatalogError):
        eng.execute("SELECT zz FROM T")


@pytest.mark.parametrize("bad", [
    "SELECT", "SELECT a FROM", "SELECT a FROM T WHERE", "SELECT a FROM T ORDER BY a",
    "SELECT a FROM T, U, V", "CREATE TABLE (a int64)", "SELECT a FROM T WHERE a > 'x",
    "SELECT nofunc(a) FROM T", "INSERT INTO T VALUES", "SELECT a FROM T LIMIT x",
])
def test_parse_errors_carry_position(bad):
    with pytest.raises(ParseError) as err:
        sql.parse(bad)
    assert err.value.position is not None
    assert 0 <= err.value.position <= len(bad)


def test_drop_table(eng):
    eng.execute("DROP TABLE T")
    assert "T" not in eng.names()


def test_table_names_excludes_literals():
    assert sql.table_names(sql.parse("select a from T where b = 'X'")) == ["T"]


# ---------------------------------------------------------------- properties

rows_st = st.lists(st.tuples(st.integers(0, 5), st.integers(-3, 3)), min_size=0, max_size=25)


def _engine_with(rows):
    e = RelationalEngine()
    e.store(Relation("T", (("g", INT64), ("v", INT64)), list(rows)))
    return e


@settings(max_examples=60, deadline=None)
@given(rows_st, st.randoms(use_true_random=False))
def test_order_independence(rows, rnd):
    shuffled = list(rows)
    rnd.shuffle(shuffled)
    a, b = _engine_with(rows), _engine_with(shuffled)
    for q in ("SELECT DISTINCT g FROM T", "SELECT COUNT(*) FROM T",
              "SELECT g, SUM(v) AS s, COUNT(*) AS n FROM T GROUP BY g"):
        assert canonicalize(a.execute(q)) == canonicalize(b.execute(q))


@settings(max_examples=60, deadline=None)
@given(rows_st, st.integers(-3, 3))
def test_count_matches_select_star(rows, k):
    e = _engine_with(rows)
    where = f"WHERE v > {k}"
    assert e.execute(f"SELECT COUNT(*) FROM T {where}") == len(e.execute(f"SELECT * FROM T {where}").rows)


_TOKENS = ["SELECT", "FROM", "WHERE", "T", "a", ",", "(", ")", "*", "=", "'x'", "1", "AND",
           "GROUP", "BY", "COUNT", "JOIN", "ON", "'", ";", "-", "LIMIT", "DISTINCT"]


@settings(max_examples=300, deadline=None)
@given(st.lists(st.sampled_from(_TOKENS), max_size=12))
def test_token_fuzz_never_crashes(tokens):
    text = " ".join(tokens)
    try:
        sql.parse(text)
    except ParseError as exc:
        assert exc.position is not None


def test_mutated_statements_fail_cleanly():
    rng = random.Random(0)
    base = "SELECT a, SUM(b) AS s FROM T WHERE a > 5 AND b <> 'q' GROUP BY a LIMIT 3"
    for _ in range(300):
        chars = list(base)
        for _ in range(rng.randint(1, 3)):
            i = rng.randrange(len(chars))
            chars[i] = rng.choice("(),'*= xyz")
        try:
            sql.parse("".join(chars))
        except ParseError:
            pass
