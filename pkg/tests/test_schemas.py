import pytest

from schemas.plans import BipartiteIneqGraph, HProject, Join, Project, Scan, path_label, walk
from schemas.schemas import (
    BOTTOM,
    Bottom,
    CQ,
    Atom,
    Constant,
    Database,
    InequalitySet,
    Relation,
    SchemaError,
    Variable,
    tuple_key,
    value_key,
)


def test_bottom_is_a_singleton():
    assert Bottom() is BOTTOM
    assert repr(BOTTOM) == "⊥"


def test_value_order_puts_bottom_then_ints_then_text():
    values = ["b", 3, BOTTOM, "a", -1]
    assert sorted(values, key=value_key) == [BOTTOM, -1, 3, "a", "b"]
    assert tuple_key((BOTTOM, 1)) < tuple_key((0, 1))


def test_relation_rejects_duplicate_attributes_and_ragged_rows():
    with pytest.raises(SchemaError):
        Relation(("A", "A"))
    with pytest.raises(SchemaError):
        Relation.from_rows(("A", "B"), [(1,)])


def test_relation_deduplicates_and_iterates_in_canonical_order():
    r = Relation.from_rows(("A",), [(3,), (1,), (3,), ("x",)])
    assert len(r) == 3
    assert list(r) == [(1,), (3,), ("x",)]


def test_rename_keeps_tuples():
    r = Relation.from_rows(("A", "B"), [(1, 2)])
    assert r.rename(("C", "D")).schema == ("C", "D")
    with pytest.raises(SchemaError):
        r.rename(("C",))


def test_database_active_domain_is_sorted():
    db = Database({
        "R": Relation.from_rows(("R.1",), [(2,), ("z",)]),
        "S": Relation.from_rows(("S.1",), [(1,)]),
    })
    assert db.active_domain == [1, 2, "z"]
    assert db.size == 3


def test_query_variables_in_first_occurrence_order():
    q = CQ("q", ("z",), (Atom("R", (Variable("x"), Constant(1), Variable("y"))), Atom("S", (Variable("y"), Variable("z")))))
    assert q.variables == ("x", "y", "z")
    assert not q.is_boolean
    assert q.arities() == {"R": 3, "S": 2}


def test_inequality_set_normalizes_pairs():
    i = InequalitySet.of([("y", "x"), ("x", "y"), ("x", "z")])
    assert len(i) == 2
    assert ("y", "x") in i
    assert i.variables == ("x", "y", "z")
    assert i.k == 3
    with pytest.raises(SchemaError):
        InequalitySet.of([("x", "x")])


def test_inequality_satisfaction_and_restriction():
    i = InequalitySet.of([("x", "y"), ("y", "z")], [("x", 3)])
    assert i.satisfied_by({"x": 1, "y": 2, "z": 1})
    assert not i.satisfied_by({"x": 3, "y": 2, "z": 1})
    assert not i.satisfied_by({"x": 1, "y": 1, "z": 2})
    assert i.restricted_to(["x", "y"]).pairs == {("x", "y")}


def test_bipartite_graph_checks_sides():
    with pytest.raises(SchemaError):
        BipartiteIneqGraph(("A",), ("A",))
    with pytest.raises(SchemaError):
        BipartiteIneqGraph(("A",), ("B",), frozenset({("B", "A")}))
    g = BipartiteIneqGraph(("A", "B"), ("C", "D"), frozenset({("A", "D"), ("B", "D")}))
    assert g.degree("D") == 2
    assert g.active_right == ("D",)
    assert g.ordered_edges() == [("A", "D"), ("B", "D")]


def test_plan_schemas_and_walk():
    join = Join((("B", "B'"),), Scan("R", ("A", "B")), Scan("S", ("B'", "C")))
    plan = Project(("C",), HProject(("A", "C"), BipartiteIneqGraph(("B", "B'"), ()), join))
    assert join.schema == ("A", "B", "B'", "C")
    assert plan.child.schema == join.schema
    assert [path_label(p) for p, _ in walk(plan)] == ["root", "0", "0.0", "0.0.0", "0.0.1"]
