import math
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from pipeline.strategies import eval_oracle, eval_transformed_plan
from schemas.plans import HProject, Join, Project, QueryPlan, Scan, Select, node_at, walk
from schemas.schemas import Database, InequalitySet, Relation
from services.ineq_service import phi
from services.plan_service import (
    Absorption,
    Commutation,
    Distribution,
    EvalStats,
    PlanError,
    TransformationError,
    blowup_report,
    default_plan,
    eval_plan,
    evaluate_query,
    infer_provenance,
    place_inequalities,
    pull_up_projections,
    push_down_h_projections,
    scan_atoms,
    transform,
)
from services.plan_format import parse_plan
from services.query_service import parse_query
from tests.conftest import Q0_PLAN, Q0_TEXT, q0_database


def test_default_plan_matches_oracle(q0, q0_db):
    q, _ = q0
    expected = eval_oracle(q, InequalitySet.of([]), q0_db)
    assert evaluate_query(q, q0_db) == expected
    assert expected.tuples == {(5,), (1,), (2,)}


def test_default_plan_keeps_provenance(q0):
    q, _ = q0
    plan = default_plan(q)
    assert set(plan.provenance.values()) == {"x", "y", "z", "w"}
    assert plan.attributes_of("y")


def test_pull_up_trace(q0_plan):
    pulled = pull_up_projections(q0_plan.root)
    assert pulled.attributes == ("D",)
    assert [type(s) for s in pulled.trace] == [Commutation, Distribution, Absorption]
    assert pulled.trace[1].kept == ("C", "E")
    assert not any(isinstance(n, Project) for _, n in walk(pulled.p0))


def test_inequalities_are_placed_lowest(q0, q0_plan):
    _, inequalities = q0
    pulled = pull_up_projections(q0_plan.root)
    placed = place_inequalities(pulled.p0, q0_plan.provenance, inequalities)
    by_path = {}
    for p in placed:
        by_path.setdefault(p.path, set()).add(frozenset(p.condition.attributes))
    assert by_path == {(0, 0): {frozenset({"A", "C"})}, (): {frozenset({"A", "D"}), frozenset({"B", "D"})}}


def test_transformed_q0_structure(q0, q0_plan):
    q, inequalities = q0
    root = transform(q0_plan, q, inequalities).root
    assert isinstance(root, Project) and root.attributes == ("D",)

    top = node_at(root, (0,))
    assert isinstance(top, HProject) and top.attributes == ("D",)
    assert phi(top.graph) == 1
    middle = node_at(root, (0, 0))
    assert isinstance(middle, HProject) and set(middle.attributes) == {"C", "E", "C'", "D"}
    assert phi(middle.graph) == 1

    ineq = node_at(root, (0, 0, 0))
    assert isinstance(ineq, Select) and ineq.inequality
    assert {frozenset(c.attributes) for c in ineq.conditions} == {frozenset({"A", "D"}), frozenset({"B", "D"})}
    assert isinstance(node_at(root, (0, 0, 0, 0)), Join)
    assert isinstance(node_at(root, (0, 0, 0, 0, 0)), Select)

    inner = node_at(root, (0, 0, 0, 0, 0, 0))
    assert isinstance(inner, HProject) and inner.attributes == ("C", "E")
    assert set(inner.graph.left) == {"A", "B", "B'"}
    assert set(inner.graph.right) == {"C'", "D"}
    assert inner.graph.edges == frozenset({("A", "D"), ("B", "D")})
    assert phi(inner.graph) == 2

    below = node_at(root, (0, 0, 0, 0, 0, 0, 0))
    assert isinstance(below, Select) and below.inequality
    assert isinstance(below.child, Join)


def test_transformed_q0_answer(q0, q0_plan, q0_db):
    q, inequalities = q0
    result = eval_transformed_plan(q, inequalities, q0_db, q0_plan)
    assert result.tuples == {(1,), (5,)}
    assert result == eval_oracle(q, inequalities, q0_db)


def test_transformed_plan_agrees_with_oracle_on_random_instances(q0, q0_plan):
    q, inequalities = q0
    rng = random.Random(7)
    for _ in range(20):
        r = [(rng.randint(1, 4), rng.randint(1, 4), rng.choice("ab")) for _ in range(6)]
        s = [(rng.randint(1, 4), rng.randint(1, 4)) for _ in range(6)]
        t = [(rng.randint(1, 4), rng.randint(1, 4)) for _ in range(6)]
        db = q0_database(r, s, t)
        assert eval_transformed_plan(q, inequalities, db, q0_plan) == eval_oracle(q, inequalities, db)


def test_transformed_default_plan_agrees_with_oracle():
    q, inequalities = parse_query("q(x1) :- R(x1, x2), R(x2, x3), R(x3, x4), x1 != x3, x2 != x4, x1 != x4.")
    rng = random.Random(3)
    for _ in range(10):
        rows = {(rng.randint(1, 5), rng.randint(1, 5)) for _ in range(10)}
        db = Database({"R": Relation.from_rows(("R.1", "R.2"), rows)})
        assert eval_transformed_plan(q, inequalities, db) == eval_oracle(q, inequalities, db)


def test_empty_inequalities_give_edge_free_hprojections(q0, q0_plan):
    q, _ = q0
    root = transform(q0_plan, q, InequalitySet.of([])).root
    hprojects = [n for _, n in walk(root) if isinstance(n, HProject)]
    assert hprojects
    assert all(not n.graph.edges for n in hprojects)


def test_partial_push_down_keeps_outer_sites(q0, q0_plan):
    _, inequalities = q0
    pulled = pull_up_projections(q0_plan.root)
    placed = place_inequalities(pulled.p0, q0_plan.provenance, inequalities)
    partial = push_down_h_projections(pulled, placed, steps=2)
    sites = {p: n for p, n in walk(partial) if isinstance(n, HProject)}
    assert sorted(len(p) for p in sites) == [0, 1, 4]

    assert sites[()].attributes == ("D",)
    assert set(sites[(0,)].attributes) == {"C", "E", "C'", "D"}
    pending = sites[(0, 0, 0, 0)]
    assert pending.attributes == ("C", "E")
    assert isinstance(pending.child, Select) and not pending.child.inequality
    assert pending.graph.edges == frozenset({("A", "D"), ("B", "D")})
    assert phi(pending.graph) == 2


def test_blowup_report_bound(q0, q0_plan, q0_db):
    q, inequalities = q0
    transformed = transform(q0_plan, q, inequalities).root
    report = blowup_report(transformed)
    assert report.max_phi == 2
    assert report.intermediate_factor == pytest.approx(2 * math.e)
    assert report.time_factor == pytest.approx((2 * math.e) ** 2)
    assert report.within_bound is None

    measured = blowup_report(transformed, q0_plan.root, q0_db)
    assert measured.measured_ratios
    assert measured.within_bound


def test_eval_stats_record_phi(q0, q0_plan, q0_db):
    q, inequalities = q0
    stats = EvalStats()
    eval_plan(transform(q0_plan, q, inequalities).root, q0_db, stats)
    assert sorted(stats.phi.values()) == [1, 1, 2]
    assert stats.tuples_scanned == len(q0_db["R"]) + len(q0_db["S"]) + len(q0_db["T"])
    assert stats.max_intermediate >= 1


def test_infer_provenance_from_scans(q0, q0_plan):
    q, _ = q0
    assert infer_provenance(q0_plan.root, q) == q0_plan.provenance


def test_missing_provenance_is_rejected(q0, q0_plan):
    q, inequalities = q0
    with pytest.raises(TransformationError):
        transform(QueryPlan(q0_plan.root, {}), q, inequalities)


def test_plan_with_missing_relation(q0_plan):
    with pytest.raises(PlanError):
        eval_plan(q0_plan.root, Database({}))


def test_projection_outside_schema_is_rejected(q0_db):
    with pytest.raises(PlanError):
        eval_plan(Project(("Z",), Scan("S", ("A", "B"))), q0_db)


@pytest.mark.acceptance
def test_transformed_plans_on_a_hundred_instances(q0, q0_plan):
    q, inequalities = q0
    rng = random.Random(2026)
    for _ in range(100):
        sizes = [rng.randint(0, 8) for _ in range(3)]
        r = [(rng.randint(1, 5), rng.randint(1, 5), rng.choice("ab")) for _ in range(sizes[0])]
        s = [(rng.randint(1, 5), rng.randint(1, 5)) for _ in range(sizes[1])]
        t = [(rng.randint(1, 5), rng.randint(1, 5)) for _ in range(sizes[2])]
        db = q0_database(r, s, t)
        assert len(r) + len(s) + len(t) <= 25
        expected = eval_oracle(q, inequalities, db)
        assert eval_transformed_plan(q, inequalities, db, q0_plan) == expected
        assert eval_transformed_plan(q, inequalities, db) == expected

q0_instances = st.tuples(
    st.sets(st.tuples(st.integers(1, 4), st.integers(1, 4), st.sampled_from(["a", "b"])), max_size=8),
    st.sets(st.tuples(st.integers(1, 4), st.integers(1, 4)), max_size=8),
    st.sets(st.tuples(st.integers(1, 4), st.integers(1, 4)), max_size=8),
)


@given(q0_instances)
def test_every_replayed_rule_keeps_the_answer(rows):
    q, inequalities = parse_query(Q0_TEXT)
    plan = parse_plan(Q0_PLAN)
    db = q0_database(*rows)
    pulled = pull_up_projections(plan.root)
    placed = place_inequalities(pulled.p0, plan.provenance, inequalities)
    expected = eval_plan(transform(plan, q, inequalities).root, db)
    for steps in range(len(pulled.trace) + 1):
        partial = Project(pulled.attributes, push_down_h_projections(pulled, placed, steps=steps))
        assert eval_plan(partial, db) == expected


SELF_JOIN = "q(x, y) :- R(z, x), R(x, y), R(y, w), x != y, z != w, y != z."


def reordered_self_join_plan() -> QueryPlan:
    """Scans the atoms in the order R(x, y), R(z, x), R(y, w)."""
    inner = Join((("b0", "a1"),), Scan("R", ("b0", "b1")), Scan("R", ("a0", "a1")))
    root = Project(("b0", "b1"), Join((("b1", "c0"),), inner, Scan("R", ("c0", "c1"))))
    provenance = {"a0": "z", "a1": "x", "b0": "x", "b1": "y", "c0": "y", "c1": "w"}
    return QueryPlan(root, provenance)


@given(st.sets(st.tuples(st.integers(1, 4), st.integers(1, 4)), max_size=12))
def test_plan_with_reordered_scans_agrees_with_oracle(rows):
    q, inequalities = parse_query(SELF_JOIN)
    db = Database({"R": Relation.from_rows(("R.1", "R.2"), rows)})
    expected = eval_oracle(q, inequalities, db)
    assert eval_transformed_plan(q, inequalities, db, reordered_self_join_plan()) == expected


def test_scans_follow_provenance_not_atom_order():
    q, _ = parse_query(SELF_JOIN)
    plan = reordered_self_join_plan()
    assert scan_atoms(plan.root, q, plan.provenance) == {(0, 0, 0): 1, (0, 0, 1): 0, (0, 1): 2}
    assert scan_atoms(plan.root, q) == {(0, 0, 0): 0, (0, 0, 1): 1, (0, 1): 2}


def test_scan_that_contradicts_provenance_is_rejected():
    q, _ = parse_query("q(x) :- R(x, y).")
    plan = QueryPlan(Scan("R", ("A", "B")), {"A": "y", "B": "x"})
    with pytest.raises(PlanError):
        scan_atoms(plan.root, q, plan.provenance)
