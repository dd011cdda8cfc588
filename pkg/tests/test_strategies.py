import time

import pytest

from pipeline.strategies import (
    StrategyInapplicableError,
    boolean_relation,
    eval_augment,
    eval_colorcode,
    eval_full_then_filter,
    eval_oracle,
    eval_transformed_plan,
    eval_vertex_cover_listcolor,
    success_probability,
)
from schemas.plans import Join, Project, QueryPlan, Scan
from schemas.schemas import Database, InequalitySet, Relation
from services.generator_service import (
    complete_inequalities,
    gen_path_instances,
    gen_random_cq,
    path_inequalities,
    path_query,
    single_atom_query,
    star_query,
)
from services.query_service import parse_query


def test_oracle_on_q0(q0, q0_db):
    q, inequalities = q0
    assert eval_oracle(q, inequalities, q0_db).tuples == {(1,), (5,)}


def test_boolean_relation():
    assert boolean_relation(True).tuples == {()}
    assert boolean_relation(False).is_empty()
    assert boolean_relation(True).schema == ()


@pytest.mark.parametrize("seed", range(25))
def test_strategies_agree_with_oracle(seed):
    q, inequalities, db = gen_random_cq(seed, domain_size=4, max_tuples=6)
    agree_with_oracle(q, inequalities, db, colorcode=inequalities.k <= 3)


def test_plan_strategy_on_path_with_inequalities():
    q = path_query(5)
    inequalities = path_inequalities(5, "i1")
    db = gen_path_instances(5, 4, 0.5, seed=3)
    assert eval_transformed_plan(q, inequalities, db) == eval_oracle(q, inequalities, db)


def test_augment_domain_guard():
    q, inequalities = parse_query("q() :- R(x), S(y), x != y.")
    db = Database({
        "R": Relation.from_rows(("R.1",), [(i,) for i in range(10)]),
        "S": Relation.from_rows(("S.1",), [(i,) for i in range(10)]),
    })
    with pytest.raises(StrategyInapplicableError):
        eval_augment(q, inequalities, db, domain_limit=5)


def test_full_then_filter_needs_a_small_cover():
    q = star_query(3)
    db = gen_path_instances(3, 3, 1.0)
    with pytest.raises(StrategyInapplicableError):
        eval_full_then_filter(q, InequalitySet.of([]), db)


def test_full_then_filter_on_single_atom():
    q = single_atom_query(3)
    inequalities = complete_inequalities(q.variables)
    db = Database({"R": Relation.from_rows(("R.1", "R.2", "R.3"), [(1, 1, 2), (1, 2, 3)])})
    assert eval_full_then_filter(q, inequalities, db) == boolean_relation(True)


def test_vertex_cover_list_coloring_on_star():
    q = star_query(3)
    inequalities = complete_inequalities(q.variables)
    rows = [(1, 2), (1, 3), (1, 4)]
    db = Database({f"R{i}": Relation.from_rows((f"R{i}.1", f"R{i}.2"), rows) for i in range(1, 4)})
    assert eval_vertex_cover_listcolor(q, inequalities, db)
    short = [(1, 2), (1, 3)]
    db = Database({f"R{i}": Relation.from_rows((f"R{i}.1", f"R{i}.2"), short) for i in range(1, 4)})
    assert not eval_vertex_cover_listcolor(q, inequalities, db)


def test_vertex_cover_strategy_rejects_non_boolean_queries():
    q, inequalities = parse_query("q(x) :- R(x, y), x != y.")
    db = Database({"R": Relation.from_rows(("R.1", "R.2"), [(1, 2)])})
    with pytest.raises(StrategyInapplicableError):
        eval_vertex_cover_listcolor(q, inequalities, db)


def test_random_family_finds_answers_with_enough_repetitions(q0, q0_db):
    q, inequalities = q0
    found = eval_colorcode(q, inequalities, q0_db, family="random", seed=1, reps=200)
    assert found.tuples <= {(1,), (5,)}
    assert found.tuples == {(1,), (5,)}


def test_unknown_family():
    q, inequalities = parse_query("q() :- R(x), S(y), x != y.")
    db = Database({"R": Relation.from_rows(("R.1",), [(1,)]), "S": Relation.from_rows(("S.1",), [(2,)])})
    with pytest.raises(StrategyInapplicableError):
        eval_colorcode(q, inequalities, db, family="perfect")


def test_success_probability():
    assert success_probability(0, 1) == 1.0
    assert success_probability(3, 1) == pytest.approx(6 / 27)
    assert success_probability(3, 100) > 0.99


def agree_with_oracle(q, inequalities, db, colorcode: bool = True):
    expected = eval_oracle(q, inequalities, db)
    assert eval_augment(q, inequalities, db) == expected
    assert eval_transformed_plan(q, inequalities, db) == expected
    if colorcode:
        assert eval_colorcode(q, inequalities, db) == expected
    try:
        assert eval_full_then_filter(q, inequalities, db) == expected
    except StrategyInapplicableError:
        pass
    try:
        found = eval_vertex_cover_listcolor(q, inequalities, db)
    except StrategyInapplicableError:
        return
    assert found == (not expected.is_empty())


@pytest.mark.acceptance
def test_strategies_agree_on_three_hundred_instances():
    started = time.perf_counter()
    for seed in range(300):
        q, inequalities, db = gen_random_cq(seed, max_atoms=4, max_variables=4, domain_size=5)
        assert inequalities.k <= 4
        agree_with_oracle(q, inequalities, db)
    assert time.perf_counter() - started < 60


def test_user_plan_with_reordered_self_join_scans():
    q, inequalities = parse_query("q(x, y) :- R(z, x), R(x, y), x != y.")
    db = Database({"R": Relation.from_rows(("R.1", "R.2"), [(1, 1), (1, 2)])})
    root = Project(("b0", "b1"), Join((("b0", "a1"),), Scan("R", ("b0", "b1")), Scan("R", ("a0", "a1"))))
    plan = QueryPlan(root, {"a0": "z", "a1": "x", "b0": "x", "b1": "y"})
    expected = eval_oracle(q, inequalities, db)
    assert expected.tuples == {(1, 2)}
    assert eval_transformed_plan(q, inequalities, db, plan) == expected


def test_full_then_filter_records_its_bound():
    q = single_atom_query(3)
    inequalities = complete_inequalities(q.variables)
    db = Database({"R": Relation.from_rows(("R.1", "R.2", "R.3"), [(1, 1, 2), (1, 2, 3), (2, 3, 1)])})
    stats = {}
    eval_full_then_filter(q, inequalities, db, stats=stats)
    assert stats["full_size"] == 3
    assert stats["full_size"] <= stats["full_bound"]
    assert stats["bound_violations"] == []
