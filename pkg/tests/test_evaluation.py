import pytest

from pipeline.evaluation import QueryEvaluationPipeline, choose_strategy
from pipeline.strategies import StrategyInapplicableError, eval_oracle
from schemas.schemas import Database, InequalitySet, Relation
from services.generator_service import (
    complete_inequalities,
    even_cycle_query,
    gen_path_instances,
    path_inequalities,
    path_query,
    single_atom_query,
    star_query,
)
from services.query_service import parse_query
from utils.config import Config

EMPTY = Database({})


def test_single_atom_goes_to_full_then_filter():
    q = single_atom_query(3)
    assert choose_strategy(q, complete_inequalities(q.variables), EMPTY).strategy == "cover"


def test_star_with_complete_inequalities_goes_to_list_coloring():
    q = star_query(5)
    choice = choose_strategy(q, complete_inequalities(q.variables), EMPTY)
    assert choice.strategy == "vclc"
    assert choice.details["vertex_cover"] == 1
    assert choice.details["listcolor_classes"] == ["clique"]


def test_path_with_skip_one_inequalities_goes_to_the_plan():
    q = path_query(5)
    assert choose_strategy(q, path_inequalities(5, "i1"), EMPTY).strategy == "plan"


def test_even_cycle_goes_to_the_cycle_algorithm():
    assert choose_strategy(even_cycle_query(2), InequalitySet.of([]), EMPTY).strategy == "cycle"


def test_acyclic_join_over_small_domain_is_augmented():
    q = path_query(4, head=("x1",))
    db = gen_path_instances(4, 3, 0.5)
    choice = choose_strategy(q, InequalitySet.of([]), db)
    assert choice.strategy == "augment"
    assert choice.details["tw_augmented"] == 1


def test_augment_is_skipped_over_large_domains():
    q = path_query(4, head=("x1",))
    db = gen_path_instances(4, 30, 0.1)
    config = Config(augment_domain_limit=10)
    assert choose_strategy(q, InequalitySet.of([]), db, config).strategy == "plan"


@pytest.mark.parametrize("strategy", ["auto", "oracle", "plan", "augment", "cover"])
def test_pipeline_strategies_on_q0(strategy, q0, q0_db):
    q, inequalities = q0
    result = QueryEvaluationPipeline(Config()).evaluate(q, inequalities, q0_db, strategy=strategy)
    assert result.relation.tuples == {(1,), (5,)}
    assert not result.is_boolean
    assert result.seconds >= 0


def test_auto_records_its_choice(q0, q0_db):
    q, inequalities = q0
    result = QueryEvaluationPipeline(Config()).evaluate(q, inequalities, q0_db)
    assert result.choice is not None
    assert result.strategy == result.choice.strategy == "cover"


def test_plan_strategy_reports_phi(q0, q0_plan, q0_db):
    q, inequalities = q0
    result = QueryEvaluationPipeline(Config(threads=2)).evaluate(q, inequalities, q0_db, strategy="plan", plan=q0_plan)
    assert sorted(result.stats["phi"].values()) == [1, 1, 2]


def test_cycle_strategy_renames_variables():
    q, inequalities = parse_query("q() :- R(c, d), R(a, b), R(d, a), R(b, c), a != c, b != d.")
    four_cycle = Database({"R": Relation.from_rows(("R.1", "R.2"), [(1, 2), (2, 3), (3, 4), (4, 1)])})
    pipeline = QueryEvaluationPipeline(Config())
    result = pipeline.evaluate(q, inequalities, four_cycle, strategy="cycle")
    assert result.is_boolean
    assert result.relation == eval_oracle(q, inequalities, four_cycle)
    assert not result.relation.is_empty()
    assert result.stats["tuples"] == 4

    two_cycle = Database({"R": Relation.from_rows(("R.1", "R.2"), [(1, 2), (2, 1)])})
    assert pipeline.evaluate(q, inequalities, two_cycle, strategy="cycle").relation.is_empty()


def test_cycle_strategy_rejects_other_queries(q0, q0_db):
    q, inequalities = q0
    with pytest.raises(StrategyInapplicableError):
        QueryEvaluationPipeline(Config()).evaluate(q, inequalities, q0_db, strategy="cycle")


def test_vertex_cover_strategy_returns_a_boolean_relation():
    q = star_query(2)
    inequalities = complete_inequalities(q.variables)
    rows = [(1, 2), (1, 3)]
    db = Database({f"R{i}": Relation.from_rows((f"R{i}.1", f"R{i}.2"), rows) for i in (1, 2)})
    result = QueryEvaluationPipeline(Config()).evaluate(q, inequalities, db, strategy="vclc")
    assert result.relation.tuples == {()}


def test_unknown_strategy(q0, q0_db):
    q, inequalities = q0
    with pytest.raises(StrategyInapplicableError):
        QueryEvaluationPipeline(Config()).evaluate(q, inequalities, q0_db, strategy="magic")
