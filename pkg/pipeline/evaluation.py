"""
Strategy dispatch and the evaluation pipeline used by the command line
"""
import time
from dataclasses import dataclass, field
from typing import Any, Dict, Optional

from pydantic import BaseModel, Field

from schemas.plans import QueryPlan
from schemas.schemas import CQ, Database, InequalitySet, Relation
from services.graph_service import (
    GraphGuardError,
    augmented_graph,
    fractional_edge_cover_min,
    inequality_graph,
    treewidth_exact,
    vertex_cover_min,
)
from services.listcolor_service import ListColoringInstance, classify_components
from services.plan_service import EvalStats
from pipeline.cycles import CycleStats, eval_even_cycle_ineq, match_even_cycle
from pipeline.strategies import (
    StrategyInapplicableError,
    boolean_relation,
    eval_augment,
    eval_colorcode,
    eval_full_then_filter,
    eval_oracle,
    eval_transformed_plan,
    eval_vertex_cover_listcolor,
)
from utils.config import Config
from utils.logger import setup_logger

logger = setup_logger(__name__)

STRATEGIES = ("oracle", "plan", "colorcode", "augment", "cover", "vclc", "cycle", "auto")


class StrategyChoice(BaseModel):
    """Outcome of strategy dispatch"""
    strategy: str = Field(description="Chosen strategy name")
    rationale: str = Field(description="Why this strategy applies")
    details: Dict[str, Any] = Field(default_factory=dict, description="Structural quantities consulted")


def choose_strategy(q: CQ, inequalities: InequalitySet, db: Database, config: Optional[Config] = None) -> StrategyChoice:
    """
    Deterministic dispatch

    Even cycles over one relation go to the cycle algorithm; a small
    fractional edge cover to full-then-filter; a small vertex cover with an
    easy inequality graph to list coloring; low augmented treewidth over a
    small domain to the augmented join; everything else to the transformed
    plan.
    """
    config = config or Config()
    details: Dict[str, Any] = {}

    if match_even_cycle(q) is not None:
        return StrategyChoice(strategy="cycle", rationale="query is an even cycle over one binary relation")

    cover = fractional_edge_cover_min(q).value
    details["fractional_cover"] = str(cover)
    if cover <= config.cover_bound:
        return StrategyChoice(
            strategy="cover", rationale=f"fractional edge cover {cover} <= {config.cover_bound}", details=details
        )

    if q.is_boolean and all(atom.arity <= 2 for atom in q.atoms) and len(q.variables) <= config.search_limit:
        size, _ = vertex_cover_min(q, config.search_limit)
        details["vertex_cover"] = size
        if size <= config.vertex_cover_bound:
            graph = inequality_graph(inequalities)
            inst = ListColoringInstance(graph, {v: frozenset() for v in graph.nodes})
            classes = [r.graph_class for r in classify_components(inst, config.listcolor_treewidth)]
            details["listcolor_classes"] = classes
            if "backtracking" not in classes:
                return StrategyChoice(
                    strategy="vclc",
                    rationale=f"vertex cover of size {size} and an easy inequality graph",
                    details=details,
                )

    try:
        width, _ = treewidth_exact(augmented_graph(q, inequalities), config.treewidth_exact_limit)
        details["tw_augmented"] = width
        domain = len(db.active_domain)
        if width <= config.augment_treewidth and domain <= config.augment_domain_limit:
            return StrategyChoice(
                strategy="augment",
                rationale=f"augmented treewidth {width} with {domain} domain values",
                details=details,
            )
    except GraphGuardError:
        details["tw_augmented"] = None

    return StrategyChoice(strategy="plan", rationale="transformed plan with H-projections", details=details)


@dataclass
class EvaluationResult:
    relation: Relation
    strategy: str
    seconds: float
    choice: Optional[StrategyChoice] = None
    stats: Dict[str, Any] = field(default_factory=dict)

    @property
    def is_boolean(self) -> bool:
        return not self.relation.schema


class QueryEvaluationPipeline:
    def __init__(self, config: Config):
        self.config = config

    def evaluate(
        self,
        q: CQ,
        inequalities: InequalitySet,
        db: Database,
        strategy: str = "auto",
        plan: Optional[QueryPlan] = None,
        family: str = "exhaustive",
        reps: Optional[int] = None,
        seed: Optional[int] = None,
    ) -> EvaluationResult:
        """
        Evaluate (q, I) on a database with the requested strategy

        Args:
            q: Query
            inequalities: Inequalities over the query variables
            db: Database with every relation the query names
            strategy: One of STRATEGIES; auto dispatches with choose_strategy
            plan: Plan for the plan strategy (default: left-deep plan)
            family: Hash family for colorcode (exhaustive or random)
            reps: Random functions for colorcode (default: from the failure bound)
            seed: Seed for the random family (default: configuration)

        Returns:
            EvaluationResult with the answer relation and strategy statistics
        """
        if strategy not in STRATEGIES:
            raise StrategyInapplicableError(f"Unknown strategy {strategy!r}")
        choice = None
        if strategy == "auto":
            choice = choose_strategy(q, inequalities, db, self.config)
            strategy = choice.strategy
            logger.info(f"Dispatching to {strategy}: {choice.rationale}")
        else:
            logger.info(f"Evaluating {q.name} with strategy {strategy}")

        started = time.perf_counter()
        stats: Dict[str, Any] = {}
        threads = self.config.threads
        if strategy == "oracle":
            relation = eval_oracle(q, inequalities, db)
        elif strategy == "plan":
            plan_stats = EvalStats()
            relation = eval_transformed_plan(q, inequalities, db, plan, plan_stats, max_workers=threads)
            stats = plan_stats.model_dump()
        elif strategy == "colorcode":
            relation = eval_colorcode(
                q,
                inequalities,
                db,
                family=family,
                seed=self.config.seed if seed is None else seed,
                reps=reps if reps is not None else self.config.colorcode_reps,
                failure=self.config.colorcode_failure,
                domain_limit=self.config.exhaustive_domain_limit,
                max_workers=threads,
            )
        elif strategy == "augment":
            relation = eval_augment(q, inequalities, db, self.config.augment_domain_limit)
        elif strategy == "cover":
            relation = eval_full_then_filter(q, inequalities, db, self.config.cover_bound, stats)
        elif strategy == "vclc":
            relation = boolean_relation(
                eval_vertex_cover_listcolor(
                    q, inequalities, db, self.config.vertex_cover_bound, self.config.listcolor_treewidth
                )
            )
        else:
            relation = self._eval_cycle(q, inequalities, db, stats)

        seconds = time.perf_counter() - started
        logger.info(f"{strategy} returned {len(relation)} tuples in {seconds:.3f}s")
        return EvaluationResult(relation, strategy, seconds, choice, stats)

    def _eval_cycle(self, q: CQ, inequalities: InequalitySet, db: Database, stats: Dict[str, Any]) -> Relation:
        match = match_even_cycle(q)
        if match is None:
            raise StrategyInapplicableError("Cycle strategy needs R(v1, v2), ..., R(v2k, v1) over one relation")
        relation, order = match
        rename = {v: f"x{i}" for i, v in enumerate(order, 1)}
        renamed = InequalitySet.of(
            ((rename[a], rename[b]) for a, b in inequalities),
            ((rename[v], c) for v, c in inequalities.constants),
        )
        cycle_stats = CycleStats()
        found = eval_even_cycle_ineq(db[relation], len(order) // 2, renamed, cycle_stats)
        stats.update(cycle_stats.model_dump())
        return boolean_relation(found)
