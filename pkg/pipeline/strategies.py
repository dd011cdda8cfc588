"""
Evaluation strategies for conjunctive queries with inequalities
"""
import itertools
import math
from typing import Any, Dict, List, Optional

from schemas.plans import QueryPlan
from schemas.schemas import CQ, Atom, Constant, Database, InequalitySet, Relation, SchemaError, Variable
from services import relational_service as rel
from services.colorcode_service import HashFamily, eval_colorcoding, repetitions_for
from services.graph_service import fractional_edge_cover_min, inequality_graph, vertex_cover_min
from services.listcolor_service import ListColoringInstance, solve_components
from services.plan_service import (
    EvalStats,
    PlanError,
    default_plan,
    eval_plan,
    evaluate_query,
    infer_provenance,
    rebind_scans,
    transform,
)
from services.query_service import full_query, preprocess_local_inequalities
from utils.logger import setup_logger

logger = setup_logger(__name__)

TRUE = Relation((), frozenset({()}))
FALSE = Relation(())


class StrategyInapplicableError(Exception):
    """Custom exception for strategies whose preconditions the input does not meet"""
    pass


def boolean_relation(value: bool) -> Relation:
    return TRUE if value else FALSE


def _bindings(q: CQ, db: Database) -> List[Dict]:
    """All homomorphisms from the body into the database, atom by atom."""
    for atom in q.atoms:
        if atom.relation not in db:
            raise SchemaError(f"Relation {atom.relation} is not in the database")
        if db[atom.relation].arity != atom.arity:
            raise SchemaError(f"Relation {atom.relation} has arity {db[atom.relation].arity}, atom {atom} needs {atom.arity}")

    # Atoms with more bound variables first keeps the search narrow.
    remaining = list(q.atoms)
    order: List[Atom] = []
    bound: set = set()
    while remaining:
        nxt = max(remaining, key=lambda a: (sum(1 for v in a.variables if v in bound), -len(db[a.relation])))
        remaining.remove(nxt)
        order.append(nxt)
        bound.update(nxt.variables)

    results: List[Dict] = []

    def extend(i: int, binding: Dict) -> None:
        if i == len(order):
            results.append(dict(binding))
            return
        atom = order[i]
        for row in db[atom.relation].tuples:
            added = []
            ok = True
            for term, value in zip(atom.terms, row):
                if isinstance(term, Constant):
                    ok = term.value == value
                elif term.name in binding:
                    ok = binding[term.name] == value
                else:
                    binding[term.name] = value
                    added.append(term.name)
                if not ok:
                    break
            if ok:
                extend(i + 1, binding)
            for name in added:
                del binding[name]

    extend(0, {})
    return results


def eval_oracle(q: CQ, inequalities: InequalitySet, db: Database) -> Relation:
    """
    Reference semantics: enumerate every body match, keep those satisfying the
    inequalities, project to the head
    """
    rows = frozenset(
        tuple(b[v] for v in q.head) for b in _bindings(q, db) if inequalities.satisfied_by(b)
    )
    return Relation(tuple(q.head), rows)


def _fresh_relation(base: str, db: Database) -> str:
    name = base
    while name in db:
        name += "_"
    return name


def eval_augment(q: CQ, inequalities: InequalitySet, db: Database, domain_limit: int = 400) -> Relation:
    """Materialize a != b over the active domain as a relation and join it like any other atom."""
    q1, remaining, db1 = preprocess_local_inequalities(q, inequalities, db)
    if not remaining.pairs:
        return evaluate_query(q1, db1)
    domain = db1.active_domain
    if len(domain) > domain_limit:
        raise StrategyInapplicableError(
            f"Active domain has {len(domain)} values; augmenting needs at most {domain_limit}"
        )
    name = _fresh_relation("NEQ", db1)
    neq = Relation.from_rows((f"{name}.1", f"{name}.2"), ((a, b) for a in domain for b in domain if a != b))
    atoms = q1.atoms + tuple(Atom(name, (Variable(a), Variable(b))) for a, b in remaining)
    logger.debug(f"Augmented query with {len(remaining)} inequality atoms over {len(neq)} pairs")
    return evaluate_query(CQ(q1.name, q1.head, atoms), db1.with_relations({name: neq}))


def eval_full_then_filter(
    q: CQ, inequalities: InequalitySet, db: Database, bound: float = 2.0, stats: Optional[Dict[str, Any]] = None
) -> Relation:
    """
    Compute the full query, filter by the inequalities, then project

    Applicable when the fractional edge cover of q is at most `bound`, so the
    full result has at most |D|^cover tuples. The full size, its bound and
    any violation are written to stats.
    """
    cover = fractional_edge_cover_min(q).value
    if cover > bound:
        raise StrategyInapplicableError(f"Fractional edge cover {cover} exceeds the bound {bound}")
    full = evaluate_query(full_query(q), db)
    size = max((len(db[r]) for r in q.relation_names), default=0)
    limit = max(size, 1) ** float(cover)
    violations = []
    if len(full) > limit:
        violations.append(f"Full result has {len(full)} tuples, above the |D|^{cover} bound")
        logger.error(violations[-1])
    if stats is not None:
        stats.update(full_size=len(full), full_bound=limit, bound_violations=violations)
    rows = []
    for row in full.tuples:
        binding = dict(zip(full.schema, row))
        if inequalities.satisfied_by(binding):
            rows.append(row)
    return rel.project(Relation(full.schema, frozenset(rows)), q.head)


def eval_vertex_cover_listcolor(
    q: CQ, inequalities: InequalitySet, db: Database, cover_bound: int = 2, treewidth_bound: int = 3
) -> bool:
    """
    Boolean queries with a small vertex cover and atoms of arity at most two

    Every instantiation of the cover leaves each remaining variable with a
    list of admissible values; the inequalities between those variables turn
    the rest into a list-coloring problem.
    """
    if not q.is_boolean:
        raise StrategyInapplicableError("Vertex cover strategy answers Boolean queries only")
    if any(atom.arity > 2 for atom in q.atoms):
        raise StrategyInapplicableError("Vertex cover strategy needs atoms of arity at most two")
    size, cover = vertex_cover_min(q)
    if size > cover_bound:
        raise StrategyInapplicableError(f"Vertex cover has size {size}, bound is {cover_bound}")

    cover_set = set(cover)
    free = [v for v in q.variables if v not in cover_set]
    domain = db.active_domain
    for values in itertools.product(domain, repeat=len(cover)):
        alpha = dict(zip(cover, values))
        if not inequalities.restricted_to(cover).satisfied_by(alpha):
            continue
        lists = _residual_lists(q, db, alpha, free)
        if lists is None:
            continue
        for v, c in inequalities.constants:
            if v in lists:
                lists[v].discard(c)
        for a, b in inequalities:
            if a in alpha and b in lists:
                lists[b].discard(alpha[a])
            elif b in alpha and a in lists:
                lists[a].discard(alpha[b])
        graph = inequality_graph(inequalities.restricted_to(free), free)
        inst = ListColoringInstance(graph, {("var", v): frozenset(lists[v]) for v in free})
        outcome = solve_components(inst, treewidth_bound)
        if outcome.satisfiable:
            logger.debug(f"Cover instantiation {alpha} extends to a list coloring")
            return True
    return False


def _residual_lists(q: CQ, db: Database, alpha: Dict, free: List[str]) -> Optional[Dict[str, set]]:
    lists: Dict[str, Optional[set]] = {v: None for v in free}
    for atom in q.atoms:
        relation = db[atom.relation]
        target = [t.name for t in atom.terms if isinstance(t, Variable) and t.name not in alpha]
        values = set()
        for row in relation.tuples:
            ok = True
            for term, value in zip(atom.terms, row):
                if isinstance(term, Constant):
                    ok = term.value == value
                elif term.name in alpha:
                    ok = alpha[term.name] == value
                if not ok:
                    break
            if not ok:
                continue
            if not target:
                values.add(())
                break
            picked = {row[i] for i, t in enumerate(atom.terms) if isinstance(t, Variable) and t.name == target[0]}
            if len(picked) == 1:
                values.add(picked.pop())
        if not values:
            return None
        if target:
            z = target[0]
            lists[z] = values if lists[z] is None else lists[z] & values
            if not lists[z]:
                return None
    return {v: set(s) for v, s in lists.items()}


def eval_transformed_plan(
    q: CQ,
    inequalities: InequalitySet,
    db: Database,
    plan: Optional[QueryPlan] = None,
    stats: Optional[EvalStats] = None,
    max_workers: int = 1,
) -> Relation:
    """
    Rewrite a plan for q with H-projections and evaluate it

    Args:
        q: Query
        inequalities: Inequalities over the query variables
        db: Database
        plan: Plan computing q (default: left-deep plan in atom order)
        stats: Optional collector for per-node sizes
        max_workers: Passed to H-projections

    Returns:
        Relation over the head variables
    """
    q1, remaining, db1 = preprocess_local_inequalities(q, inequalities, db)
    if plan is None:
        plan = default_plan(q1)
    else:
        if not plan.provenance:
            plan = QueryPlan(plan.root, infer_provenance(plan.root, q))
        plan = rebind_scans(plan, q, q1)

    transformed = transform(plan, q1, remaining)
    result = eval_plan(transformed.root, db1, stats, max_workers=max_workers)

    by_variable = {}
    for attribute in result.schema:
        v = transformed.variable_of(attribute)
        if v is not None:
            by_variable.setdefault(v, attribute)
    missing = [v for v in q.head if v not in by_variable]
    if missing:
        raise PlanError(f"Plan output {result.schema} does not provide head variables {missing}")
    return rel.project(result, [by_variable[v] for v in q.head]).rename(q.head)


def eval_colorcode(
    q: CQ,
    inequalities: InequalitySet,
    db: Database,
    family: str = "exhaustive",
    seed: int = 0,
    reps: int = 0,
    failure: float = 0.01,
    domain_limit: int = 8,
    max_workers: int = 1,
) -> Relation:
    """Color coding with an exhaustive or seeded-random family over k colors."""
    _, remaining, db1 = preprocess_local_inequalities(q, inequalities, db)
    k = remaining.k
    colors = max(k, 1)
    domain = db.active_domain
    if family == "exhaustive":
        functions = HashFamily.exhaustive(domain, colors, domain_limit)
    elif family == "random":
        repetitions = reps or repetitions_for(k, failure)
        functions = HashFamily.seeded_random(domain, colors, repetitions, seed)
    else:
        raise StrategyInapplicableError(f"Unknown hash family {family!r}")
    logger.info(f"Color coding with {len(functions)} {family} functions over {colors} colors")
    return eval_colorcoding(q, inequalities, db, functions, max_workers=max_workers)


def success_probability(k: int, repetitions: int) -> float:
    """Chance that a fixed answer survives at least one of the random functions."""
    if k == 0:
        return 1.0
    single = math.factorial(k) / k ** k
    return 1 - (1 - single) ** repetitions
