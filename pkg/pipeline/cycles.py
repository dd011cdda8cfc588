"""
Even-cycle detection over a binary relation, with and without inequalities
"""
import math
from collections import defaultdict
from typing import Dict, List, Optional, Sequence, Tuple

from pydantic import BaseModel, Field

from schemas.plans import BipartiteIneqGraph
from schemas.schemas import CQ, Atom, Constant, Database, InequalitySet, Relation, Variable, tuple_key
from services.ineq_service import h_project, phi
from services.plan_service import PlanError
from pipeline.strategies import eval_transformed_plan
from utils.logger import setup_logger

logger = setup_logger(__name__)


class CycleContractError(Exception):
    """Custom exception for inputs the even-cycle algorithms do not accept"""
    pass


class CycleStats(BaseModel):
    """Work and size counters of one even-cycle run"""
    tuples: int = Field(default=0, description="N, the size of the relation")
    delta: int = Field(default=0, description="Degree threshold for heavy values")
    heavy: int = Field(default=0, description="Number of heavy values")
    heavy_work: int = Field(default=0, description="Edges scanned by the pinned searches")
    light_paths: int = Field(default=0, description="Paths of k light edges materialized")
    light_bound: int = Field(default=0, description="N * delta^(k-1)")
    projected: List[int] = Field(default_factory=list, description="Sizes of the two H-projected path relations")
    projected_bounds: List[float] = Field(default_factory=list, description="e * phi * distinct endpoint pairs")
    found_in: Optional[str] = Field(default=None, description="heavy, light or None")
    bound_violations: List[str] = Field(default_factory=list, description="Size bounds exceeded during the run")


def _x(i: int) -> str:
    return f"x{i}"


def match_even_cycle(q: CQ) -> Optional[Tuple[str, List[str]]]:
    """
    Recognize R(v1, v2), R(v2, v3), ..., R(v2k, v1) up to atom order

    Returns:
        (relation, [v1, ..., v2k]) or None
    """
    if not q.is_boolean or len(q.atoms) % 2 or not q.atoms:
        return None
    relation = q.atoms[0].relation
    succ: Dict[str, str] = {}
    for atom in q.atoms:
        if atom.relation != relation or atom.arity != 2:
            return None
        if not all(isinstance(t, Variable) for t in atom.terms):
            return None
        a, b = atom.terms[0].name, atom.terms[1].name
        if a in succ or a == b:
            return None
        succ[a] = b
    start = q.atoms[0].terms[0].name
    order, v = [], start
    for _ in range(len(q.atoms)):
        order.append(v)
        v = succ.get(v)
        if v is None:
            return None
    if v != start or len(set(order)) != len(order):
        return None
    return relation, order


def _check(relation: Relation, k: int) -> None:
    if relation.arity != 2:
        raise CycleContractError(f"Even-cycle detection needs a binary relation, got arity {relation.arity}")
    if k < 1:
        raise CycleContractError(f"k must be at least 1, got {k}")


def _successors(rows) -> Dict:
    succ = defaultdict(set)
    for a, b in rows:
        succ[a].add(b)
    return succ


def _threshold(n: int, k: int) -> int:
    return max(1, math.ceil(n ** (1 / k) - 1e-9))


def _paths(succ: Dict, k: int) -> List[Tuple]:
    """All walks of k edges as (v0, ..., vk)."""
    paths = [(a,) for a in succ]
    for _ in range(k):
        paths = [p + (b,) for p in paths for b in succ.get(p[-1], ())]
    return paths


def _split(relation: Relation, k: int, stats: CycleStats):
    n = len(relation)
    delta = _threshold(n, k)
    succ = _successors(relation.tuples)
    heavy = sorted((a for a, out in succ.items() if len(out) >= delta), key=str)
    light_rows = [(a, b) for a, b in relation.tuples if len(succ[a]) < delta and len(succ.get(b, ())) < delta]
    stats.tuples, stats.delta, stats.heavy = n, delta, len(heavy)
    stats.light_bound = n * delta ** (k - 1)
    return succ, heavy, _successors(light_rows)


def _record_light(stats: CycleStats, count: int) -> None:
    stats.light_paths += count
    if stats.light_paths > 2 * stats.light_bound:
        message = f"Light paths {stats.light_paths} exceed 2 * N * delta^(k-1) = {2 * stats.light_bound}"
        stats.bound_violations.append(message)
        logger.error(message)


def eval_even_cycle(relation: Relation, k: int, stats: Optional[CycleStats] = None) -> bool:
    """
    Is there a closed walk of 2k edges in the relation?

    Values with out-degree at least ceil(N^(1/k)) are heavy: a walk through a
    heavy value is found by a layered search pinned at it. Otherwise the walk
    splits into two k-edge halves over light edges, whose endpoint pairs are
    intersected.
    """
    _check(relation, k)
    stats = stats if stats is not None else CycleStats()
    if relation.is_empty():
        return False
    succ, heavy, light = _split(relation, k, stats)

    for a in heavy:
        layer = {a}
        for _ in range(2 * k):
            stats.heavy_work += sum(len(succ.get(v, ())) for v in layer)
            layer = {b for v in layer for b in succ.get(v, ())}
            if not layer:
                break
        if a in layer:
            stats.found_in = "heavy"
            return True

    paths = _paths(light, k)
    _record_light(stats, 2 * len(paths))
    forward = sorted({(p[0], p[-1]) for p in paths}, key=tuple_key)
    backward = sorted({(p[-1], p[0]) for p in paths}, key=tuple_key)
    if _sorted_intersect(forward, backward):
        stats.found_in = "light"
        return True
    return False


def _sorted_intersect(a: Sequence, b: Sequence) -> bool:
    i = j = 0
    while i < len(a) and j < len(b):
        ka, kb = tuple_key(a[i]), tuple_key(b[j])
        if ka == kb:
            return True
        if ka < kb:
            i += 1
        else:
            j += 1
    return False


def _pinned_query(k: int, position: int, value, inequalities: InequalitySet) -> Optional[Tuple[CQ, InequalitySet]]:
    """The 2k-cycle with x_position replaced by a constant; None if an inequality rules the value out."""
    n = 2 * k
    pinned = _x(position)
    if (pinned, value) in inequalities.constants:
        return None

    def term(i: int):
        return Constant(value) if _x(i) == pinned else Variable(_x(i))

    atoms = tuple(Atom("R", (term(i), term(i % n + 1))) for i in range(1, n + 1))
    pairs = [(a, b) for a, b in inequalities if pinned not in (a, b)]
    constants = [(b if a == pinned else a, value) for a, b in inequalities if pinned in (a, b)]
    constants += [(v, c) for v, c in inequalities.constants if v != pinned]
    return CQ(f"C2x{k}_at_{position}", (), atoms), InequalitySet.of(pairs, constants)


def eval_even_cycle_ineq(
    relation: Relation, k: int, inequalities: InequalitySet, stats: Optional[CycleStats] = None
) -> bool:
    """
    Even-cycle detection where the cycle variables x1..x2k must satisfy inequalities

    Heavy values are pinned at every cycle position and the remaining acyclic
    query is answered through the transformed plan. For light cycles, the
    halves x1..x{k+1} and x{k+1}..x2k,x1 are filtered by their own
    inequalities, H-projected on their endpoints against the inequalities
    that cross halves, joined on the endpoints, and the crossing
    inequalities checked on the kept witnesses.
    """
    _check(relation, k)
    n = 2 * k
    names = [_x(i) for i in range(1, n + 1)]
    unknown = [v for v in inequalities.variables if v not in names]
    unknown += [v for v, _ in inequalities.constants if v not in names]
    if unknown:
        raise CycleContractError(f"Inequalities mention {sorted(set(unknown))}, expected x1..x{n}")
    if inequalities.is_empty():
        return eval_even_cycle(relation, k, stats)
    stats = stats if stats is not None else CycleStats()
    if relation.is_empty():
        return False

    succ, heavy, light = _split(relation, k, stats)
    database = Database({"R": relation.rename(("R.1", "R.2"))})
    for a in heavy:
        for position in range(1, n + 1):
            instance = _pinned_query(k, position, a, inequalities)
            if instance is None:
                continue
            q, pinned = instance
            try:
                answer = eval_transformed_plan(q, pinned, database)
            except PlanError as e:
                raise CycleContractError(f"Pinned query at x{position} failed: {e}") from e
            stats.heavy_work += len(relation)
            if not answer.is_empty():
                stats.found_in = "heavy"
                return True

    first = names[: k + 1]
    second = names[k:] + [names[0]]
    i1 = inequalities.restricted_to(first)
    i2 = inequalities.restricted_to(second)
    crossing = InequalitySet(inequalities.pairs - i1.pairs - i2.pairs, frozenset())

    paths = _paths(light, k)
    _record_light(stats, 2 * len(paths))
    q1 = Relation.from_rows(first, [p for p in paths if i1.satisfied_by(dict(zip(first, p)))])
    q2 = Relation.from_rows(second, [p for p in paths if i2.satisfied_by(dict(zip(second, p)))])

    ends1, ends2 = (names[0], names[k]), (names[k], names[0])
    left1, left2 = tuple(names[1:k]), tuple(names[k + 1:])
    edges1 = frozenset((a, b) if a in left1 else (b, a) for a, b in crossing)
    h1 = BipartiteIneqGraph(left1, left2, edges1)
    h2 = BipartiteIneqGraph(left2, left1, frozenset((b, a) for a, b in edges1))
    p1 = h_project(q1, ends1, h1)
    p2 = h_project(q2, ends2, h2)

    for projected, original, graph, ends in ((p1, q1, h1, ends1), (p2, q2, h2, ends2)):
        pairs = len({tuple(row[original.schema.index(e)] for e in ends) for row in original.tuples})
        bound = math.e * phi(graph) * pairs
        stats.projected.append(len(projected))
        stats.projected_bounds.append(bound)
        if len(projected) > bound:
            message = f"H-projection kept {len(projected)} tuples, above e * phi * pairs = {bound:.1f}"
            stats.bound_violations.append(message)
            logger.error(message)

    index: Dict[Tuple, List[Tuple]] = defaultdict(list)
    for row in p2.tuples:
        index[(row[-1], row[0])].append(row)
    for row in p1.tuples:
        key = (row[0], row[-1])
        for other in index.get(key, ()):
            binding = dict(zip(first, row))
            binding.update(zip(second, other))
            if crossing.satisfied_by(binding):
                stats.found_in = "light"
                return True
    return False
