"""
Color-coding evaluation of conjunctive queries with inequalities
"""
import itertools
import math
import random
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, FrozenSet, Iterator, List, Optional, Sequence, Tuple

import networkx as nx

from schemas.schemas import CQ, Database, InequalitySet, Relation, Row, Value, Variable
from services.graph_service import inequality_graph, variable_names
from services.plan_service import evaluate_query
from services.query_service import localize_atoms, preprocess_local_inequalities
from services.relational_service import union
from utils.logger import setup_logger

logger = setup_logger(__name__)

Coloring = Dict[str, int]
Evaluator = Callable[[CQ, Database], Relation]


class ColorCodingError(Exception):
    """Custom exception for hash families that cannot drive color coding"""
    pass


@dataclass
class HashFamily:
    """Explicit functions from the active domain to colors 0..colors-1."""

    functions: List[Dict[Value, int]]
    colors: int
    mode: str

    @classmethod
    def exhaustive(cls, domain: Sequence[Value], colors: int, limit: int = 8) -> "HashFamily":
        """Every function dom -> [colors]; trivially perfect, so results are exact."""
        if len(domain) > limit:
            raise ColorCodingError(
                f"Exhaustive family over {len(domain)} values exceeds the limit of {limit}; use a random family"
            )
        domain = list(domain)
        functions = [dict(zip(domain, image)) for image in itertools.product(range(colors), repeat=len(domain))]
        return cls(functions, colors, "exhaustive")

    @classmethod
    def seeded_random(cls, domain: Sequence[Value], colors: int, repetitions: int, seed: int = 0) -> "HashFamily":
        rng = random.Random(seed)
        functions = [{v: rng.randrange(colors) for v in domain} for _ in range(repetitions)]
        return cls(functions, colors, "random")

    def covers(self, domain: Sequence[Value]) -> bool:
        return all(all(v in h for v in domain) for h in self.functions)

    def __len__(self) -> int:
        return len(self.functions)


def repetitions_for(k: int, failure: float) -> int:
    """Random functions needed so each answer survives with probability >= 1 - failure."""
    if k == 0:
        return 1
    return math.ceil(math.exp(k) * math.log(1 / failure))


def valid_colorings(graph: nx.Graph, colors: int) -> Iterator[Coloring]:
    """Proper colorings of the inequality graph, by backtracking over sorted variables."""
    if colors < 1:
        raise ColorCodingError("At least one color is required")
    variables = sorted(variable_names(graph.nodes))
    neighbors = {v: set(variable_names(graph.neighbors(("var", v)))) for v in variables}
    coloring: Coloring = {}

    def extend(i: int) -> Iterator[Coloring]:
        if i == len(variables):
            yield dict(coloring)
            return
        v = variables[i]
        used = {coloring[u] for u in neighbors[v] if u in coloring}
        for c in range(colors):
            if c not in used:
                coloring[v] = c
                yield from extend(i + 1)
                del coloring[v]

    yield from extend(0)


ColorIndex = Dict[str, Tuple[List[str], Dict[Tuple[int, ...], FrozenSet[Row]]]]


def _colored_positions(atom, colored) -> List[Tuple[int, str]]:
    return [(i, t.name) for i, t in enumerate(atom.terms) if isinstance(t, Variable) and t.name in colored]


def color_index(db: Database, q: CQ, h: Dict[Value, int], colored) -> ColorIndex:
    """Rows of every constrained atom grouped by the hashed colors of its colored positions."""
    index: ColorIndex = {}
    for atom in q.atoms:
        positions = _colored_positions(atom, colored)
        if not positions or atom.relation not in db:
            continue
        groups: Dict[Tuple[int, ...], set] = defaultdict(set)
        for row in db[atom.relation].tuples:
            groups[tuple(h[row[i]] for i, _ in positions)].add(row)
        index[atom.relation] = ([v for _, v in positions], {s: frozenset(rows) for s, rows in groups.items()})
    return index


def _restrict(index: ColorIndex, coloring: Coloring) -> Dict[str, FrozenSet[Row]]:
    return {
        name: rows.get(tuple(coloring[v] for v in variables), frozenset())
        for name, (variables, rows) in index.items()
    }


def subinstance(db: Database, coloring: Coloring, h: Dict[Value, int], q: CQ) -> Database:
    """
    Keep the tuples whose hashed values agree with the coloring

    Atoms of q must have private relations (see localize_atoms); positions
    holding uncolored variables or constants are not constrained.
    """
    kept = _restrict(color_index(db, q, h, set(coloring)), coloring)
    return db.with_relations({name: Relation(db[name].schema, rows) for name, rows in kept.items()})


def canonical_colorings(colorings: Sequence[Coloring]) -> List[Coloring]:
    """
    One coloring per orbit under renaming colors

    A coloring is kept when, in sorted variable order, every color it uses
    first appears right after the colors already used. Valid only with a
    family closed under color renaming, such as the exhaustive one.
    """
    kept = []
    for c in colorings:
        top = -1
        for v in sorted(c):
            if c[v] > top + 1:
                break
            top = max(top, c[v])
        else:
            kept.append(c)
    return kept


def eval_colorcoding(
    q: CQ,
    inequalities: InequalitySet,
    db: Database,
    family: HashFamily,
    inner: Optional[Evaluator] = None,
    max_workers: int = 1,
) -> Relation:
    """
    Union of inner(q, D[c, h]) over every function h and valid coloring c

    Equal subinstances are evaluated once.

    Args:
        q: Query
        inequalities: Inequalities to enforce
        db: Database
        family: Hash family covering the active domain
        inner: Evaluator for plain CQs (default: the left-deep plan)
        max_workers: Functions are independent and may run concurrently

    Returns:
        Relation over the head variables; exact for an exhaustive family
    """
    inner = inner or evaluate_query
    q1, remaining, db1 = preprocess_local_inequalities(q, inequalities, db)
    if not remaining.pairs:
        return inner(q1, db1)

    domain = db1.active_domain
    if not family.covers(domain):
        raise ColorCodingError("Hash family does not cover the active domain")
    graph = inequality_graph(remaining)
    k = graph.number_of_nodes()
    if family.colors < k:
        raise ColorCodingError(f"Family uses {family.colors} colors but the inequality graph has {k} vertices")

    q2, db2 = localize_atoms(q1, db1)
    colorings = list(valid_colorings(graph, family.colors))
    if len(colorings) > family.colors ** k:
        raise ColorCodingError("More valid colorings than p^k")
    if family.mode == "exhaustive":
        colorings = canonical_colorings(colorings)
    colored = set(variable_names(graph.nodes))
    logger.debug(f"Color coding: {len(family)} functions x {len(colorings)} colorings")

    seen: Dict[tuple, Optional[Relation]] = {}

    def run(h: Dict[Value, int]) -> None:
        index = color_index(db2, q2, h, colored)
        for c in colorings:
            kept = _restrict(index, c)
            key = tuple(sorted(kept.items()))
            if key in seen:
                continue
            if any(not rows for rows in kept.values()):
                seen[key] = None
                continue
            sub = db2.with_relations({name: Relation(db2[name].schema, rows) for name, rows in kept.items()})
            seen[key] = inner(q2, sub)

    if max_workers > 1 and len(family) > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            list(pool.map(run, family.functions))
    else:
        for h in family.functions:
            run(h)

    results = [r for r in seen.values() if r is not None]
    if not results:
        return Relation(tuple(q.head))
    return union(results)
