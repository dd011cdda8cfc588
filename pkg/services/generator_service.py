"""
Instance generators: query families, hardness reductions and random instances
"""
import os
import random
from dataclasses import dataclass
from typing import Dict, Hashable, Iterable, List, Optional, Sequence, Tuple

import networkx as nx

from schemas.plans import BipartiteIneqGraph
from schemas.schemas import CQ, Atom, Constant, Database, InequalitySet, Relation, Row, Variable, Value
from services.graph_service import integer_vertex_packing_max
from services.query_service import format_query, validate_query
from services.relational_service import save_database
from utils.logger import setup_logger

logger = setup_logger(__name__)


class GeneratorError(Exception):
    """Custom exception for generator parameters that cannot produce an instance"""
    pass


def _x(i: int) -> str:
    return f"x{i}"


def _binary(relation: str, a: str, b: str) -> Atom:
    return Atom(relation, (Variable(a), Variable(b)))


def _check_positive(name: str, value: int, minimum: int = 1) -> None:
    if value < minimum:
        raise GeneratorError(f"{name} must be at least {minimum}, got {value}")


# ------------------------------------------------------------ query families


def path_query(k: int, head: Sequence[str] = ()) -> CQ:
    """R1(x1, x2), R2(x2, x3), ..., Rk(xk, x{k+1})"""
    _check_positive("k", k)
    return CQ(f"P{k}", tuple(head), tuple(_binary(f"R{i}", _x(i), _x(i + 1)) for i in range(1, k + 1)))


def cycle_query(k: int, head: Sequence[str] = ()) -> CQ:
    """R1(x1, x2), ..., Rk(xk, x1)"""
    _check_positive("k", k, 2)
    atoms = [_binary(f"R{i}", _x(i), _x(i % k + 1)) for i in range(1, k + 1)]
    return CQ(f"C{k}", tuple(head), tuple(atoms))


def even_cycle_query(k: int, relation: str = "R") -> CQ:
    """A directed cycle of length 2k over a single binary relation."""
    _check_positive("k", k)
    n = 2 * k
    atoms = [_binary(relation, _x(i), _x(i % n + 1)) for i in range(1, n + 1)]
    return CQ(f"C2x{k}", (), tuple(atoms))


def single_atom_query(k: int) -> CQ:
    """R(x1, ..., xk)"""
    _check_positive("k", k)
    return CQ(f"S{k}", (), (Atom("R", tuple(Variable(_x(i)) for i in range(1, k + 1))),))


def star_query(n: int) -> CQ:
    """R1(y, x1), ..., Rn(y, xn)"""
    _check_positive("n", n)
    return CQ(f"Z{n}", (), tuple(_binary(f"R{i}", "y", _x(i)) for i in range(1, n + 1)))


def cross_query(k: int) -> CQ:
    """R1(x1), ..., Rk(xk)"""
    _check_positive("k", k)
    return CQ(f"F{k}", (), tuple(Atom(f"R{i}", (Variable(_x(i)),)) for i in range(1, k + 1)))


QUERY_FAMILIES = {
    "path": path_query,
    "cycle": cycle_query,
    "even-cycle": even_cycle_query,
    "single": single_atom_query,
    "star": star_query,
    "cross": cross_query,
}


def snake_position(i: int, p: int) -> Tuple[int, int]:
    """Grid cell (row, column) of path variable x_i when x1..x{p*p} snake through a p x p grid."""
    row, offset = divmod(i - 1, p)
    return row, offset if row % 2 == 0 else p - 1 - offset


def snake_variable(row: int, column: int, p: int) -> int:
    offset = column if row % 2 == 0 else p - 1 - column
    return row * p + offset + 1


def _grid_vertical_pairs(p: int) -> List[Tuple[int, int]]:
    return [
        (snake_variable(r, c, p), snake_variable(r + 1, c, p)) for r in range(p - 1) for c in range(p)
    ]


def grid_formula_pairs(p: int, zero_based: bool = False) -> List[Tuple[int, int]]:
    """
    Pairs produced by the closed-form index formula i -> floor(i/p) + 1 + 2p - (i mod p)

    With zero_based=True, i runs over 0..p(p-1)-1 and both sides are shifted
    by one before comparing with 1-based variables.
    """
    if zero_based:
        return [(i + 1, i // p + 1 + 2 * p - (i % p) + 1) for i in range(p * (p - 1))]
    return [(i, i // p + 1 + 2 * p - (i % p)) for i in range(1, p * (p - 1) + 1)]


def grid_formula_reading(p: int) -> Optional[str]:
    """Which indexing reading of the formula yields exactly the vertical grid edges, if any."""
    expected = {frozenset(e) for e in _grid_vertical_pairs(p)}
    for name, zero_based in (("one-based", False), ("zero-based", True)):
        if {frozenset(e) for e in grid_formula_pairs(p, zero_based)} == expected:
            return name
    return None


def path_inequalities(k: int, pattern: str) -> InequalitySet:
    """
    Inequality patterns over the k+1 variables of the path query

    i1: x_i != x_{i+2}; i2: x_i != x_{i+(k+1)/2}; i3: x_i != x_{k+2-i}
    (i2 and i3 for odd k); i4: the vertical edges of the snake grid
    (k+1 must be a square); complete: every pair.
    """
    n = k + 1
    if pattern == "i1":
        pairs = [(_x(i), _x(i + 2)) for i in range(1, k)]
    elif pattern in ("i2", "i3"):
        if k % 2 == 0:
            raise GeneratorError(f"Pattern {pattern} needs an odd k, got {k}")
        half = (k + 1) // 2
        if pattern == "i2":
            pairs = [(_x(i), _x(i + half)) for i in range(1, half + 1)]
        else:
            pairs = [(_x(i), _x(k + 2 - i)) for i in range(1, half + 1)]
    elif pattern == "i4":
        p = round(n ** 0.5)
        if p * p != n or p < 2:
            raise GeneratorError(f"Pattern i4 needs k+1 to be a square of at least 4, got {n}")
        pairs = [(_x(a), _x(b)) for a, b in _grid_vertical_pairs(p) if abs(a - b) != 1]
    elif pattern == "complete":
        pairs = [(_x(i), _x(j)) for i in range(1, n + 1) for j in range(i + 1, n + 1)]
    else:
        raise GeneratorError(f"Unknown inequality pattern {pattern!r}")
    return InequalitySet.of(pairs)


def complete_inequalities(variables: Sequence[str]) -> InequalitySet:
    return InequalitySet.of((a, b) for i, a in enumerate(variables) for b in variables[i + 1:])


# ------------------------------------------------------------ worked example


@dataclass
class RunningExample:
    graph: BipartiteIneqGraph
    relation: Relation
    order: List[Row]


def gen_running_example() -> RunningExample:
    """
    Witness relation over (x1, x2) and H with right side (y1, y2, y3)

    The scan order places (2,2), (2,4) and (10,2) last; with it the
    forbidden-tuple tree has ten leaves and E_H keeps seven tuples.
    """
    graph = BipartiteIneqGraph(
        ("x1", "x2"),
        ("y1", "y2", "y3"),
        frozenset({("x1", "y1"), ("x1", "y2"), ("x2", "y2"), ("x2", "y3")}),
    )
    order = [(1, 1), (1, 2), (1, 4), (1, 8), (2, 1), (2, 3), (3, 2), (5, 2), (2, 2), (2, 4), (10, 2)]
    return RunningExample(graph, Relation.from_rows(("x1", "x2"), order), order)


def running_example_query(s_rows: Iterable[Row]) -> Tuple[CQ, InequalitySet, Database]:
    """q() :- R(x1, x2), S(y1, y2, y3) with the running example's edges as inequalities."""
    example = gen_running_example()
    q = CQ(
        "q2",
        (),
        (
            Atom("R", (Variable("x1"), Variable("x2"))),
            Atom("S", (Variable("y1"), Variable("y2"), Variable("y3"))),
        ),
    )
    inequalities = InequalitySet.of(example.graph.edges)
    db = Database({
        "R": example.relation.rename(("R.1", "R.2")),
        "S": Relation.from_rows(("S.1", "S.2", "S.3"), s_rows),
    })
    return q, inequalities, db


# --------------------------------------------------------------- reductions


def gen_3coloring_reduction(
    graph: nx.Graph, family: str = "path", q: Optional[CQ] = None
) -> Tuple[CQ, InequalitySet, Database]:
    """
    Graph 3-coloring as a query with inequalities

    Every graph vertex is mapped to a variable of a vertex packing; the
    relation of the (single) atom holding that variable lists the three
    colors at its position and 0 elsewhere. Other atoms hold one all-zero
    tuple. The query is true iff the graph is 3-colorable.

    Args:
        graph: Undirected graph to color
        family: path, star or cross (ignored when q is given)
        q: Query to reduce into; needs an integer vertex packing of |V| variables
    """
    vertices = sorted(graph.nodes, key=str)
    n = max(len(vertices), 1)
    if q is None:
        if family == "path":
            q = path_query(2 * n - 1)
        elif family == "star":
            q = star_query(n)
        elif family == "cross":
            q = cross_query(n)
        else:
            raise GeneratorError(f"Unknown reduction family {family!r}")
    if len(set(a.relation for a in q.atoms)) != len(q.atoms):
        raise GeneratorError("The reduction needs one relation per atom")

    size, packing = integer_vertex_packing_max(q)
    if size < len(vertices):
        raise GeneratorError(f"Query {q.name} has vertex packing {size}, graph has {len(vertices)} vertices")
    chosen = dict(zip(packing, vertices))
    variable_of: Dict[Hashable, str] = {v: x for x, v in chosen.items()}

    relations = {}
    for atom in q.atoms:
        colored = [i for i, t in enumerate(atom.terms) if isinstance(t, Variable) and t.name in chosen]
        base = tuple(t.value if isinstance(t, Constant) else 0 for t in atom.terms)
        rows = [base]
        if colored:
            i = colored[0]
            rows = [base[:i] + (c,) + base[i + 1:] for c in (1, 2, 3)]
        schema = tuple(f"{atom.relation}.{j + 1}" for j in range(atom.arity))
        relations[atom.relation] = Relation.from_rows(schema, rows)

    inequalities = InequalitySet.of((variable_of[a], variable_of[b]) for a, b in graph.edges if a != b)
    validate_query(q, inequalities)
    return q, inequalities, Database(relations)


@dataclass
class GridReduction:
    query: CQ
    inequalities: InequalitySet
    database: Database
    grid: nx.Graph
    lists: Dict[Tuple[int, int], frozenset]
    formula_reading: Optional[str]


def gen_grid_listcolor_reduction(p: int, lists: Dict[Tuple[int, int], Iterable[Value]]) -> GridReduction:
    """
    List coloring on the p x p grid as a path query with inequalities

    The path visits the grid row by row in alternating direction; R_i holds
    the pairs (a, b), a != b, of colors admissible at x_i and x_{i+1}. The
    vertical grid edges not on the path become inequalities.

    Args:
        p: Grid side, at least 2
        lists: Admissible colors per grid cell (row, column), 0-based
    """
    _check_positive("p", p, 2)
    cells = [(r, c) for r in range(p) for c in range(p)]
    missing = [cell for cell in cells if cell not in lists]
    if missing:
        raise GeneratorError(f"No color list for grid cells {missing}")
    colors = {cell: frozenset(lists[cell]) for cell in cells}

    k = p * p - 1
    q = path_query(k)
    inequalities = path_inequalities(k, "i4")
    relations = {}
    for i in range(1, k + 1):
        left, right = colors[snake_position(i, p)], colors[snake_position(i + 1, p)]
        rows = [(a, b) for a in left for b in right if a != b]
        relations[f"R{i}"] = Relation.from_rows((f"R{i}.1", f"R{i}.2"), rows)

    reading = grid_formula_reading(p)
    if reading is None:
        logger.warning(
            f"Closed-form grid inequality formula does not reproduce the vertical edges for p={p} "
            f"under either indexing; using the structural edges"
        )
    return GridReduction(q, inequalities, Database(relations), nx.grid_2d_graph(p, p), colors, reading)


# ------------------------------------------------------------ random instances


def gen_path_instances(
    k: int, domain_size: int, density: float, seed: int = 0, tuples: Optional[int] = None
) -> Database:
    """
    Random relations R1..Rk over {1..domain_size}^2

    Args:
        density: Probability that each pair is present (1.0 gives complete relations)
        tuples: Draw exactly this many distinct pairs per relation instead
    """
    _check_positive("k", k)
    _check_positive("domain_size", domain_size)
    if not 0 <= density <= 1:
        raise GeneratorError(f"density must lie in [0, 1], got {density}")
    rng = random.Random(seed)
    relations = {}
    for i in range(1, k + 1):
        if tuples is not None:
            target = min(tuples, domain_size * domain_size)
            drawn: set = set()
            while len(drawn) < target:
                drawn.add((rng.randint(1, domain_size), rng.randint(1, domain_size)))
            rows = sorted(drawn)
        else:
            rows = [
                (a, b)
                for a in range(1, domain_size + 1)
                for b in range(1, domain_size + 1)
                if rng.random() < density
            ]
        relations[f"R{i}"] = Relation.from_rows((f"R{i}.1", f"R{i}.2"), rows)
    return Database(relations)


def gen_random_cq(
    seed: int,
    max_atoms: int = 4,
    max_arity: int = 2,
    max_variables: int = 5,
    max_inequalities: int = 4,
    domain_size: int = 5,
    max_tuples: int = 8,
    allow_constants: bool = True,
) -> Tuple[CQ, InequalitySet, Database]:
    """Small random query, inequalities and database, reproducible from the seed."""
    rng = random.Random(seed)
    n_vars = rng.randint(1, max_variables)
    names = [_x(i) for i in range(1, n_vars + 1)]
    n_atoms = rng.randint(1, max_atoms)
    relation_names = [f"R{i}" for i in range(1, n_atoms + 1)]
    arities: Dict[str, int] = {}
    atoms = []
    for _ in range(n_atoms):
        relation = rng.choice(relation_names)
        arity = arities.setdefault(relation, rng.randint(1, max_arity))
        terms = []
        for _ in range(arity):
            if allow_constants and rng.random() < 0.1:
                terms.append(Constant(rng.randint(1, domain_size)))
            else:
                terms.append(Variable(rng.choice(names)))
        atoms.append(Atom(relation, tuple(terms)))
    if not any(isinstance(t, Variable) for a in atoms for t in a.terms):
        atoms[0] = Atom(atoms[0].relation, (Variable(names[0]),) + atoms[0].terms[1:])

    body = CQ("q", (), tuple(atoms)).variables
    head = tuple(v for v in body if rng.random() < 0.4)
    candidates = [(a, b) for i, a in enumerate(body) for b in body[i + 1:]]
    pairs = rng.sample(candidates, min(len(candidates), rng.randint(0, max_inequalities)))
    inequalities = InequalitySet.of(pairs)
    q = CQ("q", head, tuple(atoms))
    validate_query(q, inequalities)

    relations = {}
    for relation, arity in arities.items():
        rows = [tuple(rng.randint(1, domain_size) for _ in range(arity)) for _ in range(rng.randint(0, max_tuples))]
        relations[relation] = Relation.from_rows(tuple(f"{relation}.{j + 1}" for j in range(arity)), rows)
    return q, inequalities, Database(relations)


def write_instance(directory: str, q: CQ, inequalities: InequalitySet, db: Database) -> List[str]:
    """Write query.cq plus one CSV per relation."""
    os.makedirs(directory, exist_ok=True)
    query_path = os.path.join(directory, "query.cq")
    with open(query_path, "w", encoding="utf-8") as handle:
        handle.write(format_query(q, inequalities) + "\n")
    written = [query_path] + save_database(directory, db)
    logger.info(f"Wrote {len(written)} files to {directory}")
    return written


def gen_random_database(q: CQ, domain_size: int, tuples: int, seed: int = 0) -> Database:
    """Up to `tuples` distinct random rows over {1..domain_size} for every relation q names."""
    _check_positive("domain_size", domain_size)
    rng = random.Random(seed)
    relations = {}
    for relation, arity in sorted(q.arities().items()):
        target = min(tuples, domain_size ** arity)
        drawn: set = set()
        while len(drawn) < target:
            drawn.add(tuple(rng.randint(1, domain_size) for _ in range(arity)))
        relations[relation] = Relation.from_rows(tuple(f"{relation}.{j + 1}" for j in range(arity)), drawn)
    return Database(relations)
