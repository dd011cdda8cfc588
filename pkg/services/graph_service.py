"""
Structural analysis of queries: incidence, inequality and primal graphs,
acyclicity, treewidth, vertex packings and covers
"""
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, FrozenSet, Hashable, Iterable, List, Optional, Sequence, Set, Tuple

import networkx as nx
from networkx.algorithms.approximation import treewidth_min_fill_in

from schemas.schemas import CQ, InequalitySet
from services.lp_service import LPError, solve_lp
from utils.logger import setup_logger

logger = setup_logger(__name__)

# A tree decomposition is an nx.Graph over frozenset bags, as networkx returns them.
TreeDecomposition = nx.Graph


class GraphGuardError(Exception):
    """Custom exception for inputs beyond the size an exact solver accepts"""
    pass


def var(name: str) -> Tuple[str, str]:
    return ("var", name)


def atom_node(index: int) -> Tuple[str, int]:
    return ("atom", index)


def ineq_node(a: str, b: str) -> Tuple[str, str, str]:
    return ("ineq", a, b)


def _key(node: Hashable) -> str:
    return str(node)


def query_graph(q: CQ) -> nx.Graph:
    """Incidence graph: variables on one side, atoms on the other."""
    g = nx.Graph()
    g.add_nodes_from(var(v) for v in q.variables)
    for i, atom in enumerate(q.atoms):
        g.add_node(atom_node(i), relation=atom.relation)
        g.add_edges_from((atom_node(i), var(v)) for v in atom.variables)
    return g


def inequality_graph(inequalities: InequalitySet, variables: Optional[Iterable[str]] = None) -> nx.Graph:
    """G^I over the inequality variables (plus any extra variables given)."""
    g = nx.Graph()
    g.add_nodes_from(var(v) for v in inequalities.variables)
    if variables is not None:
        g.add_nodes_from(var(v) for v in variables)
    g.add_edges_from((var(a), var(b)) for a, b in inequalities)
    return g


def augmented_graph(q: CQ, inequalities: InequalitySet) -> nx.Graph:
    """Incidence graph with one extra atom node per inequality."""
    g = query_graph(q)
    for a, b in inequalities:
        node = ineq_node(a, b)
        g.add_edge(node, var(a))
        g.add_edge(node, var(b))
    return g


def primal_graph(q: CQ, inequalities: Optional[InequalitySet] = None) -> nx.Graph:
    """Variables adjacent when they share an atom (or an inequality, if given)."""
    g = nx.Graph()
    g.add_nodes_from(var(v) for v in q.variables)
    for atom in q.atoms:
        names = atom.variables
        for i, a in enumerate(names):
            for b in names[i + 1:]:
                g.add_edge(var(a), var(b))
    if inequalities is not None:
        g.add_edges_from((var(a), var(b)) for a, b in inequalities)
    return g


def gyo_is_acyclic(q: CQ) -> bool:
    """
    GYO reduction: drop variables that occur in one hyperedge only and
    hyperedges contained in another; acyclic iff nothing remains.
    """
    edges: List[Set[str]] = [set(atom.variables) for atom in q.atoms]
    changed = True
    while changed:
        changed = False
        counts: Dict[str, int] = {}
        for e in edges:
            for v in e:
                counts[v] = counts.get(v, 0) + 1
        for e in edges:
            lonely = {v for v in e if counts[v] == 1}
            if lonely:
                e -= lonely
                changed = True
        kept: List[Set[str]] = []
        for i, e in enumerate(edges):
            contained = not e or any(
                (e < other) or (e == other and j < i) for j, other in enumerate(edges) if j != i
            )
            if contained:
                changed = True
            else:
                kept.append(e)
        edges = kept
    return not edges


# ----------------------------------------------------------------- treewidth


def _adjacency(g: nx.Graph) -> Dict[Hashable, Set[Hashable]]:
    return {v: set(g.neighbors(v)) - {v} for v in g.nodes}


def _eliminate(adj: Dict[Hashable, Set[Hashable]], v: Hashable) -> Dict[Hashable, Set[Hashable]]:
    neighbors = adj[v]
    out = {u: set(n) for u, n in adj.items() if u != v}
    for u in neighbors:
        out[u].discard(v)
        out[u].update(neighbors - {u})
    return out


def _fill_in(adj: Dict[Hashable, Set[Hashable]], v: Hashable) -> int:
    n = sorted(adj[v], key=_key)
    return sum(1 for i, a in enumerate(n) for b in n[i + 1:] if b not in adj[a])


def _is_simplicial(adj: Dict[Hashable, Set[Hashable]], v: Hashable) -> bool:
    return _fill_in(adj, v) == 0


def _min_fill_order(adj: Dict[Hashable, Set[Hashable]]) -> Tuple[int, List[Hashable]]:
    width, order = 0, []
    while adj:
        v = min(adj, key=lambda u: (_fill_in(adj, u), _key(u)))
        width = max(width, len(adj[v]))
        order.append(v)
        adj = _eliminate(adj, v)
    return width, order


def _degeneracy(adj: Dict[Hashable, Set[Hashable]]) -> int:
    """Lower bound: largest minimum degree seen while deleting min-degree vertices."""
    adj = {u: set(n) for u, n in adj.items()}
    best = 0
    while adj:
        v = min(adj, key=lambda u: (len(adj[u]), _key(u)))
        best = max(best, len(adj[v]))
        for u in adj[v]:
            adj[u].discard(v)
        del adj[v]
    return best


def decomposition_from_order(g: nx.Graph, order: Sequence[Hashable]) -> TreeDecomposition:
    """Bags {v} + later neighbours in the filled graph, linked along the elimination order."""
    adj = _adjacency(g)
    position = {v: i for i, v in enumerate(order)}
    bags: Dict[Hashable, FrozenSet] = {}
    parent: Dict[Hashable, Optional[Hashable]] = {}
    for v in order:
        later = adj[v]
        bags[v] = frozenset(later | {v})
        parent[v] = min(later, key=lambda u: position[u]) if later else None
        adj = _eliminate(adj, v)

    # Contract bags contained in their parent's bag.
    for v in order:
        p = parent[v]
        if p is not None and bags[v] <= bags[p]:
            for u in order:
                if parent[u] == v:
                    parent[u] = p
            parent[v] = v

    tree = nx.Graph()
    roots = []
    for v in order:
        p = parent[v]
        if p == v:
            continue
        tree.add_node(bags[v])
        if p is None:
            roots.append(bags[v])
        else:
            tree.add_edge(bags[v], bags[p])
    for a, b in zip(roots, roots[1:]):
        tree.add_edge(a, b)
    if tree.number_of_nodes() == 0:
        tree.add_node(frozenset())
    return tree


def decomposition_width(tree: TreeDecomposition) -> int:
    return max(max((len(bag) for bag in tree.nodes), default=1) - 1, 0)


def treewidth_exact(g: nx.Graph, limit: int = 25) -> Tuple[int, TreeDecomposition]:
    """
    Exact treewidth by branch and bound over elimination orders

    Args:
        g: Undirected graph
        limit: Largest vertex count accepted

    Returns:
        (width, decomposition) with decomposition_width(decomposition) == width
    """
    if g.number_of_nodes() > limit:
        raise GraphGuardError(
            f"Graph has {g.number_of_nodes()} vertices, exact treewidth accepts at most {limit}; "
            f"use treewidth_upper for a heuristic bound"
        )
    adj = _adjacency(g)
    if not adj:
        return 0, decomposition_from_order(g, [])

    upper, upper_order = _min_fill_order(adj)
    best = {"width": upper, "order": upper_order}
    lower = _degeneracy(adj)
    seen: Dict[FrozenSet, int] = {}

    def search(adj: Dict[Hashable, Set[Hashable]], order: List[Hashable], width: int) -> None:
        if width >= best["width"]:
            return
        if len(adj) <= width + 1:
            # Every remaining vertex has degree <= width: finish in any order.
            best["width"] = width
            best["order"] = order + sorted(adj, key=_key)
            return
        remaining = frozenset(adj)
        if seen.get(remaining, best["width"] + 1) <= width:
            return
        seen[remaining] = width
        if max(width, _degeneracy(adj)) >= best["width"]:
            return

        candidates = sorted(adj, key=lambda u: (len(adj[u]), _key(u)))
        for v in candidates:
            if _is_simplicial(adj, v):
                candidates = [v]
                break
        for v in candidates:
            search(_eliminate(adj, v), order + [v], max(width, len(adj[v])))
            if best["width"] <= lower:
                return

    if lower < upper:
        search(adj, [], 0)
    width = best["width"]
    tree = decomposition_from_order(g, best["order"])
    logger.debug(f"Exact treewidth {width} on {g.number_of_nodes()} vertices (bounds {lower}..{upper})")
    return width, tree


def treewidth_upper(g: nx.Graph) -> Tuple[int, TreeDecomposition]:
    """Min-fill-in heuristic bound from networkx."""
    if g.number_of_nodes() == 0:
        return 0, decomposition_from_order(g, [])
    width, tree = treewidth_min_fill_in(g)
    return max(width, 0), tree


def verify_decomposition(tree: TreeDecomposition, g: nx.Graph) -> bool:
    """Check vertex coverage, edge coverage and connectedness of every vertex's bags."""
    if tree.number_of_nodes() == 0 or not nx.is_tree(tree):
        return False
    bags = list(tree.nodes)
    for v in g.nodes:
        holding = [b for b in bags if v in b]
        if not holding:
            return False
        if not nx.is_connected(tree.subgraph(holding)):
            return False
    for a, b in g.edges:
        if a != b and not any(a in bag and b in bag for bag in bags):
            return False
    return True


# ------------------------------------------------------ packings and covers


def _hyperedges(q: CQ) -> List[Tuple[str, ...]]:
    return [atom.variables for atom in q.atoms if atom.variables]


def _guard(q: CQ, limit: int) -> None:
    if len(q.variables) > limit:
        raise GraphGuardError(f"Query has {len(q.variables)} variables, exhaustive search accepts at most {limit}")


def integer_vertex_packing_max(q: CQ, limit: int = 30) -> Tuple[int, Tuple[str, ...]]:
    """
    Largest set of variables no two of which share an atom

    Returns:
        (size, witness) with the earliest optimal witness in variable order
    """
    _guard(q, limit)
    variables = q.variables
    conflicts = {v: set() for v in variables}
    for edge in _hyperedges(q):
        for a in edge:
            conflicts[a].update(b for b in edge if b != a)

    best: List[Tuple[str, ...]] = [()]

    def search(i: int, chosen: List[str], blocked: Set[str]) -> None:
        if len(chosen) + (len(variables) - i) <= len(best[0]):
            return
        if i == len(variables):
            best[0] = tuple(chosen)
            return
        v = variables[i]
        if v not in blocked:
            search(i + 1, chosen + [v], blocked | conflicts[v])
        search(i + 1, chosen, blocked)

    search(0, [], set())
    return len(best[0]), best[0]


def vertex_cover_min(q: CQ, limit: int = 30) -> Tuple[int, Tuple[str, ...]]:
    """Smallest set of variables meeting every atom that has a variable."""
    _guard(q, limit)
    variables = q.variables
    edges = [set(e) for e in _hyperedges(q)]
    position = {v: i for i, v in enumerate(variables)}
    last_chance = [max(position[v] for v in e) for e in edges]
    best: List[Optional[Tuple[str, ...]]] = [None]

    def search(i: int, chosen: List[str]) -> None:
        picked = set(chosen)
        for e, last in zip(edges, last_chance):
            if last < i and not (e & picked):
                return
        if best[0] is not None and len(chosen) >= len(best[0]):
            return
        if i == len(variables):
            best[0] = tuple(chosen)
            return
        search(i + 1, chosen + [variables[i]])
        search(i + 1, chosen)

    search(0, [])
    return len(best[0]), best[0]


@dataclass
class PackingSolution:
    """Exact LP optimum: a weight per variable (packing) or per atom (cover)."""

    weights: Dict[str, Fraction]
    value: Fraction


def _atom_label(q: CQ, index: int) -> str:
    return f"{index}:{q.atoms[index]}"


def fractional_vertex_packing_max(q: CQ) -> PackingSolution:
    """max sum u_x subject to sum of u_x over each atom's variables <= 1."""
    variables = q.variables
    constraints = [
        ([1 if v in edge else 0 for v in variables], "<=", 1) for edge in _hyperedges(q)
    ]
    solution = solve_lp([1] * len(variables), constraints, maximize=True)
    return PackingSolution(dict(zip(variables, solution.values)), solution.objective)


def fractional_edge_cover_min(q: CQ) -> PackingSolution:
    """min sum w_R subject to every variable being covered with total weight >= 1."""
    indexes = [i for i, atom in enumerate(q.atoms) if atom.variables]
    constraints = [
        ([1 if v in q.atoms[i].variables else 0 for i in indexes], ">=", 1) for v in q.variables
    ]
    solution = solve_lp([1] * len(indexes), constraints, maximize=False)
    weights = {_atom_label(q, i): w for i, w in zip(indexes, solution.values)}
    return PackingSolution(weights, solution.objective)


def fractional_bounds(q: CQ) -> Tuple[PackingSolution, PackingSolution]:
    """Both fractional optima; they must coincide exactly."""
    packing = fractional_vertex_packing_max(q)
    cover = fractional_edge_cover_min(q)
    if packing.value != cover.value:
        raise LPError(f"Packing optimum {packing.value} differs from cover optimum {cover.value}")
    return packing, cover


def variable_names(nodes: Iterable[Hashable]) -> List[str]:
    """Names of the variable nodes among the given graph nodes."""
    return [n[1] for n in nodes if isinstance(n, tuple) and n[0] == "var"]
