"""
List coloring: backtracking, forests, cliques, bounded treewidth and per-component dispatch
"""
import itertools
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Hashable, List, Optional, Tuple

import networkx as nx

from schemas.schemas import Value, value_key
from services.graph_service import GraphGuardError, TreeDecomposition, treewidth_exact
from utils.logger import setup_logger

logger = setup_logger(__name__)

Assignment = Dict[Hashable, Value]


class ListColoringContractError(Exception):
    """Custom exception for instances outside a solver's graph class"""
    pass


@dataclass
class ListColoringInstance:
    graph: nx.Graph
    lists: Dict[Hashable, FrozenSet[Value]]

    def __post_init__(self):
        missing = [v for v in self.graph.nodes if v not in self.lists]
        if missing:
            raise ListColoringContractError(f"Vertices without a color list: {missing}")
        self.lists = {v: frozenset(c) for v, c in self.lists.items()}

    def colors(self, v: Hashable) -> List[Value]:
        return sorted(self.lists[v], key=value_key)

    def restricted_to(self, nodes) -> "ListColoringInstance":
        sub = self.graph.subgraph(nodes).copy()
        return ListColoringInstance(sub, {v: self.lists[v] for v in sub.nodes})


@dataclass
class ComponentReport:
    vertices: List[Hashable]
    graph_class: str


@dataclass
class ListColoringOutcome:
    assignment: Optional[Assignment]
    components: List[ComponentReport] = field(default_factory=list)

    @property
    def satisfiable(self) -> bool:
        return self.assignment is not None


def _order(nodes) -> List[Hashable]:
    return sorted(nodes, key=str)


def is_proper(inst: ListColoringInstance, assignment: Optional[Assignment]) -> bool:
    if assignment is None:
        return False
    for v in inst.graph.nodes:
        if v not in assignment or assignment[v] not in inst.lists[v]:
            return False
    return all(assignment[a] != assignment[b] for a, b in inst.graph.edges if a != b)


def solve_backtracking(inst: ListColoringInstance) -> Optional[Assignment]:
    """Exhaustive search; most-constrained vertices first."""
    g = inst.graph
    order = sorted(g.nodes, key=lambda v: (len(inst.lists[v]), -g.degree(v), str(v)))
    assignment: Assignment = {}

    def extend(i: int) -> bool:
        if i == len(order):
            return True
        v = order[i]
        used = {assignment[u] for u in g.neighbors(v) if u in assignment}
        for c in inst.colors(v):
            if c in used:
                continue
            assignment[v] = c
            if extend(i + 1):
                return True
            del assignment[v]
        return False

    return dict(assignment) if extend(0) else None


def solve_tree(inst: ListColoringInstance) -> Optional[Assignment]:
    """
    Forests in linear time

    Bottom-up, each vertex keeps the colors for which every child still has
    an option; top-down, each child takes its smallest option that differs
    from its parent.
    """
    g = inst.graph
    if g.number_of_nodes() and not nx.is_forest(g):
        raise ListColoringContractError("solve_tree expects a forest")

    assignment: Assignment = {}
    for component in nx.connected_components(g):
        root = _order(component)[0]
        order = list(nx.dfs_preorder_nodes(g, root))
        parent = {root: None}
        parent.update({child: p for p, child in nx.dfs_edges(g, root)})
        feasible: Dict[Hashable, List[Value]] = {}
        for v in reversed(order):
            children = [u for u in g.neighbors(v) if parent.get(u) == v]
            feasible[v] = [
                c for c in inst.colors(v) if all(any(d != c for d in feasible[u]) for u in children)
            ]
            if not feasible[v]:
                return None
        for v in order:
            p = parent[v]
            options = feasible[v] if p is None else [c for c in feasible[v] if c != assignment[p]]
            assignment[v] = options[0]
    return assignment


def _is_clique(g: nx.Graph) -> bool:
    n = g.number_of_nodes()
    edges = sum(1 for a, b in g.edges if a != b)
    return edges == n * (n - 1) // 2


def solve_complete(inst: ListColoringInstance) -> Optional[Assignment]:
    """Cliques: a proper list coloring is a vertex-saturating matching into the colors."""
    g = inst.graph
    if not _is_clique(g):
        raise ListColoringContractError("solve_complete expects a complete graph")
    vertices = [("vertex", v) for v in _order(g.nodes)]
    if not vertices:
        return {}
    b = nx.Graph()
    b.add_nodes_from(vertices, bipartite=0)
    for node in vertices:
        for c in inst.colors(node[1]):
            b.add_edge(node, ("color", c))
    matching = nx.bipartite.hopcroft_karp_matching(b, top_nodes=vertices)
    if any(node not in matching for node in vertices):
        return None
    return {node[1]: matching[node][1] for node in vertices}


def _bag_assignments(inst: ListColoringInstance, bag: Tuple[Hashable, ...]):
    for colors in itertools.product(*(inst.colors(v) for v in bag)):
        local = dict(zip(bag, colors))
        if all(local[a] != local[b] for a, b in inst.graph.subgraph(bag).edges if a != b):
            yield colors


def solve_bounded_treewidth(
    inst: ListColoringInstance, decomposition: Optional[TreeDecomposition] = None
) -> Optional[Assignment]:
    """
    Dynamic programming over a tree decomposition

    Each bag keeps the proper colorings of its vertices that every child bag
    can extend; the kept child coloring per shared-vertex pattern is reused
    on the way down.
    """
    g = inst.graph
    if g.number_of_nodes() == 0:
        return {}
    if decomposition is None:
        _, decomposition = treewidth_exact(g)

    assignment: Assignment = {}
    for tree_component in nx.connected_components(decomposition):
        bags = sorted(tree_component, key=lambda b: (len(b), _order(b)))
        root = bags[-1]
        tree = decomposition.subgraph(tree_component)
        order = list(nx.dfs_preorder_nodes(tree, root))
        parent = {root: None}
        parent.update({child: p for p, child in nx.dfs_edges(tree, root)})
        keys = {bag: tuple(_order(bag)) for bag in order}
        shared = {
            bag: tuple(v for v in keys[bag] if v in parent[bag]) for bag in order if parent[bag] is not None
        }

        rows: Dict[FrozenSet, List[Tuple]] = {}
        witness: Dict[FrozenSet, Dict[Tuple, Tuple]] = {}
        for bag in reversed(order):
            children = [c for c in tree.neighbors(bag) if parent.get(c) == bag]
            kept = []
            for colors in _bag_assignments(inst, keys[bag]):
                local = dict(zip(keys[bag], colors))
                if all(tuple(local[v] for v in shared[c]) in witness[c] for c in children):
                    kept.append(colors)
            if not kept:
                return None
            rows[bag] = kept
            if parent[bag] is not None:
                index: Dict[Tuple, Tuple] = {}
                for colors in kept:
                    local = dict(zip(keys[bag], colors))
                    index.setdefault(tuple(local[v] for v in shared[bag]), colors)
                witness[bag] = index

        chosen: Dict[FrozenSet, Tuple] = {}
        for bag in order:
            p = parent[bag]
            if p is None:
                chosen[bag] = rows[bag][0]
            else:
                above = dict(zip(keys[p], chosen[p]))
                chosen[bag] = witness[bag][tuple(above[v] for v in shared[bag])]
            assignment.update(zip(keys[bag], chosen[bag]))

    for v in g.nodes:
        if v not in assignment:
            colors = inst.colors(v)
            if not colors:
                return None
            assignment[v] = colors[0]
    return assignment


def classify_components(inst: ListColoringInstance, bound: int = 3) -> List[ComponentReport]:
    """Clique first, then forest, then treewidth within the bound, else backtracking."""
    reports = []
    for component in sorted(nx.connected_components(inst.graph), key=lambda c: [str(v) for v in _order(c)]):
        sub = inst.graph.subgraph(component)
        if _is_clique(sub):
            graph_class = "clique"
        elif nx.is_forest(sub):
            graph_class = "forest"
        else:
            try:
                width, _ = treewidth_exact(sub)
                graph_class = "treewidth" if width <= bound else "backtracking"
            except GraphGuardError:
                graph_class = "backtracking"
        reports.append(ComponentReport(_order(component), graph_class))
    return reports


_SOLVERS = {
    "clique": solve_complete,
    "forest": solve_tree,
    "treewidth": solve_bounded_treewidth,
    "backtracking": solve_backtracking,
}


def solve_components(inst: ListColoringInstance, bound: int = 3) -> ListColoringOutcome:
    """
    Solve every connected component with the solver for its graph class

    Returns:
        Combined assignment (None if some component has no coloring) and the class per component
    """
    reports = classify_components(inst, bound)
    assignment: Assignment = {}
    for report in reports:
        part = _SOLVERS[report.graph_class](inst.restricted_to(report.vertices))
        if part is None:
            logger.debug(f"Component {report.vertices} ({report.graph_class}) has no list coloring")
            return ListColoringOutcome(None, reports)
        assignment.update(part)
    return ListColoringOutcome(assignment, reports)
