"""
H-accepted and H-forbidden tuples, the forbidden-tuple tree and H-projection
"""
import math
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple

from schemas.plans import BipartiteIneqGraph
from schemas.schemas import BOTTOM, Relation, Row, Value, format_value, tuple_key
from utils.logger import setup_logger

logger = setup_logger(__name__)


class IneqContractError(Exception):
    """Custom exception for arity and schema mismatches against a bipartite graph"""
    pass


def phi(graph: BipartiteIneqGraph) -> int:
    """
    Blow-up budget of one H-projection

    Right-side attributes without edges are left out of both the factorial
    and the product, so a graph with no edges has budget 1.
    """
    degrees = [graph.degree(y) for y in graph.active_right]
    return math.factorial(len(degrees)) * math.prod(degrees)


def _left_indexes(relation: Relation, graph: BipartiteIneqGraph) -> Dict[str, int]:
    missing = [x for x in graph.left if x not in relation.schema]
    if missing:
        raise IneqContractError(f"Attributes {missing} of H are not in schema {relation.schema}")
    return {x: relation.schema.index(x) for x in graph.left}


def is_h_accepted(t: Sequence, graph: BipartiteIneqGraph, relation: Relation) -> bool:
    """True iff some tuple of the relation satisfies every edge inequality against t."""
    if len(t) != len(graph.right):
        raise IneqContractError(f"Tuple {tuple(t)} does not have arity {len(graph.right)}")
    x_index = _left_indexes(relation, graph)
    y_index = {y: j for j, y in enumerate(graph.right)}
    checks = [(x_index[x], t[y_index[y]]) for x, y in graph.edges]
    return any(all(row[i] != value for i, value in checks) for row in relation.tuples)


def subsumes(t1: Sequence, t2: Sequence) -> bool:
    """t1 subsumes t2 when each position of t1 is ⊥ or equal to t2's."""
    if len(t1) != len(t2):
        raise IneqContractError(f"Cannot compare tuples of arity {len(t1)} and {len(t2)}")
    return all(a is BOTTOM or a == b for a, b in zip(t1, t2))


def _dot_escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"')


@dataclass
class TreeNode:
    node_id: int
    parent: Optional[int]
    edge: Optional[Tuple[str, Value]]
    assignment: Dict[str, Value]
    label: Optional[Row] = None
    children: List[int] = field(default_factory=list)

    @property
    def is_open(self) -> bool:
        """Label ⊥* (no tuple of R assigned yet)."""
        return self.label is None


@dataclass
class ForbiddenTree:
    graph: BipartiteIneqGraph
    schema: Tuple[str, ...]
    nodes: List[TreeNode]

    @property
    def root(self) -> TreeNode:
        return self.nodes[0]

    def leaves(self) -> List[TreeNode]:
        return [n for n in self.nodes if not n.children]

    def open_leaves(self) -> List[TreeNode]:
        return [n for n in self.nodes if not n.children and n.is_open]

    def labeled_nodes(self) -> List[TreeNode]:
        return [n for n in self.nodes if not n.is_open]

    def depth(self) -> int:
        return max(len(n.assignment) for n in self.nodes)

    def encoded_tuple(self, node: TreeNode) -> Row:
        return tuple(node.assignment.get(y, BOTTOM) for y in self.graph.right)

    def to_dot(self) -> str:
        lines = ["digraph forbidden_tree {", "  node [shape=box];"]
        for n in self.nodes:
            text = "⊥*" if n.is_open else "(" + ", ".join(format_value(v) for v in n.label) + ")"
            lines.append(f'  n{n.node_id} [label="{_dot_escape(text)}"];')
        for n in self.nodes:
            if n.parent is not None:
                y, a = n.edge
                lines.append(f'  n{n.parent} -> n{n.node_id} [label="{_dot_escape(f"({y}, {format_value(a)})")}"];')
        lines.append("}")
        return "\n".join(lines)


def build_forbidden_tree(
    relation: Relation, graph: BipartiteIneqGraph, order: Optional[Sequence[Row]] = None
) -> ForbiddenTree:
    """
    Build T_H(R) by scanning the relation once

    Args:
        relation: Relation whose schema contains the left side of H
        graph: Bipartite inequality graph H
        order: Scan order (a permutation of the relation); canonical order by default

    Returns:
        ForbiddenTree whose ⊥* leaves encode every minimally H-forbidden tuple
    """
    x_index = _left_indexes(relation, graph)
    if order is None:
        order = relation.sorted_rows()
    else:
        order = [tuple(t) for t in order]
        if len(order) != len(relation) or set(order) != relation.tuples:
            raise IneqContractError("Scan order must be a permutation of the relation")

    edges = graph.ordered_edges()
    neighbors = {y: [x_index[x] for x in graph.neighbors(y)] for y in graph.right}

    nodes = [TreeNode(0, None, None, {})]
    frontier = [nodes[0]]
    for t in order:
        if not frontier:
            break
        next_frontier = []
        for leaf in frontier:
            blocked = any(
                t[i] == value for y, value in leaf.assignment.items() for i in neighbors[y]
            )
            if blocked:
                next_frontier.append(leaf)
                continue
            leaf.label = t
            seen = set()
            for x, y in edges:
                if y in leaf.assignment:
                    continue
                edge = (y, t[x_index[x]])
                if edge in seen:
                    continue
                seen.add(edge)
                child = TreeNode(len(nodes), leaf.node_id, edge, {**leaf.assignment, y: edge[1]})
                nodes.append(child)
                leaf.children.append(child.node_id)
                next_frontier.append(child)
        frontier = next_frontier

    logger.debug(f"Built forbidden tree with {len(nodes)} nodes for {len(relation)} tuples")
    return ForbiddenTree(graph, relation.schema, nodes)


def forbidden_tuples(tree: ForbiddenTree) -> FrozenSet[Row]:
    """Tuples over the right side encoded by ⊥* leaves, ⊥ where unset."""
    return frozenset(tree.encoded_tuple(n) for n in tree.open_leaves())


def minimally_forbidden(tree: ForbiddenTree) -> FrozenSet[Row]:
    encoded = forbidden_tuples(tree)
    return frozenset(
        t for t in encoded if not any(s != t and subsumes(s, t) for s in encoded)
    )


def equivalent_subrelation(
    relation: Relation, graph: BipartiteIneqGraph, order: Optional[Sequence[Row]] = None
) -> Relation:
    """E_H(R): the tuple labels of the forbidden-tuple tree."""
    tree = build_forbidden_tree(relation, graph, order)
    return Relation(relation.schema, frozenset(n.label for n in tree.labeled_nodes()))


def h_project(
    relation: Relation,
    attributes: Sequence[str],
    graph: BipartiteIneqGraph,
    max_workers: int = 1,
) -> Relation:
    """
    H-projection: group by the attributes and keep E_H of every group

    The schema is unchanged; dropped attributes survive as witnesses.

    Args:
        relation: Input relation
        attributes: Grouping attributes X
        graph: H whose left side is exactly schema \\ X
        max_workers: Groups are independent and may be reduced concurrently

    Returns:
        Relation with |result| <= e * phi(H) * |distinct X values|
    """
    attributes = tuple(attributes)
    missing = [a for a in attributes if a not in relation.schema]
    if missing:
        raise IneqContractError(f"Grouping attributes {missing} are not in schema {relation.schema}")
    witnesses = set(relation.schema) - set(attributes)
    if set(graph.left) != witnesses:
        raise IneqContractError(
            f"Left side of H {graph.left} must equal the projected-out attributes {sorted(witnesses)}"
        )

    key_index = [relation.schema.index(a) for a in attributes]
    groups: Dict[Row, List[Row]] = defaultdict(list)
    for row in relation.tuples:
        groups[tuple(row[i] for i in key_index)].append(row)

    def reduce(rows: List[Row]) -> FrozenSet[Row]:
        if not graph.edges:
            return frozenset([min(rows, key=tuple_key)])
        group = Relation(relation.schema, frozenset(rows))
        return equivalent_subrelation(group, graph).tuples

    if max_workers > 1 and len(groups) > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            parts = list(pool.map(reduce, groups.values()))
    else:
        parts = [reduce(rows) for rows in groups.values()]

    result = frozenset().union(*parts) if parts else frozenset()
    return Relation(relation.schema, result)
