"""
Plan trees: select-project-join operators plus the H-projection
"""
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Dict, FrozenSet, Iterator, List, Optional, Sequence, Tuple, Union

from schemas.schemas import Condition, SchemaError

Path = Tuple[int, ...]


@dataclass(frozen=True)
class BipartiteIneqGraph:
    """H = (X, Y, E): inequalities between witness attributes X and outside attributes Y."""

    left: Tuple[str, ...]
    right: Tuple[str, ...]
    edges: FrozenSet[Tuple[str, str]] = frozenset()

    def __post_init__(self):
        left, right = tuple(self.left), tuple(self.right)
        if set(left) & set(right):
            raise SchemaError(f"Sides of bipartite graph overlap: {sorted(set(left) & set(right))}")
        edges = frozenset(tuple(e) for e in self.edges)
        for x, y in edges:
            if x not in left or y not in right:
                raise SchemaError(f"Edge ({x}, {y}) is not in {left} x {right}")
        object.__setattr__(self, "left", left)
        object.__setattr__(self, "right", right)
        object.__setattr__(self, "edges", edges)

    @classmethod
    def empty(cls, left: Sequence[str], right: Sequence[str] = ()) -> "BipartiteIneqGraph":
        return cls(tuple(left), tuple(right), frozenset())

    def degree(self, y: str) -> int:
        return sum(1 for _, b in self.edges if b == y)

    def neighbors(self, y: str) -> Tuple[str, ...]:
        """Left-side neighbours of y, in left order."""
        return tuple(x for x in self.left if (x, y) in self.edges)

    @property
    def active_right(self) -> Tuple[str, ...]:
        return tuple(y for y in self.right if self.degree(y) >= 1)

    def ordered_edges(self) -> List[Tuple[str, str]]:
        """Edges sorted by right attribute, then by left attribute."""
        return [(x, y) for y in self.right for x in self.left if (x, y) in self.edges]


@dataclass(frozen=True)
class Scan:
    relation: str
    attributes: Tuple[str, ...]

    @cached_property
    def schema(self) -> Tuple[str, ...]:
        return tuple(self.attributes)

    @property
    def children(self) -> Tuple["PlanNode", ...]:
        return ()


@dataclass(frozen=True)
class Select:
    conditions: Tuple[Condition, ...]
    child: "PlanNode"
    inequality: bool = False

    @cached_property
    def schema(self) -> Tuple[str, ...]:
        return self.child.schema

    @property
    def children(self) -> Tuple["PlanNode", ...]:
        return (self.child,)


@dataclass(frozen=True)
class Project:
    attributes: Tuple[str, ...]
    child: "PlanNode"

    @cached_property
    def schema(self) -> Tuple[str, ...]:
        return tuple(self.attributes)

    @property
    def children(self) -> Tuple["PlanNode", ...]:
        return (self.child,)


@dataclass(frozen=True)
class HProject:
    """Groups by attributes and keeps an H-equivalent witness set per group."""

    attributes: Tuple[str, ...]
    graph: BipartiteIneqGraph
    child: "PlanNode"

    @cached_property
    def schema(self) -> Tuple[str, ...]:
        return self.child.schema

    @property
    def children(self) -> Tuple["PlanNode", ...]:
        return (self.child,)


@dataclass(frozen=True)
class Join:
    conditions: Tuple[Tuple[str, str], ...]
    left: "PlanNode"
    right: "PlanNode"

    @cached_property
    def schema(self) -> Tuple[str, ...]:
        return self.left.schema + self.right.schema

    @property
    def children(self) -> Tuple["PlanNode", ...]:
        return (self.left, self.right)


@dataclass(frozen=True)
class Product:
    left: "PlanNode"
    right: "PlanNode"

    @cached_property
    def schema(self) -> Tuple[str, ...]:
        return self.left.schema + self.right.schema

    @property
    def children(self) -> Tuple["PlanNode", ...]:
        return (self.left, self.right)


PlanNode = Union[Scan, Select, Project, HProject, Join, Product]

WRAPPERS = (Project, HProject)


def with_children(node: PlanNode, children: Sequence[PlanNode]) -> PlanNode:
    if isinstance(node, Scan):
        return node
    if isinstance(node, (Join, Product)):
        return replace(node, left=children[0], right=children[1])
    return replace(node, child=children[0])


def node_at(root: PlanNode, path: Path) -> PlanNode:
    node = root
    for index in path:
        node = node.children[index]
    return node


def walk(root: PlanNode, path: Path = ()) -> Iterator[Tuple[Path, PlanNode]]:
    """Pre-order traversal yielding (path, node)."""
    yield path, root
    for i, child in enumerate(root.children):
        yield from walk(child, path + (i,))


def scans(root: PlanNode) -> List[Tuple[Path, Scan]]:
    return [(p, n) for p, n in walk(root) if isinstance(n, Scan)]


def is_inequality_select(node: PlanNode) -> bool:
    return isinstance(node, Select) and node.inequality


def path_label(path: Path) -> str:
    return ".".join(str(i) for i in path) or "root"


@dataclass(frozen=True)
class QueryPlan:
    """A plan tree with the attribute -> query variable provenance of its scans."""

    root: PlanNode
    provenance: Dict[str, str] = field(default_factory=dict, compare=False, hash=False)

    @property
    def schema(self) -> Tuple[str, ...]:
        return self.root.schema

    def variable_of(self, attribute: str) -> Optional[str]:
        return self.provenance.get(attribute)

    def attributes_of(self, variable: str) -> List[str]:
        return [a for a, v in self.provenance.items() if v == variable]
