"""
Data models for relations, databases and conjunctive queries with inequalities
"""
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, Iterator, List, Optional, Sequence, Tuple, Union


class Bottom:
    """The reserved value that never occurs in loaded data."""

    _instance: Optional["Bottom"] = None

    def __new__(cls) -> "Bottom":
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "⊥"

    def __reduce__(self):
        return (Bottom, ())


BOTTOM = Bottom()

Value = Union[int, str]
Row = Tuple[Union[Value, Bottom], ...]


def value_key(value) -> Tuple[int, int, str]:
    """Total order over values: ⊥ first, then integers, then text."""
    if value is BOTTOM:
        return (0, 0, "")
    if isinstance(value, int):
        return (1, value, "")
    return (2, 0, str(value))


def tuple_key(row: Sequence) -> Tuple[Tuple[int, int, str], ...]:
    return tuple(value_key(v) for v in row)


def format_value(value) -> str:
    if value is BOTTOM:
        return "⊥"
    if isinstance(value, str):
        return '"' + value.replace('\\', '\\\\').replace('"', '\\"') + '"'
    return str(value)


class SchemaError(Exception):
    """Custom exception for schema and attribute errors"""
    pass


@dataclass(frozen=True)
class Relation:
    schema: Tuple[str, ...]
    tuples: FrozenSet[Row] = frozenset()

    def __post_init__(self):
        schema = tuple(self.schema)
        if len(set(schema)) != len(schema):
            raise SchemaError(f"Duplicate attribute names in schema {schema}")
        if isinstance(self.tuples, frozenset):
            rows = self.tuples
        else:
            rows = frozenset(tuple(t) for t in self.tuples)
        width = len(schema)
        for row in rows:
            if len(row) != width:
                raise SchemaError(f"Tuple {row} does not match schema {schema}")
        object.__setattr__(self, "schema", schema)
        object.__setattr__(self, "tuples", rows)

    @classmethod
    def from_rows(cls, schema: Sequence[str], rows: Iterable[Sequence]) -> "Relation":
        return cls(tuple(schema), frozenset(tuple(r) for r in rows))

    @property
    def arity(self) -> int:
        return len(self.schema)

    def __len__(self) -> int:
        return len(self.tuples)

    def __iter__(self) -> Iterator[Row]:
        return iter(self.sorted_rows())

    def __contains__(self, row) -> bool:
        return tuple(row) in self.tuples

    def is_empty(self) -> bool:
        return not self.tuples

    def sorted_rows(self) -> List[Row]:
        """Rows in canonical order."""
        return sorted(self.tuples, key=tuple_key)

    def index_of(self, attribute: str) -> int:
        try:
            return self.schema.index(attribute)
        except ValueError:
            raise SchemaError(f"Unknown attribute {attribute!r} in schema {self.schema}")

    def rename(self, schema: Sequence[str]) -> "Relation":
        if len(schema) != self.arity:
            raise SchemaError(f"Cannot rename {self.schema} to {tuple(schema)}")
        return Relation(tuple(schema), self.tuples)


@dataclass
class Database:
    relations: Dict[str, Relation] = field(default_factory=dict)

    def __getitem__(self, name: str) -> Relation:
        return self.relations[name]

    def __contains__(self, name: str) -> bool:
        return name in self.relations

    def get(self, name: str) -> Optional[Relation]:
        return self.relations.get(name)

    def names(self) -> List[str]:
        return sorted(self.relations)

    def with_relations(self, updates: Dict[str, Relation]) -> "Database":
        merged = dict(self.relations)
        merged.update(updates)
        return Database(merged)

    @property
    def size(self) -> int:
        return sum(len(r) for r in self.relations.values())

    @property
    def active_domain(self) -> List[Value]:
        values = set()
        for relation in self.relations.values():
            for row in relation.tuples:
                values.update(row)
        return sorted(values, key=value_key)


@dataclass(frozen=True)
class Variable:
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Constant:
    value: Value

    def __str__(self) -> str:
        return format_value(self.value)


Term = Union[Variable, Constant]


@dataclass(frozen=True)
class Atom:
    relation: str
    terms: Tuple[Term, ...]

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))

    @property
    def arity(self) -> int:
        return len(self.terms)

    @property
    def variables(self) -> Tuple[str, ...]:
        """Distinct variables in order of first occurrence."""
        seen: List[str] = []
        for term in self.terms:
            if isinstance(term, Variable) and term.name not in seen:
                seen.append(term.name)
        return tuple(seen)

    def positions(self, variable: str) -> List[int]:
        return [i for i, t in enumerate(self.terms) if isinstance(t, Variable) and t.name == variable]

    def __str__(self) -> str:
        return f"{self.relation}({', '.join(str(t) for t in self.terms)})"


@dataclass(frozen=True)
class CQ:
    name: str
    head: Tuple[str, ...]
    atoms: Tuple[Atom, ...]

    def __post_init__(self):
        object.__setattr__(self, "head", tuple(self.head))
        object.__setattr__(self, "atoms", tuple(self.atoms))

    @property
    def variables(self) -> Tuple[str, ...]:
        seen: List[str] = []
        for atom in self.atoms:
            for v in atom.variables:
                if v not in seen:
                    seen.append(v)
        return tuple(seen)

    @property
    def is_boolean(self) -> bool:
        return not self.head

    @property
    def is_full(self) -> bool:
        return set(self.head) == set(self.variables)

    @property
    def relation_names(self) -> Tuple[str, ...]:
        names: List[str] = []
        for atom in self.atoms:
            if atom.relation not in names:
                names.append(atom.relation)
        return tuple(names)

    def arities(self) -> Dict[str, int]:
        return {atom.relation: atom.arity for atom in self.atoms}


def _pair(a: str, b: str) -> Tuple[str, str]:
    return (a, b) if a <= b else (b, a)


@dataclass(frozen=True)
class InequalitySet:
    """Inequalities x != y between variables, plus x != constant filters."""

    pairs: FrozenSet[Tuple[str, str]] = frozenset()
    constants: FrozenSet[Tuple[str, Value]] = frozenset()

    def __post_init__(self):
        normalized = set()
        for a, b in self.pairs:
            if a == b:
                raise SchemaError(f"Inequality {a} != {b} relates a variable to itself")
            normalized.add(_pair(a, b))
        object.__setattr__(self, "pairs", frozenset(normalized))
        object.__setattr__(self, "constants", frozenset(self.constants))

    @classmethod
    def of(cls, pairs: Iterable[Tuple[str, str]] = (), constants: Iterable[Tuple[str, Value]] = ()) -> "InequalitySet":
        return cls(frozenset(pairs), frozenset(constants))

    def __iter__(self) -> Iterator[Tuple[str, str]]:
        return iter(sorted(self.pairs))

    def __len__(self) -> int:
        return len(self.pairs)

    def __contains__(self, pair) -> bool:
        a, b = pair
        return _pair(a, b) in self.pairs

    def is_empty(self) -> bool:
        return not self.pairs and not self.constants

    @property
    def variables(self) -> Tuple[str, ...]:
        """Variables that appear in some variable inequality; k is their count."""
        return tuple(sorted({v for pair in self.pairs for v in pair}))

    @property
    def k(self) -> int:
        return len(self.variables)

    def restricted_to(self, variables: Iterable[str]) -> "InequalitySet":
        keep = set(variables)
        return InequalitySet(
            frozenset(p for p in self.pairs if p[0] in keep and p[1] in keep),
            frozenset(c for c in self.constants if c[0] in keep),
        )

    def without(self, pairs: Iterable[Tuple[str, str]]) -> "InequalitySet":
        drop = {_pair(a, b) for a, b in pairs}
        return InequalitySet(self.pairs - drop, self.constants)

    def satisfied_by(self, binding: Dict[str, Value]) -> bool:
        for a, b in self.pairs:
            if binding[a] == binding[b]:
                return False
        for v, c in self.constants:
            if binding[v] == c:
                return False
        return True

    def __str__(self) -> str:
        parts = [f"{a} != {b}" for a, b in sorted(self.pairs)]
        parts += [f"{v} != {format_value(c)}" for v, c in sorted(self.constants, key=lambda vc: (vc[0], value_key(vc[1])))]
        return ", ".join(parts)


@dataclass(frozen=True)
class Condition:
    """Selection predicate attr = attr, attr = const, or their negations."""

    left: str
    right: Union[str, Constant]
    negated: bool = False

    @property
    def attributes(self) -> Tuple[str, ...]:
        if isinstance(self.right, Constant):
            return (self.left,)
        return (self.left, self.right)

    def __str__(self) -> str:
        op = "!=" if self.negated else "="
        return f"{self.left} {op} {self.right}"
