"""
In-memory relational operators: loading, selection, projection and joins
"""
import csv
import os
import re
from collections import defaultdict
from typing import Dict, Iterable, List, Sequence, Tuple, Union

from schemas.schemas import Condition, Constant, Database, Relation, Row, SchemaError, Value, value_key
from utils.logger import setup_logger

logger = setup_logger(__name__)

_INTEGER = re.compile(r"^[+-]?\d+$")


class DataLoadError(Exception):
    """Custom exception for unreadable or malformed data files"""
    pass


def parse_cell(cell: str) -> Value:
    """Numeric-looking cells become integers, everything else stays text."""
    text = cell.strip()
    if _INTEGER.match(text):
        return int(text)
    return text


def load_csv(path: str, schema: Sequence[str]) -> Relation:
    """
    Load a headerless CSV file into a relation

    Args:
        path: CSV file (comma separated, UTF-8, no header)
        schema: Attribute names; fixes the expected arity

    Returns:
        Relation with duplicate rows removed
    """
    rows = []
    try:
        with open(path, newline="", encoding="utf-8") as handle:
            for number, record in enumerate(csv.reader(handle), 1):
                if not record:
                    continue
                if len(record) != len(schema):
                    raise DataLoadError(
                        f"{path}: row {number} has {len(record)} fields, expected {len(schema)}"
                    )
                rows.append(tuple(parse_cell(c) for c in record))
    except OSError as e:
        raise DataLoadError(f"Cannot read {path}: {e}") from e

    relation = Relation.from_rows(schema, rows)
    logger.debug(f"Loaded {len(relation)} tuples ({len(rows)} rows) from {path}")
    return relation


def write_csv(path: str, relation: Relation) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        for row in relation.sorted_rows():
            writer.writerow(row)


def load_database(data_dir: str, arities: Dict[str, int]) -> Database:
    """
    Load <data_dir>/<Relation>.csv for every relation a query names

    Args:
        data_dir: Directory holding one CSV per relation
        arities: Relation name -> arity, as fixed by the query

    Returns:
        Database over positional attribute names
    """
    relations = {}
    for name, arity in arities.items():
        path = os.path.join(data_dir, f"{name}.csv")
        if not os.path.exists(path):
            raise DataLoadError(f"Missing data file for relation {name}: {path}")
        schema = tuple(f"{name}.{i + 1}" for i in range(arity))
        relations[name] = load_csv(path, schema)
    logger.info(f"Loaded {len(relations)} relations from {data_dir}")
    return Database(relations)


def save_database(data_dir: str, db: Database) -> List[str]:
    os.makedirs(data_dir, exist_ok=True)
    written = []
    for name in db.names():
        path = os.path.join(data_dir, f"{name}.csv")
        write_csv(path, db[name])
        written.append(path)
    return written


def active_domain(db: Database) -> List[Value]:
    """Sorted union of all values in all relations."""
    return db.active_domain


def _compile(relation: Relation, condition: Condition):
    left = relation.index_of(condition.left)
    if isinstance(condition.right, Constant):
        value = condition.right.value
        if condition.negated:
            return lambda row: row[left] != value
        return lambda row: row[left] == value
    right = relation.index_of(condition.right)
    if condition.negated:
        return lambda row: row[left] != row[right]
    return lambda row: row[left] == row[right]


def select(relation: Relation, conditions: Union[Condition, Iterable[Condition]]) -> Relation:
    """Subset of the relation satisfying every condition; schema unchanged."""
    if isinstance(conditions, Condition):
        conditions = [conditions]
    predicates = [_compile(relation, c) for c in conditions]
    if not predicates:
        return relation
    kept = frozenset(row for row in relation.tuples if all(p(row) for p in predicates))
    return Relation(relation.schema, kept)


def project(relation: Relation, attributes: Sequence[str]) -> Relation:
    """Deduplicated restriction of every tuple to the attributes, in their order."""
    attributes = tuple(attributes)
    if attributes == relation.schema:
        return relation
    indexes = [relation.index_of(a) for a in attributes]
    rows = frozenset(tuple(row[i] for i in indexes) for row in relation.tuples)
    return Relation(attributes, rows)


def _check_disjoint(left: Relation, right: Relation) -> None:
    overlap = set(left.schema) & set(right.schema)
    if overlap:
        raise SchemaError(f"Join inputs share attributes {sorted(overlap)}")


def product(left: Relation, right: Relation) -> Relation:
    _check_disjoint(left, right)
    rows = frozenset(a + b for a in left.tuples for b in right.tuples)
    return Relation(left.schema + right.schema, rows)


def join(left: Relation, right: Relation, conditions: Sequence[Tuple[str, str]]) -> Relation:
    """
    Hash join on equality pairs (left attribute, right attribute)

    An empty condition list yields the cartesian product.
    """
    _check_disjoint(left, right)
    if not conditions:
        return product(left, right)
    left_idx = [left.index_of(a) for a, _ in conditions]
    right_idx = [right.index_of(b) for _, b in conditions]

    buckets: Dict[Row, List[Row]] = defaultdict(list)
    for row in right.tuples:
        buckets[tuple(row[i] for i in right_idx)].append(row)

    rows = set()
    for row in left.tuples:
        matches = buckets.get(tuple(row[i] for i in left_idx))
        if matches:
            for other in matches:
                rows.add(row + other)
    return Relation(left.schema + right.schema, frozenset(rows))


def union(relations: Sequence[Relation]) -> Relation:
    if not relations:
        raise SchemaError("Union of no relations")
    schema = relations[0].schema
    rows = set()
    for r in relations:
        if r.schema != schema:
            raise SchemaError(f"Union schema mismatch: {schema} vs {r.schema}")
        rows.update(r.tuples)
    return Relation(schema, frozenset(rows))


def format_rows(relation: Relation) -> List[str]:
    """Canonical text lines for output."""
    return [",".join(str(v) for v in row) for row in relation.sorted_rows()]


def sorted_domain(values: Iterable[Value]) -> List[Value]:
    return sorted(set(values), key=value_key)
