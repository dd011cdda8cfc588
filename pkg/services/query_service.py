"""
Parsing, validation and preprocessing of conjunctive queries with inequalities
"""
from typing import Dict, List, Optional, Tuple

import pyparsing as pp

from schemas.schemas import (
    CQ,
    Atom,
    Constant,
    Database,
    InequalitySet,
    Relation,
    Variable,
    format_value,
)
from utils.logger import setup_logger

logger = setup_logger(__name__)


class QueryParseError(Exception):
    """Custom exception for query syntax errors"""

    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None):
        self.line = line
        self.column = column
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(f"{message}{where}")


class QueryScopeError(Exception):
    """Custom exception for unbound variables and inconsistent relation arities"""
    pass


def _build_grammar() -> pp.ParserElement:
    LPAR, RPAR, DOT = map(pp.Suppress, "().")
    ident = pp.Word(pp.alphas + "_", pp.alphanums + "_")
    integer = pp.Regex(r"[+-]?\d+").set_parse_action(lambda t: Constant(int(t[0])))
    string = pp.QuotedString('"', esc_char='\\').set_parse_action(lambda t: Constant(t[0]))
    variable = ident.copy().set_parse_action(lambda t: Variable(t[0]))
    term = integer | string | variable

    atom = pp.Group(
        ident("relation") + LPAR + pp.Group(pp.Optional(pp.DelimitedList(term)))("terms") + RPAR
    )("atom")
    inequality = pp.Group(variable("left") + pp.Suppress("!=") + term("right"))("inequality")
    body_item = atom | inequality

    head = ident("name") + LPAR + pp.Group(pp.Optional(pp.DelimitedList(ident)))("head") + RPAR
    query = head + pp.Suppress(":-") + pp.Group(pp.DelimitedList(body_item))("body") + DOT
    query.ignore(pp.python_style_comment)
    return query


_GRAMMAR = _build_grammar()


def parse_query(text: str) -> Tuple[CQ, InequalitySet]:
    """
    Parse `name(v1,...) :- Atom, ..., x != y, ... .`

    Args:
        text: Query text; `#` starts a comment

    Returns:
        The CQ and its inequalities, separated from the relational atoms
    """
    try:
        parsed = _GRAMMAR.parse_string(text, parse_all=True)
    except pp.ParseBaseException as e:
        raise QueryParseError(f"Syntax error: {e.msg}", line=e.lineno, column=e.col) from e

    atoms: List[Atom] = []
    pairs: List[Tuple[str, str]] = []
    constants: List[Tuple[str, object]] = []
    for item in parsed["body"]:
        if "relation" in item:
            atoms.append(Atom(item["relation"], tuple(item["terms"])))
        else:
            left, right = item["left"].name, item["right"]
            if isinstance(right, Variable):
                if right.name == left:
                    raise QueryScopeError(f"Inequality {left} != {left} can never hold")
                pairs.append((left, right.name))
            else:
                constants.append((left, right.value))

    q = CQ(parsed["name"], tuple(parsed["head"]), tuple(atoms))
    inequalities = InequalitySet.of(pairs, constants)
    validate_query(q, inequalities)
    logger.debug(f"Parsed query {q.name} with {len(q.atoms)} atoms and {len(inequalities)} inequalities")
    return q, inequalities


def load_query(path: str) -> Tuple[CQ, InequalitySet]:
    with open(path, encoding="utf-8") as handle:
        return parse_query(handle.read())


def validate_query(q: CQ, inequalities: InequalitySet) -> None:
    """Scope and arity checks shared by the parser and the generators."""
    if not q.atoms:
        raise QueryScopeError(f"Query {q.name} has no relational atoms")
    arities: Dict[str, int] = {}
    for atom in q.atoms:
        known = arities.setdefault(atom.relation, atom.arity)
        if known != atom.arity:
            raise QueryScopeError(
                f"Relation {atom.relation} used with arities {known} and {atom.arity}"
            )
    scope = set(q.variables)
    if len(set(q.head)) != len(q.head):
        raise QueryScopeError(f"Head of {q.name} repeats a variable")
    for v in q.head:
        if v not in scope:
            raise QueryScopeError(f"Head variable {v} does not occur in the body")
    for v in inequalities.variables:
        if v not in scope:
            raise QueryScopeError(f"Inequality variable {v} does not occur in any atom")
    for v, _ in inequalities.constants:
        if v not in scope:
            raise QueryScopeError(f"Inequality variable {v} does not occur in any atom")


def format_query(q: CQ, inequalities: InequalitySet = InequalitySet()) -> str:
    body = [str(atom) for atom in q.atoms]
    body += [f"{a} != {b}" for a, b in inequalities]
    body += [f"{v} != {format_value(c)}" for v, c in sorted(inequalities.constants, key=str)]
    return f"{q.name}({', '.join(q.head)}) :- {', '.join(body)}."


def full_query(q: CQ) -> CQ:
    """Same atoms, every body variable in the head."""
    return CQ(q.name, q.variables, q.atoms)


def _atom_filter(atom: Atom, pairs: List[Tuple[str, str]], constants: List[Tuple[str, object]]):
    checks = []
    for a, b in pairs:
        checks.append((atom.positions(a)[0], atom.positions(b)[0]))
    fixed = [(atom.positions(v)[0], c) for v, c in constants]

    def keep(row) -> bool:
        return all(row[i] != row[j] for i, j in checks) and all(row[i] != c for i, c in fixed)

    return keep


def localize_atoms(q: CQ, db: Database, atom_indexes: Optional[List[int]] = None) -> Tuple[CQ, Database]:
    """
    Give atoms that share a relation their own copy of it

    Args:
        q: Query whose atoms may repeat relation names
        db: Database holding the shared relations
        atom_indexes: Only these atoms get private copies (default: all atoms of shared relations)

    Returns:
        Rewritten query and a database extended with the copies
    """
    counts: Dict[str, int] = {}
    for atom in q.atoms:
        counts[atom.relation] = counts.get(atom.relation, 0) + 1

    atoms, extra = [], {}
    for i, atom in enumerate(q.atoms):
        private = counts[atom.relation] > 1 and (atom_indexes is None or i in atom_indexes)
        if private and atom.relation in db:
            name = f"{atom.relation}__{i}"
            extra[name] = db[atom.relation]
            atoms.append(Atom(name, atom.terms))
        else:
            atoms.append(atom)
    return CQ(q.name, q.head, tuple(atoms)), db.with_relations(extra)


def preprocess_local_inequalities(
    q: CQ, inequalities: InequalitySet, db: Database
) -> Tuple[CQ, InequalitySet, Database]:
    """
    Enforce inequalities local to one atom by filtering its relation

    An inequality is local when both variables occur in a single atom; an
    inequality against a constant is always local. Atoms of a shared relation
    that need filtering receive a private copy, so the returned query may
    name relations the input did not.

    Returns:
        (query, remaining inequalities, filtered database)
    """
    if inequalities.is_empty():
        return q, inequalities, db

    local_pairs = set()
    per_atom: List[Tuple[List[Tuple[str, str]], List[Tuple[str, object]]]] = []
    for atom in q.atoms:
        names = set(atom.variables)
        pairs = [p for p in inequalities if p[0] in names and p[1] in names]
        consts = [c for c in inequalities.constants if c[0] in names]
        local_pairs.update(pairs)
        per_atom.append((pairs, consts))

    filtered = [i for i, (p, c) in enumerate(per_atom) if p or c]
    if not filtered:
        return q, inequalities, db

    localized, db2 = localize_atoms(q, db, filtered)
    updates = {}
    for i in filtered:
        atom = localized.atoms[i]
        if atom.relation not in db2:
            continue
        relation = db2[atom.relation]
        keep = _atom_filter(atom, *per_atom[i])
        updates[atom.relation] = Relation(relation.schema, frozenset(r for r in relation.tuples if keep(r)))

    remaining = InequalitySet(inequalities.pairs - local_pairs, frozenset())
    logger.debug(
        f"Preprocessing removed {len(local_pairs)} local and {len(inequalities.constants)} constant inequalities"
    )
    return localized, remaining, db2.with_relations(updates)
