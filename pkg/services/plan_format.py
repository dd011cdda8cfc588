"""
Text and DOT formats for plan trees
"""
from typing import Dict, List, Union

import pyparsing as pp

from schemas.plans import (
    BipartiteIneqGraph,
    HProject,
    Join,
    PlanNode,
    Product,
    Project,
    QueryPlan,
    Scan,
    Select,
    walk,
    path_label,
)
from schemas.schemas import Condition, Constant, SchemaError, format_value
from services.ineq_service import phi
from utils.logger import setup_logger

logger = setup_logger(__name__)


class PlanFormatError(Exception):
    """Custom exception for unreadable plan files"""
    pass


def _build_grammar() -> pp.ParserElement:
    LPAR, RPAR = map(pp.Suppress, "()")
    integer = pp.Regex(r"[+-]?\d+").set_parse_action(lambda t: Constant(int(t[0])))
    string = pp.QuotedString('"', esc_char="\\").set_parse_action(lambda t: Constant(t[0]))
    symbol = pp.Regex(r"[A-Za-z_][A-Za-z0-9_.']*")
    operator = pp.Literal("!=") | pp.Literal("=")
    sexp = pp.Forward()
    sexp <<= pp.Group(LPAR + pp.ZeroOrMore(sexp) + RPAR) | integer | string | operator | symbol
    sexp.ignore(";" + pp.rest_of_line)
    return sexp


_GRAMMAR = _build_grammar()


def _symbols(item, what: str) -> tuple:
    if isinstance(item, str) or not all(isinstance(s, str) for s in item):
        raise PlanFormatError(f"Expected a list of attribute names for {what}, got {item}")
    return tuple(item)


def _condition(item, inequality: bool) -> Condition:
    if isinstance(item, (str, Constant)) or len(item) != 3:
        raise PlanFormatError(f"Malformed condition {item}")
    op, left, right = item
    expected = "!=" if inequality else "="
    if op != expected or not isinstance(left, str):
        raise PlanFormatError(f"Condition {item} must have the form ({expected} attr value)")
    return Condition(left, right, negated=inequality)


def _graph(item) -> BipartiteIneqGraph:
    if isinstance(item, (str, Constant)) or len(item) != 4 or item[0] != "graph":
        raise PlanFormatError(f"Expected (graph (left) (right) (edges)), got {item}")
    left, right = _symbols(item[1], "graph left"), _symbols(item[2], "graph right")
    edges = []
    for e in item[3]:
        pair = _symbols(e, "edge")
        if len(pair) != 2:
            raise PlanFormatError(f"Edge {e} must name two attributes")
        edges.append(pair)
    try:
        return BipartiteIneqGraph(left, right, frozenset(edges))
    except SchemaError as e:
        raise PlanFormatError(str(e)) from e


def _node(item) -> PlanNode:
    if isinstance(item, (str, Constant)) or not item:
        raise PlanFormatError(f"Expected a plan operator, got {item}")
    op, args = item[0], list(item[1:])

    def arity(n: int) -> None:
        if len(args) != n:
            raise PlanFormatError(f"Operator {op} takes {n} arguments, got {len(args)}")

    if op == "scan":
        arity(2)
        if not isinstance(args[0], str):
            raise PlanFormatError(f"Scan needs a relation name, got {args[0]}")
        return Scan(args[0], _symbols(args[1], "scan"))
    if op in ("select", "ineq"):
        arity(2)
        conditions = tuple(_condition(c, op == "ineq") for c in args[0])
        return Select(conditions, _node(args[1]), inequality=op == "ineq")
    if op == "project":
        arity(2)
        return Project(_symbols(args[0], "project"), _node(args[1]))
    if op == "hproject":
        arity(3)
        return HProject(_symbols(args[0], "hproject"), _graph(args[1]), _node(args[2]))
    if op == "join":
        arity(3)
        pairs = []
        for c in args[0]:
            pair = _symbols(c, "join condition")
            if len(pair) != 2:
                raise PlanFormatError(f"Join condition {c} must name two attributes")
            pairs.append(pair)
        return Join(tuple(pairs), _node(args[1]), _node(args[2]))
    if op == "product":
        arity(2)
        return Product(_node(args[0]), _node(args[1]))
    raise PlanFormatError(f"Unknown plan operator {op!r}")


def parse_plan(text: str) -> QueryPlan:
    """
    Parse an s-expression plan

    The top level is either an operator or `(plan (provenance (attr var) ...) root)`.
    Without a provenance block the mapping is left empty and has to be
    inferred from the query.
    """
    try:
        parsed = _GRAMMAR.parse_string(text, parse_all=True)[0]
    except pp.ParseBaseException as e:
        raise PlanFormatError(f"Plan syntax error at line {e.lineno}, column {e.col}: {e.msg}") from e

    provenance: Dict[str, str] = {}
    if not isinstance(parsed, (str, Constant)) and len(parsed) and parsed[0] == "plan":
        if len(parsed) != 3 or isinstance(parsed[1], (str, Constant)) or parsed[1][0] != "provenance":
            raise PlanFormatError("Expected (plan (provenance ...) root)")
        for entry in parsed[1][1:]:
            pair = _symbols(entry, "provenance")
            if len(pair) != 2:
                raise PlanFormatError(f"Provenance entry {entry} must be (attribute variable)")
            provenance[pair[0]] = pair[1]
        parsed = parsed[2]
    return QueryPlan(_node(parsed), provenance)


def load_plan(path: str) -> QueryPlan:
    with open(path, encoding="utf-8") as handle:
        return parse_plan(handle.read())


def _names(names) -> str:
    return "(" + " ".join(names) + ")"


def _term(term: Union[str, Constant]) -> str:
    return format_value(term.value) if isinstance(term, Constant) else term


def _format(node: PlanNode, depth: int, lines: List[str]) -> None:
    pad = "  " * depth
    if isinstance(node, Scan):
        lines.append(f"{pad}(scan {node.relation} {_names(node.attributes)})")
        return
    if isinstance(node, Select):
        op = "!=" if node.inequality else "="
        conditions = " ".join(f"({op} {c.left} {_term(c.right)})" for c in node.conditions)
        head = f"{pad}({'ineq' if node.inequality else 'select'} ({conditions})"
    elif isinstance(node, Project):
        head = f"{pad}(project {_names(node.attributes)}"
    elif isinstance(node, HProject):
        g = node.graph
        edges = " ".join(f"({x} {y})" for x, y in g.ordered_edges())
        head = f"{pad}(hproject {_names(node.attributes)} (graph {_names(g.left)} {_names(g.right)} ({edges}))"
    elif isinstance(node, Join):
        head = f"{pad}(join ({' '.join(f'({a} {b})' for a, b in node.conditions)})"
    else:
        head = f"{pad}(product"
    lines.append(head)
    for child in node.children:
        _format(child, depth + 1, lines)
    lines[-1] += ")"


def format_plan(plan: Union[QueryPlan, PlanNode]) -> str:
    """Pretty-print a plan so that parse_plan reads it back unchanged."""
    lines: List[str] = []
    if isinstance(plan, QueryPlan):
        if plan.provenance:
            entries = " ".join(f"({a} {v})" for a, v in sorted(plan.provenance.items()))
            lines.append(f"(plan (provenance {entries})")
            _format(plan.root, 1, lines)
            lines[-1] += ")"
            return "\n".join(lines)
        plan = plan.root
    _format(plan, 0, lines)
    return "\n".join(lines)


def _label(node: PlanNode) -> str:
    if isinstance(node, Scan):
        return f"{node.relation}({', '.join(node.attributes)})"
    if isinstance(node, Select):
        symbol = "σ≠" if node.inequality else "σ"
        return f"{symbol} {', '.join(str(c) for c in node.conditions)}"
    if isinstance(node, Project):
        return f"π {', '.join(node.attributes)}"
    if isinstance(node, HProject):
        edges = ", ".join(f"{x}≠{y}" for x, y in node.graph.ordered_edges())
        return f"π^H {', '.join(node.attributes)}\\nH: {edges or '∅'}  φ={phi(node.graph)}"
    if isinstance(node, Join):
        return "⋈ " + ", ".join(f"{a}={b}" for a, b in node.conditions)
    return "×"


def plan_to_dot(plan: Union[QueryPlan, PlanNode]) -> str:
    root = plan.root if isinstance(plan, QueryPlan) else plan
    lines = ["digraph plan {", "  node [shape=box];"]
    for path, node in walk(root):
        name = "n_" + path_label(path).replace(".", "_")
        label = _label(node).replace('"', '\\"')
        lines.append(f'  {name} [label="{label}"];')
        for i in range(len(node.children)):
            child = "n_" + path_label(path + (i,)).replace(".", "_")
            lines.append(f"  {name} -> {child};")
    lines.append("}")
    return "\n".join(lines)
