"""
Select-project-join plans: evaluation, projection pull-up and H-projection push-down
"""
import math
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

from pydantic import BaseModel, Field

from schemas.plans import (
    BipartiteIneqGraph,
    HProject,
    Join,
    Path,
    PlanNode,
    Product,
    Project,
    QueryPlan,
    Scan,
    Select,
    is_inequality_select,
    node_at,
    path_label,
    scans,
    walk,
    with_children,
)
from schemas.schemas import CQ, Condition, Constant, Database, InequalitySet, Relation, SchemaError, Variable
from services import relational_service as rel
from services.ineq_service import IneqContractError, h_project, phi
from utils.logger import setup_logger

logger = setup_logger(__name__)


class PlanError(Exception):
    """Custom exception for malformed plans and failed plan evaluation"""
    pass


class TransformationError(PlanError):
    """Custom exception for plans the H-projection rewriting cannot handle"""
    pass


class EvalStats(BaseModel):
    """Instrumentation collected while evaluating a plan"""
    tuples_scanned: int = Field(default=0, description="Tuples read by Scan nodes")
    node_sizes: Dict[str, int] = Field(default_factory=dict, description="Output size per plan path")
    max_intermediate: int = Field(default=0, description="Largest output of any node")
    phi: Dict[str, int] = Field(default_factory=dict, description="phi(H) per H-projection path")
    seconds: float = Field(default=0.0, description="Wall-clock evaluation time")


class HProjectReport(BaseModel):
    """One H-projection of a transformed plan"""
    path: str = Field(description="Position of the node in the plan")
    attributes: List[str] = Field(description="Grouping attributes")
    left: List[str] = Field(description="Witness attributes (left side of H)")
    edges: List[Tuple[str, str]] = Field(description="Inequality edges of H")
    phi: int = Field(description="Blow-up budget of this H-projection")


class BlowupReport(BaseModel):
    """Per-H-projection budgets and the resulting size and time factors"""
    hprojects: List[HProjectReport] = Field(default_factory=list)
    max_phi: int = Field(default=1, description="Largest phi over all H-projections")
    intermediate_factor: float = Field(description="e * max phi: bound on intermediate growth")
    time_factor: float = Field(description="(e * max phi)^2: bound on running-time growth")
    measured_ratios: Dict[str, float] = Field(
        default_factory=dict, description="Transformed / original size per position of the projection-free plan"
    )
    max_measured_ratio: float = Field(default=0.0)
    within_bound: Optional[bool] = Field(default=None, description="Every measured ratio is within e * max phi")


# ---------------------------------------------------------------- evaluation


def _validate(node: PlanNode) -> None:
    if isinstance(node, (Project, HProject)):
        missing = [a for a in node.attributes if a not in node.child.schema]
        if missing:
            raise PlanError(f"Projection attributes {missing} not in child schema {node.child.schema}")
    elif isinstance(node, Select):
        for c in node.conditions:
            for a in c.attributes:
                if a not in node.child.schema:
                    raise PlanError(f"Selection attribute {a} not in child schema {node.child.schema}")
    elif isinstance(node, (Join, Product)):
        overlap = set(node.left.schema) & set(node.right.schema)
        if overlap:
            raise PlanError(f"Sibling subplans share attributes {sorted(overlap)}")
        if isinstance(node, Join):
            for a, b in node.conditions:
                if a not in node.left.schema or b not in node.right.schema:
                    raise PlanError(f"Join condition {a} = {b} does not match its inputs")
    elif isinstance(node, Scan):
        if len(set(node.attributes)) != len(node.attributes):
            raise PlanError(f"Scan of {node.relation} repeats an attribute")


def validate_plan(root: PlanNode) -> None:
    for _, node in walk(root):
        _validate(node)


def _eval(node: PlanNode, db: Database, path: Path, stats: Optional[EvalStats], max_workers: int) -> Relation:
    if isinstance(node, Scan):
        base = db.get(node.relation)
        if base is None:
            raise PlanError(f"Relation {node.relation} is not in the database")
        if base.arity != len(node.attributes):
            raise PlanError(
                f"Scan of {node.relation} expects arity {len(node.attributes)}, found {base.arity}"
            )
        result = base.rename(node.attributes)
        if stats is not None:
            stats.tuples_scanned += len(result)
    else:
        inputs = [_eval(c, db, path + (i,), stats, max_workers) for i, c in enumerate(node.children)]
        if isinstance(node, Select):
            result = rel.select(inputs[0], node.conditions)
        elif isinstance(node, Project):
            result = rel.project(inputs[0], node.attributes)
        elif isinstance(node, HProject):
            try:
                result = h_project(inputs[0], node.attributes, node.graph, max_workers=max_workers)
            except IneqContractError as e:
                raise PlanError(f"H-projection at {path_label(path)}: {e}") from e
            if stats is not None:
                stats.phi[path_label(path)] = phi(node.graph)
        elif isinstance(node, Join):
            result = rel.join(inputs[0], inputs[1], node.conditions)
        else:
            result = rel.product(inputs[0], inputs[1])

    if stats is not None:
        size = len(result)
        stats.node_sizes[path_label(path)] = size
        stats.max_intermediate = max(stats.max_intermediate, size)
    return result


def eval_plan(
    root: PlanNode, db: Database, stats: Optional[EvalStats] = None, max_workers: int = 1
) -> Relation:
    """
    Evaluate a plan bottom-up

    Args:
        root: Plan tree
        db: Database holding every scanned relation
        stats: Optional collector for per-node sizes
        max_workers: Passed to H-projections

    Returns:
        Relation over the plan's output schema
    """
    validate_plan(root)
    started = time.perf_counter()
    try:
        result = _eval(root, db, (), stats, max_workers)
    except SchemaError as e:
        raise PlanError(str(e)) from e
    if stats is not None:
        stats.seconds += time.perf_counter() - started
    return result


# -------------------------------------------------------------- default plan


def _fresh(base: str, taken: set) -> str:
    name = base
    while name in taken:
        name += "'"
    taken.add(name)
    return name


def default_plan(q: CQ) -> QueryPlan:
    """
    Left-deep plan joining atoms in order

    Constants and repeated variables become selections on the scan; after
    every join the running result is projected to the variables that later
    atoms or the head still need.
    """
    taken_attrs: set = set()
    provenance: Dict[str, str] = {}

    def atom_plan(index: int) -> Tuple[PlanNode, Dict[str, str]]:
        atom = q.atoms[index]
        attrs, conditions, first = [], [], {}
        for pos, term in enumerate(atom.terms):
            if isinstance(term, Variable):
                name = _fresh(term.name, taken_attrs)
                provenance[name] = term.name
                if term.name in first:
                    conditions.append(Condition(first[term.name], name))
                else:
                    first[term.name] = name
            else:
                name = _fresh(f"{atom.relation}.{pos + 1}", taken_attrs)
                conditions.append(Condition(name, term))
            attrs.append(name)
        node: PlanNode = Scan(atom.relation, tuple(attrs))
        if conditions:
            node = Select(tuple(conditions), node)
        return node, first

    node, bound = atom_plan(0)
    for i in range(1, len(q.atoms)):
        needed = set(q.head)
        for atom in q.atoms[i:]:
            needed.update(atom.variables)
        keep = tuple(a for v, a in bound.items() if v in needed)
        if keep != node.schema:
            node = Project(keep, node)
            bound = {v: a for v, a in bound.items() if v in needed}

        right, first = atom_plan(i)
        conditions = tuple((bound[v], first[v]) for v in q.atoms[i].variables if v in bound)
        node = Join(conditions, node, right) if conditions else Product(node, right)
        for v, a in first.items():
            bound.setdefault(v, a)

    head = tuple(bound[v] for v in q.head)
    if head != node.schema:
        node = Project(head, node)
    return QueryPlan(node, provenance)


def evaluate_query(q: CQ, db: Database, stats: Optional[EvalStats] = None) -> Relation:
    """Evaluate a CQ (no inequalities) with its default plan; schema = head variables."""
    plan = default_plan(q)
    return eval_plan(plan.root, db, stats).rename(q.head)


# --------------------------------------------------------- scans and provenance


def _conflicts(scan: Scan, atom, provenance: Dict[str, str]) -> bool:
    for attr, term in zip(scan.attributes, atom.terms):
        v = provenance.get(attr)
        if v is None:
            continue
        if not isinstance(term, Variable) or term.name != v:
            return True
    return False


def scan_atoms(root: PlanNode, q: CQ, provenance: Optional[Dict[str, str]] = None) -> Dict[Path, int]:
    """
    Match every scan of a plan with one atom of q

    With provenance, a scan goes to the first unused atom over the same relation
    whose variables agree with the provenance of the scan's attributes. Without
    it, the i-th scan of a relation is the i-th atom over that relation.
    """
    pending: Dict[str, List[int]] = {}
    for i, atom in enumerate(q.atoms):
        pending.setdefault(atom.relation, []).append(i)
    mapping = {}
    for path, scan in scans(root):
        candidates = [
            i for i in pending.get(scan.relation, []) if q.atoms[i].arity == len(scan.attributes)
        ]
        if provenance:
            candidates = [i for i in candidates if not _conflicts(scan, q.atoms[i], provenance)]
        if not candidates:
            if not pending.get(scan.relation):
                raise PlanError(f"Plan scans {scan.relation} more often than the query uses it")
            raise PlanError(f"Scan of {scan.relation} over {scan.attributes} matches no atom of {q.name}")
        index = candidates[0]
        pending[scan.relation].remove(index)
        mapping[path] = index
    unused = [i for rest in pending.values() for i in rest]
    if unused:
        raise PlanError(f"Plan does not scan atoms {[str(q.atoms[i]) for i in unused]}")
    return mapping


def infer_provenance(root: PlanNode, q: CQ) -> Dict[str, str]:
    provenance = {}
    for path, index in scan_atoms(root, q).items():
        scan = node_at(root, path)
        for attr, term in zip(scan.attributes, q.atoms[index].terms):
            if isinstance(term, Variable):
                provenance[attr] = term.name
    return provenance


def rebind_scans(plan: QueryPlan, original: CQ, rewritten: CQ) -> QueryPlan:
    """Point scans at the relations of a rewritten query (e.g. private filtered copies)."""
    mapping = scan_atoms(plan.root, original, plan.provenance)

    def rebuild(node: PlanNode, path: Path) -> PlanNode:
        if isinstance(node, Scan):
            return Scan(rewritten.atoms[mapping[path]].relation, node.attributes)
        return with_children(node, [rebuild(c, path + (i,)) for i, c in enumerate(node.children)])

    return QueryPlan(rebuild(plan.root, ()), dict(plan.provenance))


# ------------------------------------------------------------------ pull-up


@dataclass(frozen=True)
class Absorption:
    """Pi_X(Pi_Y(S)) -> Pi_X(S) at a position; records the absorbed Y."""
    path: Path
    inner: Tuple[str, ...]


@dataclass(frozen=True)
class Distribution:
    """Pi_X1(R1) x R2 -> Pi_{X1 u att(R2)}(R1 x R2); side is the child that held Pi_X1."""
    path: Path
    side: int
    kept: Tuple[str, ...]


@dataclass(frozen=True)
class Commutation:
    """sigma(Pi_X(S)) -> Pi_X(sigma(S)) at the position of the selection."""
    path: Path
    attributes: Tuple[str, ...]


RuleStep = Union[Absorption, Distribution, Commutation]


@dataclass
class PullUp:
    """Result of moving every projection to the top: Pi_X(P0) plus the rule trace."""
    p0: PlanNode
    attributes: Tuple[str, ...]
    trace: List[RuleStep] = field(default_factory=list)


def describe_step(step: RuleStep) -> str:
    if isinstance(step, Absorption):
        return f"absorption at {path_label(step.path)}: inner projection ({', '.join(step.inner)})"
    if isinstance(step, Distribution):
        return (
            f"distribution at {path_label(step.path)} from side {step.side}: "
            f"({', '.join(step.kept)})"
        )
    return f"selection commute at {path_label(step.path)}: ({', '.join(step.attributes)})"


def _pull(node: PlanNode, path: Path, trace: List[RuleStep]) -> Tuple[PlanNode, Optional[Tuple[str, ...]]]:
    if isinstance(node, Scan):
        return node, None
    if isinstance(node, HProject) or is_inequality_select(node):
        raise PlanError("Pull-up expects a plan without H-projections or inequality selections")
    if isinstance(node, Project):
        child, pending = _pull(node.child, path, trace)
        if pending is not None:
            trace.append(Absorption(path, pending))
        return child, tuple(node.attributes)
    if isinstance(node, Select):
        child, pending = _pull(node.child, path + (0,), trace)
        if pending is not None:
            trace.append(Commutation(path, pending))
        return Select(node.conditions, child), pending

    left, lp = _pull(node.left, path + (0,), trace)
    right, rp = _pull(node.right, path + (1,), trace)
    p0 = with_children(node, [left, right])
    if lp is None and rp is None:
        return p0, None
    if rp is None:
        trace.append(Distribution(path, 0, lp))
        return p0, lp + right.schema
    if lp is None:
        trace.append(Distribution(path, 1, rp))
        return p0, left.schema + rp
    # Both sides projected: distribute the left, then the right, and absorb.
    trace.append(Distribution(path, 0, lp))
    trace.append(Distribution(path, 1, rp))
    trace.append(Absorption(path, left.schema + rp))
    return p0, lp + rp


def pull_up_projections(root: PlanNode) -> PullUp:
    """
    Move every projection to the top of the plan

    Joins are treated as a selection over a product, so distribution and
    the commute with the join condition happen in one step and the join
    node itself is kept.

    Returns:
        PullUp with the projection-free plan P0, the top attributes X and the rule trace
    """
    validate_plan(root)
    trace: List[RuleStep] = []
    p0, pending = _pull(root, (), trace)
    attributes = pending if pending is not None else p0.schema
    logger.debug(f"Pulled up projections with {len(trace)} rule steps; top attributes {attributes}")
    return PullUp(p0, tuple(attributes), trace)


# ---------------------------------------------------------------- push-down


@dataclass(frozen=True)
class PlacedInequality:
    path: Path
    condition: Condition


def _attribute_owner(p0: PlanNode, provenance: Dict[str, str]) -> Dict[Path, Dict[str, str]]:
    """First attribute (in schema order) of each variable, per node of P0."""
    owners = {}
    for path, node in walk(p0):
        first: Dict[str, str] = {}
        for a in node.schema:
            v = provenance.get(a)
            if v is not None and v not in first:
                first[v] = a
        owners[path] = first
    return owners


def _post_order(root: PlanNode, path: Path = ()):
    for i, child in enumerate(root.children):
        yield from _post_order(child, path + (i,))
    yield path, root


def place_inequalities(p0: PlanNode, provenance: Dict[str, str], inequalities: InequalitySet) -> List[PlacedInequality]:
    """
    Attach each variable inequality to the lowest node where both sides are in scope

    Returns:
        Attribute-level inequalities with the position they are applied at
    """
    owners = _attribute_owner(p0, provenance)
    order = [path for path, _ in _post_order(p0)]
    placed = []
    for a, b in inequalities:
        for path in order:
            first = owners[path]
            if a in first and b in first:
                placed.append(PlacedInequality(path, Condition(first[a], first[b], negated=True)))
                break
        else:
            raise TransformationError(f"Inequality {a} != {b} is never in scope of a single subplan")
    for v, c in sorted(inequalities.constants, key=str):
        for path in order:
            if v in owners[path]:
                placed.append(PlacedInequality(path, Condition(owners[path][v], Constant(c), negated=True)))
                break
        else:
            raise TransformationError(f"Inequality {v} != {c} refers to a variable the plan never scans")
    return placed


def _site_graph(
    attributes: Tuple[str, ...], node: PlanNode, all_attributes: Tuple[str, ...], placed: List[PlacedInequality]
) -> BipartiteIneqGraph:
    inside = set(node.schema)
    left = tuple(a for a in node.schema if a not in attributes)
    right = tuple(a for a in all_attributes if a not in inside)
    left_set, right_set = set(left), set(right)
    edges = set()
    for p in placed:
        c = p.condition
        if isinstance(c.right, Constant):
            continue
        if c.left in left_set and c.right in right_set:
            edges.add((c.left, c.right))
        elif c.right in left_set and c.left in right_set:
            edges.add((c.right, c.left))
    return BipartiteIneqGraph(left, right, frozenset(edges))


def push_down_h_projections(
    pulled: PullUp, placed: Sequence[PlacedInequality], steps: Optional[int] = None
) -> PlanNode:
    """
    Turn Pi_X^{H0}(sigma_I(P0)) back into the shape of the original plan

    The pull-up trace is replayed in reverse: a reversed absorption keeps an
    inner H-projection at the same position, a reversed distribution adds
    one on the child that held the projection, and a reversed commute moves
    the innermost H-projection below the selection. Each H is derived from
    the position: witnesses are the subplan attributes not kept, the right
    side is everything outside the subplan.

    Args:
        pulled: Output of pull_up_projections
        placed: Attribute-level inequalities and their positions
        steps: Replay only this many reversed steps (all by default)

    Returns:
        Plan rooted at the outermost H-projection (without the final projection)
    """
    all_attributes = pulled.p0.schema
    sites: Dict[Path, List[Tuple[str, ...]]] = {(): [pulled.attributes]}
    replay = list(reversed(pulled.trace))
    if steps is not None:
        replay = replay[:steps]

    for step in replay:
        if isinstance(step, Absorption):
            sites.setdefault(step.path, []).append(step.inner)
        elif isinstance(step, Distribution):
            sites.setdefault(step.path + (step.side,), []).append(step.kept)
        else:
            stack = sites.get(step.path)
            if not stack:
                raise TransformationError(f"No projection to commute at {path_label(step.path)}")
            moved = stack.pop()
            sites.setdefault(step.path + (0,), []).append(moved)

    by_path: Dict[Path, List[Condition]] = {}
    for p in placed:
        by_path.setdefault(p.path, []).append(p.condition)

    def build(node: PlanNode, path: Path) -> PlanNode:
        out = with_children(node, [build(c, path + (i,)) for i, c in enumerate(node.children)])
        if path in by_path:
            out = Select(tuple(by_path[path]), out, inequality=True)
        for attributes in reversed(sites.get(path, [])):
            out = HProject(attributes, _site_graph(attributes, node, all_attributes, placed), out)
        return out

    return build(pulled.p0, ())


def transform(plan: QueryPlan, q: CQ, inequalities: InequalitySet) -> QueryPlan:
    """
    Rewrite a plan for q into a plan for (q, I)

    Args:
        plan: SPJ plan computing q, with attribute provenance
        q: The query (used to check the provenance covers every variable)
        inequalities: Variable inequalities to enforce

    Returns:
        Plan whose final projection discards the witness attributes
    """
    missing = [v for v in inequalities.variables if not plan.attributes_of(v)]
    if missing:
        raise TransformationError(f"Plan provenance has no attribute for variables {missing}")
    pulled = pull_up_projections(plan.root)
    placed = place_inequalities(pulled.p0, plan.provenance, inequalities)
    pushed = push_down_h_projections(pulled, placed)
    root = Project(pulled.attributes, pushed)
    logger.info(
        f"Transformed plan for {q.name}: {len(pulled.trace)} rule steps, "
        f"{len(placed)} inequalities placed, max phi {max_phi(root)}"
    )
    return QueryPlan(root, dict(plan.provenance))


# --------------------------------------------------------------- blow-up


def hproject_reports(root: PlanNode) -> List[HProjectReport]:
    return [
        HProjectReport(
            path=path_label(path),
            attributes=list(node.attributes),
            left=list(node.graph.left),
            edges=sorted(node.graph.edges),
            phi=phi(node.graph),
        )
        for path, node in walk(root)
        if isinstance(node, HProject)
    ]


def max_phi(root: PlanNode) -> int:
    return max((r.phi for r in hproject_reports(root)), default=1)


def p0_positions(root: PlanNode) -> Dict[Path, Tuple[Path, str]]:
    """
    Map each plan path to (position in P0, role)

    Projections and inequality selections are wrappers: they share the P0
    position of the node they wrap. The role is "outer" for the outermost
    node at a position and "base" for the P0 node itself.
    """
    positions: Dict[Path, Tuple[Path, str]] = {}

    def visit(node: PlanNode, path: Path, p0: Path, outer: bool) -> None:
        wrapper = isinstance(node, (Project, HProject)) or is_inequality_select(node)
        role = "outer" if outer else ("base" if not wrapper else "inner")
        positions[path] = (p0, role)
        if wrapper:
            visit(node.children[0], path + (0,), p0, False)
        else:
            if outer:
                positions[path] = (p0, "outer+base")
            for i, child in enumerate(node.children):
                visit(child, path + (i,), p0 + (i,), True)

    visit(root, (), (), True)
    return positions


def _sizes_by_p0(root: PlanNode, stats: EvalStats) -> Dict[str, int]:
    sizes = {}
    for path, (p0, role) in p0_positions(root).items():
        size = stats.node_sizes.get(path_label(path))
        if size is None:
            continue
        for r in role.split("+"):
            if r in ("outer", "base"):
                sizes[f"{r}@{path_label(p0)}"] = size
    return sizes


def blowup_report(
    transformed: PlanNode, original: Optional[PlanNode] = None, db: Optional[Database] = None
) -> BlowupReport:
    """
    Per-H-projection phi values and the e * max phi bound

    With the original plan and a database, both plans are evaluated and the
    output sizes at matching positions of the projection-free plan compared.
    The final witness-discarding projection is skipped: it has no counterpart.
    """
    reports = hproject_reports(transformed)
    top = max((r.phi for r in reports), default=1)
    report = BlowupReport(
        hprojects=reports,
        max_phi=top,
        intermediate_factor=math.e * top,
        time_factor=(math.e * top) ** 2,
    )
    if original is None or db is None:
        return report

    body = transformed.child if isinstance(transformed, Project) else transformed
    mine, theirs = EvalStats(), EvalStats()
    eval_plan(body, db, mine)
    eval_plan(original, db, theirs)
    a, b = _sizes_by_p0(body, mine), _sizes_by_p0(original, theirs)
    ratios = {}
    for key, size in a.items():
        if key in b:
            ratios[key] = size / b[key] if b[key] else (0.0 if size == 0 else math.inf)
    report.measured_ratios = ratios
    report.max_measured_ratio = max(ratios.values(), default=0.0)
    report.within_bound = report.max_measured_ratio <= report.intermediate_factor + 1e-9
    if not report.within_bound:
        logger.warning(f"Intermediate growth {report.max_measured_ratio:.2f} exceeds e * max phi")
    return report
