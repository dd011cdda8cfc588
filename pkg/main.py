"""
Conjunctive queries with inequalities
Evaluate, rewrite, analyze, benchmark and generate instances from the command line
"""
import argparse
import json
import os
import random
import sys
from typing import Dict, List, Optional

import networkx as nx
from pydantic import BaseModel, Field

from schemas.plans import Project, QueryPlan
from schemas.schemas import InequalitySet, SchemaError
from services.colorcode_service import ColorCodingError
from services.generator_service import (
    QUERY_FAMILIES,
    GeneratorError,
    gen_3coloring_reduction,
    gen_grid_listcolor_reduction,
    gen_random_cq,
    gen_random_database,
    path_inequalities,
    running_example_query,
    write_instance,
)
from services.graph_service import (
    GraphGuardError,
    augmented_graph,
    fractional_bounds,
    gyo_is_acyclic,
    inequality_graph,
    integer_vertex_packing_max,
    primal_graph,
    query_graph,
    treewidth_exact,
    vertex_cover_min,
)
from services.ineq_service import IneqContractError
from services.listcolor_service import ListColoringContractError, ListColoringInstance, classify_components
from services.lp_service import LPError
from services.plan_format import PlanFormatError, format_plan, load_plan, plan_to_dot
from services.plan_service import (
    PlanError,
    TransformationError,
    blowup_report,
    default_plan,
    describe_step,
    infer_provenance,
    place_inequalities,
    pull_up_projections,
    push_down_h_projections,
    transform,
)
from services.query_service import QueryParseError, QueryScopeError, load_query
from services.relational_service import DataLoadError, format_rows, load_database
from pipeline.benchmark import DEFAULT_SIZES, BenchmarkRunner, linear_fit, write_bench_csv
from pipeline.cycles import CycleContractError
from pipeline.evaluation import STRATEGIES, QueryEvaluationPipeline
from pipeline.strategies import StrategyInapplicableError
from utils.config import Config, load_config
from utils.logger import setup_logger

logger = setup_logger()

EXIT_OK, EXIT_FALSE, EXIT_USAGE, EXIT_DATA = 0, 1, 2, 3

# TransformationError is a PlanError; usage errors are matched first.
USAGE_ERRORS = (
    QueryParseError,
    QueryScopeError,
    PlanFormatError,
    TransformationError,
    StrategyInapplicableError,
    CycleContractError,
    ColorCodingError,
    GeneratorError,
    GraphGuardError,
    ListColoringContractError,
    ValueError,
)
DATA_ERRORS = (DataLoadError, SchemaError, PlanError, IneqContractError, LPError)


class AnalysisReport(BaseModel):
    """Structural quantities of a query and its inequalities"""
    query: str = Field(description="Query name")
    acyclic: bool = Field(description="GYO reduction empties the hypergraph")
    tw_incidence: Optional[int] = Field(default=None, description="Treewidth of the query graph")
    tw_primal: Optional[int] = Field(default=None, description="Treewidth of the primal graph")
    tw_inequality: Optional[int] = Field(default=None, description="Treewidth of the inequality graph")
    tw_augmented: Optional[int] = Field(default=None, description="Treewidth of the query graph plus inequality edges")
    tw_primal_augmented: Optional[int] = Field(default=None, description="Treewidth of the primal graph plus inequality edges")
    int_packing: Optional[int] = Field(default=None, description="Maximum integer vertex packing")
    frac_packing: Optional[str] = Field(default=None, description="Maximum fractional vertex packing, exact")
    frac_cover: Optional[str] = Field(default=None, description="Minimum fractional edge cover, exact")
    vertex_cover: Optional[int] = Field(default=None, description="Minimum vertex cover (atoms of arity <= 2)")
    listcolor_class: List[str] = Field(default_factory=list, description="Solver class per inequality-graph component")


def _apply_overrides(config: Config, args) -> Config:
    for flag, key in (("seed", "seed"), ("threads", "threads")):
        value = getattr(args, flag, None)
        if value is not None:
            setattr(config, key, value)
    config.threads = max(1, config.threads)
    return config


def _load_instance(args):
    q, inequalities = load_query(args.query)
    data_dir = args.data_dir or os.path.dirname(os.path.abspath(args.query))
    db = load_database(data_dir, q.arities())
    return q, inequalities, db


def _load_plan(path: Optional[str], q) -> QueryPlan:
    if not path:
        return default_plan(q)
    plan = load_plan(path)
    if not plan.provenance:
        plan = QueryPlan(plan.root, infer_provenance(plan.root, q))
    return plan


def _write_json(payload: str, target: str) -> None:
    if target == "-":
        sys.stderr.write(payload + "\n")
        return
    with open(target, "w", encoding="utf-8") as handle:
        handle.write(payload + "\n")
    logger.info(f"Statistics saved to: {target}")


def cmd_eval(args, config: Config) -> int:
    q, inequalities, db = _load_instance(args)
    plan = load_plan(args.plan) if args.plan else None
    pipeline = QueryEvaluationPipeline(config)
    result = pipeline.evaluate(
        q, inequalities, db, strategy=args.strategy, plan=plan, family=args.family, reps=args.reps, seed=args.seed
    )

    if result.is_boolean:
        answer = not result.relation.is_empty()
        print("true" if answer else "false")
    else:
        for line in format_rows(result.relation):
            print(line)
        answer = not result.relation.is_empty()

    if args.stats:
        payload = {
            "query": q.name,
            "strategy": result.strategy,
            "seconds": result.seconds,
            "result_size": len(result.relation),
            "choice": result.choice.model_dump() if result.choice else None,
            "stats": result.stats,
        }
        _write_json(json.dumps(payload, indent=2, default=str), args.stats)
    return EXIT_OK if answer else EXIT_FALSE


def cmd_transform(args, config: Config) -> int:
    q, inequalities = load_query(args.query)
    plan = _load_plan(args.plan, q)

    if args.steps is None:
        transformed = transform(plan, q, inequalities)
    else:
        pulled = pull_up_projections(plan.root)
        placed = place_inequalities(pulled.p0, plan.provenance, inequalities)
        root = Project(pulled.attributes, push_down_h_projections(pulled, placed, args.steps))
        transformed = QueryPlan(root, dict(plan.provenance))

    print(format_plan(transformed))
    if args.trace:
        for step in pull_up_projections(plan.root).trace:
            print(f"; {describe_step(step)}")
    if args.dot:
        with open(args.dot, "w", encoding="utf-8") as handle:
            handle.write(plan_to_dot(transformed))
        logger.info(f"DOT rendering saved to: {args.dot}")
    if args.stats:
        _write_json(blowup_report(transformed.root).model_dump_json(indent=2), args.stats)
    return EXIT_OK


def _treewidth(graph: nx.Graph, limit: int, label: str) -> Optional[int]:
    try:
        width, _ = treewidth_exact(graph, limit)
        return width
    except GraphGuardError as e:
        logger.warning(f"Treewidth of the {label} graph skipped: {e}")
        return None


def analyze(q, inequalities, config: Config) -> AnalysisReport:
    limit = config.treewidth_exact_limit
    report = AnalysisReport(
        query=q.name,
        acyclic=gyo_is_acyclic(q),
        tw_incidence=_treewidth(query_graph(q), limit, "query"),
        tw_primal=_treewidth(primal_graph(q), limit, "primal"),
        tw_inequality=_treewidth(inequality_graph(inequalities), limit, "inequality"),
        tw_augmented=_treewidth(augmented_graph(q, inequalities), limit, "augmented"),
        tw_primal_augmented=_treewidth(primal_graph(q, inequalities), limit, "primal augmented"),
    )
    try:
        report.int_packing, _ = integer_vertex_packing_max(q, config.search_limit)
        if all(atom.arity <= 2 for atom in q.atoms):
            report.vertex_cover, _ = vertex_cover_min(q, config.search_limit)
    except GraphGuardError as e:
        logger.warning(f"Exhaustive packing search skipped: {e}")

    packing, cover = fractional_bounds(q)
    report.frac_packing, report.frac_cover = str(packing.value), str(cover.value)

    graph = inequality_graph(inequalities)
    instance = ListColoringInstance(graph, {v: frozenset() for v in graph.nodes})
    report.listcolor_class = [r.graph_class for r in classify_components(instance, config.listcolor_treewidth)]
    return report


def cmd_analyze(args, config: Config) -> int:
    q, inequalities = load_query(args.query)
    print(analyze(q, inequalities, config).model_dump_json(indent=2))
    return EXIT_OK


def cmd_bench(args, config: Config) -> int:
    runner = BenchmarkRunner(config)
    seed = config.seed
    rows = runner.run(args.suite, args.sizes, seed)
    if not rows:
        logger.warning("No benchmark rows were produced")
        return EXIT_FALSE

    filename = write_bench_csv(rows, args.output, config.output_directory)
    timed = [r for r in rows if r.strategy == "plan"]
    if args.suite == "path-ineq" and len(timed) >= 2:
        fit = linear_fit([r.size for r in timed], [r.seconds for r in timed])
        print(f"R^2 = {fit.r_squared:.4f}")
    disagreements = [r for r in rows if r.agrees is False]
    if disagreements:
        logger.error(f"{len(disagreements)} benchmark rows disagree with the oracle")
    logger.info(f"Benchmark {args.suite}: {len(rows)} rows saved to: {filename}")
    return EXIT_OK


def _grid_lists(p: int, seed: int, full: bool) -> Dict:
    rng = random.Random(seed)
    lists = {}
    for r in range(p):
        for c in range(p):
            lists[(r, c)] = {1, 2, 3} if full else set(rng.sample([1, 2, 3], rng.randint(2, 3)))
    return lists


def cmd_gen(args, config: Config) -> int:
    seed = config.seed
    kind = args.kind
    if kind in QUERY_FAMILIES:
        q = QUERY_FAMILIES[kind](args.k)
        inequalities = path_inequalities(args.k, args.pattern) if kind == "path" and args.pattern else None
        if inequalities is None:
            inequalities = InequalitySet()
        db = gen_random_database(q, args.domain, args.tuples, seed)
    elif kind == "running-example":
        q, inequalities, db = running_example_query([(1, 2, 3), (2, 2, 1), (4, 8, 2)])
    elif kind == "3coloring":
        graph = nx.gnp_random_graph(args.vertices, args.edge_prob, seed=seed)
        q, inequalities, db = gen_3coloring_reduction(graph, args.reduction)
    elif kind == "grid":
        reduction = gen_grid_listcolor_reduction(args.p, _grid_lists(args.p, seed, args.full_lists))
        q, inequalities, db = reduction.query, reduction.inequalities, reduction.database
    elif kind == "random":
        q, inequalities, db = gen_random_cq(seed, domain_size=args.domain)
    else:
        raise GeneratorError(f"Unknown instance kind {kind!r}")

    written = write_instance(args.out, q, inequalities, db)
    for path in written:
        print(path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Conjunctive queries with inequalities")
    sub = parser.add_subparsers(dest="command", required=True)

    ev = sub.add_parser("eval", help="Evaluate a query file over CSV relations")
    ev.add_argument("query", help="Query file (q(x) :- R(x, y), x != y.)")
    ev.add_argument("--data-dir", help="Directory with <Relation>.csv files (default: the query's directory)")
    ev.add_argument("--strategy", default="auto", choices=STRATEGIES, help="Evaluation strategy")
    ev.add_argument("--plan", help="Plan file for the plan strategy")
    ev.add_argument("--stats", help="Write JSON statistics to this file ('-' for stderr)")
    ev.add_argument("--seed", type=int, help="Seed for randomized strategies")
    ev.add_argument("--threads", type=int, help="Worker threads")
    ev.add_argument("--family", default="exhaustive", choices=("exhaustive", "random"), help="Color-coding hash family")
    ev.add_argument("--reps", type=int, help="Random hash functions (default: from the failure probability)")

    tr = sub.add_parser("transform", help="Rewrite a plan with H-projections")
    tr.add_argument("query", help="Query file")
    tr.add_argument("--plan", help="Plan file (default: left-deep plan in atom order)")
    tr.add_argument("--dot", help="Write a DOT rendering of the transformed plan")
    tr.add_argument("--trace", action="store_true", help="Print the projection pull-up steps as comments")
    tr.add_argument("--steps", type=int, help="Replay only this many push-down steps")
    tr.add_argument("--stats", help="Write the blow-up report as JSON ('-' for stderr)")

    an = sub.add_parser("analyze", help="Structural report as JSON")
    an.add_argument("query", help="Query file")

    be = sub.add_parser("bench", help="Run a benchmark suite and write CSV")
    be.add_argument("suite", choices=sorted(DEFAULT_SIZES), help="Suite name")
    be.add_argument("--sizes", type=int, nargs="+", help="Sizes to run (default: suite defaults)")
    be.add_argument("--seed", type=int, help="Instance seed")
    be.add_argument("--threads", type=int, help="Worker threads")
    be.add_argument("--output", help="CSV file (default: timestamped file in the output directory)")

    ge = sub.add_parser("gen", help="Write a query file and CSV relations")
    ge.add_argument(
        "kind", choices=sorted(QUERY_FAMILIES) + ["running-example", "3coloring", "grid", "random"], help="Instance kind"
    )
    ge.add_argument("--out", required=True, help="Output directory")
    ge.add_argument("--k", type=int, default=4, help="Size parameter of the query family")
    ge.add_argument("--pattern", choices=("i1", "i2", "i3", "i4", "complete"), help="Inequalities for the path family")
    ge.add_argument("--domain", type=int, default=5, help="Domain size for random data")
    ge.add_argument("--tuples", type=int, default=10, help="Tuples per random relation")
    ge.add_argument("--vertices", type=int, default=5, help="Graph size for the 3-coloring reduction")
    ge.add_argument("--edge-prob", type=float, default=0.5, help="Edge probability for the 3-coloring graph")
    ge.add_argument("--reduction", default="path", choices=("path", "star", "cross"), help="Query family to reduce into")
    ge.add_argument("--p", type=int, default=3, help="Grid side for the grid reduction")
    ge.add_argument("--full-lists", action="store_true", help="Give every grid cell all three colors")
    ge.add_argument("--seed", type=int, help="Generator seed")
    return parser


COMMANDS = {
    "eval": cmd_eval,
    "transform": cmd_transform,
    "analyze": cmd_analyze,
    "bench": cmd_bench,
    "gen": cmd_gen,
}


def main(argv: Optional[List[str]] = None) -> int:
    """Parse arguments, run one command and map failures to exit codes"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK

    try:
        config = _apply_overrides(load_config(), args)
        logger.info(f"Running {args.command}")
        return COMMANDS[args.command](args, config)
    except USAGE_ERRORS as e:
        logger.error(f"{args.command} failed: {str(e)}")
        return EXIT_USAGE
    except DATA_ERRORS as e:
        logger.error(f"{args.command} failed: {str(e)}")
        return EXIT_DATA
    except OSError as e:
        logger.error(f"{args.command} failed: {str(e)}")
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
