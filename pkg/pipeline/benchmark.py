"""
Benchmark suites: scaling of the transformed plan, color coding against the
oracle, and even-cycle detection
"""
import csv
import os
import random
from datetime import datetime
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field

from schemas.schemas import Database, InequalitySet, Relation
from services.generator_service import (
    even_cycle_query,
    gen_path_instances,
    gen_random_cq,
    path_inequalities,
    path_query,
)
from services.plan_service import blowup_report, default_plan, transform
from pipeline.evaluation import QueryEvaluationPipeline
from utils.config import Config
from utils.logger import setup_logger

logger = setup_logger(__name__)

PATH_LENGTH = 8
DEFAULT_SIZES: Dict[str, List[int]] = {
    "path-ineq": [1000, 10000, 100000],
    "colorcode-tiny": [20],
    "cycle": [100, 1000, 10000],
}
CSV_COLUMNS = (
    "suite",
    "strategy",
    "size",
    "seconds",
    "max_intermediate",
    "result_size",
    "agrees",
    "within_bound",
)


class BenchRow(BaseModel):
    """One timed evaluation"""
    suite: str = Field(description="Suite name")
    strategy: str = Field(description="Strategy that was timed")
    size: int = Field(description="Tuples per relation (or the instance seed for colorcode-tiny)")
    seconds: float = Field(description="Wall time of the evaluation")
    max_intermediate: Optional[int] = Field(default=None, description="Largest intermediate relation")
    result_size: int = Field(description="Answer tuples (1/0 for Boolean answers)")
    agrees: Optional[bool] = Field(default=None, description="Same answer as the oracle, when compared")
    within_bound: Optional[bool] = Field(default=None, description="Intermediates within e * max phi of the plan without inequalities")


class ScalingFit(BaseModel):
    slope: float
    intercept: float
    r_squared: float


def linear_fit(sizes: Sequence[float], seconds: Sequence[float]) -> ScalingFit:
    """Least-squares line through (size, seconds) and its R^2."""
    if len(sizes) < 2:
        raise ValueError("A linear fit needs at least two points")
    x = np.asarray(sizes, dtype=float)
    y = np.asarray(seconds, dtype=float)
    slope, intercept = np.polyfit(x, y, 1)
    residual = float(np.sum((y - (slope * x + intercept)) ** 2))
    total = float(np.sum((y - y.mean()) ** 2))
    r_squared = 1.0 if total == 0 else 1.0 - residual / total
    return ScalingFit(slope=float(slope), intercept=float(intercept), r_squared=r_squared)


class BenchmarkRunner:
    def __init__(self, config: Config):
        self.config = config
        self.pipeline = QueryEvaluationPipeline(config)
        self._suites: Dict[str, Callable[[int, int], List[BenchRow]]] = {
            "path-ineq": self._path_ineq,
            "colorcode-tiny": self._colorcode_tiny,
            "cycle": self._cycle,
        }

    @property
    def suites(self) -> List[str]:
        return list(self._suites)

    def run(self, suite: str, sizes: Optional[Sequence[int]] = None, seed: int = 0) -> List[BenchRow]:
        """
        Run one suite over the given sizes

        A size that fails is logged and skipped; the rest of the suite runs.
        """
        if suite not in self._suites:
            raise ValueError(f"Unknown benchmark suite {suite!r}; choose from {self.suites}")
        sizes = list(sizes) if sizes else DEFAULT_SIZES[suite]
        logger.info(f"Running benchmark suite {suite} over sizes {sizes} (seed {seed})")

        rows: List[BenchRow] = []
        for i, size in enumerate(sizes, 1):
            try:
                logger.info(f"Size {i}/{len(sizes)}: {size}")
                rows.extend(self._suites[suite](size, seed))
            except Exception as e:
                logger.error(f"Benchmark {suite} at size {size} failed: {str(e)}")
                continue

        if suite == "path-ineq":
            timed = [r for r in rows if r.strategy == "plan"]
            if len(timed) >= 2:
                fit = linear_fit([r.size for r in timed], [r.seconds for r in timed])
                logger.info(f"Plan time vs size: slope {fit.slope:.3g}s/tuple, R^2 = {fit.r_squared:.3f}")
        return rows

    def _path_ineq(self, size: int, seed: int) -> List[BenchRow]:
        q = path_query(PATH_LENGTH)
        inequalities = path_inequalities(PATH_LENGTH, "i1")
        db = gen_path_instances(PATH_LENGTH, domain_size=max(2, size), density=0.0, seed=seed, tuples=size)

        result = self.pipeline.evaluate(q, inequalities, db, strategy="plan")
        plan = default_plan(q)
        transformed = transform(plan, q, inequalities)
        report = blowup_report(transformed.root, plan.root, db)
        return [
            BenchRow(
                suite="path-ineq",
                strategy="plan",
                size=size,
                seconds=result.seconds,
                max_intermediate=result.stats.get("max_intermediate"),
                result_size=len(result.relation),
                within_bound=report.within_bound,
            )
        ]

    def _colorcode_tiny(self, size: int, seed: int) -> List[BenchRow]:
        rows = []
        for offset in range(size):
            q, inequalities, db = gen_random_cq(seed + offset, max_variables=3, domain_size=4, max_tuples=6)
            oracle = self.pipeline.evaluate(q, inequalities, db, strategy="oracle")
            coded = self.pipeline.evaluate(q, inequalities, db, strategy="colorcode", family="exhaustive")
            agrees = oracle.relation == coded.relation
            if not agrees:
                logger.error(f"Color coding disagrees with the oracle on instance seed {seed + offset}")
            for result, compared in ((oracle, None), (coded, agrees)):
                rows.append(
                    BenchRow(
                        suite="colorcode-tiny",
                        strategy=result.strategy,
                        size=seed + offset,
                        seconds=result.seconds,
                        result_size=len(result.relation),
                        agrees=compared,
                    )
                )
        return rows

    def _cycle(self, size: int, seed: int) -> List[BenchRow]:
        rng = random.Random(seed)
        domain = max(2, size // 2)
        drawn: set = set()
        while len(drawn) < min(size, domain * domain):
            drawn.add((rng.randint(1, domain), rng.randint(1, domain)))
        db = Database({"R": Relation.from_rows(("R.1", "R.2"), drawn)})
        q = even_cycle_query(2)
        inequalities = InequalitySet.of([("x1", "x3"), ("x2", "x4")])

        found = self.pipeline.evaluate(q, inequalities, db, strategy="cycle")
        rows = [
            BenchRow(
                suite="cycle",
                strategy="cycle",
                size=size,
                seconds=found.seconds,
                result_size=len(found.relation),
            )
        ]
        if size <= 100:
            oracle = self.pipeline.evaluate(q, inequalities, db, strategy="oracle")
            rows[0].agrees = oracle.relation == found.relation
            rows.append(
                BenchRow(
                    suite="cycle",
                    strategy="oracle",
                    size=size,
                    seconds=oracle.seconds,
                    result_size=len(oracle.relation),
                )
            )
        return rows


def write_bench_csv(rows: Sequence[BenchRow], filename: Optional[str] = None, directory: str = "data/output") -> str:
    """
    Save benchmark rows as CSV

    Args:
        rows: Rows to write, in order
        filename: Target file (default: a timestamped file in `directory`)

    Returns:
        Path of the written file
    """
    if not filename:
        timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
        filename = os.path.join(directory, f"bench_{timestamp}.csv")
    parent = os.path.dirname(filename)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(filename, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(CSV_COLUMNS)
        for row in rows:
            data = row.model_dump()
            writer.writerow(["" if data[c] is None else data[c] for c in CSV_COLUMNS])
    logger.info(f"Benchmark results saved to: {filename}")
    return filename
