"""
Exact linear programming over rationals (two-phase tableau simplex)
"""
from dataclasses import dataclass
from fractions import Fraction
from typing import List, Optional, Sequence, Set, Tuple

from utils.logger import setup_logger

logger = setup_logger(__name__)

Constraint = Tuple[Sequence, str, object]


class LPError(Exception):
    """Custom exception for infeasible, unbounded or malformed linear programs"""
    pass


@dataclass
class LPSolution:
    values: List[Fraction]
    objective: Fraction


class _Tableau:
    def __init__(self, rows: List[List[Fraction]], basis: List[int]):
        self.rows = rows
        self.basis = basis

    @property
    def width(self) -> int:
        return len(self.rows[0]) - 1 if self.rows else 0

    def pivot(self, i: int, j: int) -> None:
        row = self.rows[i]
        piv = row[j]
        self.rows[i] = row = [v / piv for v in row]
        for k, other in enumerate(self.rows):
            if k != i and other[j] != 0:
                f = other[j]
                self.rows[k] = [a - f * b for a, b in zip(other, row)]
        self.basis[i] = j

    def optimize(self, cost: Sequence[Fraction], allowed: Set[int]) -> None:
        """Maximize cost . x with Bland's rule; only columns in `allowed` may enter."""
        while True:
            entering = None
            for j in sorted(allowed):
                if j in self.basis:
                    continue
                reduced = cost[j] - sum(cost[b] * r[j] for b, r in zip(self.basis, self.rows))
                if reduced > 0:
                    entering = j
                    break
            if entering is None:
                return
            best: Optional[Tuple[Fraction, int, int]] = None
            for i, r in enumerate(self.rows):
                if r[entering] > 0:
                    candidate = (r[-1] / r[entering], self.basis[i], i)
                    if best is None or candidate < best:
                        best = candidate
            if best is None:
                raise LPError("Linear program is unbounded")
            self.pivot(best[2], entering)

    def value(self, n: int) -> List[Fraction]:
        x = [Fraction(0)] * n
        for b, r in zip(self.basis, self.rows):
            if b < n:
                x[b] = r[-1]
        return x


def solve_lp(objective: Sequence, constraints: Sequence[Constraint], maximize: bool = True) -> LPSolution:
    """
    Optimize objective . x subject to constraints and x >= 0

    Args:
        objective: One coefficient per variable
        constraints: (coefficients, sense, rhs) with sense one of "<=", ">=", "="
        maximize: Maximize (default) or minimize

    Returns:
        LPSolution with exact Fraction values
    """
    n = len(objective)
    cost = [Fraction(c) for c in objective]
    if not maximize:
        cost = [-c for c in cost]

    normalized = []
    for coefficients, sense, rhs in constraints:
        if len(coefficients) != n:
            raise LPError(f"Constraint has {len(coefficients)} coefficients, expected {n}")
        if sense not in ("<=", ">=", "="):
            raise LPError(f"Unknown constraint sense {sense!r}")
        a, b = [Fraction(c) for c in coefficients], Fraction(rhs)
        if b < 0:
            a, b = [-c for c in a], -b
            sense = {"<=": ">=", ">=": "<=", "=": "="}[sense]
        normalized.append((a, sense, b))

    slacks = sum(1 for _, s, _ in normalized if s != "=")
    artificials = sum(1 for _, s, _ in normalized if s != "<=")
    width = n + slacks + artificials
    rows, basis = [], []
    slack_col, art_col = n, n + slacks
    art_columns = set()
    for a, sense, b in normalized:
        row = a + [Fraction(0)] * (slacks + artificials) + [b]
        if sense == "<=":
            row[slack_col] = Fraction(1)
            basis.append(slack_col)
            slack_col += 1
        else:
            if sense == ">=":
                row[slack_col] = Fraction(-1)
                slack_col += 1
            row[art_col] = Fraction(1)
            basis.append(art_col)
            art_columns.add(art_col)
            art_col += 1
        rows.append(row)

    tableau = _Tableau(rows, basis)
    if art_columns:
        phase_one = [Fraction(-1) if j in art_columns else Fraction(0) for j in range(width)]
        tableau.optimize(phase_one, set(range(width)))
        infeasibility = sum(r[-1] for b, r in zip(tableau.basis, tableau.rows) if b in art_columns)
        if infeasibility > 0:
            raise LPError("Linear program is infeasible")
        # Drive zero-valued artificials out of the basis; drop redundant rows.
        i = 0
        while i < len(tableau.rows):
            if tableau.basis[i] in art_columns:
                column = next(
                    (j for j in range(width) if j not in art_columns and tableau.rows[i][j] != 0), None
                )
                if column is None:
                    del tableau.rows[i]
                    del tableau.basis[i]
                    continue
                tableau.pivot(i, column)
            i += 1

    full_cost = cost + [Fraction(0)] * (width - n)
    tableau.optimize(full_cost, set(range(width)) - art_columns)
    x = tableau.value(n)
    value = sum(c * v for c, v in zip(objective, x))
    logger.debug(f"Solved LP with {n} variables and {len(constraints)} constraints: {value}")
    return LPSolution(x, Fraction(value))
