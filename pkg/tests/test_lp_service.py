from fractions import Fraction

import pytest

from services.generator_service import cross_query, cycle_query, path_query, single_atom_query
from services.graph_service import fractional_bounds, fractional_edge_cover_min, fractional_vertex_packing_max
from services.lp_service import LPError, solve_lp


def test_small_maximization_is_exact():
    solution = solve_lp([1, 1], [([1, 2], "<=", 4), ([3, 1], "<=", 6)])
    assert solution.objective == Fraction(14, 5)
    assert solution.values == [Fraction(8, 5), Fraction(6, 5)]


def test_minimization_with_lower_bounds():
    solution = solve_lp([1, 1], [([1, 0], ">=", 2), ([1, 1], ">=", 3)], maximize=False)
    assert solution.objective == 3


def test_equality_constraint():
    solution = solve_lp([1, 2], [([1, 1], "=", 5)])
    assert solution.values == [0, 5]


def test_infeasible():
    with pytest.raises(LPError, match="infeasible"):
        solve_lp([1], [([1], "<=", 1), ([1], ">=", 2)])


def test_unbounded():
    with pytest.raises(LPError, match="unbounded"):
        solve_lp([1], [])


def test_malformed_constraints():
    with pytest.raises(LPError):
        solve_lp([1, 1], [([1], "<=", 1)])
    with pytest.raises(LPError):
        solve_lp([1], [([1], "<", 1)])


@pytest.mark.parametrize(
    "q, expected",
    [
        (cycle_query(3), Fraction(3, 2)),
        (single_atom_query(4), Fraction(1)),
        (cross_query(4), Fraction(4)),
        (path_query(4), Fraction(3)),
    ],
)
def test_packing_equals_cover(q, expected):
    packing, cover = fractional_bounds(q)
    assert packing.value == cover.value == expected


def test_packing_weights_are_feasible():
    q = cycle_query(5)
    packing = fractional_vertex_packing_max(q)
    for atom in q.atoms:
        assert sum(packing.weights[v] for v in atom.variables) <= 1
    cover = fractional_edge_cover_min(q)
    assert sum(cover.weights.values()) == cover.value == Fraction(5, 2)
