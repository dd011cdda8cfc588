import csv

import pytest

from pipeline.benchmark import CSV_COLUMNS, BenchmarkRunner, linear_fit, write_bench_csv
from utils.config import Config


def test_linear_fit_on_a_line():
    fit = linear_fit([1, 2, 3, 4], [3, 5, 7, 9])
    assert fit.slope == pytest.approx(2)
    assert fit.intercept == pytest.approx(1)
    assert fit.r_squared == pytest.approx(1)


def test_linear_fit_needs_two_points():
    with pytest.raises(ValueError):
        linear_fit([1], [1])


def test_path_suite_rows():
    rows = BenchmarkRunner(Config()).run("path-ineq", [20, 40])
    assert [r.size for r in rows] == [20, 40]
    assert all(r.strategy == "plan" and r.within_bound for r in rows)
    assert all(r.max_intermediate is not None for r in rows)


def test_colorcode_suite_agrees_with_oracle():
    rows = BenchmarkRunner(Config()).run("colorcode-tiny", [3], seed=5)
    assert len(rows) == 6
    assert all(r.agrees for r in rows if r.strategy == "colorcode")


def test_cycle_suite_compares_small_sizes():
    rows = BenchmarkRunner(Config()).run("cycle", [30], seed=1)
    assert [r.strategy for r in rows] == ["cycle", "oracle"]
    assert rows[0].agrees


def test_unknown_suite():
    with pytest.raises(ValueError):
        BenchmarkRunner(Config()).run("tpch")


def test_csv_is_stable_apart_from_timings(tmp_path):
    runner = BenchmarkRunner(Config())
    paths = []
    for name in ("a.csv", "b.csv"):
        rows = runner.run("colorcode-tiny", [2], seed=3)
        paths.append(write_bench_csv(rows, str(tmp_path / name)))

    def without_seconds(path):
        with open(path, newline="", encoding="utf-8") as handle:
            return [{k: v for k, v in row.items() if k != "seconds"} for row in csv.DictReader(handle)]

    first, second = without_seconds(paths[0]), without_seconds(paths[1])
    assert first == second
    with open(paths[0], encoding="utf-8") as handle:
        assert handle.readline().strip() == ",".join(CSV_COLUMNS)


def test_default_csv_name_is_timestamped(tmp_path):
    rows = BenchmarkRunner(Config()).run("cycle", [10])
    path = write_bench_csv(rows, directory=str(tmp_path))
    assert path.startswith(str(tmp_path))
    assert path.endswith(".csv") and "bench_" in path
