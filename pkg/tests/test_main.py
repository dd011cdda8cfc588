import json
from pathlib import Path

import pytest

from main import EXIT_DATA, EXIT_FALSE, EXIT_OK, EXIT_USAGE, analyze, main
from services.generator_service import write_instance
from services.query_service import parse_query
from tests.conftest import Q0_PLAN, Q0_TEXT
from utils.config import Config


@pytest.fixture
def q0_dir(tmp_path, q0, q0_db):
    q, inequalities = q0
    write_instance(str(tmp_path), q, inequalities, q0_db)
    (tmp_path / "plan.sexp").write_text(Q0_PLAN)
    return tmp_path


def test_eval_prints_sorted_rows(q0_dir, capsys):
    assert main(["eval", str(q0_dir / "query.cq")]) == EXIT_OK
    assert capsys.readouterr().out.split() == ["1", "5"]


@pytest.mark.parametrize("strategy", ["oracle", "plan", "augment", "cover"])
def test_eval_with_explicit_strategy(q0_dir, capsys, strategy):
    assert main(["eval", str(q0_dir / "query.cq"), "--strategy", strategy]) == EXIT_OK
    assert capsys.readouterr().out.split() == ["1", "5"]


def test_eval_with_plan_and_stats(q0_dir, capsys):
    stats = q0_dir / "stats.json"
    code = main([
        "eval", str(q0_dir / "query.cq"), "--strategy", "plan",
        "--plan", str(q0_dir / "plan.sexp"), "--stats", str(stats),
    ])
    assert code == EXIT_OK
    payload = json.loads(stats.read_text())
    assert payload["strategy"] == "plan"
    assert payload["result_size"] == 2
    assert sorted(payload["stats"]["phi"].values()) == [1, 1, 2]


def test_boolean_false_exits_one(tmp_path, capsys):
    (tmp_path / "query.cq").write_text("q() :- R(x, y), x != y.\n")
    (tmp_path / "R.csv").write_text("1,1\n2,2\n")
    assert main(["eval", str(tmp_path / "query.cq")]) == EXIT_FALSE
    assert capsys.readouterr().out.strip() == "false"
    (tmp_path / "R.csv").write_text("1,2\n")
    assert main(["eval", str(tmp_path / "query.cq")]) == EXIT_OK


def test_data_dir_option(q0_dir, tmp_path_factory, capsys):
    elsewhere = tmp_path_factory.mktemp("queries")
    (elsewhere / "q.cq").write_text(Q0_TEXT)
    assert main(["eval", str(elsewhere / "q.cq"), "--data-dir", str(q0_dir)]) == EXIT_OK


def test_parse_error_exits_two(tmp_path):
    (tmp_path / "query.cq").write_text("q(x) :- R(x,, y).")
    assert main(["eval", str(tmp_path / "query.cq")]) == EXIT_USAGE


def test_bad_arguments_exit_two():
    assert main(["eval"]) == EXIT_USAGE
    assert main(["eval", "query.cq", "--strategy", "magic"]) == EXIT_USAGE


def test_malformed_csv_exits_three(q0_dir):
    (q0_dir / "S.csv").write_text("2,1\n2\n")
    assert main(["eval", str(q0_dir / "query.cq")]) == EXIT_DATA


def test_missing_relation_exits_three(q0_dir):
    (q0_dir / "T.csv").unlink()
    assert main(["eval", str(q0_dir / "query.cq")]) == EXIT_DATA


def test_transform_prints_plan_trace_and_dot(q0_dir, capsys):
    dot = q0_dir / "plan.dot"
    code = main([
        "transform", str(q0_dir / "query.cq"), "--plan", str(q0_dir / "plan.sexp"),
        "--trace", "--dot", str(dot), "--stats", str(q0_dir / "blowup.json"),
    ])
    assert code == EXIT_OK
    out = capsys.readouterr().out
    assert "(hproject (C E)" in out
    assert "; selection commute at 0" in out
    assert "φ=2" in dot.read_text()
    assert json.loads((q0_dir / "blowup.json").read_text())["max_phi"] == 2


def test_transform_with_partial_replay(q0_dir, capsys):
    code = main(["transform", str(q0_dir / "query.cq"), "--plan", str(q0_dir / "plan.sexp"), "--steps", "0"])
    assert code == EXIT_OK
    assert "(hproject (C E)" not in capsys.readouterr().out


def test_analyze_reports_json(q0_dir, capsys):
    assert main(["analyze", str(q0_dir / "query.cq")]) == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    assert report["acyclic"] is True
    assert report["frac_cover"] == "2"
    assert report["frac_packing"] == "2"
    assert report["tw_incidence"] == 1


def test_analyze_path_with_inequalities():
    q, inequalities = parse_query(
        "p() :- R1(x1, x2), R2(x2, x3), R3(x3, x4), R4(x4, x5), x1 != x3, x2 != x4, x3 != x5."
    )
    report = analyze(q, inequalities, Config())
    assert report.tw_primal_augmented == 2
    assert report.int_packing == 3
    assert report.vertex_cover == 2
    assert sorted(report.listcolor_class) == ["clique", "forest"]


def test_gen_then_eval(tmp_path, capsys):
    out = tmp_path / "p3"
    assert main(["gen", "path", "--out", str(out), "--k", "3", "--pattern", "i1", "--tuples", "12"]) == EXIT_OK
    assert (out / "query.cq").exists() and (out / "R3.csv").exists()
    assert main(["eval", str(out / "query.cq"), "--strategy", "oracle"]) in (EXIT_OK, EXIT_FALSE)


@pytest.mark.parametrize(
    "args",
    [
        ["running-example"],
        ["3coloring", "--vertices", "4"],
        ["grid", "--p", "2", "--full-lists"],
        ["random", "--seed", "2"],
    ],
)
def test_gen_kinds(tmp_path, args):
    assert main(["gen", *args, "--out", str(tmp_path / "inst")]) == EXIT_OK
    assert (tmp_path / "inst" / "query.cq").exists()


def test_running_example_is_true(tmp_path, capsys):
    main(["gen", "running-example", "--out", str(tmp_path)])
    capsys.readouterr()
    assert main(["eval", str(tmp_path / "query.cq"), "--strategy", "plan"]) == EXIT_OK
    assert capsys.readouterr().out.strip() == "true"


def test_bench_writes_csv(tmp_path):
    target = tmp_path / "cycle.csv"
    assert main(["bench", "cycle", "--sizes", "20", "--seed", "1", "--output", str(target)]) == EXIT_OK
    assert target.read_text().startswith("suite,strategy,size")


DATA = Path(__file__).resolve().parent.parent / "data"


def test_shipped_q0_instance(capsys):
    code = main(["eval", str(DATA / "q0" / "query.cq"), "--strategy", "plan", "--plan", str(DATA / "q0" / "plan.sexp")])
    assert code == EXIT_OK
    assert capsys.readouterr().out.split() == ["1", "5"]


def test_shipped_running_instance(capsys):
    assert main(["eval", str(DATA / "running" / "query.cq")]) == EXIT_OK
    assert capsys.readouterr().out.strip() == "true"
