import pytest
from hypothesis import given
from hypothesis import strategies as st

from schemas.schemas import Condition, Constant, Database, Relation, SchemaError
from services import relational_service as rel
from services.relational_service import DataLoadError

pairs = st.frozensets(st.tuples(st.integers(1, 4), st.integers(1, 4)), max_size=12)


def test_select_on_constant():
    r = Relation.from_rows(("D", "E"), [("c", "a"), ("c", "b")])
    assert rel.select(r, Condition("E", Constant("a"))).tuples == {("c", "a")}


def test_select_inequality_and_attribute_equality():
    r = Relation.from_rows(("A", "B"), [(1, 1), (1, 2)])
    assert rel.select(r, Condition("A", "B")).tuples == {(1, 1)}
    assert rel.select(r, Condition("A", "B", negated=True)).tuples == {(1, 2)}
    with pytest.raises(SchemaError):
        rel.select(r, Condition("Z", Constant(1)))


def test_project_deduplicates():
    r = Relation.from_rows(("A", "B"), [(1, 1), (1, 2)])
    assert rel.project(r, ["A"]).tuples == {(1,)}
    assert rel.project(r, ["B", "A"]).schema == ("B", "A")


def test_join_rejects_shared_attribute_names():
    r = Relation.from_rows(("A",), [(1,)])
    with pytest.raises(SchemaError):
        rel.join(r, r, [("A", "A")])


@given(pairs, pairs)
def test_join_equals_select_over_product(left_rows, right_rows):
    left = Relation.from_rows(("A", "B"), left_rows)
    right = Relation.from_rows(("C", "D"), right_rows)
    joined = rel.join(left, right, [("B", "C")])
    filtered = rel.select(rel.product(left, right), Condition("B", "C"))
    assert joined == filtered


@given(pairs)
def test_projection_absorbs_inner_projection(rows):
    r = Relation.from_rows(("A", "B"), rows)
    assert rel.project(rel.project(r, ["A", "B"]), ["A"]) == rel.project(r, ["A"])


def test_union_requires_matching_schemas():
    a = Relation.from_rows(("A",), [(1,)])
    b = Relation.from_rows(("A",), [(2,)])
    assert rel.union([a, b]).tuples == {(1,), (2,)}
    with pytest.raises(SchemaError):
        rel.union([a, Relation(("B",))])


def test_parse_cell_types():
    assert rel.parse_cell(" 42 ") == 42
    assert rel.parse_cell("-3") == -3
    assert rel.parse_cell("a") == "a"


def test_csv_round_trip(tmp_path):
    db = Database({"R": Relation.from_rows(("R.1", "R.2"), [(1, "x"), (2, "y")])})
    rel.save_database(str(tmp_path), db)
    loaded = rel.load_database(str(tmp_path), {"R": 2})
    assert loaded["R"] == db["R"]


def test_malformed_csv_reports_row_number(tmp_path):
    (tmp_path / "R.csv").write_text("1,2\n3\n")
    with pytest.raises(DataLoadError, match="row 2"):
        rel.load_database(str(tmp_path), {"R": 2})


def test_missing_relation_file(tmp_path):
    with pytest.raises(DataLoadError, match="Missing data file"):
        rel.load_database(str(tmp_path), {"R": 2})


def test_format_rows_is_canonical():
    r = Relation.from_rows(("A", "B"), [(2, "b"), (1, "a")])
    assert rel.format_rows(r) == ["1,a", "2,b"]
