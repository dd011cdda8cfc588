import os

import pytest
from hypothesis import HealthCheck, settings

from schemas.schemas import Database, Relation
from services.plan_format import parse_plan
from services.query_service import parse_query

settings.register_profile("dev", max_examples=25, deadline=None)
settings.register_profile(
    "ci", max_examples=100, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.getenv("HYPOTHESIS_PROFILE", "dev"))

Q0_TEXT = 'q0(w) :- R(x, y, "a"), S(y, z), T(z, w), x != z, y != w, x != w.'

Q0_PLAN = """
(plan (provenance (A x) (B y) (B' y) (C z) (C' z) (D w))
  (project (D)
    (join ((C C'))
      (select ((= E "a"))
        (project (C E)
          (join ((B B'))
            (scan R (A B E))
            (scan S (B' C)))))
      (scan T (C' D)))))
"""


def q0_database(r_rows, s_rows, t_rows) -> Database:
    return Database({
        "R": Relation.from_rows(("R.1", "R.2", "R.3"), r_rows),
        "S": Relation.from_rows(("S.1", "S.2"), s_rows),
        "T": Relation.from_rows(("T.1", "T.2"), t_rows),
    })


@pytest.fixture
def q0():
    return parse_query(Q0_TEXT)


@pytest.fixture
def q0_plan():
    return parse_plan(Q0_PLAN)


@pytest.fixture
def q0_db():
    return q0_database(
        [(1, 2, "a"), (2, 2, "a"), (3, 4, "b")],
        [(2, 1), (2, 3), (4, 1)],
        [(1, 5), (3, 2), (3, 1), (1, 1)],
    )
