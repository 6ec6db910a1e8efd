import json
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from ourbac.bench import ChurnConfig, churn_events, run_both, run_churn, simulate
from ourbac.engine import replay_audit
from ourbac.persist import serialize_snapshot
from ourbac.resolver import effective_permissions


def test_degenerate_config():
    c = ChurnConfig()
    flat, ou = run_churn(c, "flat"), run_churn(c, "ou")
    assert flat.ops_by_phase["student"] == 2
    assert ou.ops_by_phase["student"] == 2
    assert flat.ops_by_variant["AssignUserToRoleDirect"] == 1
    assert ou.ops_by_variant["AssignUserToOu"] == 1
    assert ou.ops_by_phase["scaffold"] > 0


def test_breakdowns_sum_to_total():
    c = ChurnConfig(departments=2, semesters=3, intake_per_course=4, graduate_fraction=Fraction(1, 2),
                    roles_per_student=3, seed=5)
    for mode in ("flat", "ou"):
        r = run_churn(c, mode)
        for name in ("ops_by_principal", "ops_by_variant", "ops_by_phase"):
            assert sum(getattr(r, name).values()) == r.total_admin_ops


@settings(max_examples=15, deadline=None)
@given(st.integers(1, 3), st.integers(1, 2), st.integers(1, 6), st.integers(1, 4))
def test_closed_form_single_semester(depts, courses, intake, k):
    c = ChurnConfig(departments=depts, courses_per_department=courses, intake_per_course=intake,
                    roles_per_student=k)
    flat, ou = run_both(c)
    n = depts * courses * intake
    assert flat.report.ops_by_variant["AssignUserToRoleDirect"] == n * k
    assert ou.report.ops_by_variant["AssignUserToOu"] == n
    assert flat.report.ops_by_phase["student"] - ou.report.ops_by_phase["student"] == n * (k - 1)
    assert ou.report.central_admin_share < flat.report.central_admin_share == 1


def test_reports_are_deterministic():
    c = ChurnConfig(departments=2, semesters=3, intake_per_course=3, graduate_fraction=Fraction(1, 3), seed=9)
    assert run_churn(c, "ou").to_text() == run_churn(c, "ou").to_text()
    assert list(churn_events(c)) == list(churn_events(c))


def test_seed_changes_graduates():
    base = dict(departments=1, semesters=3, intake_per_course=10, graduate_fraction=Fraction(1, 2))
    a = list(churn_events(ChurnConfig(seed=1, **base)))
    b = list(churn_events(ChurnConfig(seed=2, **base)))
    assert a != b


def test_multi_semester_entitlements_match_through_resolver():
    c = ChurnConfig(departments=2, courses_per_department=2, semesters=3, intake_per_course=3,
                    graduate_fraction=Fraction(1, 2), roles_per_student=3, seed=3)
    flat, ou = run_both(c)
    students = sorted(flat.engine.state.users)
    assert students == sorted(u for u in ou.engine.state.users)
    for s in students:
        assert effective_permissions(flat.engine.state, s) == effective_permissions(ou.engine.state, s)


def test_ou_run_replays(tmp_path):
    res = simulate(ChurnConfig(departments=2, semesters=2, intake_per_course=3, roles_per_student=2), "ou")
    state = replay_audit(res.engine.log, res.engine.header.rbac_manager, res.engine.header.config)
    assert serialize_snapshot(state) == res.engine.snapshot()


def test_directive_overhead_is_counted():
    c = ChurnConfig(departments=2, roles_per_student=2)
    on, off = run_churn(c, "ou", True), run_churn(c, "ou", False)
    assert on.ops_by_variant.get("IssueDirective", 0) > 0
    assert "IssueDirective" not in off.ops_by_variant
    assert on.total_admin_ops - off.total_admin_ops == on.ops_by_variant["IssueDirective"]


@pytest.mark.parametrize("bad", [{"departments": 0}, {"graduate_fraction": "3/2"}, {"seed": "x"}, {"nope": 1}])
def test_invalid_config(bad):
    with pytest.raises((ValueError, TypeError)):
        ChurnConfig.from_mapping(bad)


def test_load_json(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"departments": 2, "graduate_fraction": "1/4", "seed": 3}))
    c = ChurnConfig.load(p)
    assert c.departments == 2 and c.graduate_fraction == Fraction(1, 4)


def test_csv_rows():
    rows = run_churn(ChurnConfig(), "flat").to_csv_rows()
    assert rows[0].startswith("flat,total_admin_ops,")
