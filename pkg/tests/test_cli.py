import json

import pytest
from click.testing import CliRunner

from ourbac.cli import main

M1_COMMANDS = [
    "create-ou ou.cs --dept CS",
    "create-ou ou.cs.sem1 --parent ou.cs",
    "create-ou ou.ee --dept EE",
    "add-role r.student",
    "add-role r.labuser",
    "add-role r.gradstudent",
    "add-inheritance r.gradstudent r.student",
    "add-perm p.internet access internet",
    "add-perm p.lms read lms",
    "add-perm p.lab use lab-pc",
    "grant-perm p.internet r.student",
    "grant-perm p.lms r.student",
    "grant-perm p.lab r.labuser",
    "assign-ou-role ou.cs r.student",
    "assign-ou-role ou.cs.sem1 r.labuser",
    "assign-ou-role ou.ee r.student",
    "add-user u.alice",
    "add-user u.bob",
    "assign-user-ou u.alice ou.cs.sem1",
    "assign-user-role u.bob r.gradstudent",
    "appoint coordinator.cs ItCoordinator --scope CS",
    "appoint coordinator.ee ItCoordinator --scope EE",
]


@pytest.fixture
def store(tmp_path):
    path = str(tmp_path / "store")
    runner = CliRunner()
    res = runner.invoke(main, ["--store", path, "init", "--rbac-manager", "root"])
    assert res.exit_code == 0, res.output
    for cmd in M1_COMMANDS:
        res = runner.invoke(main, ["--store", path, "admin", *cmd.split(), "--as", "root"])
        assert res.exit_code == 0, (cmd, res.output)
    return path


def run(store, *args):
    return CliRunner().invoke(main, ["--store", store, *args])


def test_query_perms(store):
    res = run(store, "query", "perms", "u.alice")
    assert res.exit_code == 0
    assert res.output.strip() == "p.internet p.lab p.lms"


def test_query_roles_and_ous(store):
    assert run(store, "query", "roles", "u.bob").output.split() == ["r.gradstudent", "r.student"]
    assert run(store, "query", "ous", "u.alice").output.split() == ["ou.cs", "ou.cs.sem1"]
    assert run(store, "query", "perms", "u.ghost").exit_code == 1


def test_check_allow_and_deny(store):
    res = run(store, "check", "--user", "u.alice", "--activate", "r.labuser", "--op", "use", "--obj", "lab-pc")
    assert res.exit_code == 0
    assert res.output.splitlines() == ["ALLOW", "  u.alice->session->r.labuser", "  r.labuser->p.lab"]
    res = run(store, "check", "--user", "u.alice", "--activate", "r.labuser", "--op", "read", "--obj", "lms")
    assert res.exit_code == 1 and res.output.startswith("DENY")


def test_denied_admin_action_exit_code_and_reason(store):
    res = run(store, "admin", "grant-perm", "p.lab", "r.student", "--as", "coordinator.cs")
    assert res.exit_code == 1
    assert "NoCapability" in res.output
    res = run(store, "admin", "assign-user-ou", "u.alice", "ou.ee", "--as", "coordinator.cs")
    assert res.exit_code == 1 and "OutOfScope" in res.output


def test_rejected_change(store):
    res = run(store, "admin", "add-inheritance", "r.student", "r.gradstudent", "--as", "root")
    assert res.exit_code == 1 and "CycleError" in res.output


def test_audit_verify_and_show(store):
    run(store, "admin", "grant-perm", "p.lab", "r.student", "--as", "coordinator.cs")
    res = run(store, "audit", "verify")
    assert res.exit_code == 0 and res.output.strip() == f"ok {len(M1_COMMANDS) + 1} records"
    lines = run(store, "audit", "show").output.splitlines()
    assert lines[-1].split("\t")[2] == "denied:NoCapability"


def test_audit_verify_detects_tampering(store):
    from pathlib import Path
    log = Path(store) / "audit.log"
    data = log.read_bytes().replace(b'"user":"u.bob"', b'"user":"u.bad"', 1)
    log.write_bytes(data)
    res = run(store, "audit", "verify")
    assert res.exit_code == 1 and "ReplayError" in res.output


def test_directive_flow(store):
    assert run(store, "admin", "appoint", "rm", "RoleManager", "--as", "root").exit_code == 0
    assert run(store, "admin", "add-role", "r.x", "--as", "rm").exit_code == 1
    res = run(store, "admin", "issue-directive", "AddRole", "role=r.x", "--as", "root")
    assert res.exit_code == 0 and "executed:d1" in res.output
    res = run(store, "admin", "add-role", "r.x", "--as", "rm")
    assert res.exit_code == 0 and "executed:d1" in res.output


def test_session_and_dsd(store):
    assert run(store, "admin", "add-dsd", "d", "2", "r.student", "r.labuser", "--as", "root").exit_code == 0
    res = run(store, "session", "--user", "u.alice", "--activate", "r.student,r.labuser")
    assert res.exit_code == 1 and "DsdViolation" in res.output
    res = run(store, "session", "--user", "u.alice", "--activate", "r.labuser")
    assert res.output.strip() == "session.u.alice r.labuser"


def test_analyze_commands(store):
    res = run(store, "analyze", "bound", "coordinator.ee")
    assert res.output.strip() == "p.internet p.lms"
    res = run(store, "analyze", "reach", "--as", "coordinator.cs", "--user", "u.new", "--perm", "p.lab")
    assert res.exit_code == 0 and res.output.startswith("WITNESS length=2")


def test_edit_user(store):
    assert run(store, "admin", "edit-user", "u.alice", "room=4", "--as", "coordinator.cs").exit_code == 0
    assert run(store, "admin", "edit-user", "u.alice", "oops", "--as", "root").exit_code == 2


def test_usage_errors(store, tmp_path):
    assert run(store, "query", "bogus", "u.alice").exit_code == 2
    assert run(store, "admin", "add-user", "u.z").exit_code == 2
    assert CliRunner().invoke(main, ["--store", str(tmp_path / "none"), "query", "perms", "u"]).exit_code == 1


def test_init_twice_fails(store):
    res = run(store, "init", "--rbac-manager", "root")
    assert res.exit_code == 1


def test_bench_command(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"departments": 1, "intake_per_course": 2, "roles_per_student": 2}))
    res = CliRunner().invoke(main, ["bench", "--config", str(cfg), "--mode", "flat"])
    assert res.exit_code == 0 and res.output.startswith("ourbac-bench v1")
    res = CliRunner().invoke(main, ["bench", "--config", str(cfg), "--mode", "ou", "--csv"])
    assert res.output.splitlines()[0] == "mode,metric,value"
    bad = tmp_path / "bad.json"
    bad.write_text('{"departments": 0}')
    assert CliRunner().invoke(main, ["bench", "--config", str(bad), "--mode", "ou"]).exit_code == 2


def test_audit_verify_detects_tampered_last_record(store):
    from pathlib import Path
    log = Path(store) / "audit.log"
    data = log.read_bytes()
    last = data.rstrip(b"\n").rsplit(b"\n", 1)[1]
    log.write_bytes(data.replace(last, last.replace(b"coordinator.ee", b"coordinator.xx")))
    res = run(store, "audit", "verify")
    assert res.exit_code == 1 and "ReplayError" in res.output
