import pytest

from conftest import build_m1_engine
from ourbac.admin import (
    CAPABILITIES,
    AppointManager,
    IssueDirective,
    RevokeDirective,
    RevokeManager,
    authorize_admin,
    issue_directive,
)
from ourbac.changes import (
    AddPerm,
    AddRole,
    AddUser,
    AssignUserToOu,
    AssignUserToRoleDirect,
    CreateOu,
    DeleteOu,
    DeleteUser,
    EditUser,
    GrantPermToRole,
    MoveUserOu,
    RemoveUserFromOu,
)
from ourbac.engine import Engine
from ourbac.errors import AdminError
from ourbac.model import DirectiveState, EngineConfig, ManagerRole


def reason(engine, principal, action):
    with pytest.raises(AdminError) as info:
        engine.execute(principal, action)
    return info.value.reason


def test_coordinator_in_scope(m1_engine):
    rec = m1_engine.execute("coordinator.cs", AddUser("u.carol"))
    assert rec.verdict == "executed"
    m1_engine.execute("coordinator.cs", AssignUserToOu("u.carol", "ou.cs.sem1"))
    assert "ou.cs.sem1" in m1_engine.state.uo["u.carol"]


def test_coordinator_out_of_scope(m1_engine):
    assert reason(m1_engine, "coordinator.cs", AssignUserToOu("u.alice", "ou.ee")) == "OutOfScope"
    assert m1_engine.log[-1].verdict == "denied:OutOfScope"


def test_coordinator_move_needs_both_ends_in_scope(m1_engine):
    assert reason(m1_engine, "coordinator.cs", MoveUserOu("u.alice", "ou.cs.sem1", "ou.ee")) == "OutOfScope"
    m1_engine.execute("coordinator.cs", MoveUserOu("u.alice", "ou.cs.sem1", "ou.cs"))


def test_coordinator_cannot_touch_users_outside_scope(m1_engine):
    assert reason(m1_engine, "coordinator.ee", DeleteUser("u.alice")) == "OutOfScope"
    assert reason(m1_engine, "coordinator.ee", EditUser("u.alice", ())) == "OutOfScope"
    # u.bob holds a direct role, which only central roles may undo
    assert reason(m1_engine, "coordinator.cs", DeleteUser("u.bob")) == "OutOfScope"
    m1_engine.execute("coordinator.cs", RemoveUserFromOu("u.alice", "ou.cs.sem1"))


@pytest.mark.parametrize("action", [
    GrantPermToRole("p.lab", "r.student"),
    AssignUserToRoleDirect("u.alice", "r.gradstudent"),
    CreateOu("ou.x"),
    AddRole("r.x"),
])
def test_coordinator_lacks_structural_capabilities(m1_engine, action):
    assert reason(m1_engine, "coordinator.cs", action) == "NoCapability"


def test_role_manager_needs_directive(m1_engine):
    action = GrantPermToRole("p.lab", "r.student")
    assert reason(m1_engine, "rm", action) == "NoDirective"
    d = m1_engine.issue_directive("root", "GrantPermToRole", perm="p.lab", role="r.student")
    rec = m1_engine.execute("rm", action)
    assert rec.verdict == f"executed:{d.id}"
    assert m1_engine.state.directives[d.id].state is DirectiveState.CONSUMED
    # single use
    assert reason(m1_engine, "rm", GrantPermToRole("p.lab", "r.gradstudent")) == "NoDirective"


def test_directive_bindings_restrict_match(m1_engine):
    m1_engine.issue_directive("root", "GrantPermToRole", role="r.labuser")
    assert reason(m1_engine, "rm", GrantPermToRole("p.lms", "r.student")) == "NoDirective"
    m1_engine.execute("rm", GrantPermToRole("p.lms", "r.labuser"))


def test_revoked_directive_no_longer_authorises(m1_engine):
    d = m1_engine.issue_directive("root", "AddRole")
    m1_engine.execute("root", RevokeDirective(d.id))
    assert reason(m1_engine, "rm", AddRole("r.x")) == "NoDirective"
    with pytest.raises(AdminError):
        m1_engine.execute("root", RevokeDirective(d.id))


def test_rejected_change_keeps_directive_open(m1_engine):
    d = m1_engine.issue_directive("root", "AddRole")
    assert reason(m1_engine, "rm", AddRole("r.student")) == "DuplicateEntity"
    assert m1_engine.log[-1].verdict == "rejected:DuplicateEntity"
    assert m1_engine.state.directives[d.id].state is DirectiveState.OPEN


def test_sub_managers_act_freely_without_directive_mode():
    engine = build_m1_engine(EngineConfig(directive_mode=False))
    engine.execute("pm", AddPerm("p.print", "print", "printer"))
    engine.execute("rm", GrantPermToRole("p.print", "r.student"))
    engine.execute("om", CreateOu("ou.me", None, "ME"))


def test_only_rbac_manager_issues_directives(m1_engine):
    for p in ("rm", "pm", "om", "coordinator.cs"):
        assert reason(m1_engine, p, IssueDirective("AddRole", ())) == "NoCapability"
    with pytest.raises(AdminError):
        issue_directive(m1_engine.state, "rm", "AddRole")


@pytest.mark.parametrize("bindings", [(("nope", "x"),), (("roles", "x"),), (("role", "a"), ("role", "b"))])
def test_bad_directive_bindings(m1_engine, bindings):
    assert reason(m1_engine, "root", IssueDirective("AddSsd", bindings)) == "DirectiveError"


def test_permission_manager_cannot_appoint(m1_engine):
    action = AppointManager("p9", ManagerRole.ROLE_MANAGER)
    assert reason(m1_engine, "pm", action) == "NoCapability"
    assert m1_engine.log[-1].verdict == "denied:NoCapability"


def test_ou_manager_appoints_only_coordinators(m1_engine):
    m1_engine.execute("om", AppointManager("coord2", ManagerRole.IT_COORDINATOR, "EE"))
    assert reason(m1_engine, "om", AppointManager("x", ManagerRole.ROLE_MANAGER)) == "NoCapability"
    m1_engine.execute("om", RevokeManager("coord2", ManagerRole.IT_COORDINATOR, "EE"))


def test_ou_manager_needs_directive_for_ou_changes(m1_engine):
    assert reason(m1_engine, "om", CreateOu("ou.cs.sem2", "ou.cs")) == "NoDirective"
    m1_engine.issue_directive("root", "CreateOu", parent="ou.cs")
    m1_engine.execute("om", CreateOu("ou.cs.sem2", "ou.cs"))
    m1_engine.issue_directive("root", "DeleteOu", ou="ou.cs.sem2")
    m1_engine.execute("om", DeleteOu("ou.cs.sem2"))


def test_coordinator_scope_must_exist(m1_engine):
    assert reason(m1_engine, "root", AppointManager("c", ManagerRole.IT_COORDINATOR, "ME")) == "UnknownEntity"
    assert reason(m1_engine, "root", AppointManager("c", ManagerRole.IT_COORDINATOR)) == "InvalidConstraint"


def test_scope_in_use_blocks_last_ou_deletion(m1_engine):
    assert reason(m1_engine, "root", DeleteOu("ou.ee")) == "ScopeInUse"


def test_unknown_principal(m1_engine):
    assert reason(m1_engine, "nobody", AddUser("u.x")) == "UnknownPrincipal"
    assert not authorize_admin(m1_engine.state, "nobody", AddUser("u.x"))


@pytest.mark.parametrize("second", [ManagerRole.ROLE_MANAGER, ManagerRole.OU_MANAGER])
def test_manager_ssd_enforced(m1_engine, second):
    assert reason(m1_engine, "root", AppointManager("pm", second)) == "SsdViolation"
    assert m1_engine.log[-1].verdict == "rejected:SsdViolation"


def test_rbac_manager_is_exclusive(m1_engine):
    assert reason(m1_engine, "root", AppointManager("root", ManagerRole.IT_COORDINATOR, "CS")) == "SsdViolation"
    assert reason(m1_engine, "root", AppointManager("rm", ManagerRole.RBAC_MANAGER)) == "SsdViolation"


def test_manager_ssd_disabled_allows_combination():
    engine = build_m1_engine(EngineConfig(manager_ssd_enabled=False))
    engine.execute("root", AppointManager("pm", ManagerRole.ROLE_MANAGER))
    assert engine.state.holds("pm", ManagerRole.ROLE_MANAGER)


def test_last_rbac_manager_cannot_be_revoked(m1_engine):
    assert reason(m1_engine, "root", RevokeManager("root", ManagerRole.RBAC_MANAGER)) == "LastRbacManager"
    m1_engine.execute("root", AppointManager("root2", ManagerRole.RBAC_MANAGER))
    m1_engine.execute("root2", RevokeManager("root", ManagerRole.RBAC_MANAGER))
    assert reason(m1_engine, "root", AddUser("u.x")) == "UnknownPrincipal"


def test_capability_matrix_is_fixed():
    assert CAPABILITIES[ManagerRole.PERMISSION_MANAGER] == {"AddPerm", "DeletePerm"}
    assert "AssignUserToRoleDirect" not in CAPABILITIES[ManagerRole.IT_COORDINATOR]
    assert "AssignUserToRoleDirect" not in CAPABILITIES[ManagerRole.ROLE_MANAGER]


def test_log_chain_links(m1_engine):
    log = m1_engine.log
    assert all(b.prev_digest == a.digest for a, b in zip(log, log[1:]))
    assert [r.seq for r in log] == list(range(1, len(log) + 1))


def test_try_execute_returns_denial():
    engine = Engine.bootstrap("root")
    rec = engine.try_execute("ghost", AddUser("u"))
    assert rec.verdict == "denied:UnknownPrincipal" and len(engine.log) == 1
