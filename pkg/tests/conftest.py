import sys
from pathlib import Path

import pytest

from ourbac.changes import (
    AddPerm,
    AddRole,
    AddRoleInheritance,
    AddUser,
    AssignOuToRole,
    AssignUserToOu,
    AssignUserToRoleDirect,
    CreateOu,
    GrantPermToRole,
    apply_change,
)
from ourbac.engine import Engine
from ourbac.model import EngineConfig, ManagerRole, empty_state
from ourbac.admin import AppointManager

sys.path.insert(0, str(Path(__file__).parent))

# Fixture M1: CS (with a semester child) and EE departments, three roles
# (gradstudent >= student), three permissions, alice via OU, bob direct.
M1_CHANGES = [
    CreateOu("ou.cs", None, "CS"),
    CreateOu("ou.cs.sem1", "ou.cs"),
    CreateOu("ou.ee", None, "EE"),
    AddRole("r.student"),
    AddRole("r.labuser"),
    AddRole("r.gradstudent"),
    AddRoleInheritance("r.gradstudent", "r.student"),
    AddPerm("p.internet", "access", "internet"),
    AddPerm("p.lms", "read", "lms"),
    AddPerm("p.lab", "use", "lab-pc"),
    GrantPermToRole("p.internet", "r.student"),
    GrantPermToRole("p.lms", "r.student"),
    GrantPermToRole("p.lab", "r.labuser"),
    AssignOuToRole("ou.cs", "r.student"),
    AssignOuToRole("ou.cs.sem1", "r.labuser"),
    AssignOuToRole("ou.ee", "r.student"),
    AddUser("u.alice"),
    AddUser("u.bob"),
    AssignUserToOu("u.alice", "ou.cs.sem1"),
    AssignUserToRoleDirect("u.bob", "r.gradstudent"),
]


def build_m1(config: EngineConfig | None = None):
    s = empty_state(config)
    for c in M1_CHANGES:
        s = apply_change(s, c)
    return s


def build_m1_engine(config: EngineConfig | None = None) -> Engine:
    """M1 built through audited execution by the RBAC manager ``root``,
    plus coordinators for CS and EE and one of each sub-manager."""
    engine = Engine.bootstrap("root", config)
    for c in M1_CHANGES:
        engine.execute("root", c)
    for action in (
        AppointManager("coordinator.cs", ManagerRole.IT_COORDINATOR, "CS"),
        AppointManager("coordinator.ee", ManagerRole.IT_COORDINATOR, "EE"),
        AppointManager("pm", ManagerRole.PERMISSION_MANAGER),
        AppointManager("rm", ManagerRole.ROLE_MANAGER),
        AppointManager("om", ManagerRole.OU_MANAGER),
    ):
        engine.execute("root", action)
    return engine


@pytest.fixture
def m1():
    return build_m1()


@pytest.fixture
def m1_engine():
    return build_m1_engine()
