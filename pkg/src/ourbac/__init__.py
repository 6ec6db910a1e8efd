"""OU-RBAC: role-based access control with an organizational-unit layer.

Users are grouped into organizational units (OUs), OUs are assigned to
roles, and roles carry permissions. Administration is split between an
RBAC manager, permission/role/OU managers and department IT coordinators.
"""

from .admin import (
    AppointManager,
    IssueDirective,
    RevokeDirective,
    RevokeManager,
    Verdict,
    authorize_admin,
    issue_directive,
)
from .changes import apply_change, validate
from .engine import Engine, execute, replay_audit
from .errors import AdminError, ConstraintError
from .model import EngineConfig, ManagerRole, PolicyState, empty_state
from .persist import AuditRecord, parse_snapshot, serialize_snapshot
from .resolver import (
    Session,
    activate_role,
    authorized_roles,
    check_access,
    create_session,
    drop_role,
    effective_permissions,
    ou_closure,
)

__all__ = [
    "AdminError", "AppointManager", "AuditRecord", "ConstraintError", "Engine", "EngineConfig",
    "IssueDirective", "ManagerRole", "PolicyState", "RevokeDirective", "RevokeManager", "Session",
    "Verdict", "activate_role", "apply_change", "authorize_admin", "authorized_roles",
    "check_access", "create_session", "drop_role", "effective_permissions", "empty_state",
    "execute", "issue_directive", "ou_closure", "parse_snapshot", "replay_audit",
    "serialize_snapshot", "validate",
]
