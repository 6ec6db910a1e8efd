"""Delegated administration: who may perform which mutation, and where.

Every mutation is requested by an already-authenticated principal and
checked against a fixed capability matrix, the coordinator's department
scope, and (in directive mode) an open directive from an RBAC manager.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from typing import Union

from .changes import (
    CHANGE_TYPES,
    AssignUserToOu,
    Change,
    DeleteUser,
    EditUser,
    MoveUserOu,
    RemoveUserFromOu,
)
from .errors import (
    DirectiveError,
    DuplicateEntity,
    InvalidConstraint,
    LastRbacManager,
    SsdViolation,
    UnknownEntity,
)
from .model import (
    EMPTY,
    AdminAssignment,
    Directive,
    DirectiveState,
    ManagerRole,
    PolicyState,
    SUB_MANAGERS,
    check_identifier,
    empty_state,
    EngineConfig,
    FrozenMap,
)


@dataclass(frozen=True)
class AppointManager:
    principal: str
    role: ManagerRole
    scope: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "role", ManagerRole(self.role))


@dataclass(frozen=True)
class RevokeManager:
    principal: str
    role: ManagerRole
    scope: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "role", ManagerRole(self.role))


@dataclass(frozen=True)
class IssueDirective:
    variant: str
    bindings: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "bindings", tuple(sorted((str(k), str(v)) for k, v in self.bindings)))


@dataclass(frozen=True)
class RevokeDirective:
    directive: str


MetaAction = Union[AppointManager, RevokeManager, IssueDirective, RevokeDirective]
AdminAction = Union[Change, MetaAction]

META_TYPES: dict[str, type] = {
    cls.__name__: cls for cls in (AppointManager, RevokeManager, IssueDirective, RevokeDirective)
}
ACTION_TYPES: dict[str, type] = {**CHANGE_TYPES, **META_TYPES}

# Fixed, not configurable.
CAPABILITIES: dict[ManagerRole, frozenset[str]] = {
    ManagerRole.RBAC_MANAGER: frozenset(ACTION_TYPES),
    ManagerRole.PERMISSION_MANAGER: frozenset({"AddPerm", "DeletePerm"}),
    ManagerRole.ROLE_MANAGER: frozenset({
        "AddRole", "DeleteRole", "GrantPermToRole", "RevokePermFromRole",
        "AssignOuToRole", "RevokeOuFromRole", "AddRoleInheritance", "RemoveRoleInheritance",
        "AddSsd", "RemoveSsd", "AddDsd", "RemoveDsd",
    }),
    # appointments are further limited to ItCoordinator
    ManagerRole.OU_MANAGER: frozenset({"CreateOu", "DeleteOu", "AppointManager", "RevokeManager"}),
    ManagerRole.IT_COORDINATOR: frozenset({
        "AddUser", "DeleteUser", "EditUser", "AssignUserToOu", "RemoveUserFromOu", "MoveUserOu",
    }),
}

NO_CAPABILITY = "NoCapability"
OUT_OF_SCOPE = "OutOfScope"
NO_DIRECTIVE = "NoDirective"
UNKNOWN_PRINCIPAL = "UnknownPrincipal"

_DENY_RANK = {NO_CAPABILITY: 0, OUT_OF_SCOPE: 1, NO_DIRECTIVE: 2}


@dataclass(frozen=True)
class Verdict:
    allowed: bool
    reason: str | None = None
    directive: str | None = None

    def __bool__(self) -> bool:
        return self.allowed


def bootstrap_state(rbac_manager: str, config: EngineConfig | None = None) -> PolicyState:
    check_identifier(rbac_manager, "principal id")
    assignment = AdminAssignment(rbac_manager, ManagerRole.RBAC_MANAGER)
    return replace(empty_state(config), principals=FrozenMap({rbac_manager: frozenset({assignment})}))


def coordinator_scope_ok(state: PolicyState, scope: str, action: object) -> bool:
    """True if every OU the action touches lies in department ``scope``.

    For DeleteUser/EditUser the touched OUs are the user's memberships, and
    users holding direct role assignments are off limits.
    """
    if isinstance(action, (AssignUserToOu, RemoveUserFromOu)):
        ous = [action.ou]
    elif isinstance(action, MoveUserOu):
        ous = [action.source, action.target]
    elif isinstance(action, (DeleteUser, EditUser)):
        if state.ua_direct.get(action.user):
            return False
        ous = list(state.uo.get(action.user, EMPTY))
    else:
        ous = []
    return all(state.department_of(ou) == scope for ou in ous)


def find_directive(state: PolicyState, action: object) -> str | None:
    """Lowest-numbered open directive matching the action."""
    best = None
    for d in state.directives.values():
        if d.state is DirectiveState.OPEN and d.matches(action):
            key = (len(d.id), d.id)
            if best is None or key < best[0]:
                best = (key, d.id)
    return best[1] if best else None


def _check(state: PolicyState, a: AdminAssignment, action: object) -> Verdict:
    name = type(action).__name__
    if name not in CAPABILITIES[a.role]:
        return Verdict(False, NO_CAPABILITY)
    if a.role is ManagerRole.OU_MANAGER and isinstance(action, (AppointManager, RevokeManager)):
        if action.role is not ManagerRole.IT_COORDINATOR:
            return Verdict(False, NO_CAPABILITY)
    if a.role is ManagerRole.IT_COORDINATOR and not coordinator_scope_ok(state, a.scope, action):
        return Verdict(False, OUT_OF_SCOPE)
    if state.config.directive_mode and a.role in SUB_MANAGERS and isinstance(action, Change):
        did = find_directive(state, action)
        if did is None:
            return Verdict(False, NO_DIRECTIVE)
        return Verdict(True, directive=did)
    return Verdict(True)


def authorize_admin(state: PolicyState, principal: str, action: object) -> Verdict:
    assignments = state.principals.get(principal)
    if not assignments:
        return Verdict(False, UNKNOWN_PRINCIPAL)
    verdicts = [_check(state, a, action) for a in sorted(assignments)]
    allowed = [v for v in verdicts if v.allowed]
    if allowed:
        # prefer a path that does not spend a directive
        return min(allowed, key=lambda v: v.directive is not None)
    return max(verdicts, key=lambda v: _DENY_RANK[v.reason])


def _manager_ssd(state: PolicyState, principal: str, roles: set[ManagerRole]) -> None:
    if not state.config.manager_ssd_enabled:
        return
    subs = roles & SUB_MANAGERS
    if len(subs) >= 2:
        raise SsdViolation("manager-ssd", tuple(sorted(str(r) for r in subs)), principal)
    if ManagerRole.RBAC_MANAGER in roles and len(roles) > 1:
        raise SsdViolation("manager-ssd", tuple(sorted(str(r) for r in roles)), principal)


def _appoint(state: PolicyState, act: AppointManager) -> PolicyState:
    check_identifier(act.principal, "principal id")
    if act.role is ManagerRole.IT_COORDINATOR:
        if act.scope is None:
            raise InvalidConstraint("an ItCoordinator appointment needs a department scope")
        if act.scope not in state.department_labels():
            raise UnknownEntity("department", act.scope)
    elif act.scope is not None:
        raise InvalidConstraint(f"scope does not apply to {act.role}")
    current = state.principals.get(act.principal, EMPTY)
    new = AdminAssignment(act.principal, act.role, act.scope)
    if new in current:
        raise DuplicateEntity("admin assignment", f"{act.principal} {act.role}")
    _manager_ssd(state, act.principal, {a.role for a in current} | {act.role})
    return replace(state, principals=state.principals.set(act.principal, current | {new}))


def _revoke(state: PolicyState, act: RevokeManager) -> PolicyState:
    current = state.principals.get(act.principal, EMPTY)
    target = AdminAssignment(act.principal, act.role, act.scope)
    if target not in current:
        raise UnknownEntity("admin assignment", f"{act.principal} {act.role}")
    if act.role is ManagerRole.RBAC_MANAGER:
        others = [p for p in state.principals if p != act.principal and state.holds(p, ManagerRole.RBAC_MANAGER)]
        if not others:
            raise LastRbacManager("cannot revoke the last RbacManager")
    rest = current - {target}
    principals = state.principals.set(act.principal, rest) if rest else state.principals.remove(act.principal)
    return replace(state, principals=principals)


def _issue(state: PolicyState, principal: str, act: IssueDirective) -> tuple[PolicyState, Directive]:
    cls = CHANGE_TYPES.get(act.variant)
    if cls is None:
        raise DirectiveError(f"unknown change variant {act.variant!r}")
    names = {f.name for f in fields(cls)}
    seen = set()
    for key, value in act.bindings:
        if key not in names:
            raise DirectiveError(f"{act.variant} has no field {key!r}")
        if key in ("roles", "attrs"):
            raise DirectiveError(f"field {key!r} is set-valued and cannot be bound")
        if key in seen:
            raise DirectiveError(f"field {key!r} bound twice")
        seen.add(key)
        check_identifier(value, f"binding {key}")
    d = Directive(f"d{len(state.directives) + 1}", principal, act.variant, act.bindings)
    return replace(state, directives=state.directives.set(d.id, d)), d


def _revoke_directive(state: PolicyState, act: RevokeDirective) -> PolicyState:
    d = state.directives.get(act.directive)
    if d is None:
        raise UnknownEntity("directive", act.directive)
    if d.state is not DirectiveState.OPEN:
        raise DirectiveError(f"directive {d.id} is already {d.state}")
    return replace(state, directives=state.directives.set(d.id, replace(d, state=DirectiveState.REVOKED)))


def apply_meta(state: PolicyState, principal: str, action: MetaAction) -> tuple[PolicyState, str | None]:
    """Run a meta-action; returns the new state and an issued directive id, if any."""
    if isinstance(action, AppointManager):
        return _appoint(state, action), None
    if isinstance(action, RevokeManager):
        return _revoke(state, action), None
    if isinstance(action, IssueDirective):
        new, d = _issue(state, principal, action)
        return new, d.id
    if isinstance(action, RevokeDirective):
        return _revoke_directive(state, action), None
    raise TypeError(f"not an admin action: {action!r}")


def consume_directive(state: PolicyState, did: str) -> PolicyState:
    d = state.directives[did]
    return replace(state, directives=state.directives.set(did, replace(d, state=DirectiveState.CONSUMED)))


def issue_directive(state: PolicyState, principal: str, variant: str, **bindings: str) -> tuple[PolicyState, Directive]:
    """Issue a directive without auditing; :meth:`Engine.issue_directive` is the audited path."""
    from .errors import AdminError

    if not state.holds(principal, ManagerRole.RBAC_MANAGER):
        reason = UNKNOWN_PRINCIPAL if principal not in state.principals else NO_CAPABILITY
        raise AdminError(reason, f"{principal} cannot issue directives")
    return _issue(state, principal, IssueDirective(variant, tuple(bindings.items())))
