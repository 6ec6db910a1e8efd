"""Primitive, constraint-checked mutations of a :class:`PolicyState`.

``apply_change`` is pure: it returns a new state or raises a
:class:`ConstraintError`, and never touches its input.
"""

from __future__ import annotations

import dataclasses
from collections.abc import Iterable
from dataclasses import dataclass, replace
from typing import Callable

from .errors import (
    ConstraintError,
    CycleError,
    DuplicateEntity,
    InvalidConstraint,
    InvalidDepartment,
    InvalidIdentifier,
    NonEmptyOu,
    ScopeInUse,
    SsdViolation,
    TombstoneReuse,
    UnknownEntity,
)
from .model import (
    EMPTY,
    FrozenMap,
    ManagerRole,
    OrgUnit,
    Permission,
    PolicyState,
    SodConstraint,
    SUB_MANAGERS,
    check_identifier,
    is_identifier,
    rel_add,
    rel_drop_right,
    rel_has,
    rel_pairs,
    rel_remove,
)
from .resolver import authorized_roles


class Change:
    """Base class of the closed set of primitive mutations."""

    @property
    def variant(self) -> str:
        return type(self).__name__


@dataclass(frozen=True)
class AddUser(Change):
    user: str


@dataclass(frozen=True)
class DeleteUser(Change):
    user: str


@dataclass(frozen=True)
class EditUser(Change):
    user: str
    attrs: tuple[tuple[str, str], ...] = ()


@dataclass(frozen=True)
class AddRole(Change):
    role: str


@dataclass(frozen=True)
class DeleteRole(Change):
    role: str


@dataclass(frozen=True)
class AddPerm(Change):
    perm: str
    operation: str
    obj: str


@dataclass(frozen=True)
class DeletePerm(Change):
    perm: str


@dataclass(frozen=True)
class GrantPermToRole(Change):
    perm: str
    role: str


@dataclass(frozen=True)
class RevokePermFromRole(Change):
    perm: str
    role: str


@dataclass(frozen=True)
class AssignUserToRoleDirect(Change):
    user: str
    role: str


@dataclass(frozen=True)
class RevokeUserFromRoleDirect(Change):
    user: str
    role: str


@dataclass(frozen=True)
class CreateOu(Change):
    ou: str
    parent: str | None = None
    department: str | None = None


@dataclass(frozen=True)
class DeleteOu(Change):
    ou: str


@dataclass(frozen=True)
class AssignUserToOu(Change):
    user: str
    ou: str


@dataclass(frozen=True)
class RemoveUserFromOu(Change):
    user: str
    ou: str


@dataclass(frozen=True)
class MoveUserOu(Change):
    user: str
    source: str
    target: str


@dataclass(frozen=True)
class AssignOuToRole(Change):
    ou: str
    role: str


@dataclass(frozen=True)
class RevokeOuFromRole(Change):
    ou: str
    role: str


@dataclass(frozen=True)
class AddRoleInheritance(Change):
    senior: str
    junior: str


@dataclass(frozen=True)
class RemoveRoleInheritance(Change):
    senior: str
    junior: str


@dataclass(frozen=True)
class AddSsd(Change):
    id: str
    roles: frozenset[str]
    cardinality: int = 2

    def __post_init__(self):
        object.__setattr__(self, "roles", frozenset(self.roles))


@dataclass(frozen=True)
class RemoveSsd(Change):
    id: str


@dataclass(frozen=True)
class AddDsd(Change):
    id: str
    roles: frozenset[str]
    cardinality: int = 2

    def __post_init__(self):
        object.__setattr__(self, "roles", frozenset(self.roles))


@dataclass(frozen=True)
class RemoveDsd(Change):
    id: str


CHANGE_TYPES: dict[str, type[Change]] = {
    cls.__name__: cls
    for cls in (
        AddUser, DeleteUser, EditUser, AddRole, DeleteRole, AddPerm, DeletePerm,
        GrantPermToRole, RevokePermFromRole, AssignUserToRoleDirect, RevokeUserFromRoleDirect,
        CreateOu, DeleteOu, AssignUserToOu, RemoveUserFromOu, MoveUserOu,
        AssignOuToRole, RevokeOuFromRole, AddRoleInheritance, RemoveRoleInheritance,
        AddSsd, RemoveSsd, AddDsd, RemoveDsd,
    )
}

_ALL = None  # "every user" marker for the SSD re-check


def _new_id(state: PolicyState, kind: str, ident: str, exists: bool) -> None:
    check_identifier(ident, f"{kind} id")
    if exists:
        raise DuplicateEntity(kind, ident)
    if (kind, ident) in state.tombstones:
        raise TombstoneReuse(kind, ident)


def _need(present: bool, kind: str, ident: str) -> None:
    if not present:
        raise UnknownEntity(kind, ident)


def _tomb(state: PolicyState, kind: str, ident: str) -> frozenset:
    return state.tombstones | {(kind, ident)}


def _add_user(s: PolicyState, c: AddUser):
    _new_id(s, "user", c.user, c.user in s.users)
    return replace(s, users=s.users | {c.user}), ()


def _delete_user(s: PolicyState, c: DeleteUser):
    _need(c.user in s.users, "user", c.user)
    return replace(
        s,
        users=s.users - {c.user},
        user_info=s.user_info.remove(c.user),
        ua_direct=s.ua_direct.remove(c.user),
        uo=s.uo.remove(c.user),
        tombstones=_tomb(s, "user", c.user),
    ), ()


def _edit_user(s: PolicyState, c: EditUser):
    _need(c.user in s.users, "user", c.user)
    keys = [k for k, _ in c.attrs]
    if len(set(keys)) != len(keys):
        raise InvalidIdentifier(f"duplicate attribute key in {keys}")
    for k, v in c.attrs:
        check_identifier(k, "attribute key")
        check_identifier(v, "attribute value")
        if "=" in k:
            raise InvalidIdentifier(f"attribute key {k!r} may not contain '='")
    attrs = tuple(sorted(c.attrs))
    info = s.user_info.set(c.user, attrs) if attrs else s.user_info.remove(c.user)
    return replace(s, user_info=info), ()


def _add_role(s: PolicyState, c: AddRole):
    _new_id(s, "role", c.role, c.role in s.roles)
    return replace(s, roles=s.roles | {c.role}), ()


def _shrink_sod(constraints: FrozenMap, role: str) -> FrozenMap:
    changes = {}
    for cid, con in constraints.items():
        if role in con.roles:
            rest = con.roles - {role}
            # A constraint that can no longer fire is dropped.
            changes[cid] = SodConstraint(cid, rest, con.cardinality) if len(rest) >= con.cardinality else None
    return constraints.update(changes) if changes else constraints


def _delete_role(s: PolicyState, c: DeleteRole):
    r = c.role
    _need(r in s.roles, "role", r)
    return replace(
        s,
        roles=s.roles - {r},
        ua_direct=rel_drop_right(s.ua_direct, r),
        or_assign=rel_drop_right(s.or_assign, r),
        pa=s.pa.remove(r),
        rh=rel_drop_right(s.rh.remove(r), r),
        ssd=_shrink_sod(s.ssd, r),
        dsd=_shrink_sod(s.dsd, r),
        tombstones=_tomb(s, "role", r),
    ), ()


def _add_perm(s: PolicyState, c: AddPerm):
    _new_id(s, "perm", c.perm, c.perm in s.perms)
    check_identifier(c.operation, "operation")
    check_identifier(c.obj, "object")
    clash = s.perm_by_pair(c.operation, c.obj)
    if clash is not None:
        raise DuplicateEntity("permission pair", f"{c.operation} {c.obj} (already {clash})")
    return replace(s, perms=s.perms.set(c.perm, Permission(c.perm, c.operation, c.obj))), ()


def _delete_perm(s: PolicyState, c: DeletePerm):
    _need(c.perm in s.perms, "perm", c.perm)
    return replace(
        s,
        perms=s.perms.remove(c.perm),
        pa=rel_drop_right(s.pa, c.perm),
        tombstones=_tomb(s, "perm", c.perm),
    ), ()


def _grant_perm(s: PolicyState, c: GrantPermToRole):
    _need(c.perm in s.perms, "perm", c.perm)
    _need(c.role in s.roles, "role", c.role)
    if rel_has(s.pa, c.role, c.perm):
        raise DuplicateEntity("pa row", f"{c.perm} {c.role}")
    return replace(s, pa=rel_add(s.pa, c.role, c.perm)), ()


def _revoke_perm(s: PolicyState, c: RevokePermFromRole):
    _need(rel_has(s.pa, c.role, c.perm), "pa row", f"{c.perm} {c.role}")
    return replace(s, pa=rel_remove(s.pa, c.role, c.perm)), ()


def _assign_user_role(s: PolicyState, c: AssignUserToRoleDirect):
    _need(c.user in s.users, "user", c.user)
    _need(c.role in s.roles, "role", c.role)
    if rel_has(s.ua_direct, c.user, c.role):
        raise DuplicateEntity("ua row", f"{c.user} {c.role}")
    return replace(s, ua_direct=rel_add(s.ua_direct, c.user, c.role)), (c.user,)


def _revoke_user_role(s: PolicyState, c: RevokeUserFromRoleDirect):
    _need(rel_has(s.ua_direct, c.user, c.role), "ua row", f"{c.user} {c.role}")
    return replace(s, ua_direct=rel_remove(s.ua_direct, c.user, c.role)), ()


def _create_ou(s: PolicyState, c: CreateOu):
    _new_id(s, "ou", c.ou, c.ou in s.ous)
    if c.parent is not None:
        _need(c.parent in s.ous, "ou", c.parent)
    if c.department is not None:
        check_identifier(c.department, "department")
        inherited = s.department_of(c.parent) if c.parent is not None else None
        if inherited is not None and inherited != c.department:
            raise InvalidDepartment(
                f"OU {c.ou!r} labelled {c.department!r} under department {inherited!r}"
            )
    return replace(s, ous=s.ous.set(c.ou, OrgUnit(c.ou, c.parent, c.department))), ()


def _delete_ou(s: PolicyState, c: DeleteOu):
    _need(c.ou in s.ous, "ou", c.ou)
    children = s.ou_children(c.ou)
    members = s.ou_members(c.ou)
    if children or members:
        raise NonEmptyOu(c.ou, len(children), len(members))
    label = s.ous[c.ou].department
    if label is not None and not any(o.department == label for o in s.ous.values() if o.id != c.ou):
        holders = sorted(
            p for p, assigns in s.principals.items()
            if any(a.role is ManagerRole.IT_COORDINATOR and a.scope == label for a in assigns)
        )
        if holders:
            raise ScopeInUse(f"department {label!r} is the scope of coordinator(s) {', '.join(holders)}")
    return replace(
        s,
        ous=s.ous.remove(c.ou),
        or_assign=s.or_assign.remove(c.ou),
        tombstones=_tomb(s, "ou", c.ou),
    ), ()


def _assign_user_ou(s: PolicyState, c: AssignUserToOu):
    _need(c.user in s.users, "user", c.user)
    _need(c.ou in s.ous, "ou", c.ou)
    if rel_has(s.uo, c.user, c.ou):
        raise DuplicateEntity("uo row", f"{c.user} {c.ou}")
    return replace(s, uo=rel_add(s.uo, c.user, c.ou)), (c.user,)


def _remove_user_ou(s: PolicyState, c: RemoveUserFromOu):
    _need(rel_has(s.uo, c.user, c.ou), "uo row", f"{c.user} {c.ou}")
    return replace(s, uo=rel_remove(s.uo, c.user, c.ou)), ()


def _move_user_ou(s: PolicyState, c: MoveUserOu):
    _need(rel_has(s.uo, c.user, c.source), "uo row", f"{c.user} {c.source}")
    _need(c.target in s.ous, "ou", c.target)
    if rel_has(s.uo, c.user, c.target):
        raise DuplicateEntity("uo row", f"{c.user} {c.target}")
    ous = (s.uo[c.user] - {c.source}) | {c.target}
    return replace(s, uo=s.uo.set(c.user, ous)), (c.user,)


def _ou_subtree_members(s: PolicyState, ou: str) -> list[str]:
    if not s.config.ou_role_inheritance:
        return s.ou_members(ou)
    return sorted(u for u, ous in s.uo.items() if any(ou in s.ou_ancestors(o) for o in ous))


def _assign_ou_role(s: PolicyState, c: AssignOuToRole):
    _need(c.ou in s.ous, "ou", c.ou)
    _need(c.role in s.roles, "role", c.role)
    if rel_has(s.or_assign, c.ou, c.role):
        raise DuplicateEntity("or row", f"{c.ou} {c.role}")
    new = replace(s, or_assign=rel_add(s.or_assign, c.ou, c.role))
    affected = _ou_subtree_members(s, c.ou) if s.ssd else ()
    return new, affected


def _revoke_ou_role(s: PolicyState, c: RevokeOuFromRole):
    _need(rel_has(s.or_assign, c.ou, c.role), "or row", f"{c.ou} {c.role}")
    return replace(s, or_assign=rel_remove(s.or_assign, c.ou, c.role)), ()


def _reaches(rh, start: str, goal: str, skip: tuple[str, str] | None = None) -> bool:
    stack, seen = [start], {start}
    while stack:
        node = stack.pop()
        for nxt in rh.get(node, EMPTY):
            if (node, nxt) == skip:
                continue
            if nxt == goal:
                return True
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return False


def _path(rh, start: str, goal: str) -> list[str]:
    prev = {start: None}
    stack = [start]
    while stack:
        node = stack.pop()
        for nxt in sorted(rh.get(node, EMPTY)):
            if nxt not in prev:
                prev[nxt] = node
                if nxt == goal:
                    out = [goal]
                    while prev[out[-1]] is not None:
                        out.append(prev[out[-1]])
                    return out[::-1]
                stack.append(nxt)
    return []


def redundant_edges(rh) -> list[tuple[str, str]]:
    return sorted((a, b) for a, b in rel_pairs(rh) if _reaches(rh, a, b, skip=(a, b)))


def _add_inheritance(s: PolicyState, c: AddRoleInheritance):
    _need(c.senior in s.roles, "role", c.senior)
    _need(c.junior in s.roles, "role", c.junior)
    if c.senior == c.junior:
        raise CycleError("rh", (c.senior, c.senior))
    if _reaches(s.rh, c.junior, c.senior):
        raise CycleError("rh", tuple(_path(s.rh, c.junior, c.senior)) + (c.junior,))
    if _reaches(s.rh, c.senior, c.junior):
        raise DuplicateEntity("rh edge (implied)", f"{c.senior} {c.junior}")
    rh = rel_add(s.rh, c.senior, c.junior)
    for a, b in redundant_edges(rh):
        rh = rel_remove(rh, a, b)
    return replace(s, rh=rh), _ALL


def _remove_inheritance(s: PolicyState, c: RemoveRoleInheritance):
    _need(rel_has(s.rh, c.senior, c.junior), "rh edge", f"{c.senior} {c.junior}")
    return replace(s, rh=rel_remove(s.rh, c.senior, c.junior)), ()


def _sod_constraint(s: PolicyState, kind: str, existing: FrozenMap, cid: str, roles, t: int) -> SodConstraint:
    _new_id(s, kind, cid, cid in existing)
    roles = frozenset(roles)
    for r in sorted(roles):
        _need(r in s.roles, "role", r)
    if len(roles) < 2:
        raise InvalidConstraint(f"{kind} {cid!r} needs at least two roles")
    if not isinstance(t, int) or isinstance(t, bool) or not 2 <= t <= len(roles):
        raise InvalidConstraint(f"{kind} {cid!r} cardinality {t!r} outside [2, {len(roles)}]")
    return SodConstraint(cid, roles, t)


def _add_ssd(s: PolicyState, c: AddSsd):
    con = _sod_constraint(s, "ssd", s.ssd, c.id, c.roles, c.cardinality)
    return replace(s, ssd=s.ssd.set(c.id, con)), _ALL


def _remove_ssd(s: PolicyState, c: RemoveSsd):
    _need(c.id in s.ssd, "ssd", c.id)
    return replace(s, ssd=s.ssd.remove(c.id), tombstones=_tomb(s, "ssd", c.id)), ()


def _add_dsd(s: PolicyState, c: AddDsd):
    con = _sod_constraint(s, "dsd", s.dsd, c.id, c.roles, c.cardinality)
    return replace(s, dsd=s.dsd.set(c.id, con)), ()


def _remove_dsd(s: PolicyState, c: RemoveDsd):
    _need(c.id in s.dsd, "dsd", c.id)
    return replace(s, dsd=s.dsd.remove(c.id), tombstones=_tomb(s, "dsd", c.id)), ()


_HANDLERS: dict[type, Callable] = {
    AddUser: _add_user,
    DeleteUser: _delete_user,
    EditUser: _edit_user,
    AddRole: _add_role,
    DeleteRole: _delete_role,
    AddPerm: _add_perm,
    DeletePerm: _delete_perm,
    GrantPermToRole: _grant_perm,
    RevokePermFromRole: _revoke_perm,
    AssignUserToRoleDirect: _assign_user_role,
    RevokeUserFromRoleDirect: _revoke_user_role,
    CreateOu: _create_ou,
    DeleteOu: _delete_ou,
    AssignUserToOu: _assign_user_ou,
    RemoveUserFromOu: _remove_user_ou,
    MoveUserOu: _move_user_ou,
    AssignOuToRole: _assign_ou_role,
    RevokeOuFromRole: _revoke_ou_role,
    AddRoleInheritance: _add_inheritance,
    RemoveRoleInheritance: _remove_inheritance,
    AddSsd: _add_ssd,
    RemoveSsd: _remove_ssd,
    AddDsd: _add_dsd,
    RemoveDsd: _remove_dsd,
}


def check_ssd(state: PolicyState, users: Iterable[str] | None = None) -> None:
    """Raise SsdViolation if any of ``users`` (default: all) breaks an SSD constraint."""
    if not state.ssd:
        return
    constraints = [state.ssd[k] for k in sorted(state.ssd)]
    for u in sorted(state.users) if users is None else users:
        if u not in state.users:
            continue
        roles = authorized_roles(state, u)
        for con in constraints:
            if con.violated_by(roles):
                raise SsdViolation(con.id, con.held(roles), u)


def apply_change(state: PolicyState, change: Change) -> PolicyState:
    handler = _HANDLERS.get(type(change))
    if handler is None:
        raise TypeError(f"not a Change: {change!r}")
    new, affected = handler(state, change)
    if affected is _ALL:
        check_ssd(new)
    elif affected:
        check_ssd(new, affected)
    return new


def change_fields(change_type: type[Change]) -> list[str]:
    return [f.name for f in dataclasses.fields(change_type)]


@dataclass(frozen=True)
class InvariantViolation:
    kind: str
    detail: tuple[str, ...]

    def __str__(self) -> str:
        return f"{self.kind}({', '.join(self.detail)})"


def _find_cycles(graph: dict[str, set[str]]) -> list[tuple[str, ...]]:
    """One witness per strongly connected component with a cycle (Tarjan)."""
    index: dict[str, int] = {}
    low: dict[str, int] = {}
    on_stack: set[str] = set()
    stack: list[str] = []
    out: list[tuple[str, ...]] = []
    counter = [0]

    def strong(v: str) -> None:
        index[v] = low[v] = counter[0]
        counter[0] += 1
        stack.append(v)
        on_stack.add(v)
        for w in sorted(graph.get(v, ())):
            if w not in index:
                strong(w)
                low[v] = min(low[v], low[w])
            elif w in on_stack:
                low[v] = min(low[v], index[w])
        if low[v] == index[v]:
            comp = []
            while True:
                w = stack.pop()
                on_stack.discard(w)
                comp.append(w)
                if w == v:
                    break
            if len(comp) > 1 or v in graph.get(v, ()):
                out.append(tuple(sorted(comp)))

    for v in sorted(graph):
        if v not in index:
            strong(v)
    return sorted(out)


def validate(state: PolicyState) -> list[InvariantViolation]:
    out: list[InvariantViolation] = []

    def bad(kind: str, *detail: str) -> None:
        out.append(InvariantViolation(kind, tuple(str(d) for d in detail)))

    for kind, ids in (("user", state.users), ("role", state.roles), ("perm", state.perms), ("ou", state.ous)):
        for i in sorted(ids):
            if not is_identifier(i):
                bad("InvalidIdentifier", kind, repr(i))
            if (kind, i) in state.tombstones:
                bad("TombstoneReuse", kind, i)
    for kind, ids in (("ssd", state.ssd), ("dsd", state.dsd)):
        for i in sorted(ids):
            if (kind, i) in state.tombstones:
                bad("TombstoneReuse", kind, i)

    for u in sorted(state.user_info):
        if u not in state.users:
            bad("DanglingReference", "user_info", u)

    pairs: dict[tuple[str, str], str] = {}
    for pid in sorted(state.perms):
        p = state.perms[pid]
        if p.id != pid:
            bad("KeyMismatch", "perms", pid)
        if (p.operation, p.obj) in pairs:
            bad("DuplicateEntity", "permission pair", pairs[(p.operation, p.obj)], pid)
        pairs[(p.operation, p.obj)] = pid

    for name, rel, left_set, right_set in (
        ("ua_direct", state.ua_direct, state.users, state.roles),
        ("uo", state.uo, state.users, state.ous),
        ("or_assign", state.or_assign, state.ous, state.roles),
        ("pa", state.pa, state.roles, state.perms),
        ("rh", state.rh, state.roles, state.roles),
    ):
        for left in sorted(rel):
            if not rel[left]:
                bad("EmptyRow", name, left)
            for right in sorted(rel[left]):
                if left not in left_set or right not in right_set:
                    bad("DanglingReference", name, left, right)

    # OU forest and department labels
    for oid in sorted(state.ous):
        ou = state.ous[oid]
        if ou.id != oid:
            bad("KeyMismatch", "ous", oid)
        if ou.parent is not None and ou.parent not in state.ous:
            bad("DanglingReference", "ou.parent", oid, ou.parent)
    parent_graph = {o.id: {o.parent} for o in state.ous.values() if o.parent in state.ous}
    ou_cycles = _find_cycles(parent_graph)
    for cyc in ou_cycles:
        bad("CycleError", "ou", *cyc)
    if not ou_cycles:
        for oid in sorted(state.ous):
            ou = state.ous[oid]
            if ou.department is not None and ou.parent is not None:
                inherited = state.department_of(ou.parent)
                if inherited is not None and inherited != ou.department:
                    bad("InvalidDepartment", oid, ou.department, inherited)

    rh_graph = {k: set(v) for k, v in state.rh.items()}
    rh_cycles = _find_cycles(rh_graph)
    for cyc in rh_cycles:
        bad("CycleError", "rh", *cyc)
    if not rh_cycles:
        for a, b in redundant_edges(state.rh):
            bad("NotTransitivelyReduced", "rh", a, b)

    for kind, cons in (("ssd", state.ssd), ("dsd", state.dsd)):
        for cid in sorted(cons):
            con = cons[cid]
            if len(con.roles) < 2 or not 2 <= con.cardinality <= len(con.roles):
                bad("InvalidConstraint", kind, cid)
            for r in sorted(con.roles - state.roles):
                bad("DanglingReference", kind, cid, r)
    if state.ssd and not rh_cycles and not ou_cycles:
        try:
            for u in sorted(state.users):
                roles = authorized_roles(state, u)
                for cid in sorted(state.ssd):
                    con = state.ssd[cid]
                    if con.violated_by(roles):
                        bad("SsdViolation", cid, u, *con.held(roles))
        except ConstraintError:
            pass

    labels = state.department_labels()
    for p in sorted(state.principals):
        assigns = state.principals[p]
        if not assigns:
            bad("EmptyRow", "principals", p)
        roles = {a.role for a in assigns}
        for a in sorted(assigns):
            if a.principal != p:
                bad("KeyMismatch", "principals", p)
            if (a.role is ManagerRole.IT_COORDINATOR) != (a.scope is not None):
                bad("InvalidScope", p, str(a.role))
            elif a.scope is not None and a.scope not in labels:
                bad("DanglingReference", "scope", p, a.scope)
        if state.config.manager_ssd_enabled:
            subs = sorted(str(r) for r in roles & SUB_MANAGERS)
            if len(subs) >= 2:
                bad("SsdViolation", "manager-ssd", p, *subs)
            if ManagerRole.RBAC_MANAGER in roles and len(roles) > 1:
                bad("SsdViolation", "manager-ssd", p, *sorted(str(r) for r in roles))

    for did in sorted(state.directives):
        d = state.directives[did]
        if d.id != did:
            bad("KeyMismatch", "directives", did)
        if d.variant not in CHANGE_TYPES:
            bad("InvalidDirective", did, d.variant)
    return out
