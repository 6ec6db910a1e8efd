"""Escalation-safety checks for delegated administration.

``bounded_reach`` searches breadth-first over admin-action sequences the
given principals may execute, looking for a state where a user holds a
permission. ``containment_bound`` is the closed-form ceiling on what an IT
coordinator can confer.
"""

from __future__ import annotations

import itertools
from collections.abc import Iterable, Iterator
from dataclasses import dataclass

from .admin import CAPABILITIES, authorize_admin, consume_directive
from .changes import (
    AddDsd, AddPerm, AddRole, AddRoleInheritance, AddSsd, AddUser, AssignOuToRole,
    AssignUserToOu, AssignUserToRoleDirect, CreateOu, DeleteOu, DeletePerm, DeleteRole,
    DeleteUser, EditUser, GrantPermToRole, MoveUserOu, RemoveDsd, RemoveRoleInheritance,
    RemoveSsd, RemoveUserFromOu, RevokeOuFromRole, RevokePermFromRole,
    RevokeUserFromRoleDirect, apply_change,
)
from .engine import Engine
from .errors import BudgetExceeded, ConstraintError, NotACoordinator
from .model import ManagerRole, PolicyState, rel_pairs
from .resolver import _ou_closure, effective_permissions, role_permissions

DEFAULT_DEPTH = 6
DEFAULT_STATE_CAP = 200_000


@dataclass(frozen=True)
class SafetyGoal:
    user: str
    perm: str


@dataclass(frozen=True)
class Witness:
    steps: tuple[tuple[str, object], ...]

    def __len__(self) -> int:
        return len(self.steps)


@dataclass(frozen=True)
class Unreachable:
    depth: int
    explored: int


@dataclass(frozen=True)
class FreshIds:
    """One symbolic fresh identifier per entity class."""

    user: str
    role: str
    perm: str
    ou: str
    ssd: str
    dsd: str

    @classmethod
    def for_state(cls, state: PolicyState, goal: SafetyGoal | None = None) -> FreshIds:
        taken = {
            "user": state.users, "role": state.roles, "perm": set(state.perms), "ou": set(state.ous),
            "ssd": set(state.ssd), "dsd": set(state.dsd),
        }

        def pick(kind: str, stem: str, preferred: str | None = None) -> str:
            used = taken[kind]
            if preferred and preferred not in used and (kind, preferred) not in state.tombstones:
                return preferred
            for n in itertools.count():
                cand = stem if n == 0 else f"{stem}{n}"
                if cand not in used and (kind, cand) not in state.tombstones:
                    return cand
            raise AssertionError("unreachable")

        return cls(
            user=pick("user", "u.fresh", goal.user if goal else None),
            role=pick("role", "r.fresh"),
            perm=pick("perm", "p.fresh", goal.perm if goal else None),
            ou=pick("ou", "ou.fresh"),
            ssd=pick("ssd", "ssd.fresh"),
            dsd=pick("dsd", "dsd.fresh"),
        )


def _candidates(s: PolicyState, variant: str, fresh: FreshIds) -> Iterator[object]:
    users = sorted(s.users)
    roles = sorted(s.roles)
    perms = sorted(s.perms)
    ous = sorted(s.ous)
    if variant == "AddUser":
        yield AddUser(fresh.user)
    elif variant == "DeleteUser":
        yield from (DeleteUser(u) for u in users)
    elif variant == "EditUser":
        yield from (EditUser(u, (("note", "edited"),)) for u in users)
    elif variant == "AddRole":
        yield AddRole(fresh.role)
    elif variant == "DeleteRole":
        yield from (DeleteRole(r) for r in roles)
    elif variant == "AddPerm":
        yield AddPerm(fresh.perm, "op.fresh", "obj.fresh")
    elif variant == "DeletePerm":
        yield from (DeletePerm(p) for p in perms)
    elif variant == "GrantPermToRole":
        yield from (GrantPermToRole(p, r) for p in perms for r in roles)
    elif variant == "RevokePermFromRole":
        yield from (RevokePermFromRole(p, r) for r, p in sorted(rel_pairs(s.pa)))
    elif variant == "AssignUserToRoleDirect":
        yield from (AssignUserToRoleDirect(u, r) for u in users for r in roles)
    elif variant == "RevokeUserFromRoleDirect":
        yield from (RevokeUserFromRoleDirect(u, r) for u, r in sorted(rel_pairs(s.ua_direct)))
    elif variant == "CreateOu":
        labels = [None, *sorted(s.department_labels())]
        for parent in [None, *ous]:
            for dept in labels:
                yield CreateOu(fresh.ou, parent, dept)
    elif variant == "DeleteOu":
        yield from (DeleteOu(o) for o in ous)
    elif variant == "AssignUserToOu":
        yield from (AssignUserToOu(u, o) for u in users for o in ous)
    elif variant == "RemoveUserFromOu":
        yield from (RemoveUserFromOu(u, o) for u, o in sorted(rel_pairs(s.uo)))
    elif variant == "MoveUserOu":
        yield from (MoveUserOu(u, o, t) for u, o in sorted(rel_pairs(s.uo)) for t in ous if t != o)
    elif variant == "AssignOuToRole":
        yield from (AssignOuToRole(o, r) for o in ous for r in roles)
    elif variant == "RevokeOuFromRole":
        yield from (RevokeOuFromRole(o, r) for o, r in sorted(rel_pairs(s.or_assign)))
    elif variant == "AddRoleInheritance":
        yield from (AddRoleInheritance(a, b) for a in roles for b in roles if a != b)
    elif variant == "RemoveRoleInheritance":
        yield from (RemoveRoleInheritance(a, b) for a, b in sorted(rel_pairs(s.rh)))
    elif variant in ("AddSsd", "AddDsd"):
        cls, cid = (AddSsd, fresh.ssd) if variant == "AddSsd" else (AddDsd, fresh.dsd)
        yield from (cls(cid, frozenset(pair), 2) for pair in itertools.combinations(roles, 2))
    elif variant == "RemoveSsd":
        yield from (RemoveSsd(c) for c in sorted(s.ssd))
    elif variant == "RemoveDsd":
        yield from (RemoveDsd(c) for c in sorted(s.dsd))


def candidate_actions(state: PolicyState, principal: str, fresh: FreshIds) -> Iterator[object]:
    """Change actions in the principal's capability matrix over the state's entities.

    Meta-actions are not explored: the principal set is fixed for a search.
    """
    variants: set[str] = set()
    for a in state.assignments_of(principal):
        variants |= CAPABILITIES[a.role]
    for variant in sorted(variants):
        yield from _candidates(state, variant, fresh)


def step(state: PolicyState, principal: str, action: object) -> PolicyState | None:
    """Successor state if the principal may run the action and it applies, else None."""
    verdict = authorize_admin(state, principal, action)
    if not verdict.allowed:
        return None
    try:
        new = apply_change(state, action)
    except ConstraintError:
        return None
    if verdict.directive is not None:
        new = consume_directive(new, verdict.directive)
    return new


def goal_holds(state: PolicyState, goal: SafetyGoal) -> bool:
    return goal.user in state.users and goal.perm in effective_permissions(state, goal.user)


def bounded_reach(
    state: PolicyState,
    principals: Iterable[str],
    goal: SafetyGoal,
    depth: int = DEFAULT_DEPTH,
    state_cap: int = DEFAULT_STATE_CAP,
) -> Witness | Unreachable:
    if depth < 0:
        raise ValueError("depth must be >= 0")
    if goal_holds(state, goal):
        return Witness(())
    principals = sorted(set(principals))
    fresh = FreshIds.for_state(state, goal)
    parent: dict[PolicyState, tuple[PolicyState, str, object] | None] = {state: None}
    frontier = [state]
    for level in range(1, depth + 1):
        nxt: list[PolicyState] = []
        for s in frontier:
            for p in principals:
                for act in candidate_actions(s, p, fresh):
                    t = step(s, p, act)
                    if t is None or t in parent:
                        continue
                    parent[t] = (s, p, act)
                    if goal_holds(t, goal):
                        return Witness(_unwind(parent, t))
                    nxt.append(t)
                    if len(parent) > state_cap:
                        raise BudgetExceeded(len(parent), len(nxt), level)
        frontier = nxt
        if not frontier:
            break
    return Unreachable(depth, len(parent))


def _unwind(parent: dict, state: PolicyState) -> tuple[tuple[str, object], ...]:
    steps = []
    while parent[state] is not None:
        prev, p, act = parent[state]
        steps.append((p, act))
        state = prev
    return tuple(reversed(steps))


def replay_witness(state: PolicyState, witness: Witness) -> PolicyState:
    """Re-run a witness through audited execution; raises AdminError if any step fails."""
    engine = Engine(state)
    for principal, action in witness.steps:
        engine.execute(principal, action)
    return engine.state


def coordinator_scopes(state: PolicyState, coordinator: str) -> set[str]:
    scopes = {a.scope for a in state.assignments_of(coordinator) if a.role is ManagerRole.IT_COORDINATOR}
    if not scopes:
        raise NotACoordinator(f"{coordinator!r} holds no ItCoordinator assignment")
    return scopes


def containment_bound(state: PolicyState, coordinator: str) -> frozenset[str]:
    """Every permission the coordinator could confer through OU membership.

    Roles come from OUs inside the coordinator's departments and, with OU
    role inheritance on, from those OUs' ancestors as well.
    """
    scopes = coordinator_scopes(state, coordinator)
    in_scope = [o for o in state.ous if state.department_of(o) in scopes]
    roles = set()
    for ou in _ou_closure(state, in_scope):
        roles.update(state.or_assign.get(ou, ()))
    return role_permissions(state, roles)

