"""Effective roles and permissions through user -> OU -> role -> permission.

A user's authorized roles are the downward role-hierarchy closure of the
roles assigned directly plus the roles assigned to any OU in the user's
OU closure. Senior roles acquire the permissions of their juniors.
"""

from __future__ import annotations

from collections import deque
from collections.abc import Iterable
from dataclasses import dataclass, field

from .errors import DsdViolation, NotAuthorizedRole, UnknownEntity
from .model import EMPTY, PolicyState, check_identifier


def _require_user(state: PolicyState, user: str) -> None:
    if user not in state.users:
        raise UnknownEntity("user", user)


def ou_closure(state: PolicyState, user: str) -> frozenset[str]:
    _require_user(state, user)
    return _ou_closure(state, state.uo.get(user, EMPTY))


def _ou_closure(state: PolicyState, ous: Iterable[str]) -> frozenset[str]:
    if not state.config.ou_role_inheritance:
        return frozenset(ous)
    out: set[str] = set()
    for ou in ous:
        for anc in state.ou_ancestors(ou):
            if anc in out:
                break
            out.add(anc)
    return frozenset(out)


def junior_closure(state: PolicyState, roles: Iterable[str]) -> frozenset[str]:
    """Roles plus everything they dominate in the role hierarchy."""
    out = set(roles)
    stack = list(out)
    rh = state.rh
    while stack:
        for j in rh.get(stack.pop(), EMPTY):
            if j not in out:
                out.add(j)
                stack.append(j)
    return frozenset(out)


def assigned_roles(state: PolicyState, user: str) -> frozenset[str]:
    """Direct and OU-mediated roles, before hierarchy closure."""
    roles = set(state.ua_direct.get(user, EMPTY))
    for ou in _ou_closure(state, state.uo.get(user, EMPTY)):
        roles.update(state.or_assign.get(ou, EMPTY))
    return frozenset(roles)


def authorized_roles(state: PolicyState, user: str) -> frozenset[str]:
    _require_user(state, user)
    return junior_closure(state, assigned_roles(state, user))


def role_permissions(state: PolicyState, roles: Iterable[str]) -> frozenset[str]:
    perms: set[str] = set()
    for r in junior_closure(state, roles):
        perms.update(state.pa.get(r, EMPTY))
    return frozenset(perms)


def effective_permissions(state: PolicyState, user: str) -> frozenset[str]:
    _require_user(state, user)
    return role_permissions(state, assigned_roles(state, user))


@dataclass(frozen=True)
class Session:
    id: str
    user: str
    active_roles: frozenset[str] = EMPTY


@dataclass(frozen=True)
class Edge:
    """One step of an access explanation.

    kinds: ``session`` (user activated role), ``senior`` (role >= role),
    ``grant`` (role -> permission).
    """

    kind: str
    src: str
    dst: str

    def __str__(self) -> str:
        arrow = {"session": "->session->", "senior": ">=", "grant": "->"}[self.kind]
        return f"{self.src}{arrow}{self.dst}"


@dataclass(frozen=True)
class Decision:
    allowed: bool
    reason: tuple[Edge, ...] = ()
    note: str = field(default="", compare=False)

    def __bool__(self) -> bool:
        return self.allowed


def create_session(state: PolicyState, user: str, session_id: str | None = None) -> Session:
    _require_user(state, user)
    return Session(id=check_identifier(session_id or f"session.{user}", "session id"), user=user)


def activate_role(state: PolicyState, session: Session, role: str) -> Session:
    _require_user(state, session.user)
    if role not in authorized_roles(state, session.user):
        raise NotAuthorizedRole(session.user, role)
    active = session.active_roles | {role}
    for cid in sorted(state.dsd):
        c = state.dsd[cid]
        if c.violated_by(active):
            raise DsdViolation(cid, c.held(active))
    return Session(session.id, session.user, active)


def drop_role(session: Session, role: str) -> Session:
    return Session(session.id, session.user, session.active_roles - {role})


def check_access(state: PolicyState, session: Session, operation: str, obj: str) -> Decision:
    if session.user not in state.users:
        return Decision(False, note="revoked")
    live = sorted(session.active_roles & authorized_roles(state, session.user))
    if not live:
        return Decision(False, note="no active roles")
    # BFS gives the shortest explanation; sorted seeds keep it deterministic.
    prev: dict[str, tuple[str, str] | None] = {}
    queue: deque[str] = deque()
    for r in live:
        prev[r] = None
        queue.append(r)
    while queue:
        role = queue.popleft()
        for pid in sorted(state.pa.get(role, EMPTY)):
            p = state.perms[pid]
            if p.operation == operation and p.obj == obj:
                return Decision(True, _trace(session.user, role, pid, prev))
        for j in sorted(state.rh.get(role, EMPTY)):
            if j not in prev:
                prev[j] = ("senior", role)
                queue.append(j)
    return Decision(False, note="no active role grants the permission")


def _trace(user: str, role: str, perm: str, prev: dict) -> tuple[Edge, ...]:
    edges = [Edge("grant", role, perm)]
    while prev[role] is not None:
        _, senior = prev[role]
        edges.append(Edge("senior", senior, role))
        role = senior
    edges.append(Edge("session", user, role))
    return tuple(reversed(edges))


def verify_trace(state: PolicyState, session: Session, operation: str, obj: str, trace: Iterable[Edge]) -> bool:
    """Replay an allow trace edge by edge against the state."""
    edges = list(trace)
    if not edges or edges[0].kind != "session" or edges[-1].kind != "grant":
        return False
    first = edges[0]
    if first.src != session.user or first.dst not in session.active_roles:
        return False
    if first.dst not in authorized_roles(state, session.user):
        return False
    current = first.dst
    for e in edges[1:-1]:
        if e.kind != "senior" or e.src != current or e.dst not in state.rh.get(current, EMPTY):
            return False
        current = e.dst
    last = edges[-1]
    if last.src != current or last.dst not in state.pa.get(current, EMPTY):
        return False
    p = state.perms[last.dst]
    return p.operation == operation and p.obj == obj
