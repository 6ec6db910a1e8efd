"""Independent oracles and random-instance generators for the tests.

Nothing here calls the resolver: the oracle works on the raw relation
fields by explicit simple-path enumeration over the assignment graph.
"""

from __future__ import annotations

import random
from dataclasses import replace

from ourbac.changes import redundant_edges
from ourbac.model import (
    AdminAssignment,
    EngineConfig,
    FrozenMap,
    ManagerRole,
    OrgUnit,
    Permission,
    rel_pairs,
    PolicyState,
)


def _graph(state: PolicyState) -> dict[tuple[str, str], list[tuple[str, str]]]:
    """Adjacency over typed nodes: user -> ou/role, ou -> parent ou/role, role -> junior/perm."""
    g: dict[tuple[str, str], list[tuple[str, str]]] = {}

    def edge(a, b):
        g.setdefault(a, []).append(b)

    for u, ous in state.uo.items():
        for o in ous:
            edge(("user", u), ("ou", o))
    for u, roles in state.ua_direct.items():
        for r in roles:
            edge(("user", u), ("role", r))
    if state.config.ou_role_inheritance:
        for o in state.ous.values():
            if o.parent is not None:
                edge(("ou", o.id), ("ou", o.parent))
    for o, roles in state.or_assign.items():
        for r in roles:
            edge(("ou", o), ("role", r))
    for s, juniors in state.rh.items():
        for j in juniors:
            edge(("role", s), ("role", j))
    for r, perms in state.pa.items():
        for p in perms:
            edge(("role", r), ("perm", p))
    return g


def enumerate_paths(state: PolicyState, user: str) -> list[list[tuple[str, str]]]:
    """Every simple path starting at the user node."""
    g = _graph(state)
    out: list[list[tuple[str, str]]] = []

    def walk(path):
        out.append(list(path))
        for nxt in g.get(path[-1], ()):
            if nxt not in path:
                path.append(nxt)
                walk(path)
                path.pop()

    walk([("user", user)])
    return out


def oracle_roles_perms(state: PolicyState, user: str) -> tuple[set[str], set[str]]:
    roles, perms = set(), set()
    for path in enumerate_paths(state, user):
        kind, ident = path[-1]
        if kind == "role":
            roles.add(ident)
        elif kind == "perm":
            perms.add(ident)
    return roles, perms


def random_state(
    rng: random.Random,
    max_users: int = 50,
    max_ous: int = 10,
    max_roles: int = 10,
    max_perms: int = 20,
    departments: tuple[str, ...] = ("D0", "D1", "D2"),
    inheritance: bool | None = None,
) -> PolicyState:
    """A random state satisfying every model invariant, built directly.

    OUs form a forest (parents precede children); department labels sit on
    some subtree roots; the role hierarchy is a transitively reduced DAG.
    """
    n_users = rng.randint(1, max_users)
    n_ous = rng.randint(1, max_ous)
    n_roles = rng.randint(1, max_roles)
    n_perms = rng.randint(1, max_perms)
    users = [f"u{i}" for i in range(n_users)]
    roles = [f"r{i}" for i in range(n_roles)]
    perms = [f"p{i}" for i in range(n_perms)]

    ous: dict[str, OrgUnit] = {}
    for i in range(n_ous):
        oid = f"o{i}"
        parent = rng.choice([None] + list(ous)) if ous and rng.random() < 0.7 else None
        inherited = None
        node = ous.get(parent)
        while node is not None:
            if node.department is not None:
                inherited = node.department
                break
            node = ous.get(node.parent)
        dept = None
        if inherited is None and rng.random() < 0.6:
            dept = rng.choice(departments)
        ous[oid] = OrgUnit(oid, parent, dept)

    def rel(lefts, rights, density):
        rows: dict[str, frozenset[str]] = {}
        for a in lefts:
            picked = frozenset(b for b in rights if rng.random() < density)
            if picked:
                rows[a] = picked
        return FrozenMap(rows)

    # densities vary per state so both sparse and tangled graphs appear
    d_ua, d_uo, d_or, d_pa, d_rh = (rng.uniform(0, hi) for hi in (0.1, 0.3, 0.4, 0.4, 0.4))
    rh: dict[str, set[str]] = {}
    for i, a in enumerate(roles):
        for b in roles[i + 1:]:
            if rng.random() < d_rh:
                rh.setdefault(a, set()).add(b)
    rh_map = FrozenMap({k: frozenset(v) for k, v in rh.items()})
    for a, b in redundant_edges(rh_map):
        rest = rh_map[a] - {b}
        rh_map = rh_map.set(a, rest) if rest else rh_map.remove(a)

    return PolicyState(
        users=frozenset(users),
        roles=frozenset(roles),
        perms=FrozenMap({p: Permission(p, "op", f"obj.{p}") for p in perms}),
        ous=FrozenMap(ous),
        ua_direct=rel(users, roles, d_ua),
        uo=rel(users, list(ous), d_uo),
        or_assign=rel(list(ous), roles, d_or),
        pa=rel(roles, perms, d_pa),
        rh=rh_map,
        config=EngineConfig(ou_role_inheritance=rng.random() < 0.8 if inheritance is None else inheritance),
    )


def with_principals(state: PolicyState, *assignments: AdminAssignment) -> PolicyState:
    principals: dict[str, frozenset] = {}
    for a in assignments:
        principals[a.principal] = principals.get(a.principal, frozenset()) | {a}
    return replace(state, principals=FrozenMap(principals))


def coordinator(principal: str, scope: str) -> AdminAssignment:
    return AdminAssignment(principal, ManagerRole.IT_COORDINATOR, scope)


def enrich(state: PolicyState, rng: random.Random) -> PolicyState:
    """Add user attributes, SoD constraints the state satisfies, principals and a tombstone."""
    from ourbac.changes import AddDsd, AddSsd, AddUser, DeleteUser, EditUser, apply_change
    from ourbac.resolver import authorized_roles

    s = state
    for u in sorted(s.users):
        if rng.random() < 0.2:
            s = apply_change(s, EditUser(u, (("desk", str(rng.randint(1, 99))), ("mail", f"{u}@uni"))))
    roles = sorted(s.roles)
    held = [authorized_roles(s, u) for u in s.users]
    for i in range(rng.randint(0, 3)):
        if len(roles) < 2:
            break
        pair = frozenset(rng.sample(roles, 2))
        if not any(pair <= h for h in held):
            s = apply_change(s, AddSsd(f"ssd{i}", pair, 2))
        s = apply_change(s, AddDsd(f"dsd{i}", pair, 2))
    s = apply_change(apply_change(s, AddUser("u.gone")), DeleteUser("u.gone"))
    assignments = [AdminAssignment("root", ManagerRole.RBAC_MANAGER),
                   AdminAssignment("pm", ManagerRole.PERMISSION_MANAGER)]
    for i, label in enumerate(sorted(s.department_labels())):
        assignments.append(coordinator(f"coord{i}", label))
    return with_principals(s, *assignments)


def build_in_random_order(target: PolicyState, rng: random.Random) -> PolicyState:
    """Rebuild ``target`` through apply_change/apply_meta in a random order
    that respects dependencies (entities before relations, parents before children)."""
    from ourbac.admin import AppointManager, apply_meta
    from ourbac import changes as ch

    items: list[tuple[object, set]] = []
    for u in target.users:
        items.append((ch.AddUser(u), set()))
        info = target.user_info.get(u)
        if info:
            items.append((ch.EditUser(u, tuple(info)), {("user", u)}))
    for r in target.roles:
        items.append((ch.AddRole(r), set()))
    for p in target.perms.values():
        items.append((ch.AddPerm(p.id, p.operation, p.obj), set()))
    for o in target.ous.values():
        items.append((ch.CreateOu(o.id, o.parent, o.department), {("ou", o.parent)} if o.parent else set()))
    for u, r in rel_pairs(target.ua_direct):
        items.append((ch.AssignUserToRoleDirect(u, r), {("user", u), ("role", r)}))
    for u, o in rel_pairs(target.uo):
        items.append((ch.AssignUserToOu(u, o), {("user", u), ("ou", o)}))
    for o, r in rel_pairs(target.or_assign):
        items.append((ch.AssignOuToRole(o, r), {("ou", o), ("role", r)}))
    for r, p in rel_pairs(target.pa):
        items.append((ch.GrantPermToRole(p, r), {("role", r), ("perm", p)}))
    for a, b in rel_pairs(target.rh):
        items.append((ch.AddRoleInheritance(a, b), {("role", a), ("role", b)}))
    for kind, rel, cls in (("ssd", target.ssd, ch.AddSsd), ("dsd", target.dsd, ch.AddDsd)):
        for c in rel.values():
            items.append((cls(c.id, c.roles, c.cardinality), {("role", r) for r in c.roles}))
    for kind, ident in target.tombstones:
        assert kind == "user"
        items.append((("tomb", ident), set()))
    for assignments in target.principals.values():
        for a in assignments:
            items.append((AppointManager(a.principal, a.role, a.scope), {("label", a.scope)} if a.scope else set()))

    def provides(item) -> set:
        if isinstance(item, ch.AddUser):
            return {("user", item.user)}
        if isinstance(item, ch.AddRole):
            return {("role", item.role)}
        if isinstance(item, ch.AddPerm):
            return {("perm", item.perm)}
        if isinstance(item, ch.CreateOu):
            return {("ou", item.ou)} | ({("label", item.department)} if item.department else set())
        return set()

    state = PolicyState(config=target.config)
    have: set = set()
    pending = list(items)
    while pending:
        ready = [i for i, (_, deps) in enumerate(pending) if deps <= have]
        item, _ = pending.pop(rng.choice(ready))
        if isinstance(item, tuple):
            state = ch.apply_change(ch.apply_change(state, ch.AddUser(item[1])), ch.DeleteUser(item[1]))
        elif isinstance(item, AppointManager):
            state, _ = apply_meta(state, "builder", item)
        else:
            state = ch.apply_change(state, item)
        have |= provides(item)
    return state
