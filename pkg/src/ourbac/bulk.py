"""Whole-population resolution as boolean matrix products.

Computes every user's authorized roles and effective permissions at once,
which is what the workload bench and the large equivalence checks need.
Agrees with the per-user functions in :mod:`ourbac.resolver`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .model import PolicyState, rel_pairs


@dataclass(frozen=True)
class BulkResolution:
    users: list[str]
    roles: list[str]
    perms: list[str]
    user_roles: np.ndarray  # bool [users, roles]
    user_perms: np.ndarray  # bool [users, perms]

    def permissions_of(self, user: str) -> frozenset[str]:
        row = self.user_perms[self.users.index(user)]
        return frozenset(self.perms[j] for j in np.flatnonzero(row))

    def permission_sets(self) -> dict[str, frozenset[str]]:
        return {
            u: frozenset(self.perms[j] for j in np.flatnonzero(self.user_perms[i]))
            for i, u in enumerate(self.users)
        }

    def role_sets(self) -> dict[str, frozenset[str]]:
        return {
            u: frozenset(self.roles[j] for j in np.flatnonzero(self.user_roles[i]))
            for i, u in enumerate(self.users)
        }


def _matrix(pairs, rows: dict[str, int], cols: dict[str, int]) -> np.ndarray:
    m = np.zeros((len(rows), len(cols)), dtype=np.bool_)
    for a, b in pairs:
        m[rows[a], cols[b]] = True
    return m


def resolve_all(state: PolicyState) -> BulkResolution:
    users = sorted(state.users)
    roles = sorted(state.roles)
    perms = sorted(state.perms)
    ous = sorted(state.ous)
    ui = {u: i for i, u in enumerate(users)}
    ri = {r: i for i, r in enumerate(roles)}
    pi = {p: i for i, p in enumerate(perms)}
    oi = {o: i for i, o in enumerate(ous)}

    member = _matrix(rel_pairs(state.uo), ui, oi)
    if state.config.ou_role_inheritance:
        parent = _matrix(((o.id, o.parent) for o in state.ous.values() if o.parent is not None), oi, oi)
        up = _kernels.transitive_closure(parent)
    else:
        up = np.eye(len(ous), dtype=np.bool_)
    ou_roles = _matrix(rel_pairs(state.or_assign), oi, ri)
    direct = _matrix(rel_pairs(state.ua_direct), ui, ri)
    juniors = _kernels.transitive_closure(_matrix(rel_pairs(state.rh), ri, ri))
    grants = _matrix(((r, p) for r, p in rel_pairs(state.pa)), ri, pi)

    via_ou = _kernels.bool_product(member, _kernels.bool_product(up, ou_roles))
    user_roles = _kernels.bool_product(via_ou | direct, juniors)
    user_perms = _kernels.bool_product(user_roles, grants)
    return BulkResolution(users, roles, perms, user_roles, user_perms)
