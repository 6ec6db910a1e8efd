"""Entity types and the immutable policy state."""

from __future__ import annotations

import enum
from collections.abc import Iterable, Iterator, Mapping
from dataclasses import dataclass, field
from typing import Generic, TypeVar

from .errors import InvalidIdentifier

K = TypeVar("K")
V = TypeVar("V")

MAX_ID_BYTES = 256


class FrozenMap(Mapping, Generic[K, V]):
    """Hashable read-only mapping with copy-on-write updates.

    Updates copy the backing dict (a C-level copy), which keeps per-change
    cost low enough for states with tens of thousands of users.
    """

    __slots__ = ("_d", "_hash")

    def __init__(self, items: Mapping[K, V] | Iterable[tuple[K, V]] = ()):
        self._d: dict[K, V] = dict(items)
        self._hash: int | None = None

    @classmethod
    def _wrap(cls, d: dict) -> FrozenMap:
        m = cls.__new__(cls)
        m._d = d
        m._hash = None
        return m

    def __getitem__(self, key: K) -> V:
        return self._d[key]

    def __iter__(self) -> Iterator[K]:
        return iter(self._d)

    def __len__(self) -> int:
        return len(self._d)

    def __contains__(self, key: object) -> bool:
        return key in self._d

    def get(self, key, default=None):
        return self._d.get(key, default)

    def __eq__(self, other: object) -> bool:
        if isinstance(other, FrozenMap):
            return self._d == other._d
        if isinstance(other, Mapping):
            return self._d == dict(other)
        return NotImplemented

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(frozenset(self._d.items()))
        return self._hash

    def __repr__(self) -> str:
        return f"FrozenMap({self._d!r})"

    def set(self, key: K, value: V) -> FrozenMap[K, V]:
        d = self._d.copy()
        d[key] = value
        return FrozenMap._wrap(d)

    def remove(self, key: K) -> FrozenMap[K, V]:
        if key not in self._d:
            return self
        d = self._d.copy()
        del d[key]
        return FrozenMap._wrap(d)

    def update(self, changes: Mapping[K, V | None]) -> FrozenMap[K, V]:
        """Apply several updates at once; a value of None deletes the key."""
        d = self._d.copy()
        for k, v in changes.items():
            if v is None:
                d.pop(k, None)
            else:
                d[k] = v
        return FrozenMap._wrap(d)


EMPTY: frozenset = frozenset()

# A relation is stored as left -> frozenset(right); empty rows are never stored,
# so structurally equal relations compare (and serialize) equal.
Relation = FrozenMap


def rel_add(rel: FrozenMap, left: str, right: str) -> FrozenMap:
    return rel.set(left, rel.get(left, EMPTY) | {right})


def rel_remove(rel: FrozenMap, left: str, right: str) -> FrozenMap:
    rest = rel.get(left, EMPTY) - {right}
    return rel.set(left, rest) if rest else rel.remove(left)


def rel_has(rel: FrozenMap, left: str, right: str) -> bool:
    return right in rel.get(left, EMPTY)


def rel_pairs(rel: Mapping[str, frozenset]) -> Iterator[tuple[str, str]]:
    for left, rights in rel.items():
        for right in rights:
            yield left, right


def rel_drop_right(rel: FrozenMap, right: str) -> FrozenMap:
    """Remove every row whose right side is ``right``."""
    changes = {}
    for left, rights in rel.items():
        if right in rights:
            rest = rights - {right}
            changes[left] = rest or None
    return rel.update(changes) if changes else rel


def check_identifier(value: object, what: str = "identifier") -> str:
    if not isinstance(value, str) or not value:
        raise InvalidIdentifier(f"{what} must be a non-empty string, got {value!r}")
    if len(value.encode("utf-8")) > MAX_ID_BYTES:
        raise InvalidIdentifier(f"{what} {value[:32]!r}... exceeds {MAX_ID_BYTES} bytes")
    for ch in value:
        if ch.isspace() or ord(ch) < 0x20 or 0x7F <= ord(ch) < 0xA0:
            raise InvalidIdentifier(f"{what} {value!r} contains whitespace or a control character")
    return value


def is_identifier(value: object) -> bool:
    try:
        check_identifier(value)
    except InvalidIdentifier:
        return False
    return True


@dataclass(frozen=True)
class Permission:
    id: str
    operation: str
    obj: str


@dataclass(frozen=True)
class OrgUnit:
    id: str
    parent: str | None = None
    department: str | None = None


@dataclass(frozen=True)
class SodConstraint:
    """Separation-of-duty constraint: fewer than ``cardinality`` roles of ``roles``."""

    id: str
    roles: frozenset[str]
    cardinality: int

    def held(self, role_set: Iterable[str]) -> tuple[str, ...]:
        return tuple(sorted(self.roles.intersection(role_set)))

    def violated_by(self, role_set: Iterable[str]) -> bool:
        return len(self.roles.intersection(role_set)) >= self.cardinality


@dataclass(frozen=True)
class EngineConfig:
    ou_role_inheritance: bool = True
    directive_mode: bool = True
    manager_ssd_enabled: bool = True


class ManagerRole(str, enum.Enum):
    RBAC_MANAGER = "RbacManager"
    PERMISSION_MANAGER = "PermissionManager"
    ROLE_MANAGER = "RoleManager"
    OU_MANAGER = "OuManager"
    IT_COORDINATOR = "ItCoordinator"

    def __str__(self) -> str:
        return self.value


SUB_MANAGERS = frozenset({ManagerRole.PERMISSION_MANAGER, ManagerRole.ROLE_MANAGER, ManagerRole.OU_MANAGER})


@dataclass(frozen=True, order=True)
class AdminAssignment:
    principal: str
    role: ManagerRole
    scope: str | None = None


class DirectiveState(str, enum.Enum):
    OPEN = "open"
    CONSUMED = "consumed"
    REVOKED = "revoked"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class Directive:
    """Single-use go-ahead from an RBAC manager for one Change shape.

    ``bindings`` pins fields of the change; unbound fields match anything.
    """

    id: str
    issued_by: str
    variant: str
    bindings: tuple[tuple[str, str], ...] = ()
    state: DirectiveState = DirectiveState.OPEN

    def matches(self, action: object) -> bool:
        if type(action).__name__ != self.variant:
            return False
        return all(str(getattr(action, name, None)) == value for name, value in self.bindings)


@dataclass(frozen=True)
class PolicyState:
    """The complete authorization universe as an immutable value.

    Relations are keyed by their left element: ``ua_direct`` user -> roles,
    ``uo`` user -> OUs, ``or_assign`` OU -> roles, ``pa`` role -> permissions,
    ``rh`` senior -> juniors (transitive reduction). Tombstones are
    ``(kind, id)`` pairs.
    """

    users: frozenset[str] = EMPTY
    user_info: FrozenMap = field(default_factory=FrozenMap)
    roles: frozenset[str] = EMPTY
    perms: FrozenMap = field(default_factory=FrozenMap)
    ous: FrozenMap = field(default_factory=FrozenMap)
    ua_direct: FrozenMap = field(default_factory=FrozenMap)
    uo: FrozenMap = field(default_factory=FrozenMap)
    or_assign: FrozenMap = field(default_factory=FrozenMap)
    pa: FrozenMap = field(default_factory=FrozenMap)
    rh: FrozenMap = field(default_factory=FrozenMap)
    ssd: FrozenMap = field(default_factory=FrozenMap)
    dsd: FrozenMap = field(default_factory=FrozenMap)
    principals: FrozenMap = field(default_factory=FrozenMap)
    directives: FrozenMap = field(default_factory=FrozenMap)
    config: EngineConfig = field(default_factory=EngineConfig)
    tombstones: frozenset[tuple[str, str]] = EMPTY

    def department_of(self, ou: str) -> str | None:
        """Nearest department label on the OU's ancestor chain (itself included)."""
        seen = 0
        node = self.ous.get(ou)
        while node is not None and seen <= len(self.ous):
            if node.department is not None:
                return node.department
            node = self.ous.get(node.parent) if node.parent is not None else None
            seen += 1
        return None

    def ou_ancestors(self, ou: str) -> list[str]:
        """``ou`` followed by its ancestors, nearest first."""
        chain = []
        node = self.ous.get(ou)
        while node is not None and len(chain) <= len(self.ous):
            chain.append(node.id)
            node = self.ous.get(node.parent) if node.parent is not None else None
        return chain

    def ou_children(self, ou: str) -> list[str]:
        return sorted(o.id for o in self.ous.values() if o.parent == ou)

    def ou_members(self, ou: str) -> list[str]:
        return sorted(u for u, ous in self.uo.items() if ou in ous)

    def department_labels(self) -> set[str]:
        return {o.department for o in self.ous.values() if o.department is not None}

    def assignments_of(self, principal: str) -> frozenset[AdminAssignment]:
        return self.principals.get(principal, EMPTY)

    def holds(self, principal: str, role: ManagerRole) -> bool:
        return any(a.role is role for a in self.assignments_of(principal))

    def perm_by_pair(self, operation: str, obj: str) -> str | None:
        for p in self.perms.values():
            if p.operation == operation and p.obj == obj:
                return p.id
        return None


def empty_state(config: EngineConfig | None = None) -> PolicyState:
    return PolicyState(config=config or EngineConfig())
