"""Exception hierarchy for the engine.

Every error raised by a constraint-checked mutation derives from
:class:`ConstraintError` and carries a machine-readable ``code`` equal to
its class name, which is what the audit log records.
"""

from __future__ import annotations


class OurbacError(Exception):
    code = "Error"


class ConstraintError(OurbacError):
    """A mutation would break a model invariant; the state is untouched."""

    @property
    def code(self) -> str:  # type: ignore[override]
        return type(self).__name__


class InvalidIdentifier(ConstraintError):
    pass


class UnknownEntity(ConstraintError):
    def __init__(self, kind: str, ident: str):
        super().__init__(f"unknown {kind} {ident!r}")
        self.kind = kind
        self.ident = ident


class DuplicateEntity(ConstraintError):
    def __init__(self, kind: str, ident: str):
        super().__init__(f"duplicate {kind} {ident!r}")
        self.kind = kind
        self.ident = ident


class TombstoneReuse(ConstraintError):
    def __init__(self, kind: str, ident: str):
        super().__init__(f"{kind} id {ident!r} was deleted earlier and cannot be reused")
        self.kind = kind
        self.ident = ident


class SsdViolation(ConstraintError):
    def __init__(self, constraint: str, roles: tuple[str, ...], user: str | None = None):
        who = f" for {user!r}" if user else ""
        super().__init__(f"static separation of duty {constraint!r} violated{who}: {', '.join(roles)}")
        self.constraint = constraint
        self.roles = roles
        self.user = user


class DsdViolation(ConstraintError):
    def __init__(self, constraint: str, roles: tuple[str, ...]):
        super().__init__(f"dynamic separation of duty {constraint!r} violated: {', '.join(roles)}")
        self.constraint = constraint
        self.roles = roles


class CycleError(ConstraintError):
    def __init__(self, relation: str, nodes: tuple[str, ...]):
        super().__init__(f"cycle in {relation}: {' -> '.join(nodes)}")
        self.relation = relation
        self.nodes = nodes


class NonEmptyOu(ConstraintError):
    def __init__(self, ou: str, children: int, members: int):
        super().__init__(f"OU {ou!r} still has {children} child OU(s) and {members} member(s)")
        self.ou = ou


class InvalidConstraint(ConstraintError):
    pass


class InvalidDepartment(ConstraintError):
    pass


class ScopeInUse(ConstraintError):
    pass


class LastRbacManager(ConstraintError):
    pass


class DirectiveError(ConstraintError):
    pass


class NotAuthorizedRole(ConstraintError):
    def __init__(self, user: str, role: str):
        super().__init__(f"role {role!r} is not authorized for {user!r}")
        self.user = user
        self.role = role


class AdminError(OurbacError):
    """An admin action was denied or rejected.

    ``reason`` is one of NoCapability, OutOfScope, NoDirective,
    UnknownPrincipal for denials, or the ConstraintError code for rejections.
    """

    def __init__(self, reason: str, message: str = "", cause: Exception | None = None, record=None):
        super().__init__(f"{reason}: {message}" if message else reason)
        self.reason = reason
        self.cause = cause
        self.record = record

    @property
    def code(self) -> str:  # type: ignore[override]
        return self.reason


class FormatError(OurbacError):
    code = "FormatError"

    def __init__(self, message: str, line: int, column: int = 1, source: str | None = None):
        where = f"{source}:" if source else "line "
        super().__init__(f"{where}{line}:{column}: {message}")
        self.line = line
        self.column = column
        self.source = source


class VersionError(FormatError):
    code = "VersionError"


class ReplayError(OurbacError):
    code = "ReplayError"

    def __init__(self, seq: int, message: str):
        super().__init__(f"replay failed at seq {seq}: {message}")
        self.seq = seq


class BudgetExceeded(OurbacError):
    code = "BudgetExceeded"

    def __init__(self, explored: int, frontier: int, depth: int):
        super().__init__(f"state cap exceeded after {explored} states at depth {depth} (frontier {frontier})")
        self.explored = explored
        self.frontier = frontier
        self.depth = depth


class NotACoordinator(OurbacError):
    code = "NotACoordinator"
