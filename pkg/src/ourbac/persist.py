"""Canonical snapshot text format, admin-action codec and audit records.

Snapshot layout (UTF-8, LF line endings)::

    ourbac-snapshot v1
    ## config
    directive_mode<TAB>true
    ...
    ## users
    user<TAB>u.alice
    ...

Sections appear in a fixed order and entry lines within a section are
sorted by their UTF-8 bytes, so equal states always serialize to equal
bytes. Identifiers never contain whitespace, which makes TAB a safe field
separator.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, fields
from enum import Enum

from .admin import ACTION_TYPES
from .errors import FormatError, InvalidIdentifier, ReplayError, VersionError
from .model import (
    AdminAssignment,
    Directive,
    DirectiveState,
    EngineConfig,
    FrozenMap,
    ManagerRole,
    OrgUnit,
    Permission,
    PolicyState,
    SodConstraint,
    check_identifier,
    rel_pairs,
)

SNAPSHOT_HEADER = "ourbac-snapshot v1"
AUDIT_MAGIC = "ourbac-audit v1"
DIGEST_NAME = "sha256"
ZERO_DIGEST = "0" * 64

SECTIONS = (
    "config", "users", "roles", "perms", "ous", "ua_direct", "uo", "or_assign",
    "pa", "rh", "ssd", "dsd", "principals", "directives", "tombstones",
)
_TAGS = {
    "config": None, "users": "user", "roles": "role", "perms": "perm", "ous": "ou",
    "ua_direct": "ua", "uo": "uo", "or_assign": "or", "pa": "pa", "rh": "rh",
    "ssd": "ssd", "dsd": "dsd", "principals": "principal", "directives": "directive",
    "tombstones": "tombstone",
}
_CONFIG_KEYS = tuple(f.name for f in fields(EngineConfig))


def _bool(value: bool) -> str:
    return "true" if value else "false"


def _section_lines(state: PolicyState) -> dict[str, list[str]]:
    j = "\t".join
    out: dict[str, list[str]] = {name: [] for name in SECTIONS}
    out["config"] = [j((k, _bool(getattr(state.config, k)))) for k in _CONFIG_KEYS]
    for u in state.users:
        attrs = [f"{k}={v}" for k, v in state.user_info.get(u, ())]
        out["users"].append(j(["user", u, *attrs]))
    out["roles"] = [j(("role", r)) for r in state.roles]
    out["perms"] = [j(("perm", p.id, p.operation, p.obj)) for p in state.perms.values()]
    for ou in state.ous.values():
        parts = ["ou", ou.id]
        if ou.parent is not None:
            parts.append(f"parent={ou.parent}")
        if ou.department is not None:
            parts.append(f"dept={ou.department}")
        out["ous"].append(j(parts))
    out["ua_direct"] = [j(("ua", u, r)) for u, r in rel_pairs(state.ua_direct)]
    out["uo"] = [j(("uo", u, o)) for u, o in rel_pairs(state.uo)]
    out["or_assign"] = [j(("or", o, r)) for o, r in rel_pairs(state.or_assign)]
    out["pa"] = [j(("pa", p, r)) for r, p in rel_pairs(state.pa)]
    out["rh"] = [j(("rh", s, jr)) for s, jr in rel_pairs(state.rh)]
    for kind in ("ssd", "dsd"):
        for c in getattr(state, kind).values():
            out[kind].append(j([kind, c.id, str(c.cardinality), *sorted(c.roles, key=_b)]))
    for assigns in state.principals.values():
        for a in assigns:
            parts = ["principal", a.principal, str(a.role)]
            if a.scope is not None:
                parts.append(f"scope={a.scope}")
            out["principals"].append(j(parts))
    for d in state.directives.values():
        out["directives"].append(j(["directive", d.id, d.issued_by, str(d.state), d.variant,
                                    *(f"{k}={v}" for k, v in d.bindings)]))
    out["tombstones"] = [j(("tombstone", kind, ident)) for kind, ident in state.tombstones]
    return out


def _b(s: str) -> bytes:
    return s.encode("utf-8")


def serialize_snapshot(state: PolicyState) -> bytes:
    lines = [SNAPSHOT_HEADER]
    for name, entries in _section_lines(state).items():
        lines.append(f"## {name}")
        lines.extend(sorted(entries, key=_b))
    return ("\n".join(lines) + "\n").encode("utf-8")


class _Reader:
    def __init__(self, source: str | None):
        self.source = source

    def fail(self, msg: str, line: int, fields_: list[str] | None = None, index: int = 0) -> FormatError:
        col = 1
        if fields_:
            col = sum(len(f) + 1 for f in fields_[:index]) + 1
        return FormatError(msg, line, col, self.source)

    def ident(self, value: str, what: str, line: int, fields_: list[str], index: int) -> str:
        try:
            return check_identifier(value, what)
        except InvalidIdentifier as exc:
            raise self.fail(str(exc), line, fields_, index) from None

    def keyval(self, field_: str, line: int, fields_: list[str], index: int) -> tuple[str, str]:
        key, sep, value = field_.partition("=")
        if not sep:
            raise self.fail(f"expected key=value, got {field_!r}", line, fields_, index)
        return key, value


def parse_snapshot(data: bytes, source: str | None = None) -> PolicyState:
    rd = _Reader(source)
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        line = data[: exc.start].count(b"\n") + 1
        raise FormatError(f"invalid UTF-8: {exc.reason}", line, 1, source) from None
    if not text.endswith("\n"):
        raise FormatError("missing final newline", text.count("\n") + 1, 1, source)
    lines = text[:-1].split("\n")
    if not lines or lines[0] != SNAPSHOT_HEADER:
        head = lines[0] if lines else ""
        if head.startswith("ourbac-snapshot "):
            raise VersionError(f"unsupported snapshot version {head.split(' ', 1)[1]!r}", 1, 17, source)
        raise FormatError(f"expected header {SNAPSHOT_HEADER!r}", 1, 1, source)

    sections: dict[str, list[tuple[int, list[str]]]] = {}
    expected = iter(SECTIONS)
    current = None
    for no, raw in enumerate(lines[1:], start=2):
        if raw.startswith("## "):
            name = raw[3:]
            want = next(expected, None)
            if name != want:
                raise FormatError(f"expected section {want!r}, found {name!r}", no, 4, source)
            current = name
            sections[name] = []
            continue
        if current is None:
            raise FormatError("entry before first section", no, 1, source)
        f = raw.split("\t")
        tag = _TAGS[current]
        if tag is not None and f[0] != tag:
            raise rd.fail(f"expected {tag!r} entry in section {current!r}", no, f, 0)
        sections[current].append((no, f))
    missing = next(expected, None)
    if missing is not None:
        raise FormatError(f"missing section {missing!r}", len(lines) + 1, 1, source)

    def arity(no: int, f: list[str], lo: int, hi: int | None = None) -> None:
        hi = lo if hi is None else hi
        if not lo <= len(f) <= hi:
            raise rd.fail(f"expected {lo}..{hi} fields, got {len(f)}", no, f, min(len(f), hi))

    def dup(seen: set, key, no: int, f: list[str], what: str) -> None:
        if key in seen:
            raise rd.fail(f"duplicate {what} {key if isinstance(key, str) else ' '.join(key)!r}", no, f, 1)
        seen.add(key)

    config_vals: dict[str, bool] = {}
    for no, f in sections["config"]:
        arity(no, f, 2)
        if f[0] not in _CONFIG_KEYS:
            raise rd.fail(f"unknown config key {f[0]!r}", no, f, 0)
        if f[1] not in ("true", "false"):
            raise rd.fail(f"expected true/false, got {f[1]!r}", no, f, 1)
        if f[0] in config_vals:
            raise rd.fail(f"duplicate config key {f[0]!r}", no, f, 0)
        config_vals[f[0]] = f[1] == "true"
    config = EngineConfig(**config_vals)

    users: set[str] = set()
    info: dict[str, tuple] = {}
    for no, f in sections["users"]:
        arity(no, f, 2, 10_000)
        u = rd.ident(f[1], "user id", no, f, 1)
        dup(users, u, no, f, "user")
        attrs = []
        for i, kv in enumerate(f[2:], start=2):
            k, v = rd.keyval(kv, no, f, i)
            attrs.append((rd.ident(k, "attribute key", no, f, i), rd.ident(v, "attribute value", no, f, i)))
        if attrs:
            info[u] = tuple(sorted(attrs))

    roles: set[str] = set()
    for no, f in sections["roles"]:
        arity(no, f, 2)
        dup(roles, rd.ident(f[1], "role id", no, f, 1), no, f, "role")

    perms: dict[str, Permission] = {}
    for no, f in sections["perms"]:
        arity(no, f, 4)
        pid = rd.ident(f[1], "perm id", no, f, 1)
        if pid in perms:
            raise rd.fail(f"duplicate perm {pid!r}", no, f, 1)
        perms[pid] = Permission(pid, rd.ident(f[2], "operation", no, f, 2), rd.ident(f[3], "object", no, f, 3))

    ous: dict[str, OrgUnit] = {}
    for no, f in sections["ous"]:
        arity(no, f, 2, 4)
        oid = rd.ident(f[1], "ou id", no, f, 1)
        if oid in ous:
            raise rd.fail(f"duplicate ou {oid!r}", no, f, 1)
        opts: dict[str, str] = {}
        for i, kv in enumerate(f[2:], start=2):
            k, v = rd.keyval(kv, no, f, i)
            if k not in ("parent", "dept") or k in opts:
                raise rd.fail(f"unexpected ou attribute {k!r}", no, f, i)
            opts[k] = rd.ident(v, k, no, f, i)
        ous[oid] = OrgUnit(oid, opts.get("parent"), opts.get("dept"))

    def relation(name: str, swap: bool = False) -> FrozenMap:
        rows: dict[str, set[str]] = {}
        seen: set = set()
        for no, f in sections[name]:
            arity(no, f, 3)
            a = rd.ident(f[1], "identifier", no, f, 1)
            b = rd.ident(f[2], "identifier", no, f, 2)
            dup(seen, (a, b), no, f, f"{name} row")
            left, right = (b, a) if swap else (a, b)
            rows.setdefault(left, set()).add(right)
        return FrozenMap({k: frozenset(v) for k, v in rows.items()})

    sod: dict[str, FrozenMap] = {}
    for kind in ("ssd", "dsd"):
        cons: dict[str, SodConstraint] = {}
        for no, f in sections[kind]:
            arity(no, f, 5, 10_000)
            cid = rd.ident(f[1], f"{kind} id", no, f, 1)
            if cid in cons:
                raise rd.fail(f"duplicate {kind} {cid!r}", no, f, 1)
            try:
                t = int(f[2])
            except ValueError:
                raise rd.fail(f"cardinality must be an integer, got {f[2]!r}", no, f, 2) from None
            members = [rd.ident(r, "role id", no, f, i) for i, r in enumerate(f[3:], start=3)]
            if len(set(members)) != len(members):
                raise rd.fail(f"repeated role in {kind} {cid!r}", no, f, 3)
            cons[cid] = SodConstraint(cid, frozenset(members), t)
        sod[kind] = FrozenMap(cons)

    principals: dict[str, set[AdminAssignment]] = {}
    seen_assign: set = set()
    for no, f in sections["principals"]:
        arity(no, f, 3, 4)
        p = rd.ident(f[1], "principal id", no, f, 1)
        try:
            role = ManagerRole(f[2])
        except ValueError:
            raise rd.fail(f"unknown manager role {f[2]!r}", no, f, 2) from None
        scope = None
        if len(f) == 4:
            k, v = rd.keyval(f[3], no, f, 3)
            if k != "scope":
                raise rd.fail(f"unexpected principal attribute {k!r}", no, f, 3)
            scope = rd.ident(v, "scope", no, f, 3)
        a = AdminAssignment(p, role, scope)
        dup(seen_assign, (p, str(role), scope or ""), no, f, "principal assignment")
        principals.setdefault(p, set()).add(a)

    directives: dict[str, Directive] = {}
    for no, f in sections["directives"]:
        arity(no, f, 5, 64)
        did = rd.ident(f[1], "directive id", no, f, 1)
        if did in directives:
            raise rd.fail(f"duplicate directive {did!r}", no, f, 1)
        try:
            dstate = DirectiveState(f[3])
        except ValueError:
            raise rd.fail(f"unknown directive state {f[3]!r}", no, f, 3) from None
        bindings = tuple(rd.keyval(kv, no, f, i) for i, kv in enumerate(f[5:], start=5))
        directives[did] = Directive(did, rd.ident(f[2], "principal id", no, f, 2), f[4], tuple(sorted(bindings)), dstate)

    tombstones: set[tuple[str, str]] = set()
    for no, f in sections["tombstones"]:
        arity(no, f, 3)
        dup(tombstones, (f[1], rd.ident(f[2], "identifier", no, f, 2)), no, f, "tombstone")

    return PolicyState(
        users=frozenset(users),
        user_info=FrozenMap(info),
        roles=frozenset(roles),
        perms=FrozenMap(perms),
        ous=FrozenMap(ous),
        ua_direct=relation("ua_direct"),
        uo=relation("uo"),
        or_assign=relation("or_assign"),
        pa=relation("pa", swap=True),
        rh=relation("rh"),
        ssd=sod["ssd"],
        dsd=sod["dsd"],
        principals=FrozenMap({p: frozenset(v) for p, v in principals.items()}),
        directives=FrozenMap(directives),
        config=config,
        tombstones=frozenset(tombstones),
    )


# -- admin action codec ---------------------------------------------------

_PAIR_FIELDS = ("attrs", "bindings")


def action_to_dict(action: object) -> dict:
    name = type(action).__name__
    if name not in ACTION_TYPES:
        raise TypeError(f"not an admin action: {action!r}")
    out: dict = {"op": name}
    for f in fields(action):
        value = getattr(action, f.name)
        if value is None:
            continue
        if isinstance(value, frozenset):
            value = sorted(value, key=_b)
        elif f.name in _PAIR_FIELDS:
            value = [list(kv) for kv in value]
        elif isinstance(value, Enum):
            value = value.value
        out[f.name] = value
    return out


def action_from_dict(data: dict) -> object:
    data = dict(data)
    cls = ACTION_TYPES.get(data.pop("op", None))
    if cls is None:
        raise ValueError("unknown action op")
    names = {f.name for f in fields(cls)}
    if not set(data) <= names:
        raise ValueError(f"unexpected fields {sorted(set(data) - names)}")
    kwargs = {}
    for key, value in data.items():
        if key == "roles":
            value = frozenset(value)
        elif key in _PAIR_FIELDS:
            value = tuple((str(k), str(v)) for k, v in value)
        elif key == "cardinality":
            if not isinstance(value, int) or isinstance(value, bool):
                raise ValueError("cardinality must be an integer")
        elif not isinstance(value, str):
            raise ValueError(f"field {key!r} must be a string")
        kwargs[key] = value
    return cls(**kwargs)


def encode_action(action: object) -> str:
    return json.dumps(action_to_dict(action), sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def decode_action(text: str) -> object:
    return action_from_dict(json.loads(text))


# -- audit records --------------------------------------------------------

@dataclass(frozen=True)
class AuditRecord:
    """One executed, denied or rejected admin action.

    ``verdict`` is ``executed``, ``executed:<directive>`` (directive consumed
    or issued), ``denied:<reason>`` or ``rejected:<constraint>``.
    """

    seq: int
    principal: str
    verdict: str
    action: object
    prev_digest: str

    @property
    def line(self) -> str:
        return "\t".join((str(self.seq), self.principal, self.verdict, encode_action(self.action), self.prev_digest))

    @property
    def digest(self) -> str:
        return record_digest(self.line)

    @property
    def executed(self) -> bool:
        return self.verdict == "executed" or self.verdict.startswith("executed:")

    @property
    def directive(self) -> str | None:
        return self.verdict.split(":", 1)[1] if self.verdict.startswith("executed:") else None


def record_digest(line: str) -> str:
    return hashlib.new(DIGEST_NAME, line.encode("utf-8")).hexdigest()


def parse_record(line: str, lineno: int | None = None) -> AuditRecord:
    f = line.split("\t")
    if len(f) != 5:
        raise FormatError(f"audit record needs 5 fields, got {len(f)}", lineno or 0)
    seq_txt, principal, verdict, action_txt, prev = f
    if not seq_txt.isdigit() or (len(seq_txt) > 1 and seq_txt[0] == "0"):
        raise FormatError(f"bad seq {seq_txt!r}", lineno or 0)
    if len(prev) != 64 or any(c not in "0123456789abcdef" for c in prev):
        raise FormatError("bad prev_digest", lineno or 0, len(line) - len(prev) + 1)
    try:
        action = decode_action(action_txt)
    except (ValueError, TypeError) as exc:
        raise FormatError(f"bad action encoding: {exc}", lineno or 0) from None
    return AuditRecord(int(seq_txt), principal, verdict, action, prev)


def append_audit(log: list[AuditRecord], record: AuditRecord) -> list[AuditRecord]:
    """Return ``log`` extended by ``record`` after checking seq and chain linkage."""
    expected_seq = len(log) + 1
    expected_prev = log[-1].digest if log else ZERO_DIGEST
    if record.seq != expected_seq:
        raise ReplayError(record.seq, f"expected seq {expected_seq}")
    if record.prev_digest != expected_prev:
        raise ReplayError(record.seq, "prev_digest does not match the preceding record")
    return [*log, record]


def verify_chain(lines: list[str]) -> None:
    """Check seq contiguity and digest linkage of raw record lines."""
    prev = ZERO_DIGEST
    for i, line in enumerate(lines, start=1):
        f = line.split("\t")
        if len(f) != 5:
            raise ReplayError(i, "malformed record")
        if f[0] != str(i):
            raise ReplayError(i, f"seq {f[0]!r} breaks contiguity")
        if f[4] != prev:
            raise ReplayError(i, "digest chain broken")
        prev = record_digest(line)


@dataclass(frozen=True)
class AuditHeader:
    rbac_manager: str
    config: EngineConfig

    def line(self) -> str:
        parts = [AUDIT_MAGIC, f"digest={DIGEST_NAME}", f"rbac_manager={self.rbac_manager}"]
        parts += [f"{k}={_bool(getattr(self.config, k))}" for k in _CONFIG_KEYS]
        return "\t".join(parts)


def parse_audit_header(line: str, source: str | None = None) -> AuditHeader:
    f = line.split("\t")
    if not f or f[0] != AUDIT_MAGIC:
        if f and f[0].startswith("ourbac-audit "):
            raise VersionError(f"unsupported audit version {f[0]!r}", 1, 1, source)
        raise FormatError(f"expected audit header {AUDIT_MAGIC!r}", 1, 1, source)
    opts = dict(part.partition("=")[::2] for part in f[1:])
    if opts.get("digest") != DIGEST_NAME:
        raise FormatError(f"unsupported digest {opts.get('digest')!r}", 1, 1, source)
    if "rbac_manager" not in opts:
        raise FormatError("audit header lacks rbac_manager", 1, 1, source)
    try:
        config = EngineConfig(**{k: opts[k] == "true" for k in _CONFIG_KEYS})
    except KeyError as exc:
        raise FormatError(f"audit header lacks {exc.args[0]}", 1, 1, source) from None
    return AuditHeader(opts["rbac_manager"], config)


def split_audit(data: bytes, source: str | None = None) -> tuple[AuditHeader, list[bytes]]:
    """Split an audit file into its header and raw record lines (undecoded)."""
    if not data.endswith(b"\n"):
        raise FormatError("missing final newline", data.count(b"\n") + 1, 1, source)
    raw = data[:-1].split(b"\n")
    try:
        head = raw[0].decode("utf-8")
    except UnicodeDecodeError:
        raise FormatError("invalid UTF-8 in audit header", 1, 1, source) from None
    return parse_audit_header(head, source), raw[1:]
