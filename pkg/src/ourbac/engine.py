"""Audited execution of admin actions and deterministic replay."""

from __future__ import annotations

import hashlib
import threading
from collections.abc import Iterable

from .admin import apply_meta, authorize_admin, bootstrap_state, consume_directive, IssueDirective
from .changes import Change, apply_change
from .errors import AdminError, ConstraintError, FormatError, ReplayError
from .model import Directive, EngineConfig, PolicyState
from .persist import (
    DIGEST_NAME,
    ZERO_DIGEST,
    AuditHeader,
    AuditRecord,
    parse_record,
    serialize_snapshot,
)


def execute(
    state: PolicyState,
    principal: str,
    action: object,
    seq: int = 1,
    prev_digest: str = ZERO_DIGEST,
) -> tuple[PolicyState, AuditRecord]:
    """Authorize and run one admin action.

    Raises AdminError on denial or constraint rejection; the error carries
    the audit record describing the failure in ``.record``.
    """

    def record(verdict: str) -> AuditRecord:
        return AuditRecord(seq, principal, verdict, action, prev_digest)

    verdict = authorize_admin(state, principal, action)
    if not verdict.allowed:
        rec = record(f"denied:{verdict.reason}")
        raise AdminError(verdict.reason, f"{principal} may not run {type(action).__name__}", record=rec)
    detail = verdict.directive
    try:
        if isinstance(action, Change):
            new = apply_change(state, action)
        else:
            new, issued = apply_meta(state, principal, action)
            detail = detail or issued
    except ConstraintError as exc:
        rec = record(f"rejected:{exc.code}")
        raise AdminError(exc.code, str(exc), cause=exc, record=rec) from exc
    if verdict.directive is not None:
        new = consume_directive(new, verdict.directive)
    return new, record(f"executed:{detail}" if detail else "executed")


class Engine:
    """Single-writer engine: holds the current state and its audit log."""

    def __init__(self, state: PolicyState, log: Iterable[AuditRecord] = (), header: AuditHeader | None = None):
        self._state = state
        self.log: list[AuditRecord] = list(log)
        self.header = header
        self._last_digest = self.log[-1].digest if self.log else ZERO_DIGEST
        self._lock = threading.Lock()

    @classmethod
    def bootstrap(cls, rbac_manager: str, config: EngineConfig | None = None) -> Engine:
        config = config or EngineConfig()
        return cls(bootstrap_state(rbac_manager, config), header=AuditHeader(rbac_manager, config))

    @property
    def state(self) -> PolicyState:
        return self._state

    def execute(self, principal: str, action: object) -> AuditRecord:
        with self._lock:
            try:
                new, rec = execute(self._state, principal, action, len(self.log) + 1, self._last_digest)
            except AdminError as err:
                self._append(err.record)
                raise
            self._state = new
            self._append(rec)
            return rec

    def try_execute(self, principal: str, action: object) -> AuditRecord:
        """Like :meth:`execute` but returns the denial record instead of raising."""
        try:
            return self.execute(principal, action)
        except AdminError as err:
            return err.record

    def issue_directive(self, principal: str, variant: str, **bindings: str) -> Directive:
        rec = self.execute(principal, IssueDirective(variant, tuple(bindings.items())))
        return self._state.directives[rec.directive]

    def _append(self, rec: AuditRecord) -> None:
        self.log.append(rec)
        self._last_digest = rec.digest

    def snapshot(self) -> bytes:
        return serialize_snapshot(self._state)


def replay_audit(
    records: Iterable[AuditRecord | str | bytes],
    initial_rbac_manager: str,
    config: EngineConfig | None = None,
    head_digest: str | None = None,
) -> PolicyState:
    """Rebuild state by re-executing a log from the bootstrap state.

    Every record (denials included) is re-run and must regenerate the
    stored line byte for byte. A record's own bytes are vouched for by the
    next record's ``prev_digest``; the last record is vouched for by
    ``head_digest`` when given. Any gap, digest break, undecodable line or
    divergence raises ReplayError naming the first bad seq.
    """
    raw: list[bytes] = []
    for item in records:
        if isinstance(item, AuditRecord):
            item = item.line
        raw.append(item.encode("utf-8") if isinstance(item, str) else bytes(item))
    digests = [hashlib.new(DIGEST_NAME, b).hexdigest() for b in raw]
    n = len(raw)

    def vouched(k: int) -> bool:
        # True if a later anchor confirms the bytes of record index k
        if k + 1 < n:
            return raw[k + 1].endswith(b"\t" + digests[k].encode("ascii"))
        return head_digest is None or digests[k] == head_digest

    engine = Engine.bootstrap(initial_rbac_manager, config)
    prev = ZERO_DIGEST
    for k, data in enumerate(raw):
        i = k + 1
        try:
            line = data.decode("utf-8")
        except UnicodeDecodeError:
            raise ReplayError(i, "record is not valid UTF-8") from None
        try:
            rec = parse_record(line, i)
        except FormatError as exc:
            raise ReplayError(i, str(exc)) from None
        if rec.seq != i:
            raise ReplayError(i, f"seq {rec.seq} breaks contiguity")
        if rec.prev_digest != prev:
            raise ReplayError(i, "digest chain broken")
        redo = engine.try_execute(rec.principal, rec.action)
        if redo.line != line:
            raise ReplayError(i, f"re-execution diverged: logged {rec.verdict!r}, replay gave {redo.verdict!r}")
        # a successor that is itself altered will fail its own link check
        if not vouched(k) and (k + 1 == n or vouched(k + 1)):
            raise ReplayError(i, "record bytes do not match the digest recorded after it")
        prev = digests[k]
    return engine.state
