"""On-disk store: ``<dir>/snapshot.txt``, ``<dir>/audit.log`` and ``<dir>/audit.head``.

``audit.head`` holds the digest of the last audit record, which anchors
that record the way each later record's prev_digest anchors its predecessor.
"""

from __future__ import annotations

import contextlib
import fcntl
import os
from pathlib import Path

from .engine import Engine, replay_audit
from .errors import FormatError, OurbacError, ReplayError
from .model import EngineConfig
from .persist import (
    ZERO_DIGEST,
    AuditHeader,
    parse_record,
    parse_snapshot,
    serialize_snapshot,
    split_audit,
    verify_chain,
)

SNAPSHOT = "snapshot.txt"
AUDIT = "audit.log"
HEAD = "audit.head"
LOCK = ".lock"


class StoreError(OurbacError):
    code = "StoreError"


class Store:
    def __init__(self, path: str | os.PathLike):
        self.path = Path(path)

    @property
    def snapshot_path(self) -> Path:
        return self.path / SNAPSHOT

    @property
    def audit_path(self) -> Path:
        return self.path / AUDIT

    @property
    def head_path(self) -> Path:
        return self.path / HEAD

    def exists(self) -> bool:
        return self.snapshot_path.exists() and self.audit_path.exists()

    @contextlib.contextmanager
    def locked(self):
        self.path.mkdir(parents=True, exist_ok=True)
        with open(self.path / LOCK, "a") as fh:
            fcntl.flock(fh, fcntl.LOCK_EX)
            try:
                yield self
            finally:
                fcntl.flock(fh, fcntl.LOCK_UN)

    def init(self, rbac_manager: str, config: EngineConfig) -> Engine:
        if self.exists():
            raise StoreError(f"store already initialised at {self.path}")
        engine = Engine.bootstrap(rbac_manager, config)
        self.path.mkdir(parents=True, exist_ok=True)
        self.audit_path.write_bytes((engine.header.line() + "\n").encode("utf-8"))
        self._write_snapshot(engine)
        self._write_head(engine)
        return engine

    def load(self) -> Engine:
        if not self.exists():
            raise StoreError(f"no store at {self.path} (run `ourbac init` first)")
        state = parse_snapshot(self.snapshot_path.read_bytes(), source=str(self.snapshot_path))
        header, raw = split_audit(self.audit_path.read_bytes(), source=str(self.audit_path))
        records = []
        for no, line in enumerate(raw, start=2):
            try:
                records.append(parse_record(line.decode("utf-8"), no))
            except (FormatError, UnicodeDecodeError) as exc:
                raise FormatError(f"bad audit record: {exc}", no, 1, str(self.audit_path)) from None
        return Engine(state, records, header)

    def commit(self, engine: Engine, first_new: int) -> None:
        """Append records from index ``first_new`` and rewrite the snapshot."""
        new = engine.log[first_new:]
        if new:
            with open(self.audit_path, "ab") as fh:
                fh.write("".join(r.line + "\n" for r in new).encode("utf-8"))
                fh.flush()
                os.fsync(fh.fileno())
        self._write_snapshot(engine)
        self._write_head(engine)

    def _write_snapshot(self, engine: Engine) -> None:
        tmp = self.snapshot_path.with_suffix(".tmp")
        tmp.write_bytes(engine.snapshot())
        os.replace(tmp, self.snapshot_path)

    def _write_head(self, engine: Engine) -> None:
        tmp = self.head_path.with_suffix(".tmp")
        tmp.write_text((engine.log[-1].digest if engine.log else ZERO_DIGEST) + "\n", encoding="ascii")
        os.replace(tmp, self.head_path)

    def verify(self) -> int:
        """Check the digest chain and that replay reproduces the snapshot; returns record count."""
        header, raw = split_audit(self.audit_path.read_bytes(), source=str(self.audit_path))
        lines = []
        for i, line in enumerate(raw, start=1):
            try:
                lines.append(line.decode("utf-8"))
            except UnicodeDecodeError:
                raise ReplayError(i, "record is not valid UTF-8") from None
        verify_chain(lines)
        head = self.head_path.read_text(encoding="ascii").strip() if self.head_path.exists() else None
        if not lines and head not in (None, ZERO_DIGEST):
            raise ReplayError(0, "audit.head names a record but the log is empty")
        state = replay_audit(lines, header.rbac_manager, header.config, head_digest=head)
        if serialize_snapshot(state) != self.snapshot_path.read_bytes():
            raise ReplayError(len(lines), "replayed state differs from snapshot.txt")
        return len(lines)

    def header(self) -> AuditHeader:
        return split_audit(self.audit_path.read_bytes(), source=str(self.audit_path))[0]
