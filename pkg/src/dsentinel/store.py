"""On-disk state of a monitoring deployment.

Layout of a store directory::

    domains.jsonl        monitored names (append-only)
    snapshots.log        length-prefixed snapshot records (+ rebuildable index)
    observations.jsonl   per-cycle DNS observations and dangling classifications
    events.jsonl         abuse detections, repeat observations and DNS corrections
    ledger.jsonl         every HTTP request issued, with its virtual timestamp
    cycles.jsonl         per-cycle stage summaries
    certs.jsonl / caa.jsonl   imported certificate records and CAA results
    cycle.lock           present while a cycle runs
"""

from __future__ import annotations

import errno
import hashlib
import json
import os
from typing import Iterable, Iterator

from .errors import StoreLockedError
from .snapshot import SnapshotStore

LOCK = "cycle.lock"


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


class Store:
    def __init__(self, directory: str):
        self.directory = os.path.abspath(directory)
        os.makedirs(self.directory, exist_ok=True)
        self._snapshots: SnapshotStore | None = None

    def path(self, name: str) -> str:
        return os.path.join(self.directory, name)

    @property
    def snapshots(self) -> SnapshotStore:
        if self._snapshots is None:
            self._snapshots = SnapshotStore(self.directory)
        return self._snapshots

    # --- JSON-lines tables ---------------------------------------------------
    def append(self, table: str, records: Iterable[dict]) -> int:
        lines = [dumps(r) + "\n" for r in records]
        if lines:
            with open(self.path(table), "a", encoding="utf-8", newline="\n") as fh:
                fh.writelines(lines)
        return len(lines)

    def read(self, table: str) -> Iterator[dict]:
        try:
            fh = open(self.path(table), encoding="utf-8")
        except FileNotFoundError:
            return
        with fh:
            for line in fh:
                if line.strip():
                    yield json.loads(line)

    def domains(self) -> list[str]:
        return [r["fqdn"] for r in self.read("domains.jsonl")]

    # --- lock ----------------------------------------------------------------
    def acquire(self) -> "StoreLock":
        return StoreLock(self.path(LOCK))

    # --- integrity -----------------------------------------------------------
    def digest(self) -> str:
        """sha256 over every file name and content, lock excluded."""
        h = hashlib.sha256()
        for root, dirs, files in os.walk(self.directory):
            dirs.sort()
            for name in sorted(files):
                if name == LOCK:
                    continue
                full = os.path.join(root, name)
                h.update(os.path.relpath(full, self.directory).encode() + b"\0")
                with open(full, "rb") as fh:
                    h.update(hashlib.sha256(fh.read()).digest())
        return h.hexdigest()


def _pid_alive(pid: int) -> bool:
    try:
        os.kill(pid, 0)
    except OSError as exc:
        return exc.errno == errno.EPERM
    return True


class StoreLock:
    """Exclusive cycle lock; a lock left by a dead process is taken over."""

    def __init__(self, path: str):
        self.path = path
        self.held = False

    def __enter__(self):
        for _ in range(2):
            try:
                fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
            except FileExistsError:
                try:
                    with open(self.path, encoding="utf-8") as fh:
                        pid = int(fh.read().strip() or 0)
                except (OSError, ValueError):
                    pid = 0
                if pid and pid != os.getpid() and not _pid_alive(pid):
                    os.unlink(self.path)
                    continue
                raise StoreLockedError(f"store is locked by another cycle ({self.path})") from None
            with os.fdopen(fd, "w") as fh:
                fh.write(str(os.getpid()))
            self.held = True
            return self
        raise StoreLockedError(f"could not take the store lock ({self.path})")

    def __exit__(self, *exc):
        if self.held:
            os.unlink(self.path)
            self.held = False
