"""Shared request throttling and the HTTP request ledger used for budget accounting."""

from __future__ import annotations

import threading
import time
from collections import Counter
from contextlib import contextmanager
from dataclasses import asdict, dataclass


class TokenBucket:
    """Global token bucket; ``rate=None`` disables throttling."""

    def __init__(self, rate: float | None = 10.0, capacity: float | None = None):
        self.rate = rate
        self.capacity = capacity if capacity is not None else (rate or 0.0)
        self._tokens = self.capacity
        self._stamp = time.monotonic()
        self._lock = threading.Lock()
        self._host_locks: dict[str, threading.Lock] = {}

    def acquire(self) -> None:
        if not self.rate:
            return
        while True:
            with self._lock:
                now = time.monotonic()
                self._tokens = min(self.capacity, self._tokens + (now - self._stamp) * self.rate)
                self._stamp = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / self.rate
            time.sleep(wait)

    @contextmanager
    def host(self, host: str):
        """Serialize requests to one host and take a global token."""
        with self._lock:
            lock = self._host_locks.setdefault(host, threading.Lock())
        with lock:
            self.acquire()
            yield


@dataclass(frozen=True)
class LedgerEntry:
    fqdn: str
    path: str
    purpose: str
    at: float

    def to_dict(self) -> dict:
        return asdict(self)


class RequestLedger:
    """Append-only record of every HTTP request issued (thread-safe)."""

    def __init__(self, clock=time.time):
        self.clock = clock
        self.entries: list[LedgerEntry] = []
        self._lock = threading.Lock()

    def record(self, fqdn: str, path: str, purpose: str = "fetch") -> LedgerEntry:
        entry = LedgerEntry(fqdn, path, purpose, float(self.clock()))
        with self._lock:
            self.entries.append(entry)
        return entry

    def __len__(self) -> int:
        return len(self.entries)

    def per_fqdn(self, start: int = 0) -> Counter:
        with self._lock:
            return Counter(e.fqdn for e in self.entries[start:])

    def since(self, start: int) -> list[LedgerEntry]:
        with self._lock:
            return list(self.entries[start:])
