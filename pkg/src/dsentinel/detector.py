"""Decision helpers around detected abuse: content clusters, registrar spans,
attacker capabilities and abuse lifespans."""

from __future__ import annotations

import enum
import math
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .catalog import CloudService
from .errors import InputError
from .names import registered_domain

CAPABILITY_ATOMS = ("file", "content", "html", "javascript", "headers", "https")
STATIC_ATOMS = frozenset({"file", "content", "html", "javascript"})
FULL_ATOMS = frozenset(CAPABILITY_ATOMS)

# service kind -> access level; kinds missing here have unknown capabilities
_ACCESS = {
    "storage": "static",
    "cms": "static",
    "blob": "static",
    "web_app": "full",
    "orchestration": "full",
    "cdn": "full",
    "load_balancer": "full",
    "traffic_manager": "full",
    "frontdoor": "full",
    "vm": "full",
}


@dataclass(frozen=True)
class CapabilityProfile:
    access: str  # "static" | "full" | "unknown"
    atoms: frozenset[str]

    @property
    def known(self) -> bool:
        return self.access != "unknown"


def capabilities_for(service: CloudService | str) -> CapabilityProfile:
    kind = service if isinstance(service, str) else service.service_kind
    access = _ACCESS.get(kind)
    if access == "static":
        return CapabilityProfile("static", STATIC_ATOMS)
    if access == "full":
        return CapabilityProfile("full", FULL_ATOMS)
    return CapabilityProfile("unknown", frozenset())


@dataclass(frozen=True)
class ContentCluster:
    keywords: frozenset[str]
    members: tuple[str, ...]

    @property
    def size(self) -> int:
        return len(self.members)


def cluster_by_keywords(pages: Iterable[tuple[str, Iterable[str]]]) -> list[ContentCluster]:
    """Partition pages by exact keyword-set equality.

    Ordered by decreasing size, then by first member, members sorted.
    """
    groups: dict[frozenset[str], set[str]] = defaultdict(set)
    for name, kws in pages:
        groups[frozenset(kws)].add(name)
    clusters = [ContentCluster(k, tuple(sorted(v))) for k, v in groups.items()]
    clusters.sort(key=lambda c: (-c.size, c.members[0]))
    return clusters


@dataclass(frozen=True)
class ClusterVerdict:
    members: tuple[str, ...]
    registrars: tuple[str, ...]
    span: int
    registrar_explainable: bool
    unknown_slds: tuple[str, ...] = ()
    owners: tuple[str, ...] = ()


@dataclass(frozen=True)
class RegistrarSpan:
    histogram: dict[int, int]  # X -> clusters spanning >= X registrars
    evaluated: int
    verdicts: tuple[ClusterVerdict, ...]

    def share(self, x: int) -> float:
        return self.histogram.get(x, 0) / self.evaluated if self.evaluated else 0.0


def registrar_span(clusters: Sequence[ContentCluster], registrar_of: Mapping[str, str],
                   owner_of: Mapping[str, str] | None = None) -> RegistrarSpan:
    """Count distinct registrars per cluster of two or more registered domains.

    An SLD missing from *registrar_of* counts as its own unknown registrar and is flagged.
    """
    verdicts = []
    for cluster in clusters:
        slds = sorted({registered_domain(m) for m in cluster.members})
        if len(slds) < 2:
            continue
        regs, unknown = set(), []
        for sld in slds:
            reg = registrar_of.get(sld)
            if reg is None:
                unknown.append(sld)
                regs.add(f"unknown:{sld}")
            else:
                regs.add(reg)
        owners = tuple(sorted({owner_of.get(s, f"unknown:{s}") for s in slds})) if owner_of else ()
        verdicts.append(ClusterVerdict(cluster.members, tuple(sorted(regs)), len(regs), len(regs) == 1,
                                       tuple(unknown), owners))
    top = max((v.span for v in verdicts), default=1)
    hist = {x: sum(1 for v in verdicts if v.span >= x) for x in range(2, max(top, 2) + 1)}
    return RegistrarSpan(hist, len(verdicts), tuple(verdicts))


class EventKind(str, enum.Enum):
    ABUSE = "abuse"
    CORRECTED = "corrected"


@dataclass(frozen=True)
class AbuseEvent:
    fqdn: str
    matched_signature_ids: tuple[str, ...]
    first_detected_at: float
    resolved_at: float | None = None
    topic: str = "other"
    cloud_service: CloudService | None = None
    capability_set: frozenset[str] = frozenset()

    def __post_init__(self):
        if self.resolved_at is not None and self.resolved_at < self.first_detected_at:
            raise InputError(f"{self.fqdn}: resolved_at precedes first_detected_at")


@dataclass(frozen=True)
class Lifespan:
    days: int
    open_ended: bool
    integrity_error: bool = False


DAY = 86400.0


def abuse_lifespan(events: Iterable[tuple[float, str]], now: float | None = None) -> Lifespan:
    """Whole days from the first abuse observation to the DNS correction.

    *events* holds ``(timestamp, kind)`` pairs with kind "abuse" or "corrected" in
    arrival order. A correction seen before any abuse marks the stream corrupt.
    Without a correction the span is open-ended and counts days up to *now*
    (or the last abuse observation).
    """
    first_abuse = None
    last_seen = None
    for ts, kind in events:
        kind = EventKind(kind)
        if kind is EventKind.ABUSE:
            if first_abuse is None or ts < first_abuse:
                first_abuse = ts
            last_seen = ts if last_seen is None else max(last_seen, ts)
        else:
            if first_abuse is None or ts < first_abuse:
                return Lifespan(0, False, True)
            return Lifespan(math.floor((ts - first_abuse) / DAY), False)
    if first_abuse is None:
        raise InputError("abuse_lifespan needs at least one abuse observation")
    end = now if now is not None else last_seen
    return Lifespan(max(0, math.floor((end - first_abuse) / DAY)), True)


def lifespan_histogram(spans: Iterable[Lifespan], bin_days: int = 5) -> tuple[Counter, int, int]:
    """Closed spans binned by *bin_days*; returns (bins keyed by lower edge, open count, excluded)."""
    bins: Counter = Counter()
    open_count = excluded = 0
    for s in spans:
        if s.integrity_error:
            excluded += 1
        elif s.open_ended:
            open_count += 1
        else:
            bins[(s.days // bin_days) * bin_days] += 1
    return bins, open_count, excluded
