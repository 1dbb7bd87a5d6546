"""Cloud-pointing FQDN collection, layered liveness probing and dangling classification."""

from __future__ import annotations

import enum
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from typing import Callable, Iterable

from . import SCHEMA_VERSION
from .catalog import CloudCatalog, CloudService
from .dnsclient import DnsResolver
from .errors import ResolverUnavailableError, TransientResolutionError
from .names import normalize_fqdn
from .net import HttpResult, Network

log = logging.getLogger(__name__)

MAX_CHAIN_DEPTH = 16


@dataclass(frozen=True)
class DnsObservation:
    fqdn: str
    cname_chain: tuple[str, ...] = ()
    a_results: tuple[str, ...] = ()
    nxdomain: bool = False
    observed_at: float = 0.0
    # chain ended at a name that does not exist (dangling CNAME target)
    terminal_nxdomain: bool = False

    def __post_init__(self):
        if self.nxdomain and (self.cname_chain or self.a_results):
            raise ValueError("nxdomain observation cannot carry records")
        if len(set(self.cname_chain)) != len(self.cname_chain):
            raise ValueError("cname_chain contains a repeated name")

    @property
    def terminal(self) -> str:
        return self.cname_chain[-1] if self.cname_chain else self.fqdn

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "type": "dns_observation",
            "fqdn": self.fqdn,
            "cname_chain": list(self.cname_chain),
            "a_results": list(self.a_results),
            "nxdomain": self.nxdomain,
            "terminal_nxdomain": self.terminal_nxdomain,
            "observed_at": self.observed_at,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DnsObservation":
        return cls(
            d["fqdn"], tuple(d["cname_chain"]), tuple(d["a_results"]), d["nxdomain"],
            d["observed_at"], d.get("terminal_nxdomain", False),
        )


def resolve_chain(fqdn: str, resolver: DnsResolver, clock: Callable[[], float] = time.time,
                  max_depth: int = MAX_CHAIN_DEPTH) -> DnsObservation:
    """Follow the CNAME chain of *fqdn* and collect terminal A records.

    Chain following stops at the first repeated name or after ``max_depth`` hops.
    Tails the resolver did not expand are re-queried. Raises
    TransientResolutionError when the resolver cannot be reached.
    """
    name = normalize_fqdn(fqdn)
    observed_at = float(clock())
    chain: list[str] = []
    seen = {name}
    current = name
    queried: set[str] = set()
    while True:
        reply = resolver.query(current, "A")
        queried.add(current)
        node = current
        done = False
        while True:
            addrs = reply.get(node, "A")
            if addrs:
                return DnsObservation(name, tuple(chain), tuple(addrs), False, observed_at)
            targets = reply.get(node, "CNAME")
            if not targets:
                break
            target = targets[0]
            if len(chain) >= max_depth:
                log.info("CNAME chain of %s exceeds depth %d", name, max_depth)
                done = True
                break
            if target not in chain:
                chain.append(target)
            if target in seen:
                log.info("CNAME loop at %s while resolving %s", target, name)
                done = True
                break
            seen.add(target)
            node = target
        if done:
            return DnsObservation(name, tuple(chain), (), False, observed_at)
        if reply.rcode == "NXDOMAIN":
            if not chain:
                return DnsObservation(name, (), (), True, observed_at)
            return DnsObservation(name, tuple(chain), (), False, observed_at, terminal_nxdomain=True)
        if node in queried:
            return DnsObservation(name, tuple(chain), (), False, observed_at)
        current = node


@dataclass(frozen=True)
class CloudMatch:
    service: CloudService
    freetext_label: str | None
    via: str  # "cname" or "ip"
    matched: str


def select_cloud(obs: DnsObservation, catalog: CloudCatalog) -> CloudMatch | None:
    """Cloud selection rule for one observation: CNAME suffix first, then A-record ranges."""
    for cname in obs.cname_chain:
        hit = catalog.match_suffix(cname)
        if hit is not None:
            label = hit.label if hit.service.user_nameable else None
            return CloudMatch(hit.service, label, "cname", cname)
    for ip in obs.a_results:
        tag = catalog.match_ip(ip)
        if tag is not None:
            return CloudMatch(tag.as_service(), None, "ip", ip)
    return None


@dataclass(frozen=True)
class CollectedName:
    fqdn: str
    service: CloudService
    freetext_label: str | None = None


def observe_all(fqdns: Iterable[str], resolver: DnsResolver, clock=time.time,
                workers: int = 8) -> dict[str, DnsObservation | Exception]:
    """Resolve every name concurrently; per-name failures are returned, not raised."""
    names = []
    for raw in fqdns:
        try:
            names.append(normalize_fqdn(raw))
        except ValueError as exc:
            log.warning("skipping invalid name %r: %s", raw, exc)
    names = list(dict.fromkeys(names))

    def one(name):
        try:
            return resolve_chain(name, resolver, clock)
        except TransientResolutionError as exc:
            log.warning("transient resolution failure for %s: %s", name, exc)
            return exc

    if not names:
        return {}
    with ThreadPoolExecutor(max_workers=max(1, min(workers, len(names)))) as pool:
        results = list(pool.map(one, names))
    return dict(zip(names, results))


def collect_fqdns(fqdns: Iterable[str], catalog: CloudCatalog, resolver: DnsResolver,
                  clock=time.time, workers: int = 8) -> set[CollectedName]:
    """Keep the names whose CNAME chain ends in a cloud suffix or whose A record is in a cloud range.

    NXDOMAIN and per-name failures drop out silently (logged); only a batch in
    which every lookup failed transiently raises ResolverUnavailableError.
    """
    observations = observe_all(fqdns, resolver, clock, workers)
    failures = [n for n, o in observations.items() if isinstance(o, Exception)]
    if observations and len(failures) == len(observations):
        raise ResolverUnavailableError(f"all {len(failures)} lookups failed")
    out = set()
    for name, obs in observations.items():
        if isinstance(obs, Exception) or obs.nxdomain:
            continue
        match = select_cloud(obs, catalog)
        if match is not None:
            out.add(CollectedName(name, match.service, match.freetext_label))
    return out


class Tri(str, enum.Enum):
    YES = "yes"
    NO = "no"
    SKIPPED = "skipped"


@dataclass(frozen=True)
class LivenessReport:
    fqdn: str
    icmp_responsive: Tri
    tcp_responsive: Tri
    http_responsive: Tri
    probed_at: float
    http_status: int | None = None

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA_VERSION, "type": "liveness", "fqdn": self.fqdn,
            "icmp": self.icmp_responsive.value, "tcp": self.tcp_responsive.value,
            "http": self.http_responsive.value, "http_status": self.http_status,
            "probed_at": self.probed_at,
        }


def probe_liveness(fqdn: str, network: Network, addresses: Iterable[str],
                   layers: Iterable[str] = ("icmp", "tcp", "http"), clock=time.time) -> LivenessReport:
    """Probe each requested layer once. Any HTTP status counts as responsive."""
    layers = set(layers)
    addrs = list(addresses)
    icmp = tcp = http = Tri.SKIPPED
    status = None
    if "icmp" in layers:
        if not addrs:
            icmp = Tri.NO
        else:
            answers = [network.ping(a) for a in addrs[:1]]
            icmp = Tri.SKIPPED if answers[0] is None else (Tri.YES if answers[0] else Tri.NO)
    if "tcp" in layers:
        tcp = Tri.YES if any(network.tcp_open(a, p) for a in addrs[:1] for p in (80, 443)) else Tri.NO
    if "http" in layers:
        if addrs:
            result = network.http_get(fqdn, addrs[0], "/", purpose="liveness")
            status = result.status
            http = Tri.YES if result.completed else Tri.NO
        else:
            http = Tri.NO
    return LivenessReport(fqdn, icmp, tcp, http, float(clock()), status)


@dataclass(frozen=True)
class Fingerprint:
    id: str
    provider: str
    statuses: tuple[int, ...]
    markers: tuple[str, ...]

    def matches(self, result: HttpResult) -> bool:
        if not result.completed or result.body is None:
            return False
        if self.statuses and result.status not in self.statuses:
            return False
        body = result.body.decode("utf-8", "replace")
        return any(m in body for m in self.markers)


def load_fingerprints(path: str | None = None) -> list[Fingerprint]:
    if path is None:
        text = resources.files("dsentinel").joinpath("data/fingerprints.json").read_text("utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    doc = json.loads(text)
    return [
        Fingerprint(f["id"], f["provider"], tuple(f.get("status", ())), tuple(f["markers"]))
        for f in doc["fingerprints"]
    ]


def match_fingerprint(result: HttpResult, fingerprints: Iterable[Fingerprint]) -> str | None:
    for fp in fingerprints:
        if fp.matches(result):
            return fp.id
    return None


class DanglingState(str, enum.Enum):
    ACTIVE = "active"
    DANGLING_CANDIDATE = "dangling_candidate"
    NOT_CLOUD = "not_cloud"
    UNRESOLVED = "unresolved"


@dataclass(frozen=True)
class DanglingStatus:
    fqdn: str
    cloud_pointing: bool
    service: CloudService | None
    freetext_label: str | None
    state: DanglingState
    # which confirmation fired: "terminal_nxdomain", "terminal_nodata", "fingerprint:<id>", "transient",
    # "http_unreachable" or None
    signal: str | None = None
    http_status: int | None = None
    # service availability at classification time (provider not-found page = unavailable)
    service_available: bool | None = None
    observation: DnsObservation | None = field(default=None, compare=False)

    def to_dict(self) -> dict:
        svc = self.service
        return {
            "schema": SCHEMA_VERSION, "type": "dangling_status", "fqdn": self.fqdn,
            "cloud_pointing": self.cloud_pointing,
            "provider": svc.provider if svc else None,
            "service_kind": svc.service_kind if svc else None,
            "suffix_pattern": svc.suffix_pattern if svc else None,
            "freetext_label": self.freetext_label, "state": self.state.value,
            "signal": self.signal, "http_status": self.http_status,
            "service_available": self.service_available,
        }


def dangling_from_response(obs: DnsObservation, match: CloudMatch | None, result: HttpResult | None,
                           fingerprints: Iterable[Fingerprint]) -> DanglingStatus:
    """Classification shared by classify_dangling and the monitoring cycle."""
    if obs.nxdomain or match is None:
        return DanglingStatus(obs.fqdn, False, None, None, DanglingState.NOT_CLOUD, observation=obs)
    base = dict(fqdn=obs.fqdn, cloud_pointing=True, service=match.service,
                freetext_label=match.freetext_label, observation=obs)
    if obs.terminal_nxdomain or (obs.cname_chain and not obs.a_results):
        signal = "terminal_nxdomain" if obs.terminal_nxdomain else "terminal_nodata"
        return DanglingStatus(**base, state=DanglingState.DANGLING_CANDIDATE,
                              signal=signal, service_available=False)
    if result is None or not result.completed:
        return DanglingStatus(**base, state=DanglingState.UNRESOLVED, signal="http_unreachable",
                              service_available=False)
    fp = match_fingerprint(result, fingerprints)
    if fp is not None:
        return DanglingStatus(**base, state=DanglingState.DANGLING_CANDIDATE, signal=f"fingerprint:{fp}",
                              http_status=result.status, service_available=False)
    return DanglingStatus(**base, state=DanglingState.ACTIVE, http_status=result.status,
                          service_available=True)


def classify_dangling(fqdn: str, catalog: CloudCatalog, resolver: DnsResolver, network: Network,
                      fingerprints: list[Fingerprint] | None = None, clock=time.time) -> DanglingStatus:
    """Resolve, select, and (at most one HTTP request) confirm whether *fqdn* dangles."""
    fingerprints = load_fingerprints() if fingerprints is None else fingerprints
    name = normalize_fqdn(fqdn)
    try:
        obs = resolve_chain(name, resolver, clock)
    except TransientResolutionError:
        return DanglingStatus(name, False, None, None, DanglingState.UNRESOLVED, signal="transient")
    match = None if obs.nxdomain else select_cloud(obs, catalog)
    result = None
    if match is not None and obs.a_results and not obs.terminal_nxdomain:
        result = network.http_get(name, obs.a_results[0], "/", purpose="classify")
    return dangling_from_response(obs, match, result, fingerprints)
