"""Monitoring cycle: resolve, snapshot, diff and detect for every monitored name."""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Sequence

import yaml

from .catalog import CloudCatalog, CloudService, default_catalog, load_feed_files
from .collector import (CloudMatch, DnsObservation, Fingerprint, DanglingState, dangling_from_response,
                        load_fingerprints, match_fingerprint, resolve_chain, select_cloud)
from .detector import AbuseEvent, Lifespan, abuse_lifespan, capabilities_for
from .errors import ConfigError, InputError, InvalidNameError, TransientResolutionError
from .keywords import classify_content, extract_keywords
from .names import normalize_fqdn
from .net import HttpResult, Network
from .ratelimit import RequestLedger
from .signatures import Signature, load_signatures, match_all, venn_bucket
from .snapshot import FetchPolicy, Snapshot, diff_snapshots, fetch_snapshot
from .store import Store

log = logging.getLogger(__name__)

DAY = 86400.0


# --- configuration ---------------------------------------------------------

@dataclass
class RunConfig:
    store: str
    domains: list[str] = field(default_factory=list)
    feeds: dict[str, str] = field(default_factory=dict)
    resolver: str = "127.0.0.1:53"
    http_rate: float | None = 10.0
    dns_rate: float | None = 50.0
    signatures: list[str] = field(default_factory=list)
    benign_corpus: str | None = None
    cadence_days: float = 7.0
    reports: str = "reports"
    dns_timeout: float = 2.0
    http_timeout: float = 10.0
    workers: int = 8
    scheme: str = "http"
    fingerprints: str | None = None


def load_config(path: str, overrides: dict | None = None) -> RunConfig:
    """Read a YAML run configuration; relative paths resolve against the file's directory."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a mapping")
    base = os.path.dirname(os.path.abspath(path))
    return config_from_dict(doc, base, overrides)


def config_from_dict(doc: dict, base: str = ".", overrides: dict | None = None) -> RunConfig:
    doc = {**doc, **{k: v for k, v in (overrides or {}).items() if v is not None}}
    errors = []

    def p(value):
        return value if os.path.isabs(value) else os.path.normpath(os.path.join(base, value))

    known = set(RunConfig.__dataclass_fields__) | {"rate_limits", "timeouts", "catalog"}
    for key in doc:
        if key not in known:
            errors.append(f"unknown config key {key!r}")
    if not doc.get("store"):
        errors.append("'store' is required")
    rates = doc.get("rate_limits") or {}
    timeouts = doc.get("timeouts") or {}
    catalog = doc.get("catalog") or {}
    cfg = RunConfig(
        store=p(str(doc.get("store", "."))),
        domains=[p(str(x)) for x in doc.get("domains") or []],
        feeds={str(k): p(str(v)) for k, v in (catalog.get("feeds") or doc.get("feeds") or {}).items()},
        resolver=str(doc.get("resolver", "127.0.0.1:53")),
        http_rate=rates.get("http_per_second", doc.get("http_rate", 10.0)),
        dns_rate=rates.get("dns_per_second", doc.get("dns_rate", 50.0)),
        signatures=[p(str(x)) for x in doc.get("signatures") or []],
        benign_corpus=p(str(doc["benign_corpus"])) if doc.get("benign_corpus") else None,
        cadence_days=float(doc.get("cadence_days", 7.0)),
        reports=p(str(doc.get("reports", "reports"))),
        dns_timeout=float(timeouts.get("dns", doc.get("dns_timeout", 2.0))),
        http_timeout=float(timeouts.get("http", doc.get("http_timeout", 10.0))),
        workers=int(doc.get("workers", 8)),
        scheme=str(doc.get("scheme", "http")),
        fingerprints=p(str(doc["fingerprints"])) if doc.get("fingerprints") else None,
    )
    if cfg.cadence_days < 1:
        errors.append("cadence_days must be >= 1")
    for path in cfg.domains + list(cfg.feeds.values()) + cfg.signatures + \
            [x for x in (cfg.benign_corpus, cfg.fingerprints) if x]:
        if not os.path.exists(path):
            errors.append(f"path does not exist: {path}")
    if cfg.scheme not in ("http", "https"):
        errors.append("scheme must be http or https")
    if errors:
        raise ConfigError("; ".join(errors))
    return cfg


def catalog_for(cfg: RunConfig) -> CloudCatalog:
    return load_feed_files(cfg.feeds) if cfg.feeds else default_catalog()


def signatures_for(cfg: RunConfig) -> list[Signature]:
    if not cfg.signatures:
        return load_signatures()
    out = []
    for path in cfg.signatures:
        out.extend(load_signatures(path))
    return out


# --- ingest ------------------------------------------------------------------

@dataclass(frozen=True)
class IngestResult:
    added: int
    duplicates: int
    invalid: int


def _names_from(path: str) -> Iterable[str]:
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except (OSError, UnicodeDecodeError) as exc:
        raise InputError(f"cannot read domain list {path}: {getattr(exc, 'strerror', None) or exc}") from None
    for line in lines:
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("{"):
            try:
                doc = json.loads(line)
            except json.JSONDecodeError:
                yield line
                continue
            yield str(doc.get("fqdn") or doc.get("name") or doc.get("domain") or "")
        else:
            yield line.split()[0]


def ingest_domains(paths: Sequence[str], store: Store) -> IngestResult:
    """Add normalized names from plain lists or JSON-lines feeds, skipping known ones."""
    known = set(store.domains())
    added, dup, bad = [], 0, 0
    for path in paths:
        for raw in _names_from(path):
            try:
                name = normalize_fqdn(raw)
            except InvalidNameError:
                bad += 1
                continue
            if name in known:
                dup += 1
                continue
            known.add(name)
            added.append({"fqdn": name, "source": os.path.basename(path)})
    store.append("domains.jsonl", added)
    return IngestResult(len(added), dup, bad)


# --- cycle ---------------------------------------------------------------------

@dataclass
class CycleSummary:
    at: float
    monitored: int = 0
    resolved: int = 0
    dns_failures: int = 0
    nxdomain: int = 0
    cloud_pointing: int = 0
    http_requests: int = 0
    snapshots: int = 0
    changed: int = 0
    matched: int = 0
    new_abuse_events: int = 0
    corrections: int = 0
    dangling_candidates: int = 0
    repeat: bool = False
    failures: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"type": "cycle", **asdict(self)}

    @property
    def ok(self) -> bool:
        return not self.failures


@dataclass
class _Outcome:
    fqdn: str
    observation: DnsObservation | None = None
    error: str | None = None
    match: CloudMatch | None = None
    snapshot: Snapshot | None = None
    dangling: dict | None = None
    changed: bool = False
    matches: list = field(default_factory=list)


def open_abuse(store: Store) -> dict[str, dict]:
    """fqdn -> detection record of abuse events not yet corrected."""
    open_: dict[str, dict] = {}
    for rec in store.read("events.jsonl"):
        if rec["type"] == "abuse_detected":
            open_[rec["fqdn"]] = rec
        elif rec["type"] == "dns_corrected":
            open_.pop(rec["fqdn"], None)
    return open_


def _service_dict(svc: CloudService) -> dict:
    return {"provider": svc.provider, "service_kind": svc.service_kind, "suffix_pattern": svc.suffix_pattern,
            "user_nameable": svc.user_nameable}


def _still_points(obs: DnsObservation, resource: str) -> bool:
    return not obs.nxdomain and (resource in obs.cname_chain or resource in obs.a_results)


def run_cycle(store: Store, catalog: CloudCatalog, resolver, network: Network, ledger: RequestLedger,
              signatures: Sequence[Signature], clock: Callable[[], float], *, scheme: str = "http",
              fingerprints: Sequence[Fingerprint] | None = None, workers: int = 8,
              dry_run: bool = False) -> CycleSummary:
    """One monitoring pass over every stored name.

    Re-running at the same clock instant is a no-op: no DNS or HTTP traffic and
    no store writes.
    """
    fingerprints = load_fingerprints() if fingerprints is None else list(fingerprints)
    now = float(clock())
    names = sorted(set(store.domains()))
    summary = CycleSummary(now, monitored=len(names))
    last = None
    for rec in store.read("cycles.jsonl"):
        last = rec
    if last is not None and last["at"] == now:
        summary.repeat = True
        return summary
    if last is not None and last["at"] > now:
        raise InputError(f"cycle time {now} precedes the previous cycle at {last['at']}")

    opened = open_abuse(store)
    ledger_start = len(ledger)

    def decide_for(match: CloudMatch):
        def decide(partial: Snapshot, prev: Snapshot | None) -> bool:
            result = HttpResult("", partial.http_status, partial.index_html)
            if match_fingerprint(result, fingerprints) or (partial.http_status or 0) >= 400:
                return False
            return prev is None or prev.content_hash != partial.content_hash or prev.http_status != partial.http_status
        return decide

    def process(fqdn: str) -> _Outcome:
        out = _Outcome(fqdn)
        try:
            obs = resolve_chain(fqdn, resolver, clock)
        except TransientResolutionError as exc:
            out.error = f"dns {fqdn}: {exc}"
            return out
        out.observation = obs
        match = None if obs.nxdomain else select_cloud(obs, catalog)
        out.match = match
        if match is None:
            out.dangling = dangling_from_response(obs, None, None, fingerprints).to_dict()
            return out
        prev = store.snapshots.latest(fqdn)
        policy = FetchPolicy(scheme=scheme, decide=decide_for(match))
        if obs.terminal_nxdomain or not obs.a_results:
            snap = Snapshot(fqdn, now, obs)
        else:
            snap = fetch_snapshot(fqdn, network, obs, policy, clock, prev)
        out.snapshot = snap
        result = HttpResult(f"{scheme}://{fqdn}/", snap.http_status, snap.index_html) if snap.requests else None
        out.dangling = dangling_from_response(obs, match, result, fingerprints).to_dict()
        changes = diff_snapshots(prev, snap) if prev is not None else None
        out.changed = changes is None or changes.any_change
        if snap.http_status is not None and not (result and match_fingerprint(result, fingerprints)):
            out.matches = match_all(snap, changes, signatures, dry_run)
        return out

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        outcomes = list(pool.map(process, names))

    observations, events = [], []
    for out in outcomes:
        if out.error:
            summary.dns_failures += 1
            summary.failures.append(out.error)
            observations.append({"type": "observation", "cycle": now, "fqdn": out.fqdn, "error": out.error})
            continue
        obs = out.observation
        summary.resolved += 1
        summary.nxdomain += obs.nxdomain
        observations.append({"type": "observation", "cycle": now, "fqdn": out.fqdn, "dns": obs.to_dict(),
                             "dangling": out.dangling})
        if out.dangling and out.dangling["state"] == DanglingState.DANGLING_CANDIDATE.value:
            summary.dangling_candidates += 1
        current = opened.get(out.fqdn)
        if current is not None and not _still_points(obs, current["resource"]):
            events.append({"type": "dns_corrected", "fqdn": out.fqdn, "at": now,
                           "cname_chain": list(obs.cname_chain), "a_results": list(obs.a_results),
                           "nxdomain": obs.nxdomain})
            summary.corrections += 1
            current = None
        if out.match is None:
            continue
        summary.cloud_pointing += 1
        snap = out.snapshot
        store.snapshots.append(snap)
        summary.snapshots += 1
        summary.changed += out.changed
        if not out.matches:
            continue
        summary.matched += 1
        ids = sorted(m.signature_id for m in out.matches)
        fired = sorted({k for m in out.matches for k in m.fired})
        if current is None:
            svc = out.match.service
            caps = capabilities_for(svc)
            topic = classify_content(extract_keywords(snap.index_html), language=snap.detected_language,
                                     sitemap_urls=snap.sitemap.url_count if snap.sitemap else None)
            events.append({
                "type": "abuse_detected", "fqdn": out.fqdn, "at": now, "signatures": ids, "fired": fired,
                "bucket": venn_bucket(out.matches), "topic": topic.topic, "topic_score": topic.score,
                "service": _service_dict(svc), "capability_access": caps.access,
                "capabilities": sorted(caps.atoms), "resource": out.match.matched,
                "snapshot_id": snap.id,
            })
            summary.new_abuse_events += 1
        else:
            events.append({"type": "abuse_observed", "fqdn": out.fqdn, "at": now, "signatures": ids,
                           "snapshot_id": snap.id})

    requests = sorted(ledger.since(ledger_start), key=lambda e: e.fqdn)
    summary.http_requests = len(requests)
    store.snapshots.flush()
    store.append("observations.jsonl", observations)
    store.append("events.jsonl", events)
    store.append("ledger.jsonl", [{"cycle": now, **e.to_dict()} for e in requests])
    store.append("cycles.jsonl", [summary.to_dict()])
    return summary


# --- event views -----------------------------------------------------------------

@dataclass(frozen=True)
class EventHistory:
    event: AbuseEvent
    lifespan: Lifespan
    snapshot_ids: tuple[str, ...]
    bucket: str
    record: dict


def abuse_histories(store: Store, now: float | None = None) -> list[EventHistory]:
    """AbuseEvents rebuilt from the event log, each with its lifespan."""
    streams: dict[str, list[tuple[float, str]]] = {}
    current: dict[str, dict] = {}
    snaps: dict[str, list[str]] = {}
    out: list[EventHistory] = []

    def close(fqdn: str, resolved: float | None):
        rec = current.pop(fqdn)
        stream = streams.pop(fqdn)
        svc = rec.get("service")
        service = CloudService(svc["provider"], svc["service_kind"], svc["suffix_pattern"],
                               svc["user_nameable"]) if svc else None
        ids = tuple(sorted({s for s in rec["signatures"]}))
        event = AbuseEvent(fqdn, ids, rec["at"], resolved, rec.get("topic", "other"), service,
                           frozenset(rec.get("capabilities", ())))
        out.append(EventHistory(event, abuse_lifespan(stream, now), tuple(snaps.pop(fqdn)), rec.get("bucket", ""),
                                rec))

    for rec in store.read("events.jsonl"):
        fqdn = rec["fqdn"]
        if rec["type"] == "abuse_detected":
            if fqdn in current:
                close(fqdn, None)
            current[fqdn] = rec
            streams[fqdn] = [(rec["at"], "abuse")]
            snaps[fqdn] = [rec["snapshot_id"]]
        elif rec["type"] == "abuse_observed" and fqdn in current:
            streams[fqdn].append((rec["at"], "abuse"))
            snaps[fqdn].append(rec["snapshot_id"])
        elif rec["type"] == "dns_corrected" and fqdn in current:
            streams[fqdn].append((rec["at"], "corrected"))
            close(fqdn, rec["at"])
    for fqdn in sorted(current):
        close(fqdn, None)
    out.sort(key=lambda h: (h.event.first_detected_at, h.event.fqdn))
    return out


def check_integrity(store: Store, signatures: Sequence[Signature]) -> list[str]:
    """Problems with events that cannot be traced to a stored snapshot and a validated signature."""
    validated = {s.id for s in signatures if s.validated}
    problems = []
    for h in abuse_histories(store):
        for sid in h.snapshot_ids:
            if store.snapshots.get(sid) is None:
                problems.append(f"{h.event.fqdn}: snapshot {sid} missing")
        for sig in h.event.matched_signature_ids:
            if sig not in validated:
                problems.append(f"{h.event.fqdn}: signature {sig} is not a validated signature")
    return problems
