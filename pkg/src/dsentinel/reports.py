"""CSV reports over a store. Every kind has a fixed column schema."""

from __future__ import annotations

import csv
import io
import os
from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Iterable, Mapping

from . import SCHEMA_VERSION
from .certs import classify_cert, issuance_windows, parse_time
from .detector import cluster_by_keywords, lifespan_histogram, registrar_span
from .errors import InputError
from .infra import build_graph, cluster_stats, extract_many, hierarchical_cluster
from .keywords import extract_keywords
from .names import registered_domain
from .pipeline import abuse_histories
from .signatures import INDICATOR_KINDS
from .store import Store

DURATION_BIN_DAYS = 5
SITEMAP_BIN_FILES = 5000
YEAR_DAYS = 365.25

SCHEMAS: dict[str, tuple[str, ...]] = {
    "abuse_events": ("fqdn", "first_detected_at", "resolved_at", "lifespan_days", "open_ended", "integrity_error",
                     "topic", "provider", "service_kind", "capability_access", "capabilities", "signatures",
                     "bucket"),
    "hijack_durations": ("bin_start", "bin_end", "count"),
    "sitemap_histogram": ("bin_start", "bin_end", "count"),
    "registrar_span": ("min_registrars", "clusters", "share"),
    "indicator_venn": ("bucket", "count", "share"),
    "cluster_table": ("rank", "n_identifiers", "n_domains", "identifiers"),
    "cert_windows": ("window_start", "single_san", "multi_san", "top_issuer", "share", "anomaly_flag"),
    "caa_posture": ("domain", "evaluated_at_label", "restricts_issuance", "permits_free_ca", "records"),
    "domain_age": ("sld", "created", "age_days", "older_1y", "older_10y", "unknown"),
}
REPORT_KINDS = tuple(SCHEMAS)


@dataclass
class Report:
    kind: str
    rows: list[list]
    generated_at: float
    meta: dict = field(default_factory=dict)

    @property
    def columns(self) -> tuple[str, ...]:
        return SCHEMAS[self.kind]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# dsentinel-report kind={self.kind} schema={SCHEMA_VERSION} "
                  f"generated_at={iso(self.generated_at)}\r\n")
        writer = csv.writer(buf, lineterminator="\r\n")
        writer.writerow(self.columns)
        writer.writerows(self.rows)
        return buf.getvalue()


def iso(ts: float | None) -> str:
    if ts is None:
        return ""
    return datetime.fromtimestamp(ts, timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def histogram_rows(values: Iterable[float], width: float, open_count: int | None = None) -> list[list]:
    """Contiguous [start, end) bins from zero up to the largest value; optional open-ended row."""
    vals = list(values)
    rows: list[list] = []
    if vals:
        counts = Counter(int(v // width) for v in vals)
        for b in range(0, max(counts) + 1):
            rows.append([int(b * width), int((b + 1) * width), counts.get(b, 0)])
    if open_count:
        rows.append(["open", "", open_count])
    return rows


def read_registrar_map(path: str) -> tuple[dict[str, str], dict[str, str]]:
    """CSV with columns sld,registrar[,owner]."""
    registrars, owners = {}, {}
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            sld = row["sld"].strip().lower()
            registrars[sld] = row["registrar"].strip()
            if row.get("owner"):
                owners[sld] = row["owner"].strip()
    return registrars, owners


def read_whois_map(path: str) -> dict[str, float]:
    """CSV with columns sld,created (ISO date)."""
    with open(path, encoding="utf-8", newline="") as fh:
        return {row["sld"].strip().lower(): parse_time(row["created"].strip()) for row in csv.DictReader(fh)}


def whois_age_report(slds: Iterable[str], created: Mapping[str, float], at: float) -> tuple[list[list], dict]:
    rows = []
    known_ages = []
    for sld in sorted(set(slds)):
        ts = created.get(sld)
        if ts is None:
            rows.append([sld, "", "", "", "", "true"])
            continue
        age = int((at - ts) // 86400)
        known_ages.append(age)
        rows.append([sld, iso(ts)[:10], age, str(age > YEAR_DAYS).lower(), str(age > 10 * YEAR_DAYS).lower(),
                     "false"])
    n = len(known_ages)
    shares = {
        "known": n,
        "unknown": len(rows) - n,
        "share_older_1y": sum(a > YEAR_DAYS for a in known_ages) / n if n else 0.0,
        "share_older_10y": sum(a > 10 * YEAR_DAYS for a in known_ages) / n if n else 0.0,
    }
    return rows, shares


def _fmt(x: float) -> str:
    return f"{x:.4f}"


def build_report(kind: str, store: Store, at: float | None = None, registrars: str | None = None,
                 whois: str | None = None, window_days: int = 14, cutoff: float = 0.95) -> Report:
    """Compute one report from the store without modifying it."""
    if kind not in SCHEMAS:
        raise InputError(f"unknown report kind {kind!r}; expected one of {', '.join(REPORT_KINDS)}")
    cycles = list(store.read("cycles.jsonl"))
    if at is None:
        at = cycles[-1]["at"] if cycles else 0.0
    histories = abuse_histories(store, now=at) if kind in (
        "abuse_events", "hijack_durations", "sitemap_histogram", "registrar_span", "indicator_venn",
        "cluster_table", "domain_age") else []
    rows: list[list] = []
    meta: dict = {}
    if kind == "abuse_events":
        for h in histories:
            e, span = h.event, h.lifespan
            svc = e.cloud_service
            rows.append([e.fqdn, iso(e.first_detected_at), iso(e.resolved_at), span.days,
                         str(span.open_ended).lower(), str(span.integrity_error).lower(), e.topic,
                         svc.provider if svc else "", svc.service_kind if svc else "",
                         h.record.get("capability_access", ""), " ".join(sorted(e.capability_set)),
                         " ".join(e.matched_signature_ids), h.bucket])
    elif kind == "hijack_durations":
        bins, open_count, excluded = lifespan_histogram([h.lifespan for h in histories], DURATION_BIN_DAYS)
        closed = [h.lifespan.days for h in histories if not h.lifespan.open_ended and not h.lifespan.integrity_error]
        rows = histogram_rows(closed, DURATION_BIN_DAYS, open_count)
        meta = {"excluded": excluded}
    elif kind == "sitemap_histogram":
        counts = []
        for h in histories:
            best = None
            for sid in h.snapshot_ids:
                snap = store.snapshots.get(sid)
                if snap and snap.sitemap is not None and snap.sitemap.format != "invalid":
                    best = max(best or 0, snap.sitemap.url_count)
            if best is not None:
                counts.append(best)
        rows = histogram_rows(counts, SITEMAP_BIN_FILES)
    elif kind == "registrar_span":
        reg, owners = read_registrar_map(registrars) if registrars else ({}, {})
        pages = []
        for h in histories:
            snap = store.snapshots.get(h.snapshot_ids[0])
            pages.append((h.event.fqdn, extract_keywords(snap.index_html) if snap else ()))
        span = registrar_span(cluster_by_keywords(pages), reg, owners or None)
        rows = [[x, n, _fmt(span.share(x))] for x, n in sorted(span.histogram.items())] if span.evaluated else []
        meta = {"evaluated": span.evaluated,
                "explainable": sum(v.registrar_explainable for v in span.verdicts)}
    elif kind == "indicator_venn":
        buckets = Counter(h.bucket for h in histories if h.bucket)
        total = sum(buckets.values())
        order = ["+".join(k for k in INDICATOR_KINDS if k in combo) for combo in _combos()]
        rows = [[b, buckets[b], _fmt(buckets[b] / total)] for b in order if buckets.get(b)]
    elif kind == "cluster_table":
        pages = []
        for h in histories:
            for sid in h.snapshot_ids:
                snap = store.snapshots.get(sid)
                if snap and snap.index_html:
                    pages.append((h.event.fqdn, snap.index_html))
        extractions = extract_many(pages)
        if extractions:
            result = hierarchical_cluster(build_graph(extractions), cutoff)
            rows = [[r.rank, r.n_identifiers, r.n_domains, " ".join(r.identifiers)] for r in cluster_stats(result)]
    elif kind == "cert_windows":
        certs = [classify_cert(r["names"], r.get("issuer", ""), r["not_before"]) for r in store.read("certs.jsonl")]
        for w in issuance_windows(certs, window_days):
            rows.append([iso(w.start)[:10], w.single_san, w.multi_san, w.top_issuer, _fmt(w.share),
                         str(w.anomaly).lower()])
    elif kind == "caa_posture":
        latest = {r["domain"]: r for r in store.read("caa.jsonl")}
        for domain in sorted(latest):
            r = latest[domain]
            rows.append([domain, r.get("evaluated_at_label") or "", str(r["restricts_issuance"]).lower(),
                         str(r["permits_free_ca"]).lower(), " | ".join(r.get("records", []))])
    elif kind == "domain_age":
        created = read_whois_map(whois) if whois else {}
        slds = {registered_domain(h.event.fqdn) for h in histories}
        rows, meta = whois_age_report(slds, created, at)
    return Report(kind, rows, at, meta)


def _combos():
    out = []
    for mask in range(1, 1 << len(INDICATOR_KINDS)):
        out.append([k for i, k in enumerate(INDICATOR_KINDS) if mask >> i & 1])
    out.sort(key=lambda c: (len(c), [INDICATOR_KINDS.index(k) for k in c]))
    return out


def emit_report(kind: str, store: Store, out_dir: str, plot: bool = True, **kwargs) -> tuple[Report, list[str]]:
    """Write ``<kind>.csv`` (and ``<kind>.png`` when plotting) into *out_dir*."""
    report = build_report(kind, store, **kwargs)
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, f"{kind}.csv")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(report.to_csv())
    paths = [path]
    if plot:
        from .plots import render
        paths.append(render(report, os.path.join(out_dir, f"{kind}.png")))
    return report, paths
