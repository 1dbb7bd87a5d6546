"""Content snapshots of monitored FQDNs, sitemap statistics and snapshot diffs."""

from __future__ import annotations

import base64
import hashlib
import io
import json
import math
import os
import threading
import xml.etree.ElementTree as ET
from collections import Counter
from dataclasses import dataclass, replace
from typing import Callable, Iterator
from urllib.parse import urljoin, urlsplit

from . import SCHEMA_VERSION
from .collector import DnsObservation
from .errors import InputError
from .htmltext import normalize_html
from .keywords import extract_keywords
from .language import UNDETERMINED, detect_html_language
from .net import BODY_CAP, HttpResult, Network

SITEMAP_SAMPLE = 100
SITEMAP_GROWTH_BYTES = 100 * 1024
LARGE_SITEMAP_BYTES = 5 * 1024 * 1024
MAX_INDEX_DEPTH = 2


@dataclass(frozen=True)
class SitemapStats:
    url_count: int = 0
    total_size_bytes: int = 0
    sample_urls: tuple[str, ...] = ()
    name_entropy: float = 0.0
    format: str = "urlset"  # urlset | sitemapindex | robots | invalid
    unexpanded_children: int = 0

    def __post_init__(self):
        if self.url_count < len(self.sample_urls):
            raise ValueError("url_count smaller than sample")

    def to_dict(self) -> dict:
        return {
            "url_count": self.url_count, "total_size_bytes": self.total_size_bytes,
            "sample_urls": list(self.sample_urls), "name_entropy": self.name_entropy,
            "format": self.format, "unexpanded_children": self.unexpanded_children,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SitemapStats":
        return cls(d["url_count"], d["total_size_bytes"], tuple(d["sample_urls"]),
                   d["name_entropy"], d.get("format", "urlset"), d.get("unexpanded_children", 0))


def path_entropy(url: str) -> float:
    """Shannon entropy (bits/char) of the URL path without slashes."""
    path = urlsplit(url).path.replace("/", "")
    if not path:
        return 0.0
    counts = Counter(path)
    n = len(path)
    return -sum(c / n * math.log2(c / n) for c in counts.values())


def _local(tag: str) -> str:
    return tag.rsplit("}", 1)[-1].lower()


def parse_sitemap(document: bytes, base_url: str = "",
                  fetch: Callable[[str], bytes | None] | None = None,
                  max_depth: int = MAX_INDEX_DEPTH, _depth: int = 0) -> SitemapStats:
    """Stream-parse a sitemap or sitemap index.

    Index children are expanded through *fetch* while depth allows and *fetch*
    returns a document; otherwise each child counts as one unexpanded entry.
    Non-XML input yields ``url_count=0`` with ``format="invalid"``.
    """
    count = 0
    entropy_sum = 0.0
    sample: list[str] = []
    children: list[str] = []
    root = None
    stack: list[str] = []
    try:
        for event, elem in ET.iterparse(io.BytesIO(document), events=("start", "end")):
            tag = _local(elem.tag)
            if event == "start":
                if root is None:
                    root = tag
                stack.append(tag)
                continue
            stack.pop()
            if tag == "loc":
                loc = urljoin(base_url, (elem.text or "").strip()) if base_url else (elem.text or "").strip()
                parent = stack[-1] if stack else ""
                if parent == "url":
                    count += 1
                    entropy_sum += path_entropy(loc)
                    if len(sample) < SITEMAP_SAMPLE:
                        sample.append(loc)
                elif parent == "sitemap":
                    children.append(loc)
            if tag in ("url", "sitemap"):
                elem.clear()
    except ET.ParseError:
        return SitemapStats(0, len(document), (), 0.0, "invalid")
    if root not in ("urlset", "sitemapindex"):
        return SitemapStats(0, len(document), (), 0.0, "invalid")
    size = len(document)
    unexpanded = 0
    fmt = root
    for child in children:
        doc = fetch(child) if (fetch is not None and _depth + 1 <= max_depth) else None
        if doc is None:
            count += 1
            unexpanded += 1
            if len(sample) < SITEMAP_SAMPLE:
                sample.append(child)
            continue
        sub = parse_sitemap(doc, child, fetch, max_depth, _depth + 1)
        size += sub.total_size_bytes
        entropy_sum += sub.name_entropy * (sub.url_count - sub.unexpanded_children)
        count += sub.url_count
        unexpanded += sub.unexpanded_children
        sample.extend(sub.sample_urls[: SITEMAP_SAMPLE - len(sample)])
    entropy_n = count - unexpanded
    return SitemapStats(count, size, tuple(sample), entropy_sum / entropy_n if entropy_n else 0.0,
                        fmt, unexpanded)


def parse_robots(text: bytes) -> SitemapStats:
    """Sitemap directives of a robots.txt, counted as unexpanded entries."""
    urls = []
    for line in text.decode("utf-8", "replace").splitlines():
        key, _, value = line.partition(":")
        if key.strip().lower() == "sitemap" and value.strip():
            urls.append(value.strip())
    return SitemapStats(len(urls), len(text), tuple(urls[:SITEMAP_SAMPLE]), 0.0, "robots", len(urls))


def content_hash(html: bytes | None) -> str | None:
    if html is None:
        return None
    return hashlib.sha256(normalize_html(html)).hexdigest()


@dataclass(frozen=True)
class Snapshot:
    fqdn: str
    fetched_at: float
    dns: DnsObservation
    http_status: int | None = None
    index_html: bytes | None = None
    detected_language: str = UNDETERMINED
    sitemap: SitemapStats | None = None
    content_hash: str | None = None
    truncated: bool = False
    tls_verified: bool | None = None
    requests: int = 0

    def __post_init__(self):
        if (self.http_status is None) != (self.index_html is None):
            raise ValueError("http_status must be present iff index_html was fetched")

    @property
    def id(self) -> str:
        return f"{self.fqdn}@{self.fetched_at:.3f}"

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "fqdn": self.fqdn,
            "fetched_at": self.fetched_at,
            "dns": self.dns.to_dict(),
            "http_status": self.http_status,
            "index_html": base64.b64encode(self.index_html).decode("ascii") if self.index_html is not None else None,
            "detected_language": self.detected_language,
            "sitemap": self.sitemap.to_dict() if self.sitemap else None,
            "content_hash": self.content_hash,
            "truncated": self.truncated,
            "tls_verified": self.tls_verified,
            "requests": self.requests,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Snapshot":
        html = d.get("index_html")
        return cls(
            d["fqdn"], d["fetched_at"], DnsObservation.from_dict(d["dns"]), d["http_status"],
            base64.b64decode(html) if html is not None else None, d["detected_language"],
            SitemapStats.from_dict(d["sitemap"]) if d.get("sitemap") else None,
            d["content_hash"], d.get("truncated", False), d.get("tls_verified"), d.get("requests", 0),
        )


def encode_snapshot(snapshot: Snapshot) -> bytes:
    return json.dumps(snapshot.to_dict(), sort_keys=True, separators=(",", ":")).encode("utf-8")


def decode_snapshot(payload: bytes) -> Snapshot:
    return Snapshot.from_dict(json.loads(payload))


@dataclass(frozen=True)
class ChangeSet:
    fqdn: str
    prev_id: str
    next_id: str
    dns_changed: bool = False
    status_changed: bool = False
    content_changed: bool = False
    sitemap_new: bool = False
    sitemap_growth_bytes: int = 0
    language_changed: bool = False
    keyword_delta: tuple[tuple[str, ...], tuple[str, ...]] = ((), ())

    @property
    def any_change(self) -> bool:
        return any((self.dns_changed, self.status_changed, self.content_changed, self.sitemap_new,
                    self.sitemap_growth_bytes, self.language_changed, *self.keyword_delta))


def sitemap_growth(prev: Snapshot, nxt: Snapshot) -> int:
    if prev.sitemap is None or nxt.sitemap is None:
        return 0
    return nxt.sitemap.total_size_bytes - prev.sitemap.total_size_bytes


def _dns_key(obs: DnsObservation):
    return (obs.cname_chain, tuple(sorted(obs.a_results)), obs.nxdomain, obs.terminal_nxdomain)


def diff_snapshots(prev: Snapshot, nxt: Snapshot, extractor=extract_keywords) -> ChangeSet:
    if prev.fqdn != nxt.fqdn:
        raise InputError(f"cannot diff snapshots of {prev.fqdn!r} and {nxt.fqdn!r}")
    old_kw = extractor(prev.index_html) if prev.index_html else ()
    new_kw = extractor(nxt.index_html) if nxt.index_html else ()
    old_set, new_set = set(old_kw), set(new_kw)
    added = tuple(k for k in new_kw if k not in old_set)
    removed = tuple(k for k in old_kw if k not in new_set)
    return ChangeSet(
        fqdn=nxt.fqdn,
        prev_id=prev.id,
        next_id=nxt.id,
        dns_changed=_dns_key(prev.dns) != _dns_key(nxt.dns),
        status_changed=prev.http_status != nxt.http_status,
        content_changed=prev.content_hash != nxt.content_hash,
        sitemap_new=prev.sitemap is None and nxt.sitemap is not None,
        sitemap_growth_bytes=sitemap_growth(prev, nxt),
        language_changed=prev.detected_language != nxt.detected_language,
        keyword_delta=(added, removed),
    )


def initial_changeset(snapshot: Snapshot) -> ChangeSet:
    """Changes of a first observation relative to 'nothing seen before'."""
    empty = Snapshot(snapshot.fqdn, snapshot.fetched_at, DnsObservation(snapshot.fqdn, observed_at=snapshot.fetched_at))
    return diff_snapshots(empty, snapshot)


@dataclass
class FetchPolicy:
    """Controls the optional second request of a snapshot.

    ``sitemap`` is "always", "never" or "auto"; in auto mode ``decide(partial, prev)``
    chooses. Without a hook, auto fetches when the index is new or changed.
    """

    scheme: str = "http"
    sitemap: str = "auto"
    discovery: str = "sitemap"  # "sitemap" -> /sitemap.xml, "robots" -> /robots.txt
    decide: Callable[[Snapshot, Snapshot | None], bool] | None = None
    body_cap: int = BODY_CAP

    def want_sitemap(self, partial: Snapshot, prev: Snapshot | None) -> bool:
        if self.sitemap == "always":
            return True
        if self.sitemap == "never":
            return False
        if self.decide is not None:
            return self.decide(partial, prev)
        return prev is None or prev.content_hash != partial.content_hash or prev.http_status != partial.http_status


def fetch_snapshot(fqdn: str, network: Network, observation: DnsObservation,
                   policy: FetchPolicy | None = None, clock=None,
                   prev: Snapshot | None = None) -> Snapshot:
    """Fetch the index page and, when the policy asks, one sitemap document (<= 2 requests)."""
    policy = policy or FetchPolicy()
    now = float(clock()) if clock is not None else observation.observed_at
    address = observation.a_results[0] if observation.a_results else None
    if address is None:
        return Snapshot(fqdn, now, observation)
    first: HttpResult = network.http_get(fqdn, address, "/", policy.scheme, purpose="index")
    if not first.completed:
        return Snapshot(fqdn, now, observation, requests=1, tls_verified=first.tls_verified)
    body = first.body or b""
    partial = Snapshot(
        fqdn, now, observation, first.status, body, detect_html_language(body), None,
        content_hash(body), first.truncated, first.tls_verified, 1,
    )
    if not policy.want_sitemap(partial, prev):
        return partial
    path = "/robots.txt" if policy.discovery == "robots" else "/sitemap.xml"
    second = network.http_get(fqdn, address, path, policy.scheme, purpose="sitemap")
    stats = None
    if second.completed and second.status == 200 and second.body:
        if policy.discovery == "robots":
            stats = parse_robots(second.body)
        else:
            stats = parse_sitemap(second.body, f"{policy.scheme}://{fqdn}/")
    return replace(partial, sitemap=stats, requests=2)


class SnapshotStore:
    """Append-only, length-prefixed JSON snapshot log with a rebuildable index."""

    LOG = "snapshots.log"
    INDEX = "snapshots.index.json"

    def __init__(self, directory: str):
        self.directory = directory
        os.makedirs(directory, exist_ok=True)
        self.log_path = os.path.join(directory, self.LOG)
        self.index_path = os.path.join(directory, self.INDEX)
        self._lock = threading.Lock()
        self._index: dict[str, list[tuple[int, float]]] = {}
        self._dirty = False
        self._load_index()

    def _load_index(self) -> None:
        size = os.path.getsize(self.log_path) if os.path.exists(self.log_path) else 0
        if os.path.exists(self.index_path):
            with open(self.index_path, encoding="utf-8") as fh:
                doc = json.load(fh)
            if doc.get("log_size") == size:
                self._index = {k: [tuple(e) for e in v] for k, v in doc["entries"].items()}
                return
        self.rebuild_index()

    def rebuild_index(self) -> None:
        index: dict[str, list[tuple[int, float]]] = {}
        for offset, snap in self._scan():
            index.setdefault(snap.fqdn, []).append((offset, snap.fetched_at))
        self._index = index
        # persisted by the next flush(); readers never write
        self._dirty = True

    def _scan(self) -> Iterator[tuple[int, Snapshot]]:
        if not os.path.exists(self.log_path):
            return
        with open(self.log_path, "rb") as fh:
            while True:
                offset = fh.tell()
                header = fh.readline()
                if not header:
                    return
                length = int(header)
                payload = fh.read(length)
                fh.read(1)
                yield offset, decode_snapshot(payload)

    def append(self, snapshot: Snapshot) -> int:
        payload = encode_snapshot(snapshot)
        with self._lock:
            with open(self.log_path, "ab") as fh:
                offset = fh.tell()
                fh.write(b"%d\n" % len(payload) + payload + b"\n")
            self._index.setdefault(snapshot.fqdn, []).append((offset, snapshot.fetched_at))
            self._dirty = True
        return offset

    def flush(self) -> None:
        with self._lock:
            if not self._dirty:
                return
            size = os.path.getsize(self.log_path) if os.path.exists(self.log_path) else 0
            doc = {"log_size": size, "entries": {k: [list(e) for e in v] for k, v in sorted(self._index.items())}}
            tmp = self.index_path + ".tmp"
            with open(tmp, "w", encoding="utf-8") as fh:
                json.dump(doc, fh, sort_keys=True, separators=(",", ":"))
            os.replace(tmp, self.index_path)
            self._dirty = False

    def read_at(self, offset: int) -> Snapshot:
        with open(self.log_path, "rb") as fh:
            fh.seek(offset)
            length = int(fh.readline())
            return decode_snapshot(fh.read(length))

    def fqdns(self) -> list[str]:
        return sorted(self._index)

    def history(self, fqdn: str) -> list[Snapshot]:
        return [self.read_at(off) for off, _ in self._index.get(fqdn, [])]

    def latest(self, fqdn: str) -> Snapshot | None:
        entries = self._index.get(fqdn)
        return self.read_at(entries[-1][0]) if entries else None

    def get(self, snapshot_id: str) -> Snapshot | None:
        fqdn, _, _ = snapshot_id.rpartition("@")
        for off, _ in self._index.get(fqdn, []):
            snap = self.read_at(off)
            if snap.id == snapshot_id:
                return snap
        return None

    def __iter__(self) -> Iterator[Snapshot]:
        for _, snap in self._scan():
            yield snap
