"""Attacker-infrastructure identifiers and their co-occurrence clustering."""

from __future__ import annotations

import csv
import io
import ipaddress
import json
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from itertools import combinations
from typing import Iterable, Sequence
from urllib.parse import parse_qs, urlsplit

import numpy as np

from .htmltext import parse_page

KINDS = ("phone", "chat_handle", "social_account", "shortener_url", "ip_address")
LINKAGES = ("single", "average", "complete")
DEFAULT_CUTOFF = 0.95
TIE_TOLERANCE = 1e-9


@lru_cache(maxsize=1)
def calling_codes() -> dict[str, str]:
    text = resources.files("dsentinel").joinpath("data/calling_codes.csv").read_text("utf-8")
    return {row["code"]: row["country"] for row in csv.DictReader(io.StringIO(text))}


@lru_cache(maxsize=1)
def default_shorteners() -> frozenset[str]:
    text = resources.files("dsentinel").joinpath("data/shorteners.txt").read_text("utf-8")
    return frozenset(l.strip().lower() for l in text.splitlines() if l.strip() and not l.startswith("#"))


def country_code(digits: str) -> str | None:
    codes = calling_codes()
    for n in (3, 2, 1):
        if digits[:n] in codes:
            return digits[:n]
    return None


@dataclass(frozen=True, order=True)
class Identifier:
    kind: str
    value: str
    country_code: str | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown identifier kind {self.kind!r}")

    @property
    def label(self) -> str:
        return f"{self.kind}:{self.value}"


def normalize_phone(raw: str) -> str | None:
    digits = re.sub(r"\D", "", raw)
    if digits.startswith("00"):
        digits = digits[2:]
    return digits if 7 <= len(digits) <= 15 else None


def phone(raw: str) -> Identifier | None:
    digits = normalize_phone(raw)
    return Identifier("phone", digits, country_code(digits)) if digits else None


_HANDLE = re.compile(r"^[A-Za-z0-9_.+-]{1,64}$")
_SOCIAL_HOSTS = {
    "twitter.com": "twitter", "x.com": "twitter", "instagram.com": "instagram",
    "facebook.com": "facebook", "fb.com": "facebook", "m.facebook.com": "facebook",
}
_SOCIAL_RESERVED = {"share", "sharer", "sharer.php", "intent", "home", "login", "hashtag", "search", "p",
                    "explore", "dialog", "plugins", "tr", "i"}


def _host(netloc: str) -> str:
    host = netloc.rsplit("@", 1)[-1]
    if host.startswith("["):
        return host[1: host.find("]")].lower()
    return host.split(":", 1)[0].lower().rstrip(".")


def identifier_from_url(url: str, shorteners: frozenset[str] | None = None) -> Identifier | None:
    """Classify one href; ``None`` when it carries no identifier.

    Raises ValueError for candidates that look like identifiers but are malformed.
    """
    shorteners = default_shorteners() if shorteners is None else shorteners
    url = url.strip()
    if url.lower().startswith("whatsapp://"):
        num = parse_qs(urlsplit(url).query).get("phone", [""])[0]
        ident = phone(num)
        if ident is None:
            raise ValueError(f"malformed WhatsApp number in {url!r}")
        return ident
    parts = urlsplit(url if "//" in url else "//" + url if url.lower().startswith(("wa.me", "t.me")) else url)
    host = _host(parts.netloc)
    if not host:
        return None
    if host.startswith("www."):
        host = host[4:]
    path = parts.path.strip("/")
    if host == "wa.me":
        ident = phone(path.split("/")[0])
        if ident is None:
            raise ValueError(f"malformed WhatsApp number in {url!r}")
        return ident
    if host in ("api.whatsapp.com", "web.whatsapp.com"):
        ident = phone(parse_qs(parts.query).get("phone", [""])[0])
        if ident is None:
            raise ValueError(f"malformed WhatsApp number in {url!r}")
        return ident
    if host == "chat.whatsapp.com" and path:
        return Identifier("chat_handle", f"whatsapp:{path.split('/')[0].lower()}")
    if host in ("t.me", "telegram.me", "telegram.dog"):
        segs = [s for s in path.split("/") if s]
        if not segs:
            raise ValueError(f"telegram link without handle: {url!r}")
        handle = "/".join(segs[:2]) if segs[0] in ("joinchat", "c", "s") and len(segs) > 1 else segs[0]
        if segs[0].startswith("+"):
            handle = segs[0]
        return Identifier("chat_handle", f"telegram:{handle.lower()}")
    if host in _SOCIAL_HOSTS:
        segs = [s for s in path.split("/") if s]
        if not segs or segs[0].lower() in _SOCIAL_RESERVED or not _HANDLE.match(segs[0].lstrip("@")):
            raise ValueError(f"social link without account: {url!r}")
        return Identifier("social_account", f"{_SOCIAL_HOSTS[host]}:{segs[0].lstrip('@').lower()}")
    if host in shorteners:
        if not path:
            raise ValueError(f"shortener link without code: {url!r}")
        return Identifier("shortener_url", f"{host}/{path}")
    try:
        addr = ipaddress.ip_address(host)
    except ValueError:
        return None
    return Identifier("ip_address", str(addr))


def extract_identifiers(html: bytes | str | None, source_fqdn: str = "",
                        shorteners: frozenset[str] | None = None,
                        skipped: Counter | None = None) -> list[Identifier]:
    """Identifiers in ``<a>`` and ``<link>`` hrefs, deduplicated in document order."""
    page = parse_page(html)
    out: dict[Identifier, None] = {}
    for href in [h for h, _ in page.anchors] + page.link_hrefs:
        try:
            ident = identifier_from_url(href, shorteners)
        except ValueError:
            if skipped is not None:
                skipped["malformed"] += 1
            continue
        if ident is not None:
            out.setdefault(ident, None)
    return list(out)


def extract_many(pages: Iterable[tuple[str, bytes | str]], shorteners=None,
                 skipped: Counter | None = None) -> list[tuple[Identifier, str]]:
    return [(ident, fqdn) for fqdn, html in pages for ident in extract_identifiers(html, fqdn, shorteners, skipped)]


@dataclass(frozen=True)
class IdentifierGraph:
    nodes: dict[Identifier, frozenset[str]]
    edges: dict[tuple[Identifier, Identifier], int]

    def domains(self, ident: Identifier) -> frozenset[str]:
        return self.nodes[ident]

    def weight(self, u: Identifier, v: Identifier) -> int:
        return self.edges.get((u, v) if u < v else (v, u), 0)


def build_graph(extractions: Iterable[tuple[Identifier, str]]) -> IdentifierGraph:
    domains: dict[Identifier, set[str]] = defaultdict(set)
    by_domain: dict[str, set[Identifier]] = defaultdict(set)
    for ident, fqdn in extractions:
        domains[ident].add(fqdn)
        by_domain[fqdn].add(ident)
    edges: Counter = Counter()
    for idents in by_domain.values():
        for u, v in combinations(sorted(idents), 2):
            edges[(u, v)] += 1
    nodes = {k: frozenset(domains[k]) for k in sorted(domains)}
    return IdentifierGraph(nodes, dict(sorted(edges.items())))


def jaccard_distance(a: frozenset | set, b: frozenset | set) -> float:
    union = len(a | b)
    if not union:
        return 0.0
    return 1.0 - len(a & b) / union


def identifier_distance(u: Identifier, v: Identifier, graph: IdentifierGraph) -> float:
    return jaccard_distance(graph.nodes[u], graph.nodes[v])


@dataclass(frozen=True)
class Merge:
    step: int
    left: tuple[str, ...]
    right: tuple[str, ...]
    distance: float

    @property
    def size(self) -> int:
        return len(self.left) + len(self.right)


@dataclass(frozen=True)
class ClusterResult:
    clusters: tuple[tuple[Identifier, ...], ...]
    domains: tuple[frozenset[str], ...]
    cutoff: float
    linkage: str
    merges: tuple[Merge, ...] = ()

    def labels(self) -> list[list[str]]:
        return [[i.label for i in c] for c in self.clusters]


def distance_matrix(graph: IdentifierGraph, order: Sequence[Identifier]) -> np.ndarray:
    doms = sorted({d for i in order for d in graph.nodes[i]})
    col = {d: k for k, d in enumerate(doms)}
    inc = np.zeros((len(order), len(doms)), dtype=np.float64)
    for r, ident in enumerate(order):
        for d in graph.nodes[ident]:
            inc[r, col[d]] = 1.0
    inter = inc @ inc.T
    sizes = inc.sum(axis=1)
    union = sizes[:, None] + sizes[None, :] - inter
    with np.errstate(invalid="ignore", divide="ignore"):
        dist = np.where(union > 0, 1.0 - inter / np.where(union > 0, union, 1.0), 0.0)
    np.fill_diagonal(dist, 0.0)
    return dist


def hierarchical_cluster(graph: IdentifierGraph, cutoff: float = DEFAULT_CUTOFF,
                         linkage: str = "average") -> ClusterResult:
    """Agglomerative clustering on Jaccard distance.

    Pairs are merged while the closest inter-cluster distance is below *cutoff*.
    Ties (within ``TIE_TOLERANCE``) go to the pair whose smallest members are
    lexicographically smallest. Nodes are ordered by label, so a cluster's
    representative row is always its smallest member.
    """
    if linkage not in LINKAGES:
        raise ValueError(f"unknown linkage {linkage!r}")
    if not graph.nodes:
        raise ValueError("cannot cluster an empty graph")
    order = sorted(graph.nodes, key=lambda i: i.label)
    n = len(order)
    dist = distance_matrix(graph, order)
    work = dist.copy()
    work[np.tril_indices(n)] = np.inf
    members: dict[int, list[int]] = {i: [i] for i in range(n)}
    merges = []
    threshold = cutoff - TIE_TOLERANCE
    while len(members) > 1:
        dmin = work.min()
        if not dmin < threshold:
            break
        flat = int(np.flatnonzero(work <= dmin + TIE_TOLERANCE)[0])
        i, j = divmod(flat, n)
        ni, nj = len(members[i]), len(members[j])
        # Lance-Williams update into row/column i (i < j)
        full = np.minimum(work, work.T)
        di, dj = full[i].copy(), full[j].copy()
        if linkage == "average":
            new = (ni * di + nj * dj) / (ni + nj)
        elif linkage == "single":
            new = np.minimum(di, dj)
        else:
            new = np.maximum(di, dj)
        merges.append(Merge(len(merges) + 1, tuple(order[k].label for k in members[i]),
                            tuple(order[k].label for k in members[j]), float(work[i, j])))
        members[i] = sorted(members[i] + members.pop(j))
        work[j, :] = np.inf
        work[:, j] = np.inf
        for k in members:
            if k == i:
                continue
            if k < i:
                work[k, i] = new[k]
            else:
                work[i, k] = new[k]
    groups = sorted(members.values())
    clusters = tuple(tuple(order[k] for k in g) for g in groups)
    domains = tuple(frozenset().union(*(graph.nodes[i] for i in c)) for c in clusters)
    return ClusterResult(clusters, domains, cutoff, linkage, tuple(merges))


@dataclass(frozen=True)
class ClusterRow:
    rank: int
    identifiers: tuple[str, ...]
    n_identifiers: int
    n_domains: int


def cluster_stats(result: ClusterResult | None) -> list[ClusterRow]:
    """Clusters by descending domain count, then identifier count (stable)."""
    if result is None or not result.clusters:
        return []
    rows = [(tuple(i.label for i in c), len(c), len(d)) for c, d in zip(result.clusters, result.domains)]
    rows.sort(key=lambda r: (-r[2], -r[1]))
    return [ClusterRow(k + 1, ids, ni, nd) for k, (ids, ni, nd) in enumerate(rows)]


def graph_jsonl(graph: IdentifierGraph) -> str:
    lines = []
    for ident, doms in graph.nodes.items():
        node = {"type": "node", "id": ident.label, "kind": ident.kind, "value": ident.value,
                "domains": len(doms)}
        if ident.country_code:
            node["country_code"] = ident.country_code
        lines.append(json.dumps(node, sort_keys=True, ensure_ascii=False))
    for (u, v), w in graph.edges.items():
        lines.append(json.dumps({"type": "edge", "source": u.label, "target": v.label, "weight": w},
                                sort_keys=True, ensure_ascii=False))
    return "".join(l + "\n" for l in lines)


def dendrogram_rows(result: ClusterResult) -> list[list]:
    return [[m.step, " ".join(m.left), " ".join(m.right), f"{m.distance:.6f}", m.size] for m in result.merges]
