"""Mutable state of a running scenario: zones, vhosts and the virtual clock."""

from __future__ import annotations

import copy
import random
import threading
from dataclasses import replace
from email.utils import formatdate

from .. import content as gen
from ..collector import load_fingerprints
from ..errors import InputError
from .scenario import Event, Scenario, Vhost

NOT_FOUND_GENERIC = (b"<!DOCTYPE html><html><head><title>404 Not Found</title></head>"
                     b"<body><h1>Not Found</h1><p>No site is configured for this host.</p></body></html>")


def render_content(spec: dict, seed_key: str) -> bytes:
    if "html" in spec:
        return str(spec["html"]).encode("utf-8")
    rng = random.Random(f"{seed_key}:{spec.get('seed', 0)}")
    kind = spec.get("generator", "empty")
    if kind == "benign":
        html = gen.benign_page(rng, spec.get("org", "Example Corp"), spec.get("source", "fortune500"))
    elif kind == "gambling":
        html = gen.gambling_page(rng, spec.get("phones", ()), spec.get("handles", ()), spec.get("links", ()),
                                 bool(spec.get("popunder", False)), int(spec.get("terms", 5)))
    elif kind == "comming_soon":
        html = gen.comming_soon_abuse(rng)
    elif kind == "adult":
        html = gen.adult_page(rng, spec.get("links", ()))
    elif kind == "japanese_hack":
        html = gen.japanese_hack_page(rng)
    elif kind == "coming_soon":
        html = gen.coming_soon_page(spec.get("org", "Example Corp"))
    elif kind == "slot_museum":
        html = gen.slot_museum_page()
    elif kind == "indonesian":
        html = gen.indonesian_page(rng, spec.get("org", "Universitas Contoh"))
    else:
        html = "<!DOCTYPE html><html><head><title></title></head><body></body></html>"
    return html.encode("utf-8")


def render_sitemap(spec: dict, seed_key: str, host: str) -> bytes:
    if "xml" in spec:
        return str(spec["xml"]).encode("utf-8")
    rng = random.Random(f"{seed_key}:sitemap:{spec.get('seed', 0)}")
    base = f"http://{host}"
    kind = spec["generator"]
    if kind == "index":
        return gen.sitemap_index_xml([str(c) for c in spec.get("children", [])])
    count = int(spec.get("count", 10))
    urls = gen.random_urls(rng, base, count) if kind == "random" else gen.slug_urls(rng, base, count)
    return gen.sitemap_xml(urls, int(spec.get("pad", 0)))


class World:
    """Scenario state guarded by one lock; requests see a consistent event prefix."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.lock = threading.RLock()
        self.now = scenario.start
        self.zones = copy.deepcopy(scenario.zones)
        self.vhosts: dict[str, Vhost] = {k: replace(v) for k, v in scenario.vhosts.items()}
        self.faults = dict(scenario.faults)
        self.pending = list(scenario.timeline)
        self.applied: list[Event] = []
        self.generation: dict[str, int] = {k: 0 for k in self.vhosts}
        self._cache: dict[tuple, bytes] = {}
        self._fingerprints = {f.id: f for f in load_fingerprints()}
        self._reindex()

    # --- bookkeeping -----------------------------------------------------
    def _reindex(self) -> None:
        index = {}
        for v in self.vhosts.values():
            index[v.name] = v.name
            for a in v.aliases:
                index[a] = v.name
        self.host_index = index

    def clock(self) -> float:
        with self.lock:
            return self.now

    def advance_time(self, to: float) -> list[Event]:
        with self.lock:
            if to < self.now:
                raise InputError(f"virtual time cannot go back ({to} < {self.now})")
            due = [e for e in self.pending if e.at <= to]
            self.pending = [e for e in self.pending if e.at > to]
            for event in due:
                self._apply(event)
                self.applied.append(event)
            self.now = to
            return due

    def _apply(self, ev: Event) -> None:
        p = ev.params
        if ev.kind == "release":
            vh = self.vhosts[p["vhost"]]
            vh.state = "released"
            vh.content, vh.sitemap, vh.robots, vh.files = {}, None, None, {}
            self.generation[vh.name] += 1
        elif ev.kind in ("register", "set_content"):
            vh = self.vhosts[p["vhost"]]
            vh.state = "active"
            vh.content = p.get("content") or {}
            vh.sitemap = p.get("sitemap")
            vh.robots = p.get("robots")
            vh.files = {str(k): str(v) for k, v in (p.get("files") or {}).items()}
            if "aliases" in p:
                vh.aliases = tuple(p["aliases"])
            self.generation[vh.name] += 1
            self._reindex()
        elif ev.kind in ("correct", "set_zone"):
            if p.get("records"):
                self.zones[p["name"]] = p["records"]
            else:
                self.zones.pop(p["name"], None)
        elif ev.kind == "set_reachability":
            self.vhosts[p["vhost"]].reachability.update(p["reachability"])

    def inject_fault(self, name: str, kind: str | None) -> None:
        with self.lock:
            if kind is None:
                self.faults.pop(name, None)
            else:
                self.faults[name] = kind

    # --- transport-level facts --------------------------------------------
    def knows_address(self, address: str) -> bool:
        with self.lock:
            return address in self.scenario.addresses or any(v.address == address for v in self.vhosts.values())

    def layer(self, address: str, layer: str) -> bool:
        with self.lock:
            return any(v.reachability.get(layer, True) for v in self.vhosts.values() if v.address == address)

    # --- HTTP --------------------------------------------------------------
    def _cached(self, key: tuple, build) -> bytes:
        if key not in self._cache:
            self._cache[key] = build()
        return self._cache[key]

    def not_found_page(self, provider: str | None) -> tuple[int, bytes]:
        fp = self._fingerprints.get(provider or "")
        if fp is None:
            return 404, NOT_FOUND_GENERIC
        marker = fp.markers[0]
        body = (f"<!DOCTYPE html><html><head><title>{marker}</title></head><body><h1>{marker}</h1>"
                f"<p>The requested resource is not available.</p></body></html>").encode("utf-8")
        return sorted(fp.statuses)[0], body

    def respond(self, host: str, path: str) -> tuple[int, dict[str, str], bytes] | None:
        """Response for a request; ``None`` means the connection is dropped without a status line."""
        host = host.split(":", 1)[0].lower().rstrip(".")
        path = path.split("?", 1)[0] or "/"
        with self.lock:
            headers = {"Date": formatdate(self.now, usegmt=True), "Server": "dsentinel-harness"}
            vname = self.host_index.get(host)
            if vname is None:
                return 404, {**headers, "Content-Type": "text/html"}, NOT_FOUND_GENERIC
            vh = self.vhosts[vname]
            if not vh.reachability.get("http", True):
                return None
            if vh.state == "released":
                status, body = self.not_found_page(vh.provider)
                return status, {**headers, "Content-Type": "text/html"}, body
            gen_no = self.generation[vname]
            seed_key = f"{self.scenario.seed}:{vname}:{gen_no}"
            if path == "/":
                body = self._cached((vname, gen_no, "/"), lambda: render_content(vh.content, seed_key))
                return vh.status, {**headers, "Content-Type": "text/html; charset=utf-8"}, body
            if path == "/sitemap.xml" and vh.sitemap is not None:
                body = self._cached((vname, gen_no, path), lambda: render_sitemap(vh.sitemap, seed_key, host))
                return 200, {**headers, "Content-Type": "application/xml"}, body
            if path == "/robots.txt" and vh.robots is not None:
                return 200, {**headers, "Content-Type": "text/plain"}, vh.robots.encode("utf-8")
            if path in vh.files:
                return 200, {**headers, "Content-Type": "text/html; charset=utf-8"}, vh.files[path].encode("utf-8")
            return 404, {**headers, "Content-Type": "text/html"}, NOT_FOUND_GENERIC

    # --- DNS ---------------------------------------------------------------
    def name_exists(self, name: str) -> bool:
        suffix = "." + name
        return name in self.zones or any(z.endswith(suffix) for z in self.zones)

    def resolve(self, qname: str, qtype: str) -> tuple[str, list[tuple[str, str, list[str]]]]:
        """(rcode, [(owner, type, values)]) following in-zone CNAMEs without loops."""
        with self.lock:
            fault = self.faults.get(qname)
            if fault:
                return fault.upper(), []
            answer = []
            seen = set()
            name = qname
            while True:
                seen.add(name)
                records = self.zones.get(name)
                if records is None:
                    return ("NOERROR" if self.name_exists(name) else "NXDOMAIN"), answer
                if "CNAME" in records and qtype != "CNAME":
                    target = records["CNAME"][0]
                    answer.append((name, "CNAME", [target]))
                    if target in seen:
                        return "NOERROR", answer
                    name = target
                    continue
                if records.get(qtype):
                    answer.append((name, qtype, list(records[qtype])))
                return "NOERROR", answer
