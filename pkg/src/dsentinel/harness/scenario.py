"""Scenario documents for the mock cloud: zones, virtual hosts and a timeline."""

from __future__ import annotations

import ipaddress
from dataclasses import dataclass, field
from importlib import resources
from typing import Any

import yaml

from ..certs import parse_time
from ..errors import InputError, ScenarioError
from ..names import is_valid_fqdn, normalize_fqdn

SCENARIO_VERSION = 1
RECORD_TYPES = ("A", "AAAA", "CNAME", "CAA", "NS")
EVENT_KINDS = ("release", "register", "correct", "set_zone", "set_reachability", "set_content")
VHOST_STATES = ("active", "released")
LAYERS = ("icmp", "tcp", "http")
CONTENT_GENERATORS = ("benign", "gambling", "comming_soon", "adult", "japanese_hack", "coming_soon",
                      "slot_museum", "indonesian", "empty")
SITEMAP_GENERATORS = ("slug", "random", "index")
FAULT_KINDS = ("servfail", "refused", "drop")


@dataclass
class Vhost:
    name: str
    address: str
    provider: str | None = None
    state: str = "active"
    aliases: tuple[str, ...] = ()
    content: dict = field(default_factory=dict)
    sitemap: dict | None = None
    robots: str | None = None
    files: dict[str, str] = field(default_factory=dict)
    reachability: dict[str, bool] = field(default_factory=lambda: {k: True for k in LAYERS})
    status: int = 200


@dataclass(frozen=True)
class Event:
    at: float
    kind: str
    line: int
    params: dict

    def describe(self) -> str:
        target = self.params.get("vhost") or self.params.get("name") or ""
        return f"{self.kind} {target}".strip()


@dataclass
class Scenario:
    name: str
    seed: int
    start: float
    zones: dict[str, dict[str, list[str]]]
    vhosts: dict[str, Vhost]
    timeline: list[Event]
    faults: dict[str, str] = field(default_factory=dict)
    addresses: tuple[str, ...] = ()
    # names an end-to-end run ingests as its monitored list
    monitor: tuple[str, ...] = ()


def _line_index(node, path=(), out=None) -> dict[tuple, int]:
    out = {} if out is None else out
    out[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        for key, value in node.value:
            k = key.value
            out[path + (k,)] = key.start_mark.line + 1
            _line_index(value, path + (k,), out)
    elif isinstance(node, yaml.SequenceNode):
        for i, item in enumerate(node.value):
            _line_index(item, path + (i,), out)
    return out


class _Checker:
    def __init__(self, lines: dict[tuple, int]):
        self.lines = lines
        self.errors: list[str] = []

    def line(self, path: tuple) -> int:
        while path and path not in self.lines:
            path = path[:-1]
        return self.lines.get(path, 1)

    def err(self, path: tuple, msg: str) -> None:
        where = "/".join(str(p) for p in path) or "<root>"
        self.errors.append(f"line {self.line(path)}: {where}: {msg}")


def _records(chk: _Checker, path: tuple, spec: Any) -> dict[str, list[str]]:
    if spec is None:
        return {}
    if not isinstance(spec, dict):
        chk.err(path, "record set must be a mapping of type -> values")
        return {}
    out: dict[str, list[str]] = {}
    for rtype, values in spec.items():
        rt = str(rtype).upper()
        if rt not in RECORD_TYPES:
            chk.err(path + (rtype,), f"unsupported record type {rtype!r}")
            continue
        vals = values if isinstance(values, list) else [values]
        clean = []
        for i, v in enumerate(vals):
            v = str(v)
            if rt in ("A", "AAAA"):
                try:
                    addr = ipaddress.ip_address(v)
                    if (addr.version == 4) != (rt == "A"):
                        raise ValueError
                except ValueError:
                    chk.err(path + (rtype, i), f"bad {rt} address {v!r}")
                    continue
            elif rt in ("CNAME", "NS"):
                if not is_valid_fqdn(v):
                    chk.err(path + (rtype, i), f"bad target name {v!r}")
                    continue
                v = normalize_fqdn(v)
            clean.append(v)
        out[rt] = clean
    if "CNAME" in out and (len(out["CNAME"]) != 1 or len(out) > 1):
        chk.err(path, "CNAME must be the only record at a name and have exactly one target")
    return out


def _content(chk: _Checker, path: tuple, spec: Any) -> dict:
    if spec is None:
        return {}
    if isinstance(spec, str):
        return {"html": spec}
    if not isinstance(spec, dict):
        chk.err(path, "content must be a mapping or literal html")
        return {}
    if "html" not in spec and spec.get("generator") not in CONTENT_GENERATORS:
        chk.err(path, f"content needs 'html' or a generator from {list(CONTENT_GENERATORS)}")
    return dict(spec)


def _sitemap(chk: _Checker, path: tuple, spec: Any) -> dict | None:
    if spec is None:
        return None
    if isinstance(spec, str):
        return {"xml": spec}
    if not isinstance(spec, dict) or ("xml" not in spec and spec.get("generator") not in SITEMAP_GENERATORS):
        chk.err(path, f"sitemap needs 'xml' or a generator from {list(SITEMAP_GENERATORS)}")
        return None
    return dict(spec)


def _reach(chk: _Checker, path: tuple, spec: Any, base: dict[str, bool]) -> dict[str, bool]:
    out = dict(base)
    if spec is None:
        return out
    if not isinstance(spec, dict):
        chk.err(path, "reachability must be a mapping")
        return out
    for k, v in spec.items():
        if k not in LAYERS or not isinstance(v, bool):
            chk.err(path + (k,), f"reachability keys are {list(LAYERS)} with boolean values")
            continue
        out[k] = v
    return out


def parse_scenario(text: str, name: str = "<scenario>") -> Scenario:
    """Parse and validate a scenario; all problems are reported together with line numbers."""
    try:
        node = yaml.compose(text)
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark else 1
        raise ScenarioError([f"line {line}: invalid YAML: {getattr(exc, 'problem', exc)}"]) from None
    chk = _Checker(_line_index(node) if node is not None else {})
    if not isinstance(doc, dict):
        raise ScenarioError(["line 1: scenario must be a mapping"])
    for key in doc:
        if key not in ("version", "name", "seed", "start", "zones", "vhosts", "timeline", "faults", "addresses",
                       "monitor"):
            chk.err((key,), "unknown section")
    if doc.get("version") != SCENARIO_VERSION:
        chk.err(("version",), f"version must be {SCENARIO_VERSION}")
    seed = doc.get("seed", 0)
    if not isinstance(seed, int):
        chk.err(("seed",), "seed must be an integer")
        seed = 0
    try:
        start = parse_time(doc.get("start", 0))
    except InputError as exc:
        chk.err(("start",), str(exc))
        start = 0.0

    zones: dict[str, dict[str, list[str]]] = {}
    for zname, spec in (doc.get("zones") or {}).items():
        if not is_valid_fqdn(str(zname)):
            chk.err(("zones", zname), "invalid name")
            continue
        zones[normalize_fqdn(str(zname))] = _records(chk, ("zones", zname), spec)

    vhosts: dict[str, Vhost] = {}
    for vname, spec in (doc.get("vhosts") or {}).items():
        path = ("vhosts", vname)
        if not is_valid_fqdn(str(vname)) or not isinstance(spec, dict):
            chk.err(path, "vhost needs a valid name and a mapping body")
            continue
        try:
            address = str(ipaddress.ip_address(str(spec.get("address", ""))))
        except ValueError:
            chk.err(path + ("address",), "vhost needs an IP address")
            address = "0.0.0.0"
        state = spec.get("state", "active")
        if state not in VHOST_STATES:
            chk.err(path + ("state",), f"state must be one of {list(VHOST_STATES)}")
        aliases = []
        for i, a in enumerate(spec.get("aliases") or []):
            if not is_valid_fqdn(str(a)):
                chk.err(path + ("aliases", i), f"invalid alias {a!r}")
            else:
                aliases.append(normalize_fqdn(str(a)))
        files = spec.get("files") or {}
        if not isinstance(files, dict):
            chk.err(path + ("files",), "files must map paths to html")
            files = {}
        vhosts[normalize_fqdn(str(vname))] = Vhost(
            normalize_fqdn(str(vname)), address, spec.get("provider"), state, tuple(aliases),
            _content(chk, path + ("content",), spec.get("content")),
            _sitemap(chk, path + ("sitemap",), spec.get("sitemap")), spec.get("robots"),
            {str(k): str(v) for k, v in files.items()},
            _reach(chk, path + ("reachability",), spec.get("reachability"), {k: True for k in LAYERS}),
            int(spec.get("status", 200)),
        )

    timeline: list[Event] = []
    prev_at = None
    for i, ev in enumerate(doc.get("timeline") or []):
        path = ("timeline", i)
        if not isinstance(ev, dict):
            chk.err(path, "event must be a mapping")
            continue
        kind = ev.get("event")
        if kind not in EVENT_KINDS:
            chk.err(path + ("event",), f"unknown event kind {kind!r}")
            continue
        try:
            at = parse_time(ev.get("at"))
        except InputError as exc:
            chk.err(path + ("at",), str(exc))
            continue
        if prev_at is not None and at < prev_at:
            chk.err(path + ("at",), "timeline events must be sorted by time")
        if at < start:
            chk.err(path + ("at",), "event precedes scenario start")
        prev_at = at
        params = {k: v for k, v in ev.items() if k not in ("event", "at")}
        if kind in ("release", "register", "set_reachability", "set_content"):
            target = normalize_fqdn(str(params.get("vhost", ""))) if is_valid_fqdn(str(params.get("vhost", ""))) else None
            if target not in vhosts:
                chk.err(path + ("vhost",), f"event references unknown vhost {params.get('vhost')!r}")
                continue
            params["vhost"] = target
        if kind in ("register", "set_content"):
            params["content"] = _content(chk, path + ("content",), params.get("content"))
            params["sitemap"] = _sitemap(chk, path + ("sitemap",), params.get("sitemap"))
        if kind == "set_reachability":
            params["reachability"] = _reach(chk, path, {k: v for k, v in params.items() if k in LAYERS}, {})
        if kind in ("correct", "set_zone"):
            zname = str(params.get("name", ""))
            if not is_valid_fqdn(zname):
                chk.err(path + ("name",), "event needs a valid zone name")
                continue
            params["name"] = normalize_fqdn(zname)
            params["records"] = _records(chk, path + ("records",), params.get("records"))
        timeline.append(Event(at, kind, chk.line(path), params))

    faults = {}
    for fname, kind in (doc.get("faults") or {}).items():
        if kind not in FAULT_KINDS:
            chk.err(("faults", fname), f"fault must be one of {list(FAULT_KINDS)}")
        else:
            faults[normalize_fqdn(str(fname))] = kind
    for vname, vh in vhosts.items():
        for alias in vh.aliases:
            if alias not in zones:
                chk.err(("vhosts", vname, "aliases"), f"alias {alias!r} has no zone entry")
    monitor = []
    for i, m in enumerate(doc.get("monitor") or []):
        if not is_valid_fqdn(str(m)):
            chk.err(("monitor", i), f"invalid name {m!r}")
        else:
            monitor.append(normalize_fqdn(str(m)))
    if chk.errors:
        raise ScenarioError(chk.errors)
    return Scenario(str(doc.get("name", name)), seed, start, zones, vhosts, timeline, faults,
                    tuple(str(a) for a in doc.get("addresses") or ()), tuple(monitor))


def load_scenario(source: str) -> Scenario:
    """Load a scenario from a file path or a bundled scenario name."""
    if "\n" in source:
        return parse_scenario(source)
    if source in bundled_scenarios():
        text = resources.files("dsentinel").joinpath(f"data/scenarios/{source}.yaml").read_text("utf-8")
        return parse_scenario(text, source)
    try:
        with open(source, encoding="utf-8") as fh:
            return parse_scenario(fh.read(), source)
    except OSError as exc:
        raise InputError(f"cannot read scenario {source!r}: {exc.strerror}") from None


def bundled_scenarios() -> list[str]:
    root = resources.files("dsentinel").joinpath("data/scenarios")
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))
