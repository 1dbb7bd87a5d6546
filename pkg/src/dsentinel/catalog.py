"""Cloud provider catalog: suffix patterns with freetext slots plus published IP ranges.

The catalog answers two questions for the collector: does a CNAME target end in a
known cloud suffix (and which label did the customer choose), and does an address
fall inside a provider-published block.
"""

from __future__ import annotations

import csv
import io
import ipaddress
import json
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from typing import Mapping, Union

from .errors import EmptyFeedError, FeedFormatError, InputError
from .names import normalize_fqdn

log = logging.getLogger(__name__)

SERVICE_KINDS = frozenset(
    {
        "web_app", "vm", "storage", "traffic_manager", "cdn", "orchestration", "cms",
        "load_balancer", "api", "frontdoor", "service_bus", "blob", "unknown",
    }
)

AWS_REGIONS = (
    "us-east-1", "us-east-2", "us-west-1", "us-west-2", "us-gov-west-1", "us-gov-east-1",
    "af-south-1", "ap-east-1", "ap-south-1", "ap-south-2", "ap-southeast-1",
    "ap-southeast-2", "ap-southeast-3", "ap-southeast-4", "ap-northeast-1",
    "ap-northeast-2", "ap-northeast-3", "ca-central-1", "ca-west-1", "eu-central-1",
    "eu-central-2", "eu-west-1", "eu-west-2", "eu-west-3", "eu-south-1", "eu-south-2",
    "eu-north-1", "il-central-1", "me-south-1", "me-central-1", "sa-east-1",
    "cn-north-1", "cn-northwest-1",
)
REGION_ALIASES = {"@aws-regions": AWS_REGIONS}

FREETEXT = "[freetext]"
_LABEL = r"[a-z0-9_](?:[a-z0-9_-]*[a-z0-9_])?"
_PREFIX_ALT = re.compile(r"^\[([^\]]*\|[^\]]*)\]")

AWS_SERVICE_KINDS = {
    "S3": "storage",
    "EC2": "vm",
    "CLOUDFRONT": "cdn",
    "API_GATEWAY": "api",
    "AMAZON": "unknown",
}
AZURE_SERVICE_KINDS = {
    "AzureAppService": "web_app",
    "AzureTrafficManager": "traffic_manager",
    "AzureFrontDoor": "frontdoor",
    "AzureCDN": "cdn",
    "Storage": "storage",
    "ServiceBus": "service_bus",
    "AzureLoadBalancer": "load_balancer",
}

Document = Union[str, bytes, Mapping]


@dataclass(frozen=True)
class CloudService:
    provider: str
    service_kind: str
    suffix_pattern: str
    user_nameable: bool
    regions: tuple[str, ...] = ()

    def __post_init__(self):
        if self.user_nameable and self.suffix_pattern.count(FREETEXT) != 1:
            raise InputError(
                f"user-nameable pattern needs exactly one {FREETEXT} slot: {self.suffix_pattern!r}"
            )

    @property
    def fixed_suffix(self) -> str:
        """Literal part of the pattern after the freetext slot."""
        _, _, rest = self.suffix_pattern.partition(FREETEXT)
        return rest


@dataclass(frozen=True)
class IpTag:
    network: ipaddress.IPv4Network | ipaddress.IPv6Network
    provider: str
    service_kind: str
    feed_tag: str = ""

    def as_service(self) -> CloudService:
        return CloudService(self.provider, self.service_kind, f"ip:{self.network}", False)


@dataclass(frozen=True)
class SuffixMatch:
    service: CloudService
    label: str
    region: str | None = None


class _CompiledPattern:
    def __init__(self, service: CloudService):
        self.service = service
        pattern = "REGION".join(p.lower() for p in service.suffix_pattern.strip().split("REGION"))
        env_alts: list[str] = []
        m = _PREFIX_ALT.match(pattern)
        if m:
            env_alts = [a.strip() for a in m.group(1).split("|") if a.strip()]
            pattern = pattern[m.end():]
        if not pattern.startswith(FREETEXT):
            raise InputError(f"pattern must start with {FREETEXT}: {service.suffix_pattern!r}")
        rest = pattern[len(FREETEXT):]
        if env_alts:
            alt = "|".join(re.escape(a) for a in sorted(env_alts, key=len, reverse=True))
            head = rf"(?P<outer>(?:{_LABEL}\.)*)(?P<env>{alt})(?P<name>[a-z0-9_-]+)"
        else:
            head = rf"(?P<ft>(?:{_LABEL}\.)*{_LABEL})"
        if service.regions:
            region_re = "|".join(re.escape(r) for r in sorted(service.regions, key=len, reverse=True))
        else:
            region_re = r"[a-z0-9-]+"
        tail = "".join(
            rf"(?P<region>{region_re})" if piece == "REGION" else re.escape(piece)
            for piece in re.split(r"(REGION)", rest)
        )
        self.regex = re.compile(rf"^{head}{tail}$")
        self.specificity = len(rest.replace("REGION", ""))

    def match(self, name: str) -> SuffixMatch | None:
        m = self.regex.match(name)
        if not m:
            return None
        groups = m.groupdict()
        if "ft" in groups and groups["ft"] is not None:
            label = groups["ft"]
        else:
            label = (groups.get("outer") or "") + groups["name"]
        return SuffixMatch(self.service, label, groups.get("region"))


def _parse_bool(value: str) -> bool:
    v = value.strip().lower()
    if "=" in v:
        v = v.split("=", 1)[1].strip()
    if v in ("true", "yes", "1"):
        return True
    if v in ("false", "no", "0", ""):
        return False
    raise ValueError(f"not a boolean: {value!r}")


def _parse_regions(value: str | None) -> tuple[str, ...]:
    value = (value or "").strip()
    if not value:
        return ()
    if value in REGION_ALIASES:
        return REGION_ALIASES[value]
    return tuple(r.strip().lower() for r in value.split("|") if r.strip())


@dataclass
class CloudCatalog:
    """Immutable-after-load catalog of cloud suffix patterns and IP blocks."""

    services: list[CloudService] = field(default_factory=list)
    ip_ranges: list[IpTag] = field(default_factory=list)
    feed_timestamps: dict[str, str] = field(default_factory=dict)
    skipped: Counter = field(default_factory=Counter)

    def __post_init__(self):
        self._rebuild()

    def _rebuild(self) -> None:
        seen = set()
        for svc in self.services:
            key = (svc.provider, svc.suffix_pattern)
            if key in seen:
                raise InputError(f"duplicate catalog entry {key}")
            seen.add(key)
        self._compiled = sorted(
            (_CompiledPattern(s) for s in self.services),
            key=lambda c: -c.specificity,
        )
        # (version, prefixlen) -> {network int: IpTag}; longest prefix wins, ties first-loaded
        index: dict[tuple[int, int], dict[int, IpTag]] = {}
        for tag in self.ip_ranges:
            net = tag.network
            bucket = index.setdefault((net.version, net.prefixlen), {})
            key = int(net.network_address)
            prior = bucket.get(key)
            if prior is None:
                bucket[key] = tag
            elif prior.provider != tag.provider:
                log.info("overlapping block %s: keeping %s over %s", net, prior.provider, tag.provider)
            elif prior.service_kind == "unknown" and tag.service_kind != "unknown":
                bucket[key] = tag
        self._ip_index = index
        self._prefixes = {
            v: sorted({p for (ver, p) in index if ver == v}, reverse=True) for v in (4, 6)
        }

    @classmethod
    def builtin(cls) -> "CloudCatalog":
        """Catalog holding only the bundled suffix table (no IP ranges)."""
        return cls(services=list(builtin_services()))

    def match_suffix(self, fqdn: str) -> SuffixMatch | None:
        """Match *fqdn* against every suffix pattern on whole-label boundaries.

        The most specific pattern (longest fixed suffix) wins.
        """
        name = normalize_fqdn(fqdn)
        for compiled in self._compiled:
            hit = compiled.match(name)
            if hit is not None:
                return hit
        return None

    def match_ip(self, ip: str | ipaddress.IPv4Address | ipaddress.IPv6Address) -> IpTag | None:
        try:
            addr = ipaddress.ip_address(ip)
        except ValueError as exc:
            raise InputError(str(exc)) from None
        value = int(addr)
        bits = addr.max_prefixlen
        for plen in self._prefixes[addr.version]:
            key = (value >> (bits - plen)) << (bits - plen) if plen else 0
            tag = self._ip_index[(addr.version, plen)].get(key)
            if tag is not None:
                return tag
        return None

    def with_services(self, services: list[CloudService]) -> "CloudCatalog":
        existing = {(s.provider, s.suffix_pattern) for s in self.services}
        merged = self.services + [s for s in services if (s.provider, s.suffix_pattern) not in existing]
        return CloudCatalog(merged, list(self.ip_ranges), dict(self.feed_timestamps), Counter(self.skipped))


def _service_from_row(row: Mapping) -> CloudService:
    kind = (row.get("service_kind") or "unknown").strip().lower()
    return CloudService(
        provider=row["provider"].strip().lower(),
        service_kind=kind if kind in SERVICE_KINDS else "unknown",
        suffix_pattern=row["pattern"].strip(),
        user_nameable=_parse_bool(row.get("user_nameable") or "false"),
        regions=_parse_regions(row.get("regions")),
    )


def parse_suffix_csv(text: str) -> list[CloudService]:
    """Parse the normalized catalog CSV (provider, service_kind, pattern, user_nameable[, regions])."""
    return [_service_from_row(row) for row in csv.DictReader(io.StringIO(text))]


def builtin_services() -> list[CloudService]:
    text = resources.files("dsentinel").joinpath("data/cloud_suffixes.csv").read_text("utf-8")
    return parse_suffix_csv(text)


def _decode(provider: str, doc: Document):
    if isinstance(doc, Mapping):
        return doc
    if isinstance(doc, bytes):
        try:
            doc = doc.decode("utf-8-sig")
        except UnicodeDecodeError as exc:
            raise FeedFormatError(provider, f"not UTF-8: {exc}") from None
    text = doc.strip()
    if text.startswith("{"):
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            raise FeedFormatError(provider, f"invalid JSON: {exc}") from None
    return text


def _net(value):
    return ipaddress.ip_network(str(value).strip(), strict=False)


def _parse_json_feed(provider: str, data: Mapping, skipped: Counter):
    """Returns (ip tags, timestamp) for AWS, Azure service-tag and Google cloud.json layouts."""
    tags: list[IpTag] = []
    if "values" in data:  # Azure service tags
        for entry in data["values"]:
            props = entry.get("properties", {})
            system = props.get("systemService") or ""
            kind = AZURE_SERVICE_KINDS.get(system, "unknown")
            for prefix in props.get("addressPrefixes", []):
                try:
                    tags.append(IpTag(_net(prefix), provider, kind, entry.get("name", "")))
                except ValueError:
                    skipped[provider] += 1
        return tags, str(data.get("changeNumber", ""))
    if "prefixes" in data:
        stamp = str(data.get("createDate") or data.get("creationTime") or data.get("syncToken") or "")
        entries = list(data["prefixes"]) + list(data.get("ipv6_prefixes", []))
        for entry in entries:
            raw = entry.get("ip_prefix") or entry.get("ipv6_prefix") or entry.get("ipv4Prefix") or entry.get("ipv6Prefix")
            service = str(entry.get("service", ""))
            kind = AWS_SERVICE_KINDS.get(service.upper(), "unknown")
            try:
                if raw is None:
                    raise ValueError("no prefix field")
                tags.append(IpTag(_net(raw), provider, kind, service))
            except ValueError:
                skipped[provider] += 1
        return tags, stamp
    raise FeedFormatError(provider, "JSON lacks 'prefixes' or 'values'")


def _rows(reader, provider: str):
    try:
        yield from reader
    except csv.Error as exc:
        raise FeedFormatError(provider, f"unreadable CSV: {exc}") from None


def _parse_csv_feed(provider: str, text: str, skipped: Counter):
    reader = csv.DictReader(io.StringIO(text))
    try:
        header = [h.strip().lower() for h in (reader.fieldnames or [])]
    except csv.Error as exc:
        raise FeedFormatError(provider, f"unreadable CSV: {exc}") from None
    if "pattern" in header:
        services = []
        for row in _rows(reader, provider):
            try:
                services.append(_service_from_row(row))
            except (ValueError, KeyError, AttributeError):
                skipped[provider] += 1
        return [], services
    if "cidr" in header:
        tags = []
        for row in _rows(reader, provider):
            try:
                kind = (row.get("service_kind") or row.get("service") or "unknown").strip().lower()
                tags.append(IpTag(
                    _net(row["cidr"]),
                    (row.get("provider") or provider).strip().lower(),
                    kind if kind in SERVICE_KINDS else "unknown",
                    (row.get("tag") or "").strip(),
                ))
            except (ValueError, KeyError, AttributeError):
                skipped[provider] += 1
        return tags, []
    raise FeedFormatError(provider, "CSV header needs a 'pattern' or 'cidr' column")


def load_provider_ranges(feed_documents: Mapping[str, Document], include_builtin: bool = True) -> CloudCatalog:
    """Build a catalog from provider-native JSON feeds and/or normalized CSV documents.

    Malformed entries are skipped and counted in ``catalog.skipped``.
    """
    if not feed_documents:
        raise EmptyFeedError("no feed documents supplied")
    tags: list[IpTag] = []
    services: list[CloudService] = []
    stamps: dict[str, str] = {}
    skipped: Counter = Counter()
    for provider, doc in feed_documents.items():
        provider = provider.strip().lower()
        data = _decode(provider, doc)
        if isinstance(data, Mapping):
            parsed, stamp = _parse_json_feed(provider, data, skipped)
            tags.extend(parsed)
            stamps[provider] = stamp
        else:
            parsed_tags, parsed_services = _parse_csv_feed(provider, data, skipped)
            tags.extend(parsed_tags)
            services.extend(parsed_services)
    if not tags and not services:
        raise EmptyFeedError("feeds parsed to zero entries")
    if include_builtin:
        known = {(s.provider, s.suffix_pattern) for s in services}
        services.extend(s for s in builtin_services() if (s.provider, s.suffix_pattern) not in known)
    return CloudCatalog(services=services, ip_ranges=tags, feed_timestamps=stamps, skipped=skipped)


def load_feed_files(paths: Mapping[str, str], include_builtin: bool = True) -> CloudCatalog:
    docs = {}
    for provider, path in paths.items():
        with open(path, "rb") as fh:
            docs[provider] = fh.read()
    return load_provider_ranges(docs, include_builtin=include_builtin)


def default_catalog() -> CloudCatalog:
    """Builtin suffix table plus the bundled sample provider feeds."""
    base = resources.files("dsentinel").joinpath("data/feeds")
    docs = {p: base.joinpath(f"{p}.json").read_bytes() for p in ("aws", "azure", "google")}
    return load_provider_ranges(docs)
