"""Certificate-transparency issuance analysis and CAA posture checks."""

from __future__ import annotations

import json
import statistics
from collections import Counter
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Iterable, Sequence

from .errors import InputError, TransientResolutionError
from .names import ancestors, normalize_fqdn

DAY = 86400
DEFAULT_K = 3.0
TRAILING_WINDOWS = 12
MIN_TRAILING = 3

FREE_CAS = (
    "letsencrypt.org", "pki.goog", "sectigo.com", "zerossl.com", "amazon.com", "amazontrust.com",
    "awstrust.com", "amazonaws.com", "digicert.com", "buypass.com",
)


def parse_time(value) -> float:
    """Epoch seconds from a number or an ISO-8601 string (naive means UTC)."""
    if isinstance(value, (int, float)):
        return float(value)
    text = str(value).strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    try:
        dt = datetime.fromisoformat(text)
    except ValueError:
        raise InputError(f"bad timestamp {value!r}") from None
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


@dataclass(frozen=True)
class CertRecord:
    names: tuple[str, ...]
    issuer: str
    not_before: float
    wildcard: bool
    single_san: bool


def classify_cert(names: Sequence[str], issuer: str, not_before) -> CertRecord:
    cleaned = tuple(dict.fromkeys(n.strip().lower().rstrip(".") for n in names if n and n.strip()))
    if not cleaned:
        raise InputError("certificate entry without SAN names")
    wildcard = any(n.startswith("*.") for n in cleaned)
    return CertRecord(cleaned, issuer.strip(), parse_time(not_before), wildcard,
                      len(cleaned) == 1 and not wildcard)


def read_cert_lines(lines: Iterable[str], source: str = "<certs>") -> list[CertRecord]:
    out = []
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
            out.append(classify_cert(doc["names"], doc.get("issuer", ""), doc["not_before"]))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise InputError(f"{source}:{lineno}: bad certificate record ({exc})") from None
        except InputError as exc:
            raise InputError(f"{source}:{lineno}: {exc}") from None
    return out


@dataclass(frozen=True)
class IssuanceWindow:
    start: float
    single_san: int
    multi_san: int
    top_issuer: str
    share: float
    issuer_shares: tuple[tuple[str, float], ...]
    threshold: float | None
    anomaly: bool

    @property
    def total(self) -> int:
        return self.single_san + self.multi_san


def mad(values: Sequence[float]) -> float:
    med = statistics.median(values)
    return statistics.median(abs(v - med) for v in values)


def issuance_windows(certs: Iterable[CertRecord], window_days: int = 14, k: float = DEFAULT_K,
                     trailing: int = TRAILING_WINDOWS) -> list[IssuanceWindow]:
    """Tumbling windows anchored at the epoch, from the first to the last issuance.

    A window is anomalous when its single-SAN count exceeds median + k*MAD of up
    to *trailing* preceding windows (at least ``MIN_TRAILING`` required). Issuer
    shares are taken over the window's single-SAN certificates, or over all of
    its certificates when it has none.
    """
    if window_days < 1:
        raise InputError("window_days must be >= 1")
    width = window_days * DAY
    buckets: dict[int, list[CertRecord]] = {}
    for c in certs:
        buckets.setdefault(int(c.not_before // width), []).append(c)
    if not buckets:
        return []
    out: list[IssuanceWindow] = []
    history: list[int] = []
    for idx in range(min(buckets), max(buckets) + 1):
        members = buckets.get(idx, [])
        single = [c for c in members if c.single_san]
        basis = single or members
        counts = Counter(c.issuer for c in basis)
        shares = sorted(((iss, n / len(basis)) for iss, n in counts.items()), key=lambda t: (-t[1], t[0]))
        top, share = shares[0] if shares else ("", 0.0)
        prior = history[-trailing:]
        threshold = None
        anomaly = False
        if len(prior) >= MIN_TRAILING:
            threshold = statistics.median(prior) + k * mad(prior)
            anomaly = len(single) > threshold
        out.append(IssuanceWindow(float(idx * width), len(single), len(members) - len(single), top, share,
                                  tuple(shares), threshold, anomaly))
        history.append(len(single))
    return out


def earliest_issuance(certs: Iterable[CertRecord]) -> dict[str, float]:
    """First not_before per SAN name."""
    first: dict[str, float] = {}
    for c in certs:
        for n in c.names:
            if n not in first or c.not_before < first[n]:
                first[n] = c.not_before
    return dict(sorted(first.items()))


@dataclass(frozen=True)
class CaaRecord:
    flags: int
    tag: str
    value: str

    @property
    def issuer_domain(self) -> str:
        return self.value.split(";", 1)[0].strip().lower().rstrip(".")


@dataclass(frozen=True)
class CaaPolicy:
    domain: str
    records: tuple[CaaRecord, ...]
    evaluated_at_label: str | None
    permits_free_ca: bool
    restricts_issuance: bool


def parse_caa(text: str) -> CaaRecord:
    parts = text.split(None, 2)
    if len(parts) < 3:
        raise InputError(f"bad CAA rdata {text!r}")
    value = parts[2].strip()
    if len(value) >= 2 and value[0] == value[-1] == '"':
        value = value[1:-1]
    return CaaRecord(int(parts[0]), parts[1].lower(), value)


def is_free_ca(domain: str, free_cas: Iterable[str] = FREE_CAS) -> bool:
    return any(domain == ca or domain.endswith("." + ca) for ca in free_cas)


def evaluate_caa(domain: str, records: Sequence[CaaRecord], label: str | None,
                 free_cas: Iterable[str] = FREE_CAS) -> CaaPolicy:
    issue = [r for r in records if r.tag in ("issue", "issuewild")]
    if not issue:
        return CaaPolicy(domain, tuple(records), label, True, False)
    free = tuple(free_cas)
    permits = any(r.issuer_domain and is_free_ca(r.issuer_domain, free) for r in issue)
    return CaaPolicy(domain, tuple(records), label, permits, True)


def check_caa(domain: str, resolver, free_cas: Iterable[str] = FREE_CAS) -> CaaPolicy:
    """Closest-ancestor CAA lookup: the first name (walking up) with a CAA RRset decides.

    Resolution failures propagate as TransientResolutionError: an unknown policy
    is not an absent one.
    """
    domain = normalize_fqdn(domain)
    for name in ancestors(domain):
        reply = resolver.query(name, "CAA")
        if reply.rcode not in ("NOERROR", "NXDOMAIN"):
            raise TransientResolutionError(f"{name} CAA: {reply.rcode}")
        texts = reply.get(name, "CAA")
        if texts:
            return evaluate_caa(domain, [parse_caa(t) for t in texts], name, free_cas)
    return evaluate_caa(domain, [], None, free_cas)
