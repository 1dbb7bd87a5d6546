"""Minimal stub resolver speaking DNS over UDP with TCP fallback."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import dns.exception
import dns.flags
import dns.message
import dns.query
import dns.rcode
import dns.rdatatype

from .errors import InputError, TransientResolutionError
from .names import normalize_fqdn
from .ratelimit import TokenBucket

log = logging.getLogger(__name__)


def parse_endpoint(endpoint: str | tuple[str, int], default_port: int = 53) -> tuple[str, int]:
    if isinstance(endpoint, tuple):
        return endpoint[0], int(endpoint[1])
    text = endpoint.strip()
    if text.startswith("["):
        host, _, rest = text[1:].partition("]")
        port = rest.lstrip(":") or default_port
        return host, int(port)
    if text.count(":") == 1:
        host, port = text.split(":")
        return host, int(port)
    if not text:
        raise InputError("empty resolver endpoint")
    return text, default_port


@dataclass
class DnsReply:
    rcode: str
    # (owner, rdtype) -> list of rdata texts, in answer order
    answers: dict[tuple[str, str], list[str]] = field(default_factory=dict)
    raw: list = field(default_factory=list, repr=False)

    def get(self, owner: str, rdtype: str) -> list[str]:
        return self.answers.get((owner, rdtype), [])


class DnsResolver:
    """Send single questions to a configured resolver endpoint.

    Timeouts and SERVFAIL/REFUSED answers are retried ``retries`` times with the
    given backoff before raising TransientResolutionError. NXDOMAIN is an answer,
    not an error.
    """

    def __init__(
        self,
        endpoint: str | tuple[str, int] = "127.0.0.1:53",
        timeout: float = 2.0,
        retries: int = 2,
        backoff: tuple[float, ...] = (1.0, 3.0),
        limiter: TokenBucket | None = None,
    ):
        self.host, self.port = parse_endpoint(endpoint)
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self.limiter = limiter

    def query(self, name: str, rdtype: str = "A") -> DnsReply:
        qname = normalize_fqdn(name) + "."
        last_error = "no attempt"
        for attempt in range(self.retries + 1):
            if attempt:
                time.sleep(self.backoff[min(attempt - 1, len(self.backoff) - 1)] if self.backoff else 0)
            if self.limiter is not None:
                self.limiter.acquire()
            request = dns.message.make_query(qname, rdtype)
            try:
                response = dns.query.udp(request, self.host, port=self.port, timeout=self.timeout)
                if response.flags & dns.flags.TC:
                    response = dns.query.tcp(request, self.host, port=self.port, timeout=self.timeout)
            except (dns.exception.Timeout, OSError, dns.exception.DNSException) as exc:
                last_error = f"{type(exc).__name__}: {exc}"
                log.debug("query %s %s attempt %d failed: %s", qname, rdtype, attempt + 1, last_error)
                continue
            rcode = dns.rcode.to_text(response.rcode())
            if rcode in ("SERVFAIL", "REFUSED"):
                last_error = rcode
                continue
            return _reply(rcode, response)
        raise TransientResolutionError(f"{name} {rdtype}: {last_error}")


def _reply(rcode: str, response: dns.message.Message) -> DnsReply:
    answers: dict[tuple[str, str], list[str]] = {}
    for rrset in response.answer:
        owner = rrset.name.to_text(omit_final_dot=True).lower()
        rdtype = dns.rdatatype.to_text(rrset.rdtype)
        bucket = answers.setdefault((owner, rdtype), [])
        for rdata in rrset:
            if rdtype == "CNAME":
                bucket.append(rdata.target.to_text(omit_final_dot=True).lower())
            else:
                bucket.append(rdata.to_text())
    return DnsReply(rcode, answers, list(response.answer))
