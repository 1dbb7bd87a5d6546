"""Transport and application-layer probes against real sockets.

Every HTTP request carries ``Host``/SNI of the probed FQDN, so virtually hosted
services are reached the way a browser would reach them.
"""

from __future__ import annotations

import http.client
import ipaddress
import os
import socket
import ssl
import struct
from dataclasses import dataclass
from typing import Protocol
from urllib.parse import urlsplit

from .ratelimit import RequestLedger, TokenBucket

BODY_CAP = 2 * 1024 * 1024
DEFAULT_TIMEOUT = 10.0
MAX_REDIRECTS = 3
USER_AGENT = "dsentinel/0.1 (+research measurement)"


@dataclass(frozen=True)
class HttpResult:
    url: str
    status: int | None
    body: bytes | None = None
    truncated: bool = False
    error: str | None = None
    tls_verified: bool | None = None
    redirects: int = 0
    content_type: str = ""

    @property
    def completed(self) -> bool:
        """A status line was received."""
        return self.status is not None


class Network(Protocol):
    def ping(self, address: str) -> bool | None: ...

    def tcp_open(self, address: str, port: int) -> bool: ...

    def http_get(self, fqdn: str, address: str | None, path: str = "/", scheme: str = "http",
                 purpose: str = "fetch") -> HttpResult: ...


def _checksum(data: bytes) -> int:
    if len(data) % 2:
        data += b"\0"
    total = sum(struct.unpack(f"!{len(data) // 2}H", data))
    total = (total >> 16) + (total & 0xFFFF)
    total += total >> 16
    return ~total & 0xFFFF


class SocketNetwork:
    """Probes over the host's network stack.

    ICMP uses an unprivileged datagram socket; when the runtime forbids it the
    layer reports ``None`` (skipped) rather than guessing.
    """

    def __init__(self, port_map: dict[int, int] | None = None, timeout: float = DEFAULT_TIMEOUT,
                 limiter: TokenBucket | None = None, ledger: RequestLedger | None = None,
                 body_cap: int = BODY_CAP, max_redirects: int = MAX_REDIRECTS,
                 via: tuple[str, int] | None = None):
        self.port_map = port_map or {}
        # send every HTTP connection to one endpoint (e.g. a served harness), keeping the Host header
        self.via = via
        self.timeout = timeout
        self.limiter = limiter
        self.ledger = ledger
        self.body_cap = body_cap
        self.max_redirects = max_redirects

    def _port(self, port: int) -> int:
        return self.port_map.get(port, port)

    def ping(self, address: str) -> bool | None:
        addr = ipaddress.ip_address(address)
        if addr.version != 4:
            return None
        try:
            sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM, socket.IPPROTO_ICMP)
        except (PermissionError, OSError):
            return None
        try:
            sock.settimeout(min(self.timeout, 2.0))
            ident = os.getpid() & 0xFFFF
            header = struct.pack("!BBHHH", 8, 0, 0, ident, 1)
            payload = b"dsentinel"
            packet = struct.pack("!BBHHH", 8, 0, _checksum(header + payload), ident, 1) + payload
            sock.sendto(packet, (str(addr), 0))
            data, _ = sock.recvfrom(1024)
            return bool(data) and data[0] == 0
        except (socket.timeout, OSError):
            return False
        finally:
            sock.close()

    def tcp_open(self, address: str, port: int) -> bool:
        try:
            with socket.create_connection((address, self._port(port)), timeout=self.timeout):
                return True
        except OSError:
            return False

    def _connect(self, fqdn: str, address: str, scheme: str):
        port = self._port(443 if scheme == "https" else 80)
        if self.via is not None:
            address, port = self.via
        raw = socket.create_connection((address, port), timeout=self.timeout)
        if scheme != "https":
            return raw, None
        verified = True
        try:
            ctx = ssl.create_default_context()
            return ctx.wrap_socket(raw, server_hostname=fqdn), True
        except ssl.SSLCertVerificationError:
            verified = False
        raw.close()
        raw = socket.create_connection((address, port), timeout=self.timeout)
        ctx = ssl.SSLContext(ssl.PROTOCOL_TLS_CLIENT)
        ctx.check_hostname = False
        ctx.verify_mode = ssl.CERT_NONE
        return ctx.wrap_socket(raw, server_hostname=fqdn), verified

    def http_get(self, fqdn: str, address: str | None, path: str = "/", scheme: str = "http",
                 purpose: str = "fetch") -> HttpResult:
        """One logical GET; same-host redirects are followed up to ``max_redirects``."""
        url = f"{scheme}://{fqdn}{path}"
        if self.ledger is not None:
            self.ledger.record(fqdn, path, purpose)
        if address is None:
            return HttpResult(url, None, error="no address")
        redirects = 0
        while True:
            try:
                if self.limiter is not None:
                    with self.limiter.host(fqdn):
                        result = self._exchange(fqdn, address, path, scheme)
                else:
                    result = self._exchange(fqdn, address, path, scheme)
            except (OSError, http.client.HTTPException) as exc:
                return HttpResult(url, None, error=f"{type(exc).__name__}: {exc}", redirects=redirects)
            status, body, truncated, verified, location, ctype = result
            if status in (301, 302, 303, 307, 308) and location and redirects < self.max_redirects:
                target = urlsplit(location)
                if target.hostname in (None, fqdn) and (target.scheme or scheme) in ("http", "https"):
                    scheme = target.scheme or scheme
                    path = (target.path or "/") + (f"?{target.query}" if target.query else "")
                    redirects += 1
                    continue
            return HttpResult(url, status, body, truncated, None, verified, redirects, ctype)

    def _exchange(self, fqdn, address, path, scheme):
        sock, verified = self._connect(fqdn, address, scheme)
        conn = http.client.HTTPConnection(fqdn, timeout=self.timeout)
        conn.sock = sock
        try:
            conn.request("GET", path, headers={"Host": fqdn, "User-Agent": USER_AGENT,
                                               "Accept": "*/*", "Connection": "close"})
            resp = conn.getresponse()
            body = resp.read(self.body_cap + 1)
            truncated = len(body) > self.body_cap
            return (resp.status, body[: self.body_cap], truncated, verified,
                    resp.getheader("Location"), resp.getheader("Content-Type") or "")
        finally:
            conn.close()


