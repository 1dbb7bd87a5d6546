"""DNS (UDP+TCP) and HTTP front ends for a World, plus the probing adapter."""

from __future__ import annotations

import socket
import socketserver
import struct
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import dns.exception
import dns.flags
import dns.message
import dns.rcode
import dns.rdatatype
import dns.rrset

from ..dnsclient import DnsResolver
from ..net import SocketNetwork
from ..ratelimit import RequestLedger, TokenBucket
from .scenario import Event, Scenario, load_scenario
from .world import World

TTL = 60
LOCALHOST = "127.0.0.1"


def dns_response(world: World, wire: bytes, max_size: int | None) -> bytes | None:
    try:
        query = dns.message.from_wire(wire)
    except dns.exception.DNSException:
        return None
    response = dns.message.make_response(query)
    response.flags |= dns.flags.AA | dns.flags.RA
    if not query.question:
        response.set_rcode(dns.rcode.FORMERR)
        return response.to_wire()
    q = query.question[0]
    qname = q.name.to_text(omit_final_dot=True).lower()
    rcode, answer = world.resolve(qname, dns.rdatatype.to_text(q.rdtype))
    if rcode == "DROP":
        return None
    response.set_rcode(dns.rcode.from_text(rcode))
    for owner, rtype, values in answer:
        texts = [v + "." if rtype in ("CNAME", "NS") else v for v in values]
        response.answer.append(dns.rrset.from_text_list(owner + ".", TTL, "IN", rtype, texts))
    if max_size is None:
        return response.to_wire()
    limit = max(512, query.payload) if query.edns >= 0 else 512
    try:
        return response.to_wire(max_size=limit)
    except dns.exception.TooBig:
        response.answer = []
        response.flags |= dns.flags.TC
        return response.to_wire()


class _UdpHandler(socketserver.BaseRequestHandler):
    def handle(self):
        data, sock = self.request
        reply = dns_response(self.server.world, data, 512)
        if reply is not None:
            sock.sendto(reply, self.client_address)


class _TcpHandler(socketserver.BaseRequestHandler):
    def handle(self):
        conn = self.request
        conn.settimeout(5)
        try:
            while True:
                header = conn.recv(2)
                if len(header) < 2:
                    return
                (length,) = struct.unpack("!H", header)
                data = b""
                while len(data) < length:
                    chunk = conn.recv(length - len(data))
                    if not chunk:
                        return
                    data += chunk
                reply = dns_response(self.server.world, data, None)
                if reply is None:
                    return
                conn.sendall(struct.pack("!H", len(reply)) + reply)
        except OSError:
            return


class _Udp(socketserver.ThreadingUDPServer):
    daemon_threads = True
    allow_reuse_address = True


class _Tcp(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True


class _HttpHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server_version = "dsentinel-harness"
    sys_version = ""

    def do_GET(self):
        result = self.server.world.respond(self.headers.get("Host", ""), self.path)
        if result is None:
            self.close_connection = True
            return
        status, headers, body = result
        self.send_response_only(status)
        for k, v in headers.items():
            self.send_header(k, v)
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Connection", "close")
        self.end_headers()
        self.wfile.write(body)
        self.close_connection = True

    def log_message(self, format, *args):
        pass


class _Http(ThreadingHTTPServer):
    daemon_threads = True


def _bind_dns(world: World, port: int) -> tuple[_Udp, _Tcp]:
    for _ in range(20):
        udp = _Udp((LOCALHOST, port), _UdpHandler)
        chosen = udp.server_address[1]
        try:
            tcp = _Tcp((LOCALHOST, chosen), _TcpHandler)
        except OSError:
            udp.server_close()
            if port:
                raise
            continue
        udp.world = tcp.world = world
        return udp, tcp
    raise OSError("could not bind matching UDP/TCP DNS ports")


class HarnessHandle:
    """Running mock cloud; use as a context manager or call ``shutdown``."""

    def __init__(self, scenario: Scenario, dns_port: int = 0, http_port: int = 0):
        self.scenario = scenario
        self.world = World(scenario)
        self._udp, self._tcp = _bind_dns(self.world, dns_port)
        self._http = _Http((LOCALHOST, http_port), _HttpHandler)
        self._http.world = self.world
        self._threads = [threading.Thread(target=s.serve_forever, kwargs={"poll_interval": 0.05}, daemon=True)
                         for s in (self._udp, self._tcp, self._http)]
        for t in self._threads:
            t.start()

    @property
    def dns_endpoint(self) -> str:
        return f"{LOCALHOST}:{self._udp.server_address[1]}"

    @property
    def http_endpoint(self) -> str:
        return f"{LOCALHOST}:{self._http.server_address[1]}"

    @property
    def http_port(self) -> int:
        return self._http.server_address[1]

    def clock(self) -> float:
        return self.world.clock()

    def advance_time(self, to) -> list[Event]:
        from ..certs import parse_time
        return self.world.advance_time(parse_time(to))

    def inject_fault(self, name: str, kind: str | None) -> None:
        self.world.inject_fault(name, kind)

    def resolver(self, timeout: float = 0.5, retries: int = 1, backoff=(0.05,), limiter=None) -> DnsResolver:
        return DnsResolver(self.dns_endpoint, timeout=timeout, retries=retries, backoff=backoff, limiter=limiter)

    def network(self, ledger: RequestLedger | None = None, limiter: TokenBucket | None = None,
                timeout: float = 5.0) -> "HarnessNetwork":
        return HarnessNetwork(self, ledger=ledger, limiter=limiter, timeout=timeout)

    def shutdown(self) -> None:
        for s in (self._udp, self._tcp, self._http):
            s.shutdown()
            s.server_close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.shutdown()


def serve(scenario: Scenario | str, dns_port: int = 0, http_port: int = 0) -> HarnessHandle:
    if isinstance(scenario, str):
        scenario = load_scenario(scenario)
    return HarnessHandle(scenario, dns_port, http_port)


class HarnessNetwork(SocketNetwork):
    """Probes against the harness.

    Scenario addresses are not routable, so ICMP and TCP answers come from the
    scripted per-address toggles, while HTTP is a real exchange with the harness
    HTTP server carrying the probed name in the Host header.
    """

    def __init__(self, handle: HarnessHandle, **kwargs):
        super().__init__(**kwargs)
        self.handle = handle

    def ping(self, address: str) -> bool | None:
        return self.handle.world.knows_address(address) and self.handle.world.layer(address, "icmp")

    def tcp_open(self, address: str, port: int) -> bool:
        return port in (80, 443) and self.handle.world.knows_address(address) and \
            self.handle.world.layer(address, "tcp")

    def _connect(self, fqdn: str, address: str, scheme: str):
        if scheme != "http" or not self.handle.world.knows_address(address):
            raise ConnectionRefusedError(f"{address}: connection refused")
        return socket.create_connection((LOCALHOST, self.handle.http_port), timeout=self.timeout), None
