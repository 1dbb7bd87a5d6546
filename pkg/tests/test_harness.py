import http.client

import pytest

from dsentinel.errors import InputError, ScenarioError
from dsentinel.harness import bundled_scenarios, load_scenario, parse_scenario, serve
from dsentinel.certs import parse_time

MINIMAL = """\
version: 1
name: tiny
seed: 1
start: 2022-01-01T00:00:00Z
zones:
  www.tiny.example: {A: [20.50.2.7]}
vhosts:
  www.tiny.example:
    address: 20.50.2.7
    content: {html: "<html><body>tiny</body></html>"}
"""


def get(handle, host, path="/"):
    conn = http.client.HTTPConnection("127.0.0.1", handle.http_port, timeout=5)
    try:
        conn.request("GET", path, headers={"Host": host})
        resp = conn.getresponse()
        return resp.status, resp.read()
    finally:
        conn.close()


def test_bundled_scenarios_load():
    names = bundled_scenarios()
    assert {"minimal", "takeover-basic", "liveness-matrix", "caa-zones", "collect-50"} <= set(names)
    for name in names:
        load_scenario(name)


def test_minimal_inline():
    sc = parse_scenario(MINIMAL)
    assert sc.name == "tiny" and list(sc.vhosts) == ["www.tiny.example"]


def test_out_of_order_timeline():
    text = MINIMAL + """\
timeline:
  - {at: 2022-01-05T00:00:00Z, event: release, vhost: www.tiny.example}
  - {at: 2022-01-02T00:00:00Z, event: release, vhost: www.tiny.example}
"""
    with pytest.raises(ScenarioError, match=r"line 13:"):
        parse_scenario(text)


def test_unknown_event_and_dangling_vhost():
    with pytest.raises(ScenarioError, match="line 12:"):
        parse_scenario(MINIMAL + "timeline:\n  - {at: 2022-01-05T00:00:00Z, event: explode}\n")
    with pytest.raises(ScenarioError, match="line 12:"):
        parse_scenario(MINIMAL + "timeline:\n  - {at: 2022-01-05T00:00:00Z, event: release, vhost: nope.example}\n")


def test_takeover_basic_timeline():
    sc = load_scenario("takeover-basic")
    kinds = [(e.kind, e.params.get("vhost") or e.params.get("name")) for e in sc.timeline]
    release = kinds.index(("release", "shopexample.azurewebsites.net"))
    register = kinds.index(("register", "shopexample.azurewebsites.net"))
    correct = kinds.index(("correct", "shop.example.com"))
    assert release < register < correct
    assert sc.timeline[register].params["content"]["generator"] == "gambling"
    assert len(sc.monitor) == 21


@pytest.fixture
def takeover():
    with serve("takeover-basic") as h:
        yield h


def test_a_query(takeover):
    reply = takeover.resolver().query("shop.example.com", "A")
    assert reply.rcode == "NOERROR"
    assert reply.get("shop.example.com", "CNAME") == ["shopexample.azurewebsites.net"]
    assert reply.get("shopexample.azurewebsites.net", "A") == ["20.50.2.10"]
    assert takeover.resolver().query("nothing.example.com", "A").rcode == "NXDOMAIN"


def test_release_register_correct(takeover):
    status, body = get(takeover, "shop.example.com")
    assert status == 200 and b"Example Shop" in body
    applied = takeover.advance_time("2022-01-11T00:00:00Z")
    assert [e.kind for e in applied] == ["release"]
    status, body = get(takeover, "shopexample.azurewebsites.net")
    assert status == 404 and b"404 Web Site not found" in body
    assert takeover.advance_time("2022-01-11T12:00:00Z") == []
    takeover.advance_time("2022-01-21T00:00:00Z")
    status, body = get(takeover, "shop.example.com")
    assert status == 200 and b"wa.me/6281234567890" in body
    takeover.advance_time("2022-02-05T00:00:00Z")
    reply = takeover.resolver().query("shop.example.com", "A")
    assert reply.rcode == "NXDOMAIN" and reply.get("shop.example.com", "CNAME") == []


def test_time_regression(takeover):
    takeover.advance_time("2022-01-15T00:00:00Z")
    with pytest.raises(InputError):
        takeover.advance_time("2022-01-14T00:00:00Z")
    assert takeover.clock() == parse_time("2022-01-15T00:00:00Z")


def test_replay_determinism():
    plan = [("2022-01-01T00:00:00Z", "site04.benign-org.example", "/"),
            ("2022-01-01T00:00:00Z", "site04.benign-org.example", "/sitemap.xml"),
            ("2022-01-13T00:00:00Z", "site04.benign-org.example", "/sitemap.xml"),
            ("2022-01-21T00:00:00Z", "shop.example.com", "/"),
            ("2022-01-21T00:00:00Z", "shop.example.com", "/sitemap.xml")]
    runs = []
    for _ in range(2):
        with serve("takeover-basic") as h:
            out = []
            for at, host, path in plan:
                h.advance_time(at)
                out.append(get(h, host, path))
            runs.append(out)
    assert runs[0] == runs[1]


def test_routing_by_host_only(takeover):
    # the destination is the same socket for every name; only Host differs
    a = get(takeover, "site01.benign-org.example")
    b = get(takeover, "site02.benign-org.example")
    assert a[0] == b[0] == 200 and a[1] != b[1]
    assert get(takeover, "SITE01.benign-org.example.")[1] == a[1]
    assert get(takeover, "unknown.example")[0] == 404


def test_reachability_toggle(takeover):
    takeover.advance_time("2022-01-27T00:00:00Z")
    with pytest.raises((http.client.RemoteDisconnected, ConnectionError)):
        get(takeover, "site13.benign-org.example")
    takeover.advance_time("2022-01-31T00:00:00Z")
    assert get(takeover, "site13.benign-org.example")[0] == 200
