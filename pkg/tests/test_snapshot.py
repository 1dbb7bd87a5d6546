import os
import random
import xml.etree.ElementTree as ET

import pytest
from hypothesis import given, settings, strategies as st

from dsentinel.collector import DnsObservation, resolve_chain
from dsentinel.content import gambling_page, random_urls, sitemap_index_xml, sitemap_xml
from dsentinel.errors import InputError
from dsentinel.harness import load_scenario, serve
from dsentinel.language import detect_html_language, detect_language
from dsentinel.ratelimit import RequestLedger
from dsentinel.snapshot import (LARGE_SITEMAP_BYTES, SITEMAP_GROWTH_BYTES, FetchPolicy, Snapshot, SitemapStats,
                                SnapshotStore, content_hash, decode_snapshot, diff_snapshots, encode_snapshot,
                                fetch_snapshot, parse_robots, parse_sitemap, path_entropy, sitemap_growth)

SCENARIO = """
version: 1
name: snapshot-fixture
seed: 5
start: 2022-03-01T00:00:00Z
zones:
  soon.fixture.example: {CNAME: soon-fx.azurewebsites.net}
  soon-fx.azurewebsites.net: {A: [20.50.2.50]}
  dead.fixture.example: {CNAME: dead-fx.herokuapp.com}
  dead-fx.herokuapp.com: {A: [54.72.50.2]}
  robots.fixture.example: {A: [54.72.50.3]}
vhosts:
  soon-fx.azurewebsites.net:
    address: 20.50.2.50
    aliases: [soon.fixture.example]
    content: {generator: comming_soon, seed: 1}
    sitemap: {generator: random, count: 3000}
  dead-fx.herokuapp.com:
    address: 54.72.50.2
    aliases: [dead.fixture.example]
    content: {generator: benign, org: Dead Co, source: alexa, seed: 2}
    reachability: {icmp: true, tcp: true, http: false}
  robots.fixture.example:
    address: 54.72.50.3
    content: {generator: benign, org: Robots Co, source: alexa, seed: 3}
    robots: "User-agent: *\\nSitemap: http://robots.fixture.example/a.xml\\nSitemap: http://robots.fixture.example/b.xml\\n"
"""


@pytest.fixture(scope="module")
def fx():
    with serve(load_scenario(SCENARIO)) as h:
        yield h


def _fetch(h, name, policy=None, prev=None, ledger=None):
    obs = resolve_chain(name, h.resolver(), h.clock)
    return fetch_snapshot(name, h.network(ledger=ledger), obs, policy, h.clock, prev)


def test_comming_soon_snapshot(fx):
    snap = _fetch(fx, "soon.fixture.example", FetchPolicy(sitemap="always"))
    assert snap.http_status == 200
    assert b"Comming soon" in snap.index_html
    assert snap.detected_language == "en"
    assert snap.sitemap.url_count == 3000
    assert snap.requests == 2


def test_sitemap_count_matches_independent_parse(fx):
    import urllib.request
    req = urllib.request.Request(f"http://{fx.http_endpoint}/sitemap.xml", headers={"Host": "soon.fixture.example"})
    doc = urllib.request.urlopen(req, timeout=5).read()
    ns = "{http://www.sitemaps.org/schemas/sitemap/0.9}"
    assert len(ET.fromstring(doc).findall(f"{ns}url")) == parse_sitemap(doc).url_count == 3000


def test_dead_service_snapshot(fx):
    snap = _fetch(fx, "dead.fixture.example")
    assert snap.http_status is None and snap.index_html is None
    assert snap.requests == 1


def test_no_address_no_request():
    ledger = RequestLedger()

    class Boom:
        def http_get(self, *a, **k):
            raise AssertionError("no request expected")

    snap = fetch_snapshot("gone.example", Boom(), DnsObservation("gone.example", nxdomain=True), clock=lambda: 5.0)
    assert snap.requests == 0 and snap.http_status is None and ledger.entries == []


def test_at_most_two_requests(fx):
    for policy in (FetchPolicy(sitemap="always"), FetchPolicy(sitemap="never"), FetchPolicy(),
                   FetchPolicy(discovery="robots", sitemap="always")):
        for name in ("soon.fixture.example", "dead.fixture.example", "robots.fixture.example"):
            ledger = RequestLedger()
            snap = _fetch(fx, name, policy, ledger=ledger)
            assert len(ledger.entries) == snap.requests <= 2


def test_robots_discovery_replaces_sitemap_request(fx):
    ledger = RequestLedger()
    snap = _fetch(fx, "robots.fixture.example", FetchPolicy(discovery="robots", sitemap="always"), ledger=ledger)
    assert [e.path for e in ledger.entries] == ["/", "/robots.txt"]
    assert snap.sitemap.format == "robots" and snap.sitemap.url_count == 2


def test_policy_hook_default_only_on_change(fx):
    first = _fetch(fx, "soon.fixture.example")
    assert first.requests == 2
    again = _fetch(fx, "soon.fixture.example", prev=first)
    assert again.requests == 1
    hooked = _fetch(fx, "soon.fixture.example", FetchPolicy(decide=lambda partial, prev: True), prev=first)
    assert hooked.requests == 2


def test_body_cap_truncates(fx):
    from dsentinel.net import SocketNetwork
    net = SocketNetwork(via=("127.0.0.1", fx.http_port), body_cap=100)
    obs = resolve_chain("soon.fixture.example", fx.resolver())
    snap = fetch_snapshot("soon.fixture.example", net, obs, FetchPolicy(sitemap="never"), lambda: 1.0)
    assert snap.truncated and len(snap.index_html) == 100


def test_parse_two_urls():
    doc = sitemap_xml(["http://a.example/x", "http://a.example/y"])
    stats = parse_sitemap(doc)
    assert stats.url_count == 2 and stats.format == "urlset"
    assert stats.total_size_bytes == len(doc)


def test_parse_index_without_fetch():
    doc = sitemap_index_xml([f"http://a.example/s{i}.xml" for i in range(3)])
    stats = parse_sitemap(doc)
    assert stats.url_count == 3 and stats.unexpanded_children == 3 and stats.format == "sitemapindex"


def test_parse_index_with_fetch_depth():
    leaf = sitemap_xml(["http://a.example/p1", "http://a.example/p2"])
    inner = sitemap_index_xml(["http://a.example/leaf.xml"])
    outer = sitemap_index_xml(["http://a.example/inner.xml", "http://a.example/leaf.xml"])
    docs = {"http://a.example/inner.xml": inner, "http://a.example/leaf.xml": leaf}
    stats = parse_sitemap(outer, fetch=docs.get)
    assert stats.url_count == 4 and stats.unexpanded_children == 0
    shallow = parse_sitemap(outer, fetch=docs.get, max_depth=1)
    # inner index expanded to depth 1, its child left unexpanded
    assert shallow.url_count == 3 and shallow.unexpanded_children == 1


def test_parse_non_xml():
    stats = parse_sitemap(b"<html>not a sitemap")
    assert stats.url_count == 0 and stats.format == "invalid"
    assert parse_sitemap(b"<html><body/></html>").format == "invalid"


def test_parse_large_streaming():
    rng = random.Random(1)
    doc = sitemap_xml(random_urls(rng, "http://big.example/", 144349))
    stats = parse_sitemap(doc)
    assert stats.url_count == 144349
    assert len(stats.sample_urls) == 100
    assert stats.total_size_bytes > LARGE_SITEMAP_BYTES


def test_parse_robots():
    stats = parse_robots(b"User-agent: *\nSitemap: http://x.example/a.xml\nsitemap: http://x.example/b.xml\n")
    assert stats.url_count == 2 and stats.unexpanded_children == 2


def test_path_entropy():
    assert path_entropy("http://a.example/") == 0.0
    assert path_entropy("http://a.example/aaaa") == 0.0
    assert path_entropy("http://a.example/ab/ab") == pytest.approx(1.0)


def test_language_examples():
    ja = "<html><body><p>" + "日本語のページです。東京の会社について説明します。" * 3 + "</p></body></html>"
    assert detect_html_language(ja.encode()) == "ja"
    assert detect_language("") == "und"
    assert detect_html_language(None) == "und"
    text = "situs judi slot online terpercaya dan daftar slot gacor hari ini dengan bonus untuk member baru"
    assert detect_language(text) == "id"


def _snap(fqdn="a.example", t=1.0, html=b"<html><title>x</title></html>", sitemap=None, lang=None, status=200,
          chain=("x.azurewebsites.net",)):
    obs = DnsObservation(fqdn, chain, ("20.50.2.1",), observed_at=t)
    return Snapshot(fqdn, t, obs, status if html is not None else None, html,
                    lang or detect_html_language(html), sitemap, content_hash(html))


def test_snapshot_status_iff_html():
    obs = DnsObservation("a.example")
    with pytest.raises(ValueError):
        Snapshot("a.example", 1.0, obs, 200, None)
    with pytest.raises(ValueError):
        Snapshot("a.example", 1.0, obs, None, b"x")


def test_content_hash_stable_and_normalized():
    a = b"<HTML>  <!-- c --><Body>Hi   there</Body></HTML>"
    b = b"<html> <body>Hi there</body></html>"
    assert content_hash(a) == content_hash(b) == content_hash(bytes(a))


def test_diff_identical():
    s = _snap()
    c = diff_snapshots(s, s)
    assert not c.any_change and c.sitemap_growth_bytes == 0


def test_diff_new_sitemap():
    big = SitemapStats(5000, 5 * 1024 * 1024)
    c = diff_snapshots(_snap(t=1), _snap(t=2, sitemap=big))
    assert c.sitemap_new and c.sitemap_growth_bytes == 0


def test_diff_language_and_keywords():
    prev = _snap(t=1, html=b"<html><head><title>Acme annual report</title></head>"
                            b"<body><p>Our company builds tools for engineers worldwide.</p></body></html>")
    page = gambling_page(random.Random(4)).encode()
    c = diff_snapshots(prev, _snap(t=2, html=page))
    assert c.language_changed
    assert "judi" in c.keyword_delta[0]


def test_diff_fqdn_mismatch():
    with pytest.raises(InputError):
        diff_snapshots(_snap("a.example"), _snap("b.example"))


def test_growth_threshold_constant():
    a = _snap(t=1, sitemap=SitemapStats(10, 1000))
    b = _snap(t=2, sitemap=SitemapStats(20, 1000 + SITEMAP_GROWTH_BYTES))
    assert diff_snapshots(a, b).sitemap_growth_bytes == SITEMAP_GROWTH_BYTES


# property tests

names = st.sampled_from(["a.example", "b.example", "shop.example.com"])
stats = st.builds(lambda n, extra, size, ent: SitemapStats(n + extra, size, tuple(f"http://x/{i}" for i in range(n)), ent),
                  st.integers(0, 5), st.integers(0, 1000), st.integers(0, 10**7),
                  st.floats(0, 8, allow_nan=False))
observations = st.builds(
    lambda f, chain, addrs, t: DnsObservation(f, tuple(dict.fromkeys(chain)), tuple(addrs), observed_at=t),
    names, st.lists(st.sampled_from(["x.azurewebsites.net", "y.herokuapp.com"]), max_size=2),
    st.lists(st.sampled_from(["20.50.2.1", "54.72.0.9", "2600:1f18::1"]), max_size=2),
    st.floats(0, 2e9, allow_nan=False))


@st.composite
def snapshots(draw):
    obs = draw(observations)
    html = draw(st.one_of(st.none(), st.binary(max_size=300),
                          st.text(max_size=200).map(lambda t: f"<html><p>{t}</p></html>".encode())))
    status = None if html is None else draw(st.sampled_from([200, 404, 500, 301]))
    return Snapshot(obs.fqdn, draw(st.floats(0, 2e9, allow_nan=False)), obs, status, html,
                    draw(st.sampled_from(["en", "id", "ja", "und"])), draw(st.one_of(st.none(), stats)),
                    content_hash(html), draw(st.booleans()), draw(st.sampled_from([None, True, False])),
                    draw(st.integers(0, 2)))


@settings(max_examples=1000, deadline=None)
@given(snapshots())
def test_encode_roundtrip(s):
    payload = encode_snapshot(s)
    back = decode_snapshot(payload)
    assert back == s
    assert encode_snapshot(back) == payload


@settings(max_examples=200, deadline=None)
@given(snapshots())
def test_diff_self_is_empty(s):
    c = diff_snapshots(s, s)
    assert not c.any_change
    assert c.keyword_delta == ((), ())


@settings(max_examples=300, deadline=None)
@given(snapshots(), snapshots())
def test_growth_antisymmetric(a, b):
    assert sitemap_growth(a, b) == -sitemap_growth(b, a)


@settings(max_examples=300, deadline=None)
@given(snapshots(), snapshots())
def test_sitemap_new_implies_absence_before(a, b):
    b = Snapshot(a.fqdn, b.fetched_at, b.dns, b.http_status, b.index_html, b.detected_language, b.sitemap,
                 b.content_hash)
    c = diff_snapshots(a, b)
    if c.sitemap_new:
        assert a.sitemap is None and b.sitemap is not None


def test_store_roundtrip_1000(tmp_path):
    rng = random.Random(2024)
    store = SnapshotStore(str(tmp_path))
    made = []
    for i in range(1000):
        fqdn = f"n{rng.randrange(40)}.example"
        html = None if rng.random() < 0.1 else bytes(rng.randrange(256) for _ in range(rng.randrange(200)))
        sm = SitemapStats(rng.randrange(10**5), rng.randrange(10**8)) if rng.random() < 0.5 else None
        s = Snapshot(fqdn, 1e9 + i * 37.25, DnsObservation(fqdn, ("z.azurewebsites.net",), ("20.50.2.7",)),
                     None if html is None else 200, html, "und", sm, content_hash(html))
        store.append(s)
        made.append(s)
    store.flush()
    again = SnapshotStore(str(tmp_path))
    got = list(again)
    assert got == made
    assert [encode_snapshot(s) for s in got] == [encode_snapshot(s) for s in made]
    assert again.latest(made[-1].fqdn) == made[-1]
    assert again.get(made[3].id) == made[3]


def test_store_index_rebuild(tmp_path):
    store = SnapshotStore(str(tmp_path))
    for i in range(5):
        store.append(_snap(t=float(i)))
    store.flush()
    os.remove(os.path.join(tmp_path, "snapshots.index.json"))
    again = SnapshotStore(str(tmp_path))
    assert [s.fetched_at for s in again.history("a.example")] == [0.0, 1.0, 2.0, 3.0, 4.0]
    assert not os.path.exists(os.path.join(tmp_path, "snapshots.index.json"))


def test_store_stale_index_rebuilt(tmp_path):
    store = SnapshotStore(str(tmp_path))
    store.append(_snap(t=1.0))
    store.flush()
    # a writer that crashed before flushing leaves the index behind the log
    crashed = SnapshotStore(str(tmp_path))
    crashed.append(_snap(t=2.0))
    assert [s.fetched_at for s in SnapshotStore(str(tmp_path)).history("a.example")] == [1.0, 2.0]
