import json
import random

import pytest
from hypothesis import given, settings, strategies as st

from dsentinel.collector import DnsObservation
from dsentinel.content import GAMBLING_ID, benign_page, slot_museum_page
from dsentinel.corpus import CorpusPage, default_abuse_fixtures, default_corpus
from dsentinel.errors import InputError, SignatureRejected, ValidationError
from dsentinel.language import detect_html_language
from dsentinel.signatures import (INDICATOR_KINDS, InfraRule, MatchResult, Signature, SitemapRule, dump_signatures,
                                  load_signatures, match_all, match_signature, parse_signatures,
                                  validate_signature, venn_bucket, venn_buckets)
from dsentinel.snapshot import ChangeSet, SitemapStats, Snapshot, content_hash


def snap(html, sitemap=None, fqdn="x.example"):
    html = html.encode() if isinstance(html, str) else html
    return Snapshot(fqdn, 10.0, DnsObservation(fqdn, ("x.azurewebsites.net",), ("20.50.2.1",)), 200, html,
                    detect_html_language(html), sitemap, content_hash(html))


GAMBLING = Signature("g", {"keyword"}, tuple(GAMBLING_ID[:8]))


def test_signature_invariants():
    with pytest.raises(InputError):
        Signature("x", set())
    with pytest.raises(InputError):
        Signature("x", {"keyword"}, ("a",), validated=True, fp_count_on_benign=2)
    with pytest.raises(InputError):
        Signature("x", {"sitemap"})
    with pytest.raises(InputError):
        Signature("x", {"infrastructure"}, infra_rules=InfraRule())
    with pytest.raises(InputError):
        Signature("x", {"dns"}, ("a",))


def test_comming_soon_snippet_fires():
    sig = Signature("cs", {"keyword"}, html_snippet_patterns=(b"Comming soon",))
    res = match_signature(snap("<html><h1>Comming soon ...</h1></html>"), None, sig)
    assert res.matched and res.fired == {"keyword"}


def test_benign_page_no_match():
    page = benign_page(random.Random(2), "Contoso Bank", "fortune500")
    assert match_all(snap(page), None, load_signatures()) == []


def test_popunder_plus_keywords():
    sig = Signature("p", {"keyword", "infrastructure"}, ("situs judi", "slot gacor", "togel"),
                    infra_rules=InfraRule(("popunder.js",)))
    page = ('<html><head><script src="https://cdn.x.example/js/popunder.js"></script></head>'
            "<body><h1>situs judi</h1><p>slot gacor</p></body></html>")
    res = match_signature(snap(page), None, sig)
    assert res.matched and res.fired == {"keyword", "infrastructure"}
    no_script = match_signature(snap("<html><h1>situs judi</h1><p>slot gacor</p></html>"), None, sig)
    assert not no_script.matched and no_script.fired == {"keyword"}


def test_min_hits():
    one = snap("<html><p>togel hari ini</p></html>")
    two = snap("<html><p>togel dan slot gacor</p></html>")
    assert not match_signature(one, None, GAMBLING).matched
    assert match_signature(two, None, GAMBLING).matched
    single = Signature("s", {"keyword"}, ("togel",))
    assert match_signature(one, None, single).matched


def test_sitemap_rule_static_and_change():
    rule = SitemapRule(min_url_count=3000, min_size_bytes=5 * 1024 * 1024)
    big = SitemapStats(3500, 6 * 1024 * 1024)
    small = SitemapStats(200, 10_000)
    sig = Signature("sm", {"sitemap"}, sitemap_rule=rule)
    assert match_signature(snap("<html/>", big), None, sig).matched
    assert not match_signature(snap("<html/>", small), None, sig).matched
    grow = Signature("gr", {"sitemap"}, sitemap_rule=SitemapRule(new_sitemap=True, min_growth_bytes=102400))
    s = snap("<html/>", small)
    new = ChangeSet(s.fqdn, "a", "b", sitemap_new=True)
    grown = ChangeSet(s.fqdn, "a", "b", sitemap_growth_bytes=102400)
    flat = ChangeSet(s.fqdn, "a", "b", sitemap_growth_bytes=102399)
    assert match_signature(s, new, grow).matched
    assert match_signature(s, grown, grow).matched
    assert not match_signature(s, flat, grow).matched
    assert not match_signature(s, None, grow).matched


def test_unvalidated_only_in_dry_run():
    sig = Signature("u", {"keyword"}, ("togel", "gacor"))
    page = snap("<html><p>togel gacor</p></html>")
    assert match_all(page, None, [sig]) == []
    assert [r.signature_id for r in match_all(page, None, [sig], dry_run=True)] == ["u"]


def test_validate_rejects_slot_alone():
    sig = Signature("slot", {"keyword"}, ("slot",), min_keyword_hits=1)
    with pytest.raises(SignatureRejected) as err:
        validate_signature(sig, default_corpus())
    assert "alexa-0000" in err.value.offending_ids


def test_validate_comming_soon():
    sig = Signature("cs", {"keyword"}, html_snippet_patterns=(b"Comming soon",))
    ok = validate_signature(sig, default_corpus())
    assert ok.validated and ok.fp_count_on_benign == 0


def test_validate_empty_corpus():
    with pytest.raises(ValidationError):
        validate_signature(GAMBLING, [])


def test_validate_custom_corpus():
    museum = CorpusPage("museum", "alexa", slot_museum_page().encode())
    with pytest.raises(SignatureRejected):
        validate_signature(Signature("s", {"keyword"}, ("slot", "machines"), min_keyword_hits=1), [museum])


def test_shipped_signatures_roundtrip():
    sigs = load_signatures()
    assert {s.id for s in sigs} >= {"comming-soon", "gambling-id-terms", "popunder-gambling"}
    assert all(s.validated and s.fp_count_on_benign == 0 for s in sigs)
    assert parse_signatures(dump_signatures(sigs)) == sigs


def test_parse_errors_carry_line_numbers():
    good = json.dumps(Signature("a", {"keyword"}, ("x",)).to_dict())
    with pytest.raises(InputError, match=r":2: invalid JSON"):
        parse_signatures(good + "\n{bad\n")
    with pytest.raises(InputError, match=r":3: duplicate"):
        parse_signatures(good + "\n\n" + good + "\n")
    bad_kind = json.dumps({"version": 1, "id": "b", "indicator_kinds": ["dns"]})
    with pytest.raises(InputError, match=r":1: "):
        parse_signatures(bad_kind)


def test_shipped_signatures_sound_on_benign():
    sigs = load_signatures()
    for page in default_corpus():
        s, c = page.observation()
        assert match_all(s, c, sigs) == [], page.id


def test_abusive_fixtures_all_detected():
    sigs = load_signatures()
    for page in default_abuse_fixtures():
        s, c = page.observation()
        assert match_all(s, c, sigs), page.id


def test_venn_bucket_union():
    a = MatchResult("a", True, frozenset({"keyword"}))
    b = MatchResult("b", True, frozenset({"keyword", "infrastructure"}))
    assert venn_bucket([a, b]) == "keyword+infrastructure"
    assert venn_bucket([MatchResult("c", False, frozenset({"sitemap"}))]) == ""


@settings(max_examples=200)
@given(st.lists(st.lists(st.builds(lambda kinds, m: MatchResult("s", m, frozenset(kinds)),
                                   st.sets(st.sampled_from(INDICATOR_KINDS), min_size=1), st.booleans()),
                         max_size=4), max_size=30))
def test_venn_conservation(detections):
    counts = venn_buckets(detections)
    detected = [d for d in detections if any(r.matched for r in d)]
    assert sum(counts.values()) == len(detected)
    for d in detected:
        assert venn_bucket(d) in counts


words = st.sampled_from(list(GAMBLING_ID) + ["acme", "report", "museum", "news", "bank"])


@settings(max_examples=300, deadline=None)
@given(st.lists(words, max_size=6), st.lists(words, max_size=4))
def test_keyword_match_monotone(base, extra):
    def page(terms):
        return snap("<html><head><title>" + ", ".join(base) + "</title></head><body><p>"
                    + " . ".join(terms) + "</p></body></html>")
    before = match_signature(page(base), None, GAMBLING)
    after = match_signature(page(base + extra), None, GAMBLING)
    if "keyword" in before.fired:
        assert "keyword" in after.fired
