import ipaddress
import json
import random

import pytest
from hypothesis import given, settings, strategies as st

from dsentinel.catalog import CloudService, default_catalog, load_provider_ranges, parse_suffix_csv
from dsentinel.errors import EmptyFeedError, FeedFormatError, InvalidNameError


def test_aws_feed_maps_s3_block():
    feed = {"createDate": "2023-01-01-00-00-00",
            "prefixes": [{"ip_prefix": "3.5.140.0/22", "region": "ap-northeast-2", "service": "S3"}]}
    cat = load_provider_ranges({"aws": json.dumps(feed)})
    tag = cat.match_ip("3.5.141.7")
    assert (tag.provider, tag.service_kind) == ("aws", "storage")
    assert cat.feed_timestamps["aws"] == "2023-01-01-00-00-00"


def test_azure_and_google_feeds():
    azure = {"changeNumber": 5, "values": [
        {"name": "AppService.WestEurope", "properties": {"systemService": "AzureAppService",
                                                         "addressPrefixes": ["40.113.176.0/24"]}}]}
    google = {"creationTime": "2023-11-14T22:00:00", "prefixes": [{"ipv4Prefix": "35.190.0.0/17"},
                                                                  {"ipv6Prefix": "2600:1900:4000::/44"}]}
    cat = load_provider_ranges({"azure": json.dumps(azure), "google": json.dumps(google)})
    assert cat.match_ip("40.113.176.9").provider == "azure"
    assert cat.match_ip("35.190.1.1").provider == "google"
    assert cat.match_ip("2600:1900:4000::1").provider == "google"


def test_empty_documents():
    with pytest.raises(EmptyFeedError):
        load_provider_ranges({})


def test_unparseable_feed_names_provider():
    with pytest.raises(FeedFormatError, match="aws"):
        load_provider_ranges({"aws": b"\x00not json, not csv"})


def test_malformed_entries_skipped_and_counted():
    feed = {"prefixes": [{"ip_prefix": "3.5.140.0/22", "service": "S3"}, {"ip_prefix": "300.1.1.0/24"},
                         {"service": "S3"}]}
    cat = load_provider_ranges({"aws": json.dumps(feed)})
    assert cat.skipped["aws"] == 2
    assert len(cat.ip_ranges) == 1


def test_normalized_csv_row():
    csv_text = "provider,service_kind,pattern,user_nameable\nazure,web_app,[freetext].azurewebsites.net,user_nameable=true\n"
    cat = load_provider_ranges({"custom": csv_text})
    m = cat.match_suffix("foo.azurewebsites.net")
    assert m.service.provider == "azure" and m.label == "foo"


def test_parse_suffix_csv_region_slot():
    rows = parse_suffix_csv("provider,service_kind,pattern,user_nameable,regions\n"
                            "aws,storage,[freetext].s3-website.REGION.amazonaws.com,true,eu-west-1|us-east-1\n")
    assert rows[0].regions == ("eu-west-1", "us-east-1")


def test_user_nameable_needs_one_slot():
    with pytest.raises(ValueError):
        CloudService("azure", "web_app", "static.azurewebsites.net", True)
    with pytest.raises(ValueError):
        CloudService("azure", "web_app", "[freetext].[freetext].azurewebsites.net", True)


@pytest.mark.parametrize("name, provider, kind, label", [
    ("example.azurewebsites.net", "azure", "web_app", "example"),
    ("shop.s3-website.eu-west-1.amazonaws.com", "aws", "storage", "shop"),
    ("shop.s3-website-us-east-1.amazonaws.com", "aws", "storage", "shop"),
    ("live-mysite.pantheonsite.io", "pantheon", "cms", "mysite"),
    ("app.herokuapp.com", "heroku", "web_app", "app"),
    ("svc.trafficmanager.net", "azure", "traffic_manager", "svc"),
])
def test_match_suffix_examples(name, provider, kind, label):
    m = default_catalog().match_suffix(name)
    assert (m.service.provider, m.service.service_kind, m.label) == (provider, kind, label)


@pytest.mark.parametrize("name", ["foo.com", "azurewebsites.net", "notazurewebsites.net",
                                  "shop.s3-website.mars-north-9.amazonaws.com", "a.azurewebsites.net.evil.com",
                                  "mysite.pantheonsite.io"])
def test_match_suffix_misses(name):
    assert default_catalog().match_suffix(name) is None


def test_match_suffix_rejects_invalid():
    with pytest.raises(InvalidNameError):
        default_catalog().match_suffix("bad..name")


def test_loopback_not_cloud():
    assert default_catalog().match_ip("127.0.0.1") is None


def test_nested_blocks_longest_prefix():
    csv_text = "provider,service_kind,cidr\nazure,unknown,20.0.0.0/8\nazure,web_app,20.50.0.0/16\naws,vm,20.50.2.0/24\n"
    cat = load_provider_ranges({"mixed": csv_text}, include_builtin=False)
    assert cat.match_ip("20.50.2.9").provider == "aws"
    assert cat.match_ip("20.50.9.9").service_kind == "web_app"
    assert cat.match_ip("20.9.9.9").service_kind == "unknown"


def _linear(cat, ip):
    addr = ipaddress.ip_address(ip)
    best = None
    for tag in cat.ip_ranges:
        if addr.version == tag.network.version and addr in tag.network:
            if best is None or tag.network.prefixlen > best.network.prefixlen:
                best = tag
    return best


def test_match_ip_agrees_with_linear_scan():
    cat = default_catalog()
    rng = random.Random(11)
    nets = [t.network for t in cat.ip_ranges if t.network.version == 4]
    for _ in range(10000):
        if rng.random() < 0.5:
            net = rng.choice(nets)
            ip = str(net.network_address + rng.randrange(net.num_addresses))
        else:
            ip = str(ipaddress.IPv4Address(rng.getrandbits(32)))
        got, want = cat.match_ip(ip), _linear(cat, ip)
        assert (got.network if got else None) == (want.network if want else None), ip


label = st.from_regex(r"[a-z0-9]([a-z0-9-]{0,12}[a-z0-9])?", fullmatch=True)


@settings(max_examples=300)
@given(label, st.sampled_from(["azurewebsites.net", "herokuapp.com", "netlify.app", "cloudapp.net"]),
       st.booleans(), st.booleans())
def test_case_and_dot_invariance(lab, suffix, upper, dot):
    cat = default_catalog()
    name = f"{lab}.{suffix}"
    variant = (name.upper() if upper else name) + ("." if dot else "")
    assert cat.match_suffix(variant) == cat.match_suffix(name)
    assert cat.match_suffix(name).label == lab


@settings(max_examples=300)
@given(label, st.sampled_from(["azurewebsites.net", "herokuapp.com", "netlify.app"]))
def test_label_boundary(lab, suffix):
    # glued to the suffix without a dot: never a match
    assert default_catalog().match_suffix(f"{lab}{suffix}") is None
