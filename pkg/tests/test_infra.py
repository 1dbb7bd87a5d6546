import random
from collections import Counter
from itertools import combinations

import pytest
from hypothesis import given, settings, strategies as st

from oracles import graph_from, oracle_cluster, random_graph
from dsentinel.infra import (ClusterResult, Identifier, build_graph, cluster_stats, dendrogram_rows,
                             extract_identifiers, graph_jsonl, hierarchical_cluster, identifier_distance,
                             jaccard_distance, normalize_phone)


def links(*hrefs):
    return "<html><body>" + "".join(f'<a href="{h}">x</a>' for h in hrefs) + "</body></html>"


def test_whatsapp_phone():
    (ident,) = extract_identifiers(links("https://wa.me/6281234567890"), "a.example")
    assert ident == Identifier("phone", "6281234567890")
    assert ident.country_code == "62"


def test_whatsapp_api_variants():
    ids = extract_identifiers(links("https://api.whatsapp.com/send?phone=+62 812-3456-7890",
                                    "whatsapp://send?phone=6281234567890"))
    assert ids == [Identifier("phone", "6281234567890")]


def test_telegram_joinchat():
    (ident,) = extract_identifiers(links("https://t.me/joinchat/XYZ"))
    assert ident.kind == "chat_handle" and ident.value == "telegram:joinchat/xyz"


def test_social_shortener_ip():
    ids = extract_identifiers(links("https://twitter.com/SlotKing", "https://www.instagram.com/judi.id/",
                                    "https://bit.ly/abc123", "http://203.0.113.9/daftar",
                                    "https://example.com/about", "/relative"))
    assert [i.label for i in ids] == ["social_account:twitter:slotking", "social_account:instagram:judi.id",
                                      "shortener_url:bit.ly/abc123", "ip_address:203.0.113.9"]


def test_link_tags_included():
    html = '<html><head><link rel="me" href="https://t.me/slotbot"></head></html>'
    assert extract_identifiers(html)[0].label == "chat_handle:telegram:slotbot"


def test_no_links():
    assert extract_identifiers("<html><body><p>nothing</p></body></html>") == []
    assert extract_identifiers(None) == []


def test_malformed_counted():
    skipped = Counter()
    ids = extract_identifiers(links("https://wa.me/12", "https://twitter.com/intent/tweet", "https://t.me/"),
                              skipped=skipped)
    assert ids == [] and skipped["malformed"] == 3


@given(st.text(alphabet="0123456789 +-()", max_size=25))
def test_phone_normalization_idempotent(raw):
    once = normalize_phone(raw)
    if once is not None:
        assert normalize_phone(once) == once


def ident(n):
    return Identifier("chat_handle", f"telegram:h{n:02d}")


def test_graph_weights():
    a, b, c = ident(1), ident(2), ident(3)
    g = build_graph([(a, "x"), (b, "x"), (a, "y"), (b, "y"), (a, "z"), (b, "z"), (c, "w")])
    assert g.weight(a, b) == 3 and g.weight(b, a) == 3
    assert g.weight(a, c) == 0 and (a, c) not in g.edges
    one = build_graph([(a, "p"), (b, "p")])
    assert one.weight(a, b) == 1


@settings(max_examples=100)
@given(st.lists(st.tuples(st.integers(0, 8), st.integers(0, 8)), max_size=40))
def test_edge_iff_shared_domain(pairs):
    g = build_graph([(ident(i), f"d{d}") for i, d in pairs])
    for u, v in combinations(g.nodes, 2):
        assert g.weight(u, v) == len(g.nodes[u] & g.nodes[v])


def test_jaccard_examples():
    assert jaccard_distance({"a", "b"}, {"a", "b"}) == 0
    assert jaccard_distance({"a"}, {"b"}) == 1
    assert jaccard_distance({"a", "b"}, {"b", "c"}) == pytest.approx(2 / 3)
    u, v = ident(1), ident(2)
    g = build_graph([(u, "a"), (u, "b"), (v, "b"), (v, "c")])
    assert identifier_distance(u, v, g) == pytest.approx(2 / 3)


def test_pseudometric_random():
    rng = random.Random(7)
    sets = [frozenset(rng.sample(range(12), rng.randint(1, 6))) for _ in range(60)]
    for _ in range(10_000):
        a, b, c = (rng.choice(sets) for _ in range(3))
        assert jaccard_distance(a, a) == 0
        assert jaccard_distance(a, b) == jaccard_distance(b, a)
        assert jaccard_distance(a, c) <= jaccard_distance(a, b) + jaccard_distance(b, c) + 1e-12


def assert_matches_oracle(domain_sets, cutoff, linkage):
    result = hierarchical_cluster(graph_from(domain_sets), cutoff, linkage)
    clusters, merges = oracle_cluster(domain_sets, cutoff, linkage)
    assert result.labels() == clusters
    assert len(result.merges) == len(merges)
    for m, (left, right, dist) in zip(result.merges, merges):
        assert (m.left, m.right) == (left, right)
        assert m.distance == pytest.approx(float(dist), abs=1e-9)


@pytest.mark.parametrize("seed", range(100))
def test_average_linkage_matches_oracle(seed):
    rng = random.Random(seed)
    assert_matches_oracle(random_graph(rng, rng.randint(1, 50)), 0.95, "average")


@pytest.mark.parametrize("linkage", ["single", "complete"])
@pytest.mark.parametrize("seed", range(10))
def test_other_linkages_match_oracle(linkage, seed):
    rng = random.Random(1000 + seed)
    assert_matches_oracle(random_graph(rng, rng.randint(2, 30)), rng.choice([0.5, 0.8, 0.95]), linkage)


def test_frozen_small_example():
    # merges worked out by hand: h1~h2 at 0, then {h1,h2}~h3 at 1/2, h4 stays alone
    sets = {"chat_handle:telegram:h1": frozenset("ab"), "chat_handle:telegram:h2": frozenset("ab"),
            "chat_handle:telegram:h3": frozenset("b"), "chat_handle:telegram:h4": frozenset("z")}
    res = hierarchical_cluster(graph_from(sets))
    assert res.labels() == [["chat_handle:telegram:h1", "chat_handle:telegram:h2", "chat_handle:telegram:h3"],
                            ["chat_handle:telegram:h4"]]
    assert [m.distance for m in res.merges] == [0.0, 0.5]
    assert dendrogram_rows(res)[1] == [2, "chat_handle:telegram:h1 chat_handle:telegram:h2",
                                       "chat_handle:telegram:h3", "0.500000", 3]


def test_three_identical_one_cluster():
    sets = {f"chat_handle:telegram:h{i}": frozenset({"a", "b"}) for i in range(3)}
    assert len(hierarchical_cluster(graph_from(sets)).clusters) == 1


def test_empty_graph_rejected():
    with pytest.raises(ValueError):
        hierarchical_cluster(build_graph([]))


def components(domain_sets):
    labels = sorted(domain_sets)
    parent = {l: l for l in labels}

    def find(x):
        while parent[x] != x:
            x = parent[x]
        return x
    for u, v in combinations(labels, 2):
        if domain_sets[u] & domain_sets[v]:
            parent[find(u)] = find(v)
    return {l: find(l) for l in labels}


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.05, 0.999))
def test_clusters_refine_components(seed, cutoff):
    rng = random.Random(seed)
    sets = random_graph(rng, rng.randint(1, 30))
    comp = components(sets)
    for linkage in ("single", "average", "complete"):
        for cluster in hierarchical_cluster(graph_from(sets), cutoff, linkage).labels():
            assert len({comp[l] for l in cluster}) == 1


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_cutoff_monotone(seed, c1, c2):
    lo, hi = sorted((c1, c2))
    rng = random.Random(seed)
    g = graph_from(random_graph(rng, rng.randint(1, 30)))
    for linkage in ("single", "average", "complete"):
        assert len(hierarchical_cluster(g, hi, linkage).clusters) <= len(hierarchical_cluster(g, lo, linkage).clusters)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_order_determinism(seed):
    rng = random.Random(seed)
    sets = random_graph(rng, rng.randint(1, 30))
    a = hierarchical_cluster(graph_from(sets))
    b = hierarchical_cluster(graph_from(sets, shuffle=random.Random(seed + 1)))
    assert a == b
    assert graph_jsonl(graph_from(sets)) == graph_jsonl(graph_from(sets, shuffle=random.Random(seed + 2)))


def test_cluster_stats_order():
    ids = [(ident(i),) for i in range(3)]
    doms = (frozenset("abc"), frozenset("abcdefg"), frozenset("hijklmn"))
    rows = cluster_stats(ClusterResult(tuple(ids), doms, 0.95, "average"))
    assert [r.n_domains for r in rows] == [7, 7, 3]
    assert [r.identifiers[0] for r in rows] == [ident(1).label, ident(2).label, ident(0).label]
    assert cluster_stats(None) == []


def test_cluster_stats_giant_plus_tail():
    sets = {f"chat_handle:telegram:g{i:02d}": frozenset(f"s{k}" for k in range(i % 5, 30)) for i in range(20)}
    sets.update({f"chat_handle:telegram:t{i:02d}": frozenset({f"tail{i}"}) for i in range(10)})
    rows = cluster_stats(hierarchical_cluster(graph_from(sets)))
    assert (rows[0].n_identifiers, rows[0].n_domains) == (20, 30)
    assert [(r.n_identifiers, r.n_domains) for r in rows[1:]] == [(1, 1)] * 10
