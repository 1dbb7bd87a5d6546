"""Page corpora: the benign reference set used to validate signatures, the abusive
fixture set used to measure their recall, and their deterministic builders."""

from __future__ import annotations

import json
import os
import random
from dataclasses import dataclass
from importlib import resources
from typing import Iterator

from . import content
from .collector import DnsObservation
from .language import detect_html_language
from .snapshot import ChangeSet, SitemapStats, Snapshot, content_hash, parse_sitemap

CORPUS_SEED = 20240501
ABUSE_SEED = 20240502
SOURCES = ("alexa", "fortune500", "university")


@dataclass(frozen=True)
class CorpusPage:
    id: str
    source: str
    html: bytes
    sitemap: SitemapStats | None = None
    prev_sitemap: SitemapStats | None = None
    has_prev: bool = False

    def observation(self) -> tuple[Snapshot, ChangeSet | None]:
        fqdn = f"{self.id}.benign.test"
        snap = Snapshot(fqdn, 1.0, DnsObservation(fqdn, a_results=("192.0.2.1",), observed_at=1.0), 200,
                        self.html, detect_html_language(self.html), self.sitemap, content_hash(self.html))
        if not self.has_prev:
            return snap, None
        growth = (self.sitemap.total_size_bytes - self.prev_sitemap.total_size_bytes
                  if self.sitemap and self.prev_sitemap else 0)
        changes = ChangeSet(fqdn, f"{fqdn}@0.000", snap.id, content_changed=True,
                            sitemap_new=self.prev_sitemap is None and self.sitemap is not None,
                            sitemap_growth_bytes=growth)
        return snap, changes


class PageCorpus:
    """A directory of HTML pages plus manifest.json; ``source`` is the origin or abuse topic."""

    def __init__(self, directory: str):
        self.directory = directory
        with open(os.path.join(directory, "manifest.json"), encoding="utf-8") as fh:
            self.manifest = json.load(fh)

    def __len__(self) -> int:
        return len(self.manifest["pages"])

    def __iter__(self) -> Iterator[CorpusPage]:
        for entry in self.manifest["pages"]:
            with open(os.path.join(self.directory, entry["file"]), "rb") as fh:
                html = fh.read()
            yield CorpusPage(
                entry["id"], entry["source"], html,
                SitemapStats.from_dict(entry["sitemap"]) if entry.get("sitemap") else None,
                SitemapStats.from_dict(entry["prev_sitemap"]) if entry.get("prev_sitemap") else None,
                entry.get("has_prev", False),
            )


def default_corpus_dir() -> str:
    return str(resources.files("dsentinel").joinpath("data/benign_corpus"))


BenignCorpus = PageCorpus


def default_corpus() -> PageCorpus:
    return PageCorpus(default_corpus_dir())


def default_abuse_fixtures() -> PageCorpus:
    return PageCorpus(str(resources.files("dsentinel").joinpath("data/abuse_fixtures")))


def _stats(urls: list[str], pad: int = 0) -> SitemapStats:
    return parse_sitemap(content.sitemap_xml(urls, pad))


def generate_benign(seed: int = CORPUS_SEED, size: int = 520) -> list[tuple[dict, bytes]]:
    """Deterministic list of (manifest entry, html bytes)."""
    rng = random.Random(seed)
    pages: list[tuple[dict, bytes]] = []

    def add(source: str, html: str, sitemap=None, prev=None, has_prev=False):
        pid = f"{source}-{len(pages):04d}"
        entry = {"id": pid, "file": f"pages/{pid}.html", "source": source,
                 "sitemap": sitemap.to_dict() if sitemap else None,
                 "prev_sitemap": prev.to_dict() if prev else None, "has_prev": has_prev}
        pages.append((entry, html.encode("utf-8")))

    # pages built to sit close to abuse indicators
    add("alexa", content.slot_museum_page())
    add("university", content.health_page(rng))
    add("fortune500", content.coming_soon_page("Northwind Holdings"))
    add("alexa", content.japanese_corporate_page(rng))
    for i in range(3):
        add("university", content.indonesian_page(rng, f"Universitas Nusantara {i + 1}"))
    # big news sitemap that grew by well over 100KB
    news_prev = content.slug_urls(rng, "https://news.example", 20000)
    news_next = news_prev + content.slug_urls(rng, "https://news.example", 4000)
    add("alexa", content.benign_page(rng, "Daily Ledger", "alexa"), _stats(news_next, 1), _stats(news_prev, 1), True)
    # brand-new sitemaps on ordinary sites
    for i in range(4):
        urls = content.slug_urls(rng, f"https://site{i}.example", rng.randint(20, 400))
        add("fortune500", content.benign_page(rng, f"Acme Group {i}", "fortune500"), _stats(urls), None, True)
    while len(pages) < size:
        source = SOURCES[len(pages) % 3]
        org = f"{rng.choice(content.WORDS).title()} {rng.choice(['Corp', 'University', 'Media', 'Labs', 'Bank'])}"
        sitemap = None
        if rng.random() < 0.3:
            sitemap = _stats(content.slug_urls(rng, "https://www.example", rng.randint(5, 300)))
        add(source, content.benign_page(rng, org, source), sitemap, sitemap, rng.random() < 0.5)
    return pages


def generate_abuse(seed: int = ABUSE_SEED) -> list[tuple[dict, bytes]]:
    """Deterministic abusive pages labelled by topic; gambling pages embed the top gambling terms."""
    rng = random.Random(seed)
    pages: list[tuple[dict, bytes]] = []

    def add(topic: str, html: str, sitemap=None, prev=None, has_prev=False):
        pid = f"{topic}-{len(pages):04d}"
        entry = {"id": pid, "file": f"pages/{pid}.html", "source": topic,
                 "sitemap": sitemap.to_dict() if sitemap else None,
                 "prev_sitemap": prev.to_dict() if prev else None, "has_prev": has_prev}
        pages.append((entry, html.encode("utf-8")))

    for i in range(40):
        phones = [f"628{rng.randrange(10**9, 10**10)}" for _ in range(rng.randint(0, 2))]
        handles = [f"cs_{content.random_name(rng, 6)}" for _ in range(rng.randint(0, 1))]
        links = [f"https://bit.ly/{content.random_name(rng, 7)}"] if rng.random() < 0.4 else []
        add("gambling", content.gambling_page(rng, phones, handles, links, popunder=rng.random() < 0.3,
                                              n_terms=rng.randint(2, 6)))
    for i in range(10):
        urls = content.random_urls(rng, f"https://{content.random_name(rng)}.example/", rng.randint(300, 2000))
        add("gambling", content.gambling_page(rng, n_terms=3), _stats(urls), None, True)
    for i in range(10):
        add("adult", content.adult_page(rng, [f"https://{content.random_name(rng)}.example/v"]))
    for i in range(5):
        urls = content.random_urls(rng, f"https://{content.random_name(rng)}.example/", 3000 + rng.randrange(2000))
        add("japanese-keyword-hack", content.japanese_hack_page(rng), _stats(urls, 20), None, True)
    for i in range(5):
        add("other", content.comming_soon_abuse(rng))
    return pages


def _write(directory: str, pages: list[tuple[dict, bytes]], seed: int) -> None:
    os.makedirs(os.path.join(directory, "pages"), exist_ok=True)
    entries = []
    for entry, html in pages:
        with open(os.path.join(directory, entry["file"]), "wb") as fh:
            fh.write(html)
        entries.append(entry)
    manifest = {"version": 1, "seed": seed, "pages": entries}
    with open(os.path.join(directory, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")


def write_benign(directory: str, seed: int = CORPUS_SEED, size: int = 520) -> None:
    _write(directory, generate_benign(seed, size), seed)


def write_abuse(directory: str, seed: int = ABUSE_SEED) -> None:
    _write(directory, generate_abuse(seed), seed)
