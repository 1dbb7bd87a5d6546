"""Keyword extraction from index pages and lexicon-based topic classification."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Iterable, Mapping

from .htmltext import parse_page

MAX_NGRAM = 3
TOPICS = ("gambling", "adult", "seo-spam", "pharma", "japanese-keyword-hack", "other")
KEYWORD_FIELDS = ("title", "meta_keywords", "meta_description", "heading", "anchor")

_SEGMENT_SPLIT = re.compile(r"[,;:|!?.()\[\]{}\"“”/\\•·–—]+|\s-\s")
_TOKEN = re.compile(r"[^\W_]+(?:['’][^\W_]+)?")
_CJK = re.compile(r"[぀-ヿ㐀-䶿一-鿿]")


@lru_cache(maxsize=1)
def default_stopwords() -> frozenset[str]:
    text = resources.files("dsentinel").joinpath("data/stopwords.txt").read_text("utf-8")
    words = set()
    for line in text.splitlines():
        if not line.startswith("#"):
            words.update(line.split())
    return frozenset(words)


def _tokens(segment: str) -> list[str]:
    return [t for t in _TOKEN.findall(segment.lower()) if not t.isdigit()]


def _ngrams(tokens: list[str], stop: frozenset[str]) -> list[str]:
    out = [t for t in tokens if t not in stop]
    for n in range(2, MAX_NGRAM + 1):
        for i in range(len(tokens) - n + 1):
            gram = tokens[i:i + n]
            if gram[0] in stop or gram[-1] in stop:
                continue
            out.append(" ".join(gram))
    return out


def extract_keywords(html: bytes | str | None, stopwords: Iterable[str] | None = None) -> tuple[str, ...]:
    """Lowercased terms and n-grams (n <= 3) from title, meta keywords/description,
    headings and anchor text, in document order without duplicates.

    Each comma/punctuation-delimited segment is expanded separately: its unigrams
    first, then bigrams, then trigrams. n-grams may not start or end with a stop word.
    """
    stop = frozenset(stopwords) if stopwords is not None else default_stopwords()
    page = parse_page(html)
    seen: dict[str, None] = {}
    for _field, text in page.segments:
        for segment in _SEGMENT_SPLIT.split(text):
            for term in _ngrams(_tokens(segment), stop):
                seen.setdefault(term, None)
    return tuple(seen)


def normalized_text(html: bytes | str | None) -> str:
    """Lowercased visible text plus title and meta fields, single-spaced."""
    page = parse_page(html)
    parts = [page.title, page.meta.get("keywords", ""), page.meta.get("description", ""), page.text]
    return " ".join(" ".join(p.lower().split()) for p in parts if p)


def term_present(term: str, text: str, keywords: frozenset[str] = frozenset()) -> bool:
    """Whole-word phrase match; CJK terms match as substrings."""
    term = term.lower()
    if term in keywords:
        return True
    if _CJK.search(term):
        return term in text
    return re.search(rf"(?<![^\W_]){re.escape(term)}(?![^\W_])", text) is not None


@dataclass(frozen=True)
class Lexicon:
    topics: Mapping[str, Mapping[str, float]]
    priority: tuple[str, ...]


@lru_cache(maxsize=1)
def default_lexicon() -> Lexicon:
    doc = json.loads(resources.files("dsentinel").joinpath("data/lexicons.json").read_text("utf-8"))
    return Lexicon(doc["topics"], tuple(doc["priority"]))


def load_lexicon(path: str) -> Lexicon:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    return Lexicon(doc["topics"], tuple(doc.get("priority", sorted(doc["topics"]))))


@dataclass(frozen=True)
class TopicScore:
    topic: str
    score: float


JAPANESE_HACK_MIN_URLS = 1000


def classify_content(keywords: Iterable[str], lexicon: Lexicon | None = None,
                     language: str | None = None, sitemap_urls: int | None = None) -> TopicScore:
    """Weighted lexicon vote over topics; ties broken by lexicon priority.

    A Japanese page backed by more than ``JAPANESE_HACK_MIN_URLS`` sitemap URLs is
    the Japanese keyword hack regardless of its keyword vote.
    """
    lexicon = lexicon or default_lexicon()
    if language == "ja" and sitemap_urls is not None and sitemap_urls > JAPANESE_HACK_MIN_URLS:
        return TopicScore("japanese-keyword-hack", float(sitemap_urls))
    terms = {k.lower() for k in keywords}
    scores = {}
    for topic, weights in lexicon.topics.items():
        total = 0.0
        for term, weight in weights.items():
            if term in terms or (_CJK.search(term) and any(term in k for k in terms)):
                total += weight
        scores[topic] = total
    order = {t: i for i, t in enumerate(lexicon.priority)}
    ranked = sorted(scores.items(), key=lambda kv: (-kv[1], order.get(kv[0], len(order)), kv[0]))
    if not ranked or ranked[0][1] <= 0:
        return TopicScore("other", 0.0)
    return TopicScore(*ranked[0])
