"""Abuse signatures: indicator rules, matching and benign-corpus validation."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, replace
from functools import lru_cache
from importlib import resources
from typing import Iterable, Sequence

import jsonschema

from .errors import InputError, SignatureRejected, ValidationError
from .htmltext import parse_page
from .keywords import extract_keywords, normalized_text, term_present
from .snapshot import ChangeSet, Snapshot

INDICATOR_KINDS = ("keyword", "sitemap", "infrastructure")
DEFAULT_MIN_KEYWORD_HITS = 2
SIGNATURE_FORMAT_VERSION = 1


@dataclass(frozen=True)
class SitemapRule:
    """Static thresholds are all required; the change criteria, when any is set,
    are satisfied by either a new sitemap or sufficient growth."""

    min_url_count: int = 0
    min_size_bytes: int = 0
    min_name_entropy: float = 0.0
    new_sitemap: bool = False
    min_growth_bytes: int | None = None

    def to_dict(self) -> dict:
        return {
            "min_url_count": self.min_url_count, "min_size_bytes": self.min_size_bytes,
            "min_name_entropy": self.min_name_entropy, "new_sitemap": self.new_sitemap,
            "min_growth_bytes": self.min_growth_bytes,
        }


@dataclass(frozen=True)
class InfraRule:
    """Substring patterns over loaded-object URLs and hyperlink targets."""

    object_patterns: tuple[str, ...] = ()
    link_patterns: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {"object_patterns": list(self.object_patterns), "link_patterns": list(self.link_patterns)}


@dataclass(frozen=True)
class Signature:
    id: str
    indicator_kinds: frozenset[str]
    keyword_terms: tuple[str, ...] = ()
    html_snippet_patterns: tuple[bytes, ...] = ()
    min_keyword_hits: int = DEFAULT_MIN_KEYWORD_HITS
    sitemap_rule: SitemapRule | None = None
    infra_rules: InfraRule | None = None
    validated: bool = False
    fp_count_on_benign: int = 0
    topic: str | None = None
    description: str = ""

    def __post_init__(self):
        kinds = frozenset(self.indicator_kinds)
        object.__setattr__(self, "indicator_kinds", kinds)
        object.__setattr__(self, "keyword_terms", tuple(t.lower() for t in self.keyword_terms))
        if not kinds:
            raise InputError(f"signature {self.id!r} has no indicator kind")
        unknown = kinds - set(INDICATOR_KINDS)
        if unknown:
            raise InputError(f"signature {self.id!r}: unknown indicator kinds {sorted(unknown)}")
        if self.validated and self.fp_count_on_benign:
            raise InputError(f"signature {self.id!r} validated with benign false positives")
        if "keyword" in kinds and not (self.keyword_terms or self.html_snippet_patterns):
            raise InputError(f"signature {self.id!r}: keyword indicator without terms or snippets")
        if "sitemap" in kinds and self.sitemap_rule is None:
            raise InputError(f"signature {self.id!r}: sitemap indicator without rule")
        if "infrastructure" in kinds and not (
            self.infra_rules and (self.infra_rules.object_patterns or self.infra_rules.link_patterns)
        ):
            raise InputError(f"signature {self.id!r}: infrastructure indicator without patterns")
        if self.min_keyword_hits < 1:
            raise InputError(f"signature {self.id!r}: min_keyword_hits must be >= 1")

    def to_dict(self) -> dict:
        d = {
            "version": SIGNATURE_FORMAT_VERSION,
            "id": self.id,
            "indicator_kinds": sorted(self.indicator_kinds),
            "validated": self.validated,
            "fp_count_on_benign": self.fp_count_on_benign,
        }
        if "keyword" in self.indicator_kinds:
            d["keyword"] = {
                "terms": list(self.keyword_terms),
                "html_snippets": [p.decode("utf-8") for p in self.html_snippet_patterns],
                "min_hits": self.min_keyword_hits,
            }
        if self.sitemap_rule is not None:
            d["sitemap"] = self.sitemap_rule.to_dict()
        if self.infra_rules is not None:
            d["infrastructure"] = self.infra_rules.to_dict()
        if self.topic:
            d["topic"] = self.topic
        if self.description:
            d["description"] = self.description
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Signature":
        kw = d.get("keyword") or {}
        sm = d.get("sitemap")
        infra = d.get("infrastructure")
        return cls(
            id=d["id"],
            indicator_kinds=frozenset(d["indicator_kinds"]),
            keyword_terms=tuple(kw.get("terms", ())),
            html_snippet_patterns=tuple(s.encode("utf-8") for s in kw.get("html_snippets", ())),
            min_keyword_hits=kw.get("min_hits", DEFAULT_MIN_KEYWORD_HITS),
            sitemap_rule=SitemapRule(**sm) if sm is not None else None,
            infra_rules=InfraRule(tuple(infra.get("object_patterns", ())), tuple(infra.get("link_patterns", ())))
            if infra is not None else None,
            validated=d.get("validated", False),
            fp_count_on_benign=d.get("fp_count_on_benign", 0),
            topic=d.get("topic"),
            description=d.get("description", ""),
        )


@lru_cache(maxsize=1)
def signature_schema() -> dict:
    return json.loads(resources.files("dsentinel").joinpath("data/schemas/signature.schema.json").read_text("utf-8"))


def parse_signatures(text: str, source: str = "<signatures>") -> list[Signature]:
    """Parse a JSON-lines signature document; blank lines and '#' lines are skipped."""
    validator = jsonschema.Draft7Validator(signature_schema())
    out, seen = [], set()
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            raise InputError(f"{source}:{lineno}: invalid JSON: {exc.msg}") from None
        errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.path))
        if errors:
            where = "/".join(str(p) for p in errors[0].path) or "<root>"
            raise InputError(f"{source}:{lineno}: {where}: {errors[0].message}")
        try:
            sig = Signature.from_dict(doc)
        except InputError as exc:
            raise InputError(f"{source}:{lineno}: {exc}") from None
        if sig.id in seen:
            raise InputError(f"{source}:{lineno}: duplicate signature id {sig.id!r}")
        seen.add(sig.id)
        out.append(sig)
    return out


def load_signatures(path: str | None = None) -> list[Signature]:
    if path is None:
        text = resources.files("dsentinel").joinpath("data/signatures.jsonl").read_text("utf-8")
        return parse_signatures(text, "signatures.jsonl")
    with open(path, encoding="utf-8") as fh:
        return parse_signatures(fh.read(), path)


def dump_signatures(signatures: Iterable[Signature]) -> str:
    return "".join(json.dumps(s.to_dict(), sort_keys=True, ensure_ascii=False) + "\n" for s in signatures)


@dataclass(frozen=True)
class PageView:
    """Parsed facts of an index page used by the matchers."""

    raw: bytes
    text: str
    keywords: frozenset[str]
    objects: tuple[str, ...]
    links: tuple[str, ...]


@lru_cache(maxsize=4096)
def page_view(html: bytes | None) -> PageView:
    html = html or b""
    page = parse_page(html)
    return PageView(
        html, normalized_text(html), frozenset(extract_keywords(html)),
        tuple(u.lower() for u in page.objects), tuple(h.lower() for h, _ in page.anchors),
    )


@dataclass(frozen=True)
class MatchResult:
    signature_id: str
    matched: bool
    fired: frozenset[str]
    keyword_hits: tuple[str, ...] = ()

    def __bool__(self) -> bool:
        return self.matched


def keyword_fires(sig: Signature, view: PageView) -> tuple[bool, tuple[str, ...]]:
    hits = tuple(p.decode("utf-8", "replace") for p in sig.html_snippet_patterns if p in view.raw)
    if hits:
        return True, hits
    terms = tuple(t for t in dict.fromkeys(sig.keyword_terms) if term_present(t, view.text, view.keywords))
    need = min(sig.min_keyword_hits, len(set(sig.keyword_terms)))
    return bool(sig.keyword_terms) and len(terms) >= need, terms


def sitemap_fires(rule: SitemapRule, snapshot: Snapshot, changes: ChangeSet | None) -> bool:
    sm = snapshot.sitemap
    if sm is None or sm.format == "invalid":
        return False
    if sm.url_count < rule.min_url_count or sm.total_size_bytes < rule.min_size_bytes:
        return False
    if sm.name_entropy < rule.min_name_entropy:
        return False
    wants_change = rule.new_sitemap or rule.min_growth_bytes is not None
    if not wants_change:
        return True
    if changes is None:
        return False
    if rule.new_sitemap and changes.sitemap_new:
        return True
    return rule.min_growth_bytes is not None and changes.sitemap_growth_bytes >= rule.min_growth_bytes


def infra_fires(rule: InfraRule, view: PageView) -> bool:
    for pat in rule.object_patterns:
        if any(pat.lower() in url for url in view.objects):
            return True
    for pat in rule.link_patterns:
        if any(pat.lower() in url for url in view.links):
            return True
    return False


def match_signature(snapshot: Snapshot, changes: ChangeSet | None, signature: Signature) -> MatchResult:
    """All indicator kinds of the signature must fire; fired kinds are reported either way."""
    view = page_view(snapshot.index_html)
    fired = set()
    hits: tuple[str, ...] = ()
    if "keyword" in signature.indicator_kinds:
        ok, hits = keyword_fires(signature, view)
        if ok:
            fired.add("keyword")
    if "sitemap" in signature.indicator_kinds and sitemap_fires(signature.sitemap_rule, snapshot, changes):
        fired.add("sitemap")
    if "infrastructure" in signature.indicator_kinds and infra_fires(signature.infra_rules, view):
        fired.add("infrastructure")
    return MatchResult(signature.id, fired == signature.indicator_kinds, frozenset(fired), hits)


def match_all(snapshot: Snapshot, changes: ChangeSet | None, signatures: Sequence[Signature],
              dry_run: bool = False) -> list[MatchResult]:
    """Matching signatures; unvalidated ones only take part in dry runs."""
    out = []
    for sig in signatures:
        if not sig.validated and not dry_run:
            continue
        res = match_signature(snapshot, changes, sig)
        if res.matched:
            out.append(res)
    return out


def validate_signature(signature: Signature, corpus) -> Signature:
    """Scan *corpus* (iterable of items with ``id`` and ``observation()``) for false positives."""
    items = list(corpus)
    if not items:
        raise ValidationError(f"cannot validate {signature.id!r} against an empty benign corpus")
    offending = []
    for item in items:
        snapshot, changes = item.observation()
        if match_signature(snapshot, changes, signature).matched:
            offending.append(item.id)
    if offending:
        raise SignatureRejected(signature.id, offending)
    return replace(signature, validated=True, fp_count_on_benign=0)


def benign_fp_count(signature: Signature, corpus) -> int:
    return sum(1 for item in corpus if match_signature(*item.observation(), signature).matched)


def venn_bucket(results: Iterable[MatchResult]) -> str:
    """Indicator-combination label of one detection: union of kinds of matched signatures."""
    kinds = set()
    for r in results:
        if r.matched:
            kinds |= r.fired
    return "+".join(k for k in INDICATOR_KINDS if k in kinds)


def venn_buckets(detections: Iterable[Iterable[MatchResult]]) -> Counter:
    counts: Counter = Counter()
    for results in detections:
        label = venn_bucket(results)
        if label:
            counts[label] += 1
    return counts
