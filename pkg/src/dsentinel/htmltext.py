"""Single-pass HTML walker collecting the fields the detectors need."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from html.parser import HTMLParser

_WS = re.compile(r"\s+")
_SKIP = {"script", "style", "noscript", "template"}
_HEADINGS = {"h1", "h2", "h3", "h4", "h5", "h6"}
_OBJECT_ATTRS = {"script": "src", "img": "src", "iframe": "src", "embed": "src", "source": "src",
                 "link": "href", "object": "data"}


@dataclass
class PageFields:
    title: str = ""
    text: str = ""
    # (field, text) in document order for title/meta/headings/anchors
    segments: list[tuple[str, str]] = field(default_factory=list)
    anchors: list[tuple[str, str]] = field(default_factory=list)  # (href, target)
    link_hrefs: list[str] = field(default_factory=list)
    objects: list[str] = field(default_factory=list)
    meta: dict[str, str] = field(default_factory=dict)


class _Walker(HTMLParser):
    def __init__(self):
        super().__init__(convert_charrefs=True)
        self.fields = PageFields()
        self._skip_depth = 0
        self._capture: list[tuple[str, list[str]]] = []
        self._text: list[str] = []

    def handle_starttag(self, tag, attrs):
        a = {k.lower(): (v or "") for k, v in attrs}
        if tag in _SKIP:
            self._skip_depth += 1
        if tag == "meta":
            name = (a.get("name") or a.get("property") or "").lower()
            if name and "content" in a:
                self.fields.meta.setdefault(name, a["content"])
                if name in ("keywords", "description"):
                    self.fields.segments.append((f"meta_{name}", a["content"]))
        if tag == "a":
            if a.get("href"):
                self.fields.anchors.append((a["href"].strip(), a.get("target", "")))
        if tag == "link" and a.get("href"):
            self.fields.link_hrefs.append(a["href"].strip())
        attr = _OBJECT_ATTRS.get(tag)
        if attr and a.get(attr):
            self.fields.objects.append(a[attr].strip())
        if tag in ("title", "a") or tag in _HEADINGS:
            self._capture.append((tag, []))

    def handle_startendtag(self, tag, attrs):
        self.handle_starttag(tag, attrs)
        if tag in ("title", "a") or tag in _HEADINGS:
            self.handle_endtag(tag)

    def handle_endtag(self, tag):
        if tag in _SKIP and self._skip_depth:
            self._skip_depth -= 1
        for i in range(len(self._capture) - 1, -1, -1):
            if self._capture[i][0] == tag:
                name, parts = self._capture.pop(i)
                text = _WS.sub(" ", "".join(parts)).strip()
                if text:
                    kind = "title" if name == "title" else ("anchor" if name == "a" else "heading")
                    if kind == "title" and not self.fields.title:
                        self.fields.title = text
                    self.fields.segments.append((kind, text))
                break

    def handle_data(self, data):
        if self._skip_depth:
            return
        for _, parts in self._capture:
            parts.append(data)
        self._text.append(data)

    def close(self):
        super().close()
        self.fields.text = _WS.sub(" ", " ".join(self._text)).strip()


def parse_page(html: bytes | str | None) -> PageFields:
    if not html:
        return PageFields()
    if isinstance(html, bytes):
        html = html.decode("utf-8", "replace")
    walker = _Walker()
    walker.feed(html)
    walker.close()
    return walker.fields


_COMMENT = re.compile(r"<!--.*?-->", re.S)
_TAG = re.compile(r"<\s*(/?)\s*([A-Za-z][A-Za-z0-9:-]*)")


def normalize_html(html: bytes) -> bytes:
    """Canonical form used for content hashing: comments stripped, tag names lowercased,
    whitespace collapsed."""
    text = html.decode("utf-8", "replace")
    text = _COMMENT.sub("", text)
    text = _TAG.sub(lambda m: "<" + m.group(1) + m.group(2).lower(), text)
    text = _WS.sub(" ", text).strip()
    return text.encode("utf-8")
