"""Seeded page and sitemap generators for the benign corpus, abuse fixtures and
the mock cloud."""

from __future__ import annotations

import random
import string
from html import escape
from typing import Sequence

WORDS = (
    "annual report investor relations sustainability careers product support team community "
    "research students faculty campus library admissions program course schedule news events "
    "customer service privacy policy contact office engineering design quality partners "
    "global market solutions energy health insurance banking logistics retail software cloud "
    "platform innovation history mission values leadership board governance press release "
    "weather sports travel recipes science technology culture economy politics opinion review"
).split()

ID_WORDS = (
    "universitas mahasiswa fakultas penelitian pendidikan informasi layanan kegiatan berita "
    "pengumuman jadwal akademik kampus perpustakaan program studi beasiswa masyarakat dosen"
).split()

GAMBLING_ID = (
    "situs judi", "judi slot online", "slot gacor", "gacor", "situs slot", "judi online",
    "togel", "maxwin", "bandar", "agen", "terpercaya", "daftar",
)
ADULT = ("sex", "porn", "xxx", "bokep", "video bokep", "webcam")
JA_SPAM = ("激安", "通販", "送料無料", "スーパーコピー", "ブランド", "財布", "時計")
JA_FILLER = "これは日本語のテキストですが内容はありません今日はとても良い天気です"


def _sentence(rng: random.Random, words: Sequence[str], n: int) -> str:
    return " ".join(rng.choice(words) for _ in range(n)).capitalize() + "."


def _page(title: str, body: str, meta_keywords: str | None = None, description: str | None = None,
          head_extra: str = "", lang: str = "en") -> str:
    meta = ""
    if meta_keywords:
        meta += f'<meta name="keywords" content="{escape(meta_keywords)}">'
    if description:
        meta += f'<meta name="description" content="{escape(description)}">'
    return (f'<!DOCTYPE html><html lang="{lang}"><head><meta charset="utf-8"><title>{escape(title)}</title>'
            f"{meta}{head_extra}</head><body>{body}</body></html>")


def benign_page(rng: random.Random, org: str, source: str) -> str:
    """An ordinary corporate, university or popular-site page."""
    words = WORDS
    heads = "".join(f"<h2>{escape(_sentence(rng, words, 3))}</h2><p>{escape(_sentence(rng, words, 14))}</p>"
                    for _ in range(rng.randint(2, 4)))
    nav = "".join(f'<li><a href="/{w}">{w.title()}</a></li>' for w in rng.sample(words, 5))
    scripts = "".join(f'<script src="/static/{name}.js"></script>'
                      for name in rng.sample(["app", "analytics", "menu", "carousel", "popup", "vendor"], 2))
    kw = ", ".join(rng.sample(words, 4)) if rng.random() < 0.5 else None
    return _page(f"{org} | {source.title()}", f"<nav><ul>{nav}</ul></nav><h1>{escape(org)}</h1>{heads}",
                 kw, _sentence(rng, words, 8), scripts)


def indonesian_page(rng: random.Random, org: str) -> str:
    body = "".join(f"<p>{escape(_sentence(rng, ID_WORDS, 12))}</p>" for _ in range(3))
    return _page(f"{org} - Daftar Program Studi", f"<h1>Daftar program studi</h1>{body}"
                 '<p><a href="/situs">Peta situs</a></p>', "universitas, daftar, program studi",
                 "Informasi layanan akademik dan daftar program studi", lang="id")


def slot_museum_page() -> str:
    return _page(
        "Museum of Mechanical Games",
        "<h1>The slot machine collection</h1><p>Our museum keeps early coin operated slot machines, "
        "pinball tables and arcade cabinets. Each slot in the gallery is restored by volunteers.</p>"
        "<h2>Visit</h2><p>Open daily except Monday. Guided tours for schools.</p>",
        "museum, slot machine, arcade, history", "History of mechanical games")


def coming_soon_page(org: str) -> str:
    return _page(f"{org}", f"<h1>{escape(org)}</h1><p>Coming soon. Our new site is under construction.</p>")


def health_page(rng: random.Random) -> str:
    return _page("Student Health Services", "<h1>Sexual health</h1><p>Confidential advice on sex education, "
                 "contraception and testing for all students.</p>" + f"<p>{escape(_sentence(rng, WORDS, 10))}</p>",
                 "health, students, counselling")


def japanese_corporate_page(rng: random.Random) -> str:
    return _page("株式会社サンプル", f"<h1>会社概要</h1><p>{JA_FILLER}</p><p>オンライン通販のご案内とお問い合わせ。</p>",
                 "会社概要, お問い合わせ", lang="ja")


# abuse content -------------------------------------------------------------

def comming_soon_abuse(rng: random.Random) -> str:
    return _page("Welcome", "<div class='c'><h1>Comming soon ...</h1></div>"
                 f'<script src="https://cdn.{rng.choice(["kk", "zz", "qq"])}-ads.example/tag.js"></script>')


def gambling_page(rng: random.Random, phones: Sequence[str] = (), handles: Sequence[str] = (),
                  links: Sequence[str] = (), popunder: bool = False, n_terms: int = 5) -> str:
    terms = rng.sample(GAMBLING_ID, n_terms)
    contact = "".join(f'<a href="https://wa.me/{p}">WhatsApp</a>' for p in phones)
    contact += "".join(f'<a href="https://t.me/{h}">Telegram</a>' for h in handles)
    contact += "".join(f'<a href="{u}" target="_blank">Daftar</a>' for u in links)
    head = '<script src="/assets/js/popunder.js"></script>' if popunder else ""
    body = (f"<h1>{escape(terms[0].title())} terpercaya</h1>"
            f"<p>Situs judi slot online terpercaya dengan {escape(' dan '.join(terms[1:]))} setiap hari.</p>"
            f"<h2>{escape(terms[-1])}</h2>{contact}")
    return _page(f"{terms[0].title()} | {terms[1].title()}", body, ", ".join(terms),
                 f"{terms[0]} {terms[1]} terbaik", head, lang="id")


def adult_page(rng: random.Random, links: Sequence[str] = ()) -> str:
    terms = rng.sample(ADULT, 4)
    body = "<h1>" + escape(terms[0]) + " videos</h1>" + "".join(
        f'<a href="{u}" onclick="go(this)">{escape(t)}</a>' for u, t in zip(links or ["/v"], terms))
    return _page(f"{terms[0]} {terms[1]}", body, ", ".join(terms), " ".join(terms))


def japanese_hack_page(rng: random.Random) -> str:
    terms = rng.sample(JA_SPAM, 4)
    body = "".join(f"<h2>{t}</h2><p>{JA_FILLER}{t}</p>" for t in terms)
    return _page("".join(terms[:2]), body, ",".join(terms), lang="ja")


# sitemaps -------------------------------------------------------------------

def random_name(rng: random.Random, length: int = 10) -> str:
    return "".join(rng.choice(string.ascii_lowercase + string.digits) for _ in range(length))


def slug_urls(rng: random.Random, base: str, n: int) -> list[str]:
    return [f"{base}/{rng.choice(WORDS)}/{rng.choice(WORDS)}-{rng.choice(WORDS)}-{i}" for i in range(n)]


def random_urls(rng: random.Random, base: str, n: int) -> list[str]:
    return [f"{base}/{random_name(rng)}.html" for _ in range(n)]


def sitemap_xml(urls: Sequence[str], pad: int = 0) -> bytes:
    """A urlset document; *pad* repeats a lastmod/priority block per entry to inflate size."""
    extra = "<lastmod>2022-01-01</lastmod><changefreq>daily</changefreq><priority>0.8</priority>" * pad
    parts = ['<?xml version="1.0" encoding="UTF-8"?>\n<urlset xmlns="http://www.sitemaps.org/schemas/sitemap/0.9">\n']
    parts.extend(f"<url><loc>{escape(u)}</loc>{extra}</url>\n" for u in urls)
    parts.append("</urlset>\n")
    return "".join(parts).encode("utf-8")


def sitemap_index_xml(children: Sequence[str]) -> bytes:
    body = "".join(f"<sitemap><loc>{escape(c)}</loc></sitemap>" for c in children)
    return ('<?xml version="1.0" encoding="UTF-8"?><sitemapindex '
            f'xmlns="http://www.sitemaps.org/schemas/sitemap/0.9">{body}</sitemapindex>').encode("utf-8")
