"""Domain-name normalization and validation helpers."""

from __future__ import annotations

import re

from .errors import InvalidNameError

_LABEL = re.compile(r"^[a-z0-9_](?:[a-z0-9_-]{0,61}[a-z0-9_])?$")

# Second-level public suffixes common in the monitored TLD mix.
# Not a full public-suffix list; registered_domain() falls back to the last two labels.
MULTI_LABEL_SUFFIXES = frozenset(
    {
        "co.uk", "ac.uk", "gov.uk", "org.uk", "ltd.uk", "plc.uk", "nhs.uk",
        "com.au", "net.au", "org.au", "edu.au", "gov.au",
        "com.br", "gov.br", "edu.br", "org.br",
        "co.jp", "ac.jp", "go.jp", "or.jp", "ne.jp",
        "co.id", "ac.id", "go.id", "or.id",
        "co.nz", "ac.nz", "govt.nz",
        "co.in", "ac.in", "gov.in",
        "com.cn", "edu.cn", "gov.cn",
        "co.za", "ac.za", "gov.za",
        "com.sg", "edu.sg", "gov.sg",
        "co.kr", "ac.kr",
        "com.mx", "gob.mx",
    }
)


def normalize_fqdn(name: str) -> str:
    """Return the canonical form of *name*: lowercase ASCII, punycode, no trailing dot.

    Raises InvalidNameError when the result is not a syntactically valid host name.
    """
    if not isinstance(name, str):
        raise InvalidNameError(f"domain name must be a string, got {type(name).__name__}")
    raw = name.strip()
    if raw.endswith("."):
        raw = raw[:-1]
    if not raw:
        raise InvalidNameError("empty domain name")
    try:
        ascii_name = raw.encode("idna").decode("ascii") if not raw.isascii() else raw
    except UnicodeError as exc:
        raise InvalidNameError(f"cannot IDNA-encode {name!r}: {exc}") from None
    ascii_name = ascii_name.lower()
    if len(ascii_name) > 253:
        raise InvalidNameError(f"domain name too long: {name!r}")
    for label in ascii_name.split("."):
        if not _LABEL.match(label):
            raise InvalidNameError(f"invalid label {label!r} in {name!r}")
    return ascii_name


def is_valid_fqdn(name: str) -> bool:
    try:
        normalize_fqdn(name)
    except InvalidNameError:
        return False
    return True


def registered_domain(fqdn: str) -> str:
    """Registrable parent (SLD) of *fqdn*, e.g. ``shop.example.co.uk`` -> ``example.co.uk``."""
    labels = normalize_fqdn(fqdn).split(".")
    if len(labels) <= 2:
        return ".".join(labels)
    if ".".join(labels[-2:]) in MULTI_LABEL_SUFFIXES:
        return ".".join(labels[-3:])
    return ".".join(labels[-2:])


def ancestors(fqdn: str) -> list[str]:
    """*fqdn* followed by each parent up to (and including) the TLD."""
    labels = normalize_fqdn(fqdn).split(".")
    return [".".join(labels[i:]) for i in range(len(labels))]
