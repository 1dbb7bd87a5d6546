"""Detection and analysis toolkit for dangling cloud DNS records and their abuse."""

__version__ = "0.1.0"

SCHEMA_VERSION = 1
