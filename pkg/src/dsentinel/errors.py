"""Exception hierarchy shared across the toolkit."""


class DsentinelError(Exception):
    """Base class for all toolkit errors."""


class InputError(DsentinelError, ValueError):
    """Caller supplied malformed or inconsistent input."""


class InvalidNameError(InputError):
    """A domain name failed syntax validation."""


class FeedFormatError(DsentinelError):
    def __init__(self, provider: str, reason: str):
        super().__init__(f"feed for provider {provider!r} is not a known format: {reason}")
        self.provider = provider


class EmptyFeedError(DsentinelError):
    """No usable catalog entries were parsed."""


class TransientResolutionError(DsentinelError):
    """Resolver did not answer after all retries (distinct from NXDOMAIN)."""


class ResolverUnavailableError(DsentinelError):
    """Every lookup in a batch failed transiently."""


class ValidationError(DsentinelError):
    """A signature could not be validated (e.g. empty benign corpus)."""


class SignatureRejected(DsentinelError):
    def __init__(self, signature_id: str, offending_ids: list[str]):
        super().__init__(
            f"signature {signature_id!r} matched {len(offending_ids)} benign page(s)"
        )
        self.signature_id = signature_id
        self.offending_ids = list(offending_ids)


class ScenarioError(DsentinelError):
    def __init__(self, errors: list[str]):
        super().__init__("; ".join(errors))
        self.errors = list(errors)


class StoreLockedError(DsentinelError):
    """Another cycle holds the store lock."""


class ConfigError(DsentinelError):
    """Run configuration is invalid."""
