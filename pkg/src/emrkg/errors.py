"""Shared exception hierarchy.

Module-specific exceptions subclass one of the three bases so the CLI can
map any failure onto its exit-code contract (config=2, data=3, internal=4).
"""


class EmrkgError(Exception):
    """Base class for all package errors."""


class ConfigError(EmrkgError):
    """Invalid or unresolvable configuration."""


class DataError(EmrkgError):
    """Malformed or inconsistent input data."""


class InternalError(EmrkgError):
    """Invariant violation that should be unreachable."""
