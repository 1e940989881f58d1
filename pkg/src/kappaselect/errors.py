"""Shared exception base classes.

Every semantic error raised by this package derives from KappaSelectError so
callers (CLI, service) can map failures to exit codes / HTTP statuses without
enumerating modules. StoreCorruption is split out because it signals a broken
store rather than a bad request.
"""


class KappaSelectError(Exception):
    """Base class for all errors raised by kappaselect."""

    #: short machine-readable code, defaults to the class name
    @property
    def code(self) -> str:
        return type(self).__name__


class DomainError(KappaSelectError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class StoreCorruption(KappaSelectError):
    """The on-disk store cannot be trusted (truncated, tampered, unreadable)."""
