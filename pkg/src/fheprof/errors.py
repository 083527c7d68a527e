"""Exception types shared across the framework."""

from __future__ import annotations


class FheprofError(Exception):
    """Base class for all framework errors."""


class UnknownBenchmarkError(FheprofError):
    """A benchmark identifier is not present in the registry."""

    def __init__(self, name: str, detail: str = ""):
        self.name = name
        msg = f"unknown benchmark {name!r}"
        if detail:
            msg = f"{msg}: {detail}"
        super().__init__(msg)


class ConfigError(FheprofError):
    """A merged cryptographic configuration violates its invariants."""

    def __init__(self, message: str, violations=()):
        self.violations = list(violations)
        super().__init__(message)


class ProtocolError(FheprofError):
    """A benchmark executable violated the runner protocol."""


class SelfReportParseError(ProtocolError):
    """Self-report payload could not be parsed; carries the byte offset."""

    def __init__(self, message: str, offset: int):
        self.offset = offset
        super().__init__(f"{message} (byte offset {offset})")


class SelfReportSchemaError(ProtocolError):
    """Self-report parsed but is missing or corrupting mandatory fields."""


class CapabilityError(FheprofError):
    """The host lacks a required measurement facility (energy, perf)."""


class CoverageError(FheprofError):
    """The cost table has no entry for a primitive at the requested key."""

    def __init__(self, primitive: str, key):
        self.primitive = primitive
        self.key = key
        super().__init__(
            f"no cost-table entry for primitive {primitive!r} at key {key}"
        )


class StoreLockError(FheprofError):
    """A second writer attempted to acquire the single-writer store lock."""


class SchemaVersionError(FheprofError):
    """Store schema version is newer than this code supports."""

    def __init__(self, found: int, supported: int):
        self.found = found
        self.supported = supported
        super().__init__(
            f"store schema version {found} not supported (this build handles <= {supported}); migrate first"
        )


class EmptyPlanError(FheprofError):
    """Sweep generation filtered out every candidate point."""


class EmptyProfileError(FheprofError):
    """No stack samples were ingested; nothing to fold or render."""
