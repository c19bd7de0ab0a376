"""Exception hierarchy shared across the engine."""
from __future__ import annotations


class VwsdError(Exception):
    """Base class for all engine errors."""


class ParseError(VwsdError):
    """Malformed input file (TSV, JSONL, binary store, config)."""


class ValidationError(VwsdError):
    """Well-formed input that violates a data invariant."""


class DomainError(VwsdError):
    """Numeric operation called outside its domain (zero vector, NaN logits)."""


class MissingKeyError(VwsdError):
    """A required (space, kind, key) entry is absent from the store."""

    def __init__(self, space: str, kind: str, key: str, instance_id: str | None = None):
        self.space = space
        self.kind = kind
        self.key = key
        self.instance_id = instance_id
        where = f" (instance {instance_id})" if instance_id else ""
        super().__init__(f"missing {kind} key {key!r} in space {space!r}{where}")


class MissingAuxRowError(VwsdError):
    """A system needs an aux row that the declared aux file does not provide."""

    def __init__(self, system: str, tag: str, instance_id: str):
        self.system = system
        self.tag = tag
        self.instance_id = instance_id
        super().__init__(
            f"system {system!r}: aux file {tag!r} has no row for instance {instance_id}"
        )


class AlignmentError(VwsdError):
    """Score tables that should cover the same instances/candidates do not."""


class TransportError(VwsdError):
    """Network failure talking to the embedding service, after retries."""

    def __init__(self, message: str, batches_done: int = 0, batches_total: int = 0):
        self.batches_done = batches_done
        self.batches_total = batches_total
        super().__init__(message)


class RequestError(VwsdError):
    """The embedding service rejected the request (HTTP 4xx)."""

    def __init__(self, status: int, message: str):
        self.status = status
        super().__init__(f"HTTP {status}: {message}")


class ProtocolError(VwsdError):
    """The embedding service answered with a malformed or inconsistent body."""


class PartialFailureError(VwsdError):
    """The embedding service returned vectors for only part of the request."""

    def __init__(self, space: str, missing_keys: list[str]):
        self.space = space
        self.missing_keys = list(missing_keys)
        shown = ", ".join(repr(k) for k in self.missing_keys[:5])
        more = "" if len(self.missing_keys) <= 5 else f" (+{len(self.missing_keys) - 5} more)"
        super().__init__(f"space {space!r}: no vectors returned for {shown}{more}")
