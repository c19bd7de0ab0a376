"""Embedding stores: typed vector spaces plus the JSONL and binary codecs.

A store maps (space, kind, key) to a float32 vector and is the engine's only
bridge to external models. Cosine spaces are flagged ``normalized`` and their
vectors are kept at unit Euclidean norm; feature-distance spaces (raw CNN
features) are stored unscaled. JSONL is the interchange format, the binary
format is for fast bulk loading and round-trips bit-exactly.
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass

import numpy as np

from .errors import MissingKeyError, ParseError, ValidationError

MAGIC = b"EMBS"
VERSION = 1

NORM_ATOL = 1e-5      # store invariant: |norm - 1| for normalized spaces
RENORM_TOL = 1e-3     # encoder float noise silently re-normalized on load

KIND_TEXT = "text"
KIND_IMAGE = "image"
_KIND_TO_CODE = {KIND_TEXT: 0, KIND_IMAGE: 1}
_CODE_TO_KIND = {0: KIND_TEXT, 1: KIND_IMAGE}


@dataclass(frozen=True)
class EmbeddingSpace:
    name: str
    dim: int
    normalized: bool

    def __post_init__(self) -> None:
        if not self.name:
            raise ValidationError("embedding space name must be non-empty")
        if self.dim < 1:
            raise ValidationError(f"space {self.name!r}: dim must be >= 1, got {self.dim}")


class EmbeddingStore:
    """In-memory store; immutable by convention once loading is done."""

    def __init__(self) -> None:
        self._spaces: dict[str, EmbeddingSpace] = {}
        # space -> {(kind, key): float32 vector}; both levels preserve insertion order
        self._entries: dict[str, dict[tuple[str, str], np.ndarray]] = {}

    @property
    def spaces(self) -> tuple[EmbeddingSpace, ...]:
        return tuple(self._spaces.values())

    def space(self, name: str) -> EmbeddingSpace:
        try:
            return self._spaces[name]
        except KeyError:
            raise ValidationError(f"unknown embedding space {name!r}") from None

    def has_space(self, name: str) -> bool:
        return name in self._spaces

    def add_space(self, space: EmbeddingSpace) -> None:
        existing = self._spaces.get(space.name)
        if existing is not None and existing != space:
            raise ValidationError(
                f"space {space.name!r} redeclared with dim={space.dim} "
                f"normalized={space.normalized}, was dim={existing.dim} "
                f"normalized={existing.normalized}"
            )
        self._spaces.setdefault(space.name, space)
        self._entries.setdefault(space.name, {})

    def add(
        self,
        space_name: str,
        kind: str,
        key: str,
        vector: np.ndarray,
        *,
        renormalize: bool = False,
    ) -> None:
        """Insert one entry, enforcing dim and norm invariants.

        With ``renormalize`` a vector in a normalized space whose norm deviates
        from 1 by at most RENORM_TOL is rescaled; larger deviations are
        rejected either way (probable wrong-space data).
        """
        space = self.space(space_name)
        if kind not in _KIND_TO_CODE:
            raise ValidationError(f"unknown entry kind {kind!r}")
        if not key:
            raise ValidationError(f"space {space_name!r}: empty entry key")
        vec = np.asarray(vector, dtype=np.float32)
        if vec.ndim != 1 or vec.shape[0] != space.dim:
            raise ValidationError(
                f"space {space_name!r} key {key!r}: vector has shape {vec.shape}, "
                f"expected ({space.dim},)"
            )
        if space.normalized:
            norm = float(np.linalg.norm(vec.astype(np.float64)))
            if norm == 0.0:
                raise ValidationError(
                    f"space {space_name!r} key {key!r}: zero vector in a normalized space"
                )
            if abs(norm - 1.0) > NORM_ATOL:
                if renormalize and abs(norm - 1.0) <= RENORM_TOL:
                    vec = (vec.astype(np.float64) / norm).astype(np.float32)
                else:
                    raise ValidationError(
                        f"space {space_name!r} key {key!r}: norm {norm:.6f} deviates "
                        f"from 1 by more than {RENORM_TOL if renormalize else NORM_ATOL}"
                    )
        entries = self._entries[space_name]
        if (kind, key) in entries:
            raise ValidationError(
                f"space {space_name!r}: duplicate {kind} key {key!r}"
            )
        vec.flags.writeable = False
        entries[(kind, key)] = vec

    def has(self, space_name: str, kind: str, key: str) -> bool:
        entries = self._entries.get(space_name)
        return entries is not None and (kind, key) in entries

    def get(self, space_name: str, kind: str, key: str) -> np.ndarray:
        entries = self._entries.get(space_name)
        if entries is None or (kind, key) not in entries:
            raise MissingKeyError(space_name, kind, key)
        return entries[(kind, key)]

    def entries(self, space_name: str):
        """Yield (kind, key, vector) in insertion order."""
        for (kind, key), vec in self._entries.get(space_name, {}).items():
            yield kind, key, vec

    def entry_count(self, space_name: str | None = None) -> int:
        if space_name is not None:
            return len(self._entries.get(space_name, {}))
        return sum(len(e) for e in self._entries.values())

    def copy(self) -> "EmbeddingStore":
        dup = EmbeddingStore()
        for space in self.spaces:
            dup.add_space(space)
            dup._entries[space.name] = dict(self._entries[space.name])
        return dup

    def merge_from(self, other: "EmbeddingStore") -> None:
        """Union another store into this one; conflicting duplicates are errors."""
        for space in other.spaces:
            self.add_space(space)
            for kind, key, vec in other.entries(space.name):
                if self.has(space.name, kind, key):
                    raise ValidationError(
                        f"space {space.name!r}: duplicate {kind} key {key!r} while merging"
                    )
                self._entries[space.name][(kind, key)] = vec

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EmbeddingStore):
            return NotImplemented
        if self._spaces != other._spaces:
            return False
        if list(self._entries) != list(other._entries):
            return False
        for name, entries in self._entries.items():
            theirs = other._entries[name]
            if list(entries) != list(theirs):
                return False
            for k, vec in entries.items():
                if vec.tobytes() != theirs[k].tobytes():
                    return False
        return True


def load_store_jsonl(text: str) -> EmbeddingStore:
    """Load the JSONL interchange format.

    Each line is an object {"space", "dim", "kind", "key", "vec"} with an
    optional "normalized" flag (default true, must be consistent within a
    space). Vectors in normalized spaces are re-normalized when off by at
    most RENORM_TOL and rejected beyond that.
    """
    store = EmbeddingStore()
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"line {lineno}: invalid JSON: {exc}") from exc
        if not isinstance(obj, dict):
            raise ParseError(f"line {lineno}: expected a JSON object")
        try:
            space_name = obj["space"]
            dim = obj["dim"]
            kind = obj["kind"]
            key = obj["key"]
            vec = obj["vec"]
        except KeyError as exc:
            raise ParseError(f"line {lineno}: missing field {exc.args[0]!r}") from exc
        normalized = obj.get("normalized", True)
        if not isinstance(dim, int) or not isinstance(space_name, str):
            raise ParseError(f"line {lineno}: bad space/dim field")
        if not isinstance(vec, list) or len(vec) != dim:
            raise ParseError(
                f"line {lineno}: vec has {len(vec) if isinstance(vec, list) else 'no'} "
                f"entries, dim says {dim}"
            )
        space = EmbeddingSpace(space_name, dim, bool(normalized))
        try:
            store.add_space(space)
            store.add(space_name, kind, key, np.asarray(vec, dtype=np.float32),
                      renormalize=True)
        except ValidationError as exc:
            raise ValidationError(f"line {lineno}: {exc}") from exc
    return store


def save_store_jsonl(store: EmbeddingStore) -> str:
    lines = []
    for space in store.spaces:
        for kind, key, vec in store.entries(space.name):
            obj = {
                "space": space.name,
                "dim": space.dim,
                "normalized": space.normalized,
                "kind": kind,
                "key": key,
                "vec": [float(x) for x in vec],
            }
            lines.append(json.dumps(obj, ensure_ascii=False))
    return "".join(line + "\n" for line in lines)


def save_store_binary(store: EmbeddingStore) -> bytes:
    """Little-endian binary codec; round-trips float bit patterns exactly.

    Layout: magic "EMBS", u16 version, u32 space count; per space u16 name
    length + name, u32 dim, u8 normalized, u64 entry count; per entry u8 kind,
    u16 key length + key, dim f32 values.
    """
    buf = bytearray()
    buf += MAGIC
    buf += struct.pack("<HI", VERSION, len(store.spaces))
    for space in store.spaces:
        name_b = space.name.encode("utf-8")
        if len(name_b) > 0xFFFF:
            raise ValidationError(f"space name too long: {space.name[:40]!r}...")
        buf += struct.pack("<H", len(name_b))
        buf += name_b
        buf += struct.pack("<IBQ", space.dim, int(space.normalized),
                           store.entry_count(space.name))
        for kind, key, vec in store.entries(space.name):
            key_b = key.encode("utf-8")
            if len(key_b) > 0xFFFF:
                raise ValidationError(f"entry key too long: {key[:40]!r}...")
            buf += struct.pack("<BH", _KIND_TO_CODE[kind], len(key_b))
            buf += key_b
            buf += np.ascontiguousarray(vec, dtype="<f4").tobytes()
    return bytes(buf)


class _Reader:
    """Bounds-checked cursor over the binary payload."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ParseError(
                f"truncated store: needed {n} bytes at offset {self.pos}, "
                f"have {len(self.data) - self.pos}"
            )
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def vector(self, dim: int) -> np.ndarray:
        nbytes = 4 * dim
        if self.pos + nbytes > len(self.data):
            raise ParseError(
                f"truncated store: needed {nbytes} bytes at offset {self.pos}, "
                f"have {len(self.data) - self.pos}"
            )
        vec = np.frombuffer(self.data, dtype="<f4", count=dim, offset=self.pos)
        self.pos += nbytes
        return vec


def load_store_binary(data: bytes) -> EmbeddingStore:
    r = _Reader(data)
    if r.take(4) != MAGIC:
        raise ParseError("bad magic: not an embedding store")
    (version, nspaces) = r.unpack("<HI")
    if version != VERSION:
        raise ParseError(f"unsupported store version {version}")
    store = EmbeddingStore()
    for _ in range(nspaces):
        (name_len,) = r.unpack("<H")
        name = r.take(name_len).decode("utf-8")
        dim, norm_flag, n_entries = r.unpack("<IBQ")
        space = EmbeddingSpace(name, dim, bool(norm_flag))
        store.add_space(space)
        entries = store._entries[name]
        for _ in range(n_entries):
            kind_code, key_len = r.unpack("<BH")
            if kind_code not in _CODE_TO_KIND:
                raise ParseError(f"offset {r.pos}: unknown entry kind {kind_code}")
            key = r.take(key_len).decode("utf-8")
            vec = r.vector(dim)
            kind = _CODE_TO_KIND[kind_code]
            if (kind, key) in entries:
                raise ValidationError(f"space {name!r}: duplicate {kind} key {key!r}")
            if space.normalized:
                v64 = vec.astype(np.float64)
                norm = math.sqrt(float(v64 @ v64))
                if abs(norm - 1.0) > NORM_ATOL:
                    raise ValidationError(
                        f"space {name!r} key {key!r}: norm {norm:.6f} violates the "
                        f"normalized-space invariant"
                    )
            entries[(kind, key)] = vec
    if r.pos != len(data):
        raise ParseError(f"{len(data) - r.pos} trailing bytes after offset {r.pos}")
    return store


def load_store_file(path) -> EmbeddingStore:
    """Load a store file, sniffing the binary magic, else treating it as JSONL."""
    raw = open(path, "rb").read()
    if raw[:4] == MAGIC:
        return load_store_binary(raw)
    return load_store_jsonl(raw.decode("utf-8"))
