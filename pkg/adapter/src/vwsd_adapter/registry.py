"""Encoder registry: which model serves which embedding space.

Each space maps to a text encoder and an image encoder returning fixed-dim
vectors. The bundled stub encoders are deterministic functions of the payload
(no model weights, no pixels) so every export and service response is
reproducible offline; real encoders plug in through the same callables.

An encoder returns a vector, or None to decline an item (the service then
omits that key from its response); exceptions are model failures.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Callable

import numpy as np

Encoder = Callable[[str], "np.ndarray | None"]

SKIP_MARKER = "\x00skip"  # stub encoders decline payloads carrying this marker


def _seed(space: str, kind: str, payload: str) -> int:
    digest = hashlib.sha256(f"{space}\x1f{kind}\x1f{payload}".encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little")


def hashed_unit_vector(space: str, kind: str, payload: str, dim: int) -> np.ndarray:
    rng = np.random.default_rng(_seed(space, kind, payload))
    v = rng.normal(size=dim)
    v = v / np.linalg.norm(v)
    return v.astype(np.float32)


def hashed_feature_vector(space: str, kind: str, payload: str, dim: int) -> np.ndarray:
    # raw CNN-style features: non-negative, unnormalized
    rng = np.random.default_rng(_seed(space, kind, payload))
    return np.abs(rng.normal(size=dim) * 4.0).astype(np.float32)


@dataclass(frozen=True)
class EncoderSpec:
    space: str
    dim: int
    normalized: bool
    text_encoder: Encoder | None
    image_encoder: Encoder | None

    def encoder_for(self, kind: str) -> Encoder:
        enc = self.text_encoder if kind == "text" else self.image_encoder
        if enc is None:
            raise LookupError(f"space {self.space!r} serves no {kind} encoder")
        return enc


class ModelRegistry:
    """space name -> encoder spec; every served space has a fixed dim."""

    def __init__(self) -> None:
        self._specs: dict[str, EncoderSpec] = {}

    def add(self, spec: EncoderSpec) -> None:
        if spec.space in self._specs:
            raise ValueError(f"space {spec.space!r} already registered")
        if spec.dim < 1:
            raise ValueError(f"space {spec.space!r}: dim must be >= 1")
        self._specs[spec.space] = spec

    def get(self, space: str) -> EncoderSpec:
        try:
            return self._specs[space]
        except KeyError:
            raise LookupError(f"unknown space {space!r}") from None

    def spaces(self) -> list[str]:
        return list(self._specs)

    def __contains__(self, space: str) -> bool:
        return space in self._specs


def _stub_encoder(space: str, kind: str, dim: int, normalized: bool) -> Encoder:
    def encode(payload: str):
        if SKIP_MARKER in payload:
            return None
        if normalized:
            return hashed_unit_vector(space, kind, payload, dim)
        return hashed_feature_vector(space, kind, payload, dim)

    return encode


DEFAULT_STUB_SPACES: dict[str, tuple[int, bool]] = {
    "clip-en": (512, True),
    "clip-zh": (512, True),
    "clip-l14": (768, True),
    "inception-feat": (2048, False),
}


def stub_registry(spaces: dict[str, tuple[int, bool]] | None = None) -> ModelRegistry:
    """Registry backed entirely by deterministic stub encoders."""
    registry = ModelRegistry()
    for space, (dim, normalized) in (spaces or DEFAULT_STUB_SPACES).items():
        registry.add(
            EncoderSpec(
                space=space,
                dim=dim,
                normalized=normalized,
                text_encoder=_stub_encoder(space, "text", dim, normalized),
                image_encoder=_stub_encoder(space, "image", dim, normalized),
            )
        )
    return registry
