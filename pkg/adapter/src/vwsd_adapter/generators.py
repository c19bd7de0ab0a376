"""Context-sentence generators and translators feeding the exporters.

The stub generators are deterministic templates (greedy, no sampling), good
enough to produce well-formed engine inputs offline. Real language models or
translation APIs plug in through the same tiny interfaces.
"""
from __future__ import annotations

import os
from typing import Callable, Protocol

import requests

ContextGenerator = Callable[[str, str], str]  # (target_word, full_phrase) -> sentence

_TEMPLATES: dict[str, ContextGenerator] = {
    "k2t-1": lambda word, phrase: f"A clear example of {phrase} in everyday use.",
    "k2t-2": lambda word, phrase: f"The {phrase} is shown in this picture.",
    "k2t-3": lambda word, phrase: f"This photo depicts {phrase}, a kind of {word}.",
}


def context_generator(generator_id: str) -> ContextGenerator:
    try:
        return _TEMPLATES[generator_id]
    except KeyError:
        raise ValueError(
            f"unknown context generator {generator_id!r}; have {sorted(_TEMPLATES)}"
        ) from None


class Translator(Protocol):
    def translate(self, text: str, source: str, target: str) -> str: ...


class PseudoTranslator:
    """Reversible token-mapping stand-in for a translation model.

    Forward translation prefixes each word with the target language; the
    reverse direction strips the prefix, so round trips reproduce the
    original. ``lossy_every`` marks every n-th word as imperfectly
    translated, which populates the non-identical round-trip group.
    """

    def __init__(self, lossy_every: int | None = None):
        self.lossy_every = lossy_every

    def translate(self, text: str, source: str, target: str) -> str:
        if source == target:
            return text
        words = text.split()
        out = []
        for i, word in enumerate(words):
            if word.startswith(f"{source}:"):  # reverse direction
                restored = word.split(":", 1)[1]
                if self.lossy_every and (i + 1) % self.lossy_every == 0:
                    restored += "ish"
                out.append(restored)
            else:
                out.append(f"{target}:{word}")
        return " ".join(out)


class HttpTranslator:
    """Client for a REST translation service: POST {endpoint}/translate with
    {"text", "source", "target"}, answering {"text"}."""

    def __init__(self, endpoint: str | None = None, api_key: str | None = None,
                 timeout: float = 30.0):
        endpoint = endpoint or os.environ.get("VWSD_TRANSLATE_ENDPOINT")
        if not endpoint:
            raise RuntimeError(
                "translation service not configured: pass an endpoint or set "
                "VWSD_TRANSLATE_ENDPOINT"
            )
        self.endpoint = endpoint.rstrip("/")
        self.api_key = api_key or os.environ.get("VWSD_TRANSLATE_API_KEY")
        self.timeout = timeout

    def translate(self, text: str, source: str, target: str) -> str:
        headers = {}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        resp = requests.post(
            f"{self.endpoint}/translate",
            json={"text": text, "source": source, "target": target},
            headers=headers,
            timeout=self.timeout,
        )
        resp.raise_for_status()
        return resp.json()["text"]


def translator_from_name(name: str, lossy_every: int | None = None) -> Translator:
    if name == "stub":
        return PseudoTranslator(lossy_every=lossy_every)
    if name == "http":
        return HttpTranslator()
    raise ValueError(f"unknown translator {name!r}; have ['stub', 'http']")
