"""Batch exporters producing the engine's input files.

Everything here is a strict producer: embedding stores as JSONL, context and
translation aux files as TSV, diffusion-sample embeddings plus their sample
manifest. The engine computes all scores and metrics; the adapter only
manufactures inputs, writing each file atomically (temp file + rename).

File formats (the engine's external interfaces):
  dataset TSV    word <TAB> phrase <TAB> 10 image keys; ids are the 1-based
                 data-line ordinal, zero-padded to 6 digits
  aux text TSV   instance_id <TAB> text
  aux sample TSV instance_id <TAB> sample_key, repeated per instance, ordered
  store JSONL    {"space", "dim", "normalized", "kind", "key", "vec"}
"""
from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .generators import ContextGenerator, Translator
from .registry import ModelRegistry

log = logging.getLogger(__name__)

CANDIDATES_PER_INSTANCE = 10


@dataclass(frozen=True)
class DatasetRow:
    id: str
    target_word: str
    full_phrase: str
    candidates: tuple[str, ...]


def read_dataset_rows(path: str | Path) -> list[DatasetRow]:
    rows: list[DatasetRow] = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        fields = [f.strip() for f in line.split("\t")]
        if len(fields) != 2 + CANDIDATES_PER_INSTANCE:
            raise ValueError(
                f"{path}: line {lineno}: expected {2 + CANDIDATES_PER_INSTANCE} "
                f"tab-separated fields, got {len(fields)}"
            )
        rows.append(
            DatasetRow(
                id=f"{len(rows) + 1:06d}",
                target_word=fields[0],
                full_phrase=fields[1],
                candidates=tuple(fields[2:]),
            )
        )
    return rows


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + f".tmp{os.getpid()}")
    tmp.write_text(text, encoding="utf-8")
    tmp.replace(path)


def _store_line(space: str, dim: int, normalized: bool, kind: str, key: str,
                vec: np.ndarray) -> str:
    norm_check = float(np.linalg.norm(vec.astype(np.float64)))
    if normalized and abs(norm_check - 1.0) > 1e-5:
        raise ValueError(
            f"space {space!r} key {key!r}: norm {norm_check:.6f} in a normalized space"
        )
    return json.dumps(
        {"space": space, "dim": dim, "normalized": normalized, "kind": kind,
         "key": key, "vec": [float(x) for x in vec]},
        ensure_ascii=False,
    ) + "\n"


def export_store(
    rows: list[DatasetRow],
    registry: ModelRegistry,
    space: str,
    out_path: str | Path,
    aux_text_paths: list[str | Path] | None = None,
    include_phrases: bool = True,
) -> int:
    """Embed dataset phrases, candidate images and optional aux query texts
    into one space; returns the number of entries written."""
    spec = registry.get(space)
    lines: list[str] = []
    seen: set[tuple[str, str]] = set()

    def emit(kind: str, key: str, payload: str) -> None:
        if (kind, key) in seen:
            return
        encoder = spec.encoder_for(kind)
        vec = encoder(payload)
        if vec is None:
            log.warning("space %r: encoder declined %s key %r", space, kind, key)
            return
        seen.add((kind, key))
        lines.append(_store_line(space, spec.dim, spec.normalized, kind, key, vec))

    for row in rows:
        if include_phrases:
            emit("text", row.full_phrase, row.full_phrase)
        for cand in row.candidates:
            emit("image", cand, cand)
    for aux_path in aux_text_paths or []:
        for line in Path(aux_path).read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            _, text = line.split("\t", 1)
            emit("text", text.strip(), text.strip())
    _atomic_write(Path(out_path), "".join(lines))
    return len(lines)


def export_contexts(
    rows: list[DatasetRow],
    generator: ContextGenerator,
    out_path: str | Path,
) -> int:
    """One generated context sentence per instance (text aux TSV)."""
    lines = []
    for row in rows:
        try:
            sentence = generator(row.target_word, row.full_phrase)
        except Exception as exc:
            log.error("context generation failed for instance %s: %s", row.id, exc)
            continue
        if not sentence or "\n" in sentence:
            log.error("context generator produced an unusable sentence for %s", row.id)
            continue
        lines.append(f"{row.id}\t{sentence}\n")
    _atomic_write(Path(out_path), "".join(lines))
    return len(lines)


def export_translations(
    rows: list[DatasetRow],
    translator: Translator,
    target_language: str,
    translation_path: str | Path,
    roundtrip_path: str | Path,
    source_language: str = "en",
) -> int:
    """Per instance: the translated phrase and its round-trip back to the
    source language, as two text aux TSVs."""
    translated_lines = []
    roundtrip_lines = []
    for row in rows:
        try:
            foreign = translator.translate(row.full_phrase, source_language,
                                           target_language)
            back = translator.translate(foreign, target_language, source_language)
        except Exception as exc:
            log.error("translation failed for instance %s: %s", row.id, exc)
            continue
        translated_lines.append(f"{row.id}\t{foreign}\n")
        roundtrip_lines.append(f"{row.id}\t{back}\n")
    _atomic_write(Path(translation_path), "".join(translated_lines))
    _atomic_write(Path(roundtrip_path), "".join(roundtrip_lines))
    return len(translated_lines)


def sample_key(instance_id: str, index: int) -> str:
    return f"sample:{instance_id}:{index}"


def export_sd_samples(
    rows: list[DatasetRow],
    registry: ModelRegistry,
    spaces: list[str],
    n_samples: int,
    store_path: str | Path,
    aux_path: str | Path,
    manifest_path: str | Path,
    seed: int = 0,
) -> int:
    """Generate n pseudo-images per instance from its phrase and embed them
    into every requested space.

    Writes the sample-embedding store (JSONL), the ordered sample-key aux TSV
    and a manifest recording the generation settings and which instances
    completed. Real diffusion sampling drops in by replacing the payload
    construction with generated image references.
    """
    specs = [registry.get(space) for space in spaces]
    store_lines: list[str] = []
    aux_lines: list[str] = []
    completed: list[str] = []
    for row in rows:
        try:
            row_store_lines = []
            for i in range(n_samples):
                key = sample_key(row.id, i)
                # stand-in for a generated image: a deterministic reference
                # derived from the prompt, the sample index and the seed
                payload = f"sdgen\x1f{row.full_phrase}\x1f{seed}\x1f{i}"
                for spec in specs:
                    vec = spec.encoder_for("image")(payload)
                    if vec is None:
                        raise RuntimeError(f"encoder declined sample {key}")
                    row_store_lines.append(
                        _store_line(spec.space, spec.dim, spec.normalized,
                                    "image", key, vec)
                    )
        except Exception as exc:
            log.error("sample generation failed for instance %s: %s", row.id, exc)
            continue
        store_lines.extend(row_store_lines)
        aux_lines.extend(f"{row.id}\t{sample_key(row.id, i)}\n" for i in range(n_samples))
        completed.append(row.id)
    _atomic_write(Path(store_path), "".join(store_lines))
    _atomic_write(Path(aux_path), "".join(aux_lines))
    manifest = {
        "n_samples": n_samples,
        "spaces": list(spaces),
        "seed": seed,
        "sampler": {"engine": "stub-deterministic", "prompt_source": "full_phrase"},
        "instances_completed": completed,
        "instances_total": len(rows),
    }
    _atomic_write(Path(manifest_path), json.dumps(manifest, indent=2) + "\n")
    return len(completed)
