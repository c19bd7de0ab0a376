"""Disambiguation dataset, gold labels and auxiliary query files.

A dataset row is one disambiguation problem: a target word, the short phrase
that fixes its sense, and ten candidate image keys of which at most one is
marked gold. Auxiliary files carry per-instance query material produced
outside the engine (generated context sentences, translations, diffusion
sample keys).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

from .errors import ParseError, ValidationError

log = logging.getLogger(__name__)

CANDIDATES_PER_INSTANCE = 10
_FIELDS_PER_LINE = 2 + CANDIDATES_PER_INSTANCE

AUX_TEXT = "text"
AUX_SAMPLES = "samples"


@dataclass(frozen=True)
class Instance:
    """One disambiguation problem."""

    id: str
    target_word: str
    full_phrase: str
    candidates: tuple[str, ...]
    gold: str | None = None

    def __post_init__(self) -> None:
        if not self.id:
            raise ValidationError("instance id must be non-empty")
        if not self.target_word:
            raise ValidationError(f"instance {self.id}: target word is empty")
        if not self.full_phrase:
            raise ValidationError(f"instance {self.id}: full phrase is empty")
        if len(self.candidates) != CANDIDATES_PER_INSTANCE:
            raise ValidationError(
                f"instance {self.id}: expected {CANDIDATES_PER_INSTANCE} candidates, "
                f"got {len(self.candidates)}"
            )
        if len(set(self.candidates)) != len(self.candidates):
            raise ValidationError(f"instance {self.id}: duplicate candidate image key")
        if any(not c for c in self.candidates):
            raise ValidationError(f"instance {self.id}: empty candidate image key")
        if self.gold is not None and self.gold not in self.candidates:
            raise ValidationError(
                f"instance {self.id}: gold key {self.gold!r} is not among the candidates"
            )

    def gold_index(self) -> int:
        if self.gold is None:
            raise ValidationError(f"instance {self.id}: no gold label")
        return self.candidates.index(self.gold)


@dataclass(frozen=True)
class Dataset:
    split_name: str
    instances: tuple[Instance, ...]

    def __post_init__(self) -> None:
        ids = [inst.id for inst in self.instances]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise ValidationError(f"duplicate instance ids: {dupes[:5]}")

    def __len__(self) -> int:
        return len(self.instances)

    def __iter__(self):
        return iter(self.instances)

    def by_id(self, instance_id: str) -> Instance:
        for inst in self.instances:
            if inst.id == instance_id:
                return inst
        raise KeyError(instance_id)

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(inst.id for inst in self.instances)

    def has_gold(self) -> bool:
        return all(inst.gold is not None for inst in self.instances)


def parse_dataset(tsv_text: str, split_name: str = "") -> Dataset:
    """Parse the 12-column dataset TSV: word, phrase, then ten image keys.

    Instance ids are the 1-based ordinal of the data line, zero-padded to six
    digits. Blank lines are skipped; gold labels are loaded separately.
    """
    instances: list[Instance] = []
    for lineno, line in enumerate(tsv_text.splitlines(), start=1):
        if not line.strip():
            continue
        fields = [f.strip() for f in line.split("\t")]
        if len(fields) != _FIELDS_PER_LINE:
            raise ParseError(
                f"line {lineno}: expected {_FIELDS_PER_LINE} tab-separated fields, "
                f"got {len(fields)}"
            )
        word, phrase = fields[0], fields[1]
        candidates = tuple(fields[2:])
        instance_id = f"{len(instances) + 1:06d}"
        try:
            inst = Instance(instance_id, word, phrase, candidates)
        except ValidationError as exc:
            raise ValidationError(f"line {lineno}: {exc}") from exc
        if word.lower() not in phrase.lower():
            log.warning(
                "line %d: target word %r does not occur in phrase %r", lineno, word, phrase
            )
        instances.append(inst)
    return Dataset(split_name=split_name, instances=tuple(instances))


def serialize_dataset(dataset: Dataset) -> str:
    """Inverse of parse_dataset (gold labels are not part of this format)."""
    lines = [
        "\t".join((inst.target_word, inst.full_phrase, *inst.candidates))
        for inst in dataset.instances
    ]
    return "".join(line + "\n" for line in lines)


def parse_gold(lines: str, dataset: Dataset) -> Dataset:
    """Attach gold labels: one non-empty line per instance, in dataset order."""
    keys = [line.strip() for line in lines.splitlines() if line.strip()]
    if len(keys) != len(dataset):
        raise ValidationError(
            f"gold file has {len(keys)} labels for {len(dataset)} instances"
        )
    labeled = []
    for inst, key in zip(dataset.instances, keys):
        if key not in inst.candidates:
            raise ValidationError(
                f"instance {inst.id}: gold key {key!r} is not among the candidates"
            )
        labeled.append(replace(inst, gold=key))
    return Dataset(split_name=dataset.split_name, instances=tuple(labeled))


def serialize_gold(dataset: Dataset) -> str:
    if not dataset.has_gold():
        raise ValidationError("dataset has unlabeled instances")
    return "".join(f"{inst.gold}\n" for inst in dataset.instances)


@dataclass(frozen=True)
class AuxQueryFile:
    """Per-instance query material keyed by instance id.

    ``kind`` is "text" (one string per instance: a context sentence or a
    translation) or "samples" (an ordered list of generated-image keys).
    """

    tag: str
    kind: str
    rows: dict[str, str | tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in (AUX_TEXT, AUX_SAMPLES):
            raise ValidationError(f"aux file {self.tag!r}: unknown kind {self.kind!r}")

    def text_for(self, instance_id: str) -> str | None:
        if self.kind != AUX_TEXT:
            raise ValidationError(f"aux file {self.tag!r} holds samples, not text")
        row = self.rows.get(instance_id)
        return row  # type: ignore[return-value]

    def samples_for(self, instance_id: str) -> tuple[str, ...] | None:
        if self.kind != AUX_SAMPLES:
            raise ValidationError(f"aux file {self.tag!r} holds text, not samples")
        row = self.rows.get(instance_id)
        return row  # type: ignore[return-value]

    def validate_against(self, dataset: Dataset) -> None:
        known = set(dataset.ids)
        unknown = [i for i in self.rows if i not in known]
        if unknown:
            raise ValidationError(
                f"aux file {self.tag!r}: rows for unknown instances {sorted(unknown)[:5]}"
            )


def parse_aux_text(tsv_text: str, tag: str) -> AuxQueryFile:
    """Parse the text variant: ``instance_id <TAB> text``, one row per instance."""
    rows: dict[str, str | tuple[str, ...]] = {}
    for lineno, line in enumerate(tsv_text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t", 1)
        if len(parts) != 2:
            raise ParseError(f"aux {tag!r} line {lineno}: expected 'id<TAB>text'")
        instance_id, text = parts[0].strip(), parts[1].strip()
        if not instance_id:
            raise ParseError(f"aux {tag!r} line {lineno}: empty instance id")
        if not text:
            raise ValidationError(f"aux {tag!r} line {lineno}: empty text row")
        if instance_id in rows:
            raise ValidationError(
                f"aux {tag!r} line {lineno}: duplicate row for instance {instance_id}"
            )
        rows[instance_id] = text
    return AuxQueryFile(tag=tag, kind=AUX_TEXT, rows=rows)


def parse_aux_samples(tsv_text: str, tag: str) -> AuxQueryFile:
    """Parse the sample variant: repeated ``instance_id <TAB> sample_key`` rows."""
    ordered: dict[str, list[str]] = {}
    for lineno, line in enumerate(tsv_text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise ParseError(f"aux {tag!r} line {lineno}: expected 'id<TAB>sample_key'")
        instance_id, key = parts[0].strip(), parts[1].strip()
        if not instance_id:
            raise ParseError(f"aux {tag!r} line {lineno}: empty instance id")
        if not key:
            raise ValidationError(f"aux {tag!r} line {lineno}: empty sample key")
        ordered.setdefault(instance_id, []).append(key)
    rows: dict[str, str | tuple[str, ...]] = {i: tuple(ks) for i, ks in ordered.items()}
    return AuxQueryFile(tag=tag, kind=AUX_SAMPLES, rows=rows)


def serialize_aux(aux: AuxQueryFile) -> str:
    out: list[str] = []
    for instance_id, row in aux.rows.items():
        if aux.kind == AUX_TEXT:
            out.append(f"{instance_id}\t{row}\n")
        else:
            for key in row:
                out.append(f"{instance_id}\t{key}\n")
    return "".join(out)
