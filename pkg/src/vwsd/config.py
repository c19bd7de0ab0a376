"""Declarative run configuration.

A run references many files and named systems, so everything lives in one
TOML file instead of flag chains. Paths are resolved relative to the config
file. Schema:

    dataset = "trial.data.tsv"        # required
    split = "trial"                   # optional, defaults to the file stem
    gold = "trial.gold.tsv"           # optional
    stores = ["clip.jsonl", "f.embs"] # >= 1, merged; binary sniffed by magic
    out = "reports"                   # output directory
    formats = ["json", "csv", "markdown"]
    figures = true                    # render figures next to the reports
    endpoint = "http://host:8000"     # embedding service (VWSD_ENDPOINT wins)
    jobs = 1

    [aux.k2t-2]                       # one table per aux tag
    path = "k2t2.tsv"
    kind = "text"                     # optional: "text" | "samples";
                                      # inferred from referencing systems

    [[system]]
    name = "base"
    space = "clip-en"
    query = "phrase"                  # phrase | context:TAG | translation:TAG
                                      # | sd:TAG:max_cosine | sd:TAG:min_l2
    logit_scale = 100.0               # optional
    l2_temperature = 1.0              # optional

    [[ensemble]]
    name = "base+k2t2"
    members = ["base", "k2t-2"]
    weights = [0.5, 0.5]              # optional, defaults to equal
"""
from __future__ import annotations

import sys
from dataclasses import dataclass
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .dataset import AUX_SAMPLES, AUX_TEXT
from .ensemble import EnsembleSpec
from .errors import ParseError, ValidationError
from .scoring import QUERY_SD, QuerySource, SystemSpec

REPORT_FORMATS = ("json", "csv", "markdown")


@dataclass(frozen=True)
class AuxDecl:
    tag: str
    path: Path
    kind: str   # "text" | "samples"


@dataclass(frozen=True)
class RunConfig:
    dataset: Path
    split: str
    gold: Path | None
    stores: tuple[Path, ...]
    aux: tuple[AuxDecl, ...]
    systems: tuple[SystemSpec, ...]
    ensembles: tuple[EnsembleSpec, ...]
    out: Path
    formats: tuple[str, ...]
    figures: bool
    endpoint: str | None
    jobs: int

    def system(self, name: str) -> SystemSpec:
        for spec in self.systems:
            if spec.name == name:
                return spec
        raise ValidationError(f"unknown system {name!r}")

    def ensemble(self, name: str) -> EnsembleSpec:
        for spec in self.ensembles:
            if spec.name == name:
                return spec
        raise ValidationError(f"unknown ensemble {name!r}")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(s.name for s in self.systems) + tuple(e.name for e in self.ensembles)


def _expect(table: dict, key: str, types, where: str):
    if key not in table:
        raise ParseError(f"config {where}: missing {key!r}")
    value = table[key]
    if not isinstance(value, types):
        raise ParseError(f"config {where}: {key!r} has the wrong type")
    return value


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except FileNotFoundError:
        raise ParseError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ParseError(f"config {path}: {exc}") from exc
    base = path.parent

    dataset = base / _expect(doc, "dataset", str, "top level")
    split = doc.get("split") or Path(dataset).stem
    gold = base / doc["gold"] if "gold" in doc else None
    stores_raw = _expect(doc, "stores", list, "top level")
    if not stores_raw:
        raise ParseError("config: stores must name at least one file")
    stores = tuple(base / s for s in stores_raw)
    out = base / doc.get("out", "reports")
    formats = tuple(doc.get("formats", list(REPORT_FORMATS)))
    bad = [f for f in formats if f not in REPORT_FORMATS]
    if bad:
        raise ParseError(f"config: unknown report formats {bad}")
    figures = bool(doc.get("figures", True))
    endpoint = doc.get("endpoint")
    jobs = int(doc.get("jobs", 1))
    if jobs < 1:
        raise ParseError("config: jobs must be >= 1")

    systems: list[SystemSpec] = []
    for i, entry in enumerate(doc.get("system", [])):
        where = f"system #{i + 1}"
        try:
            query = QuerySource.parse(_expect(entry, "query", str, where))
            spec = SystemSpec(
                name=_expect(entry, "name", str, where),
                space=_expect(entry, "space", str, where),
                query=query,
                logit_scale=float(entry.get("logit_scale", 100.0)),
                l2_temperature=float(entry.get("l2_temperature", 1.0)),
            )
        except ValidationError as exc:
            raise ParseError(f"config {where}: {exc}") from exc
        systems.append(spec)
    names = [s.name for s in systems]
    if len(set(names)) != len(names):
        raise ParseError("config: duplicate system names")

    ensembles: list[EnsembleSpec] = []
    for i, entry in enumerate(doc.get("ensemble", [])):
        where = f"ensemble #{i + 1}"
        try:
            spec = EnsembleSpec.make(
                name=_expect(entry, "name", str, where),
                members=_expect(entry, "members", list, where),
                weights=entry.get("weights"),
            )
        except ValidationError as exc:
            raise ParseError(f"config {where}: {exc}") from exc
        for member in spec.members:
            if member not in names:
                raise ParseError(f"config {where}: unknown member system {member!r}")
        ensembles.append(spec)
    all_names = names + [e.name for e in ensembles]
    if len(set(all_names)) != len(all_names):
        raise ParseError("config: system and ensemble names must be unique")

    # Aux kind: explicit, else inferred from how systems reference the tag.
    inferred: dict[str, str] = {}
    for spec in systems:
        if spec.query.tag is None:
            continue
        kind = AUX_SAMPLES if spec.query.kind == QUERY_SD else AUX_TEXT
        prior = inferred.setdefault(spec.query.tag, kind)
        if prior != kind:
            raise ParseError(
                f"config: aux tag {spec.query.tag!r} is used both as text and samples"
            )
    aux_decls: list[AuxDecl] = []
    for tag, entry in doc.get("aux", {}).items():
        if isinstance(entry, str):
            entry = {"path": entry}
        aux_path = base / _expect(entry, "path", str, f"aux {tag!r}")
        kind = entry.get("kind", inferred.get(tag, AUX_TEXT))
        if kind not in (AUX_TEXT, AUX_SAMPLES):
            raise ParseError(f"config aux {tag!r}: unknown kind {kind!r}")
        if tag in inferred and kind != inferred[tag]:
            raise ParseError(
                f"config aux {tag!r}: declared {kind!r} but systems use it as "
                f"{inferred[tag]!r}"
            )
        aux_decls.append(AuxDecl(tag=tag, path=aux_path, kind=kind))
    declared = {d.tag for d in aux_decls}
    for spec in systems:
        if spec.query.tag is not None and spec.query.tag not in declared:
            raise ParseError(
                f"config: system {spec.name!r} references undeclared aux tag "
                f"{spec.query.tag!r}"
            )

    return RunConfig(
        dataset=dataset,
        split=split,
        gold=gold,
        stores=stores,
        aux=tuple(aux_decls),
        systems=tuple(systems),
        ensembles=tuple(ensembles),
        out=out,
        formats=formats,
        figures=figures,
        endpoint=endpoint,
        jobs=jobs,
    )
