"""Per-candidate scoring: cosine ranking for text queries, best-match
aggregation (max cosine or min L2) for generated-sample queries.

Every system turns one instance into ten raw scores, converts them to a
probability distribution via a scaled softmax, and ranks the candidates in
descending score order with ties broken by candidate index.
"""
from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .dataset import AUX_SAMPLES, AUX_TEXT, AuxQueryFile, Dataset, Instance
from .errors import (
    DomainError,
    MissingAuxRowError,
    MissingKeyError,
    ParseError,
    ValidationError,
)
from .store import KIND_IMAGE, KIND_TEXT, EmbeddingStore

QUERY_PHRASE = "phrase"
QUERY_CONTEXT = "context"
QUERY_TRANSLATION = "translation"
QUERY_SD = "sd"

METRIC_MAX_COSINE = "max_cosine"
METRIC_MIN_L2 = "min_l2"

# Raw scores are cosines for text queries, best-match aggregates for sample
# queries, and averaged probabilities for ensembles. Similarity analyses only
# accept "cosine" tables.
TABLE_COSINE = "cosine"
TABLE_AGGREGATE = "aggregate"
TABLE_ENSEMBLE = "ensemble"

PROB_SUM_ATOL = 1e-6


@dataclass(frozen=True)
class QuerySource:
    """Where a system's query comes from: the raw phrase, an aux text row, or
    a tagged set of generated-sample keys with an aggregation metric."""

    kind: str
    tag: str | None = None
    metric: str | None = None

    def __post_init__(self) -> None:
        if self.kind == QUERY_PHRASE:
            if self.tag is not None or self.metric is not None:
                raise ValidationError("phrase query takes no tag or metric")
        elif self.kind in (QUERY_CONTEXT, QUERY_TRANSLATION):
            if not self.tag:
                raise ValidationError(f"{self.kind} query needs an aux tag")
            if self.metric is not None:
                raise ValidationError(f"{self.kind} query takes no metric")
        elif self.kind == QUERY_SD:
            if not self.tag:
                raise ValidationError("sd query needs an aux tag")
            if self.metric not in (METRIC_MAX_COSINE, METRIC_MIN_L2):
                raise ValidationError(
                    f"sd query metric must be {METRIC_MAX_COSINE} or {METRIC_MIN_L2}, "
                    f"got {self.metric!r}"
                )
        else:
            raise ValidationError(f"unknown query kind {self.kind!r}")

    @classmethod
    def parse(cls, text: str) -> "QuerySource":
        """Parse "phrase", "context:TAG", "translation:TAG" or "sd:TAG:METRIC"."""
        parts = text.split(":")
        if parts[0] == QUERY_PHRASE and len(parts) == 1:
            return cls(QUERY_PHRASE)
        if parts[0] in (QUERY_CONTEXT, QUERY_TRANSLATION) and len(parts) == 2:
            return cls(parts[0], tag=parts[1])
        if parts[0] == QUERY_SD and len(parts) == 3:
            return cls(QUERY_SD, tag=parts[1], metric=parts[2])
        raise ValidationError(f"cannot parse query source {text!r}")

    def __str__(self) -> str:
        if self.kind == QUERY_PHRASE:
            return QUERY_PHRASE
        if self.kind == QUERY_SD:
            return f"{self.kind}:{self.tag}:{self.metric}"
        return f"{self.kind}:{self.tag}"


@dataclass(frozen=True)
class SystemSpec:
    """A named scoring configuration."""

    name: str
    space: str
    query: QuerySource
    logit_scale: float = 100.0
    l2_temperature: float = 1.0

    def __post_init__(self) -> None:
        if not self.name:
            raise ValidationError("system name must be non-empty")
        if not self.space:
            raise ValidationError(f"system {self.name!r}: empty space name")
        if not self.logit_scale > 0:
            raise ValidationError(f"system {self.name!r}: logit_scale must be > 0")
        if not self.l2_temperature > 0:
            raise ValidationError(f"system {self.name!r}: l2_temperature must be > 0")

    @property
    def table_kind(self) -> str:
        return TABLE_COSINE if self.query.kind != QUERY_SD else TABLE_AGGREGATE


@dataclass(frozen=True)
class QueryPlan:
    """Resolved query for one (system, instance) pair."""

    kind: str                                 # "text" | "samples"
    text: str | None = None
    sample_keys: tuple[str, ...] | None = None
    metric: str | None = None


@dataclass(frozen=True)
class ScoreRow:
    instance_id: str
    candidates: tuple[str, ...]
    raw_scores: tuple[float, ...]
    probs: tuple[float, ...]
    predicted: str
    ranking: tuple[str, ...]

    def __post_init__(self) -> None:
        n = len(self.candidates)
        if len(self.raw_scores) != n or len(self.probs) != n or len(self.ranking) != n:
            raise ValidationError(f"row {self.instance_id}: field lengths disagree")
        if abs(sum(self.probs) - 1.0) > PROB_SUM_ATOL:
            raise ValidationError(
                f"row {self.instance_id}: probabilities sum to {sum(self.probs)!r}"
            )
        if any(p < 0.0 or p > 1.0 for p in self.probs):
            raise ValidationError(f"row {self.instance_id}: probability outside [0, 1]")
        if sorted(self.ranking) != sorted(self.candidates):
            raise ValidationError(
                f"row {self.instance_id}: ranking is not a permutation of the candidates"
            )
        if self.predicted != self.ranking[0]:
            raise ValidationError(f"row {self.instance_id}: predicted != ranking[0]")
        prob_of = dict(zip(self.candidates, self.probs))
        ranked = [prob_of[c] for c in self.ranking]
        if any(a < b for a, b in zip(ranked, ranked[1:])):
            raise ValidationError(
                f"row {self.instance_id}: ranking is not in descending probability order"
            )

    @classmethod
    def from_scores(
        cls,
        instance_id: str,
        candidates: tuple[str, ...],
        raw_scores: np.ndarray,
        probs: np.ndarray,
    ) -> "ScoreRow":
        order = rank_order(raw_scores)
        ranking = tuple(candidates[i] for i in order)
        return cls(
            instance_id=instance_id,
            candidates=tuple(candidates),
            raw_scores=tuple(float(s) for s in raw_scores),
            probs=tuple(float(p) for p in probs),
            predicted=ranking[0],
            ranking=ranking,
        )

    def rank_of(self, key: str) -> int:
        """1-based rank of a candidate in this row's tie-broken ranking."""
        return self.ranking.index(key) + 1


@dataclass(frozen=True)
class ScoreTable:
    system: str
    kind: str
    rows: tuple[ScoreRow, ...]

    def __post_init__(self) -> None:
        if self.kind not in (TABLE_COSINE, TABLE_AGGREGATE, TABLE_ENSEMBLE):
            raise ValidationError(f"unknown score table kind {self.kind!r}")

    def __len__(self) -> int:
        return len(self.rows)

    def check_matches(self, dataset: Dataset) -> None:
        if len(self.rows) != len(dataset):
            raise ValidationError(
                f"table {self.system!r} has {len(self.rows)} rows for "
                f"{len(dataset)} instances"
            )
        for row, inst in zip(self.rows, dataset.instances):
            if row.instance_id != inst.id:
                raise ValidationError(
                    f"table {self.system!r}: row {row.instance_id} where "
                    f"instance {inst.id} expected"
                )
            if row.candidates != inst.candidates:
                raise ValidationError(
                    f"table {self.system!r}: candidate mismatch at instance {inst.id}"
                )


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine similarity in [-1, 1]; exactly 1.0 for identical vectors."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise DomainError(f"cosine: shape mismatch {u.shape} vs {v.shape}")
    if np.array_equal(u, v):
        if not np.any(u):
            raise DomainError("cosine: zero vector")
        return 1.0
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise DomainError("cosine: zero vector")
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def softmax(logits) -> np.ndarray:
    """Stable softmax; sums to 1 within 1e-9.

    Outputs are strictly positive whenever pairwise logit gaps stay inside the
    float64 exp range (~745), which covers scaled cosines by a wide margin.
    """
    x = np.asarray(logits, dtype=np.float64)
    if x.size == 0:
        raise DomainError("softmax: empty input")
    if not np.all(np.isfinite(x)):
        raise DomainError("softmax: non-finite logit")
    z = np.exp(x - x.max())
    return z / z.sum()


def rank_order(raw_scores) -> list[int]:
    """Candidate indices by descending raw score, ties broken by lowest index."""
    scores = list(raw_scores)
    return sorted(range(len(scores)), key=lambda i: (-scores[i], i))


def resolve_query(
    instance: Instance, spec: SystemSpec, aux: list[AuxQueryFile]
) -> QueryPlan:
    """Turn a system's query source into a concrete plan for one instance."""
    source = spec.query
    if source.kind == QUERY_PHRASE:
        return QueryPlan(kind=AUX_TEXT, text=instance.full_phrase)
    tagged = {a.tag: a for a in aux}
    if source.tag not in tagged:
        raise ValidationError(
            f"system {spec.name!r}: no aux file with tag {source.tag!r}"
        )
    aux_file = tagged[source.tag]
    if source.kind in (QUERY_CONTEXT, QUERY_TRANSLATION):
        if aux_file.kind != AUX_TEXT:
            raise ValidationError(
                f"system {spec.name!r}: aux {source.tag!r} is not a text file"
            )
        text = aux_file.text_for(instance.id)
        if text is None:
            raise MissingAuxRowError(spec.name, source.tag, instance.id)
        return QueryPlan(kind=AUX_TEXT, text=text)
    if aux_file.kind != AUX_SAMPLES:
        raise ValidationError(
            f"system {spec.name!r}: aux {source.tag!r} is not a samples file"
        )
    keys = aux_file.samples_for(instance.id)
    if keys is None:
        raise MissingAuxRowError(spec.name, source.tag, instance.id)
    return QueryPlan(kind=AUX_SAMPLES, sample_keys=keys, metric=source.metric)


def _get(store: EmbeddingStore, space: str, kind: str, key: str, instance_id: str):
    try:
        return store.get(space, kind, key)
    except MissingKeyError as exc:
        raise MissingKeyError(exc.space, exc.kind, exc.key, instance_id) from None


def score_text_query(
    text_key: str, instance: Instance, store: EmbeddingStore, spec: SystemSpec
) -> ScoreRow:
    """Cosine of the text embedding against each candidate image embedding."""
    tvec = _get(store, spec.space, KIND_TEXT, text_key, instance.id)
    raw = np.array(
        [
            cosine(tvec, _get(store, spec.space, KIND_IMAGE, c, instance.id))
            for c in instance.candidates
        ]
    )
    probs = softmax(spec.logit_scale * raw)
    return ScoreRow.from_scores(instance.id, instance.candidates, raw, probs)


def score_sample_query(
    sample_keys,
    instance: Instance,
    store: EmbeddingStore,
    spec: SystemSpec,
    metric: str,
) -> ScoreRow:
    """Best match between each candidate and any generated sample.

    max_cosine keeps the largest cosine per candidate; min_l2 keeps the
    negated smallest Euclidean feature distance, so that larger raw scores
    always mean closer.
    """
    if len(sample_keys) == 0:
        raise DomainError(f"instance {instance.id}: empty sample list")
    cand = np.stack(
        [
            _get(store, spec.space, KIND_IMAGE, c, instance.id)
            for c in instance.candidates
        ]
    ).astype(np.float64)
    samp = np.stack(
        [_get(store, spec.space, KIND_IMAGE, k, instance.id) for k in sample_keys]
    ).astype(np.float64)
    if metric == METRIC_MAX_COSINE:
        cnorm = np.linalg.norm(cand, axis=1)
        snorm = np.linalg.norm(samp, axis=1)
        if np.any(cnorm == 0.0) or np.any(snorm == 0.0):
            raise DomainError(f"instance {instance.id}: zero vector in cosine metric")
        sims = (cand / cnorm[:, None]) @ (samp / snorm[:, None]).T
        raw = np.clip(sims, -1.0, 1.0).max(axis=1)
        probs = softmax(spec.logit_scale * raw)
    elif metric == METRIC_MIN_L2:
        diffs = cand[:, None, :] - samp[None, :, :]
        dists = np.linalg.norm(diffs, axis=2)
        raw = -dists.min(axis=1)
        probs = softmax(raw / spec.l2_temperature)
    else:
        raise ValidationError(f"unknown sample metric {metric!r}")
    return ScoreRow.from_scores(instance.id, instance.candidates, raw, probs)


def score_instance(
    instance: Instance,
    spec: SystemSpec,
    store: EmbeddingStore,
    aux: list[AuxQueryFile],
) -> ScoreRow:
    plan = resolve_query(instance, spec, aux)
    if plan.kind == AUX_TEXT:
        return score_text_query(plan.text, instance, store, spec)
    return score_sample_query(plan.sample_keys, instance, store, spec, plan.metric)


def score_system(
    dataset: Dataset,
    spec: SystemSpec,
    store: EmbeddingStore,
    aux: list[AuxQueryFile] | None = None,
    jobs: int = 1,
) -> ScoreTable:
    """Score every instance; deterministic and order-preserving at any job count."""
    aux = aux or []

    def one(instance: Instance) -> ScoreRow:
        return score_instance(instance, spec, store, aux)

    if jobs > 1 and len(dataset) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = tuple(pool.map(one, dataset.instances))
    else:
        rows = tuple(one(inst) for inst in dataset.instances)
    return ScoreTable(system=spec.name, kind=spec.table_kind, rows=rows)


@dataclass(frozen=True)
class CoverageGap:
    system: str
    instance_id: str
    space: str
    kind: str
    key: str

    def __str__(self) -> str:
        return (
            f"system {self.system!r} instance {self.instance_id}: missing "
            f"{self.kind} key {self.key!r} in space {self.space!r}"
        )


@dataclass(frozen=True)
class CoverageReport:
    missing_entries: tuple[CoverageGap, ...]
    missing_aux_rows: tuple[tuple[str, str, str], ...]  # (system, tag, instance_id)

    @property
    def ok(self) -> bool:
        return not self.missing_entries and not self.missing_aux_rows

    def summary_lines(self) -> list[str]:
        lines = [str(gap) for gap in self.missing_entries]
        lines += [
            f"system {s!r}: aux {t!r} has no row for instance {i}"
            for (s, t, i) in self.missing_aux_rows
        ]
        return lines


def coverage_check(
    store: EmbeddingStore,
    dataset: Dataset,
    systems: list[SystemSpec],
    aux: list[AuxQueryFile] | None = None,
) -> CoverageReport:
    """List every store entry the systems will request that is absent.

    An empty report guarantees that scoring the same inputs raises no
    missing-key error. Aux rows a system needs but does not have are reported
    separately (they are resolution errors, not store gaps).
    """
    aux = aux or []
    gaps: list[CoverageGap] = []
    aux_missing: list[tuple[str, str, str]] = []
    for spec in systems:
        for instance in dataset.instances:
            try:
                plan = resolve_query(instance, spec, aux)
            except MissingAuxRowError as exc:
                aux_missing.append((exc.system, exc.tag, exc.instance_id))
                continue
            needed: list[tuple[str, str]] = []
            if plan.kind == AUX_TEXT:
                needed.append((KIND_TEXT, plan.text))
            else:
                needed.extend((KIND_IMAGE, k) for k in plan.sample_keys)
            needed.extend((KIND_IMAGE, c) for c in instance.candidates)
            for kind, key in needed:
                if not store.has(spec.space, kind, key):
                    gaps.append(
                        CoverageGap(spec.name, instance.id, spec.space, kind, key)
                    )
    return CoverageReport(tuple(gaps), tuple(aux_missing))


def table_to_json(table: ScoreTable) -> str:
    """Serialize with full round-trip float precision; key order is fixed so
    identical tables serialize to identical bytes."""
    doc = {
        "system": table.system,
        "kind": table.kind,
        "rows": [
            {
                "id": row.instance_id,
                "candidates": list(row.candidates),
                "raw": list(row.raw_scores),
                "probs": list(row.probs),
                "predicted": row.predicted,
                "ranking": list(row.ranking),
            }
            for row in table.rows
        ],
    }
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"


def table_from_json(text: str) -> ScoreTable:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid score table JSON: {exc}") from exc
    try:
        rows = tuple(
            ScoreRow(
                instance_id=r["id"],
                candidates=tuple(r["candidates"]),
                raw_scores=tuple(r["raw"]),
                probs=tuple(r["probs"]),
                predicted=r["predicted"],
                ranking=tuple(r["ranking"]),
            )
            for r in doc["rows"]
        )
        return ScoreTable(system=doc["system"], kind=doc["kind"], rows=rows)
    except KeyError as exc:
        raise ParseError(f"score table JSON missing field {exc.args[0]!r}") from exc
