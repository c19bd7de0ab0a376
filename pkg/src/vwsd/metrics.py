"""Evaluation metrics and cross-system analyses.

Hit rate is the percentage of instances whose top-ranked candidate is the
gold image; MRR averages the reciprocal 1-based rank of the gold image.
Cross-system analyses compare two systems on the same labeled dataset:
2x2 correctness confusion counts, per-quadrant means of gold-similarity
gaps, mean-similarity statistics, and round-trip-translation partitions.
"""
from __future__ import annotations

from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal

from .dataset import Dataset
from .errors import AlignmentError, ValidationError
from .scoring import TABLE_COSINE, ScoreTable


def round2(value: float) -> float:
    """Round half up to 2 decimals, the way the result tables are printed."""
    return float(Decimal(repr(value)).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def round4(value: float) -> float:
    """Similarity values carry 4 decimals; gaps of ~0.01 are already meaningful."""
    return float(Decimal(repr(value)).quantize(Decimal("0.0001"), rounding=ROUND_HALF_UP))


def _require_labeled(dataset: Dataset) -> None:
    for inst in dataset.instances:
        if inst.gold is None:
            raise ValidationError(f"instance {inst.id}: no gold label")


def _require_aligned(table: ScoreTable, dataset: Dataset) -> None:
    try:
        table.check_matches(dataset)
    except ValidationError as exc:
        raise AlignmentError(str(exc)) from None


@dataclass(frozen=True)
class MetricsReport:
    system: str
    n: int
    hits: int
    hit_rate: float   # percent, exact
    mrr: float        # percent, exact

    @property
    def hit_rate_2dp(self) -> float:
        return round2(self.hit_rate)

    @property
    def mrr_2dp(self) -> float:
        return round2(self.mrr)


def hit_rate(table: ScoreTable, dataset: Dataset) -> float:
    """Percentage of instances where the predicted image is the gold image."""
    _require_aligned(table, dataset)
    _require_labeled(dataset)
    if len(dataset) == 0:
        raise ValidationError("hit rate undefined on an empty dataset")
    hits = sum(
        1 for row, inst in zip(table.rows, dataset.instances) if row.predicted == inst.gold
    )
    return 100.0 * hits / len(dataset)


def mrr(table: ScoreTable, dataset: Dataset) -> float:
    """Mean reciprocal 1-based rank of the gold image, as a percentage."""
    _require_aligned(table, dataset)
    _require_labeled(dataset)
    if len(dataset) == 0:
        raise ValidationError("mrr undefined on an empty dataset")
    total = sum(
        1.0 / row.rank_of(inst.gold)
        for row, inst in zip(table.rows, dataset.instances)
    )
    return 100.0 * total / len(dataset)


def evaluate(table: ScoreTable, dataset: Dataset) -> MetricsReport:
    _require_aligned(table, dataset)
    _require_labeled(dataset)
    if len(dataset) == 0:
        raise ValidationError("metrics undefined on an empty dataset")
    hits = 0
    recip = 0.0
    for row, inst in zip(table.rows, dataset.instances):
        if row.predicted == inst.gold:
            hits += 1
        recip += 1.0 / row.rank_of(inst.gold)
    n = len(dataset)
    return MetricsReport(
        system=table.system,
        n=n,
        hits=hits,
        hit_rate=100.0 * hits / n,
        mrr=100.0 * recip / n,
    )


@dataclass(frozen=True)
class ConfusionReport:
    """2x2 correctness counts; rows index system A, columns system B.

    counts[0][0] both correct, [0][1] only A, [1][0] only B, [1][1] neither.
    quadrant_means, when present, hold the mean gold-similarity gap
    (sim_B - sim_A) per quadrant, None for empty quadrants.
    """

    system_a: str
    system_b: str
    n: int
    counts: tuple[tuple[int, int], tuple[int, int]]
    quadrant_means: tuple[tuple[float | None, float | None],
                          tuple[float | None, float | None]] | None = None

    def hits_a(self) -> int:
        return self.counts[0][0] + self.counts[0][1]

    def hits_b(self) -> int:
        return self.counts[0][0] + self.counts[1][0]


def _correctness(table: ScoreTable, dataset: Dataset) -> list[bool]:
    return [
        row.predicted == inst.gold
        for row, inst in zip(table.rows, dataset.instances)
    ]


def confusion(table_a: ScoreTable, table_b: ScoreTable, dataset: Dataset) -> ConfusionReport:
    """Count instances by (A correct?, B correct?)."""
    _require_aligned(table_a, dataset)
    _require_aligned(table_b, dataset)
    _require_labeled(dataset)
    ok_a = _correctness(table_a, dataset)
    ok_b = _correctness(table_b, dataset)
    counts = [[0, 0], [0, 0]]
    for a, b in zip(ok_a, ok_b):
        counts[0 if a else 1][0 if b else 1] += 1
    return ConfusionReport(
        system_a=table_a.system,
        system_b=table_b.system,
        n=len(dataset),
        counts=(tuple(counts[0]), tuple(counts[1])),
    )


def sim_gap_quadrants(
    table_a: ScoreTable,
    table_b: ScoreTable,
    sim_a_gold,
    sim_b_gold,
    dataset: Dataset,
) -> ConfusionReport:
    """Mean of (sim_B(text, gold) - sim_A(text, gold)) per confusion quadrant."""
    base = confusion(table_a, table_b, dataset)
    sim_a = list(sim_a_gold)
    sim_b = list(sim_b_gold)
    if len(sim_a) != len(dataset) or len(sim_b) != len(dataset):
        raise AlignmentError("per-instance gold similarities do not cover the dataset")
    ok_a = _correctness(table_a, dataset)
    ok_b = _correctness(table_b, dataset)
    sums = [[0.0, 0.0], [0.0, 0.0]]
    for a, b, sa, sb in zip(ok_a, ok_b, sim_a, sim_b):
        sums[0 if a else 1][0 if b else 1] += sb - sa
    means = tuple(
        tuple(
            (sums[i][j] / base.counts[i][j]) if base.counts[i][j] else None
            for j in (0, 1)
        )
        for i in (0, 1)
    )
    return ConfusionReport(
        system_a=base.system_a,
        system_b=base.system_b,
        n=base.n,
        counts=base.counts,
        quadrant_means=means,
    )


def gold_similarities(table: ScoreTable, dataset: Dataset) -> list[float]:
    """Per-instance raw cosine of the query text to the gold image."""
    _require_aligned(table, dataset)
    _require_labeled(dataset)
    if table.kind != TABLE_COSINE:
        raise ValidationError(
            f"table {table.system!r}: raw scores are not text-image cosines"
        )
    return [
        row.raw_scores[inst.gold_index()]
        for row, inst in zip(table.rows, dataset.instances)
    ]


def mean_sim_stats(table: ScoreTable, dataset: Dataset) -> tuple[float, float]:
    """(mean cosine to the gold image, mean cosine over all ten candidates)."""
    gold_sims = gold_similarities(table, dataset)
    if not gold_sims:
        raise ValidationError("mean similarity undefined on an empty dataset")
    mean_gold = sum(gold_sims) / len(gold_sims)
    per_instance_all = [
        sum(row.raw_scores) / len(row.raw_scores) for row in table.rows
    ]
    mean_all = sum(per_instance_all) / len(per_instance_all)
    return mean_gold, mean_all


@dataclass(frozen=True)
class RoundTripReport:
    """Instances split by whether the round-trip translation reproduced the
    original phrase (case-insensitive), with per-group mean foreign-space
    gold similarity."""

    system: str
    identical_count: int
    different_count: int
    identical_mean_sim: float | None
    different_mean_sim: float | None

    @property
    def n(self) -> int:
        return self.identical_count + self.different_count


def roundtrip_stats(
    pairs: dict[str, tuple[str, str]],
    foreign_table: ScoreTable,
    dataset: Dataset,
) -> RoundTripReport:
    """Partition instances by case-insensitive round-trip equality.

    ``pairs`` maps instance id to (original phrase, round-tripped phrase);
    the foreign table supplies raw cosines for the gold similarity means.
    """
    gold_sims = gold_similarities(foreign_table, dataset)
    groups: dict[bool, list[float]] = {True: [], False: []}
    for inst, sim in zip(dataset.instances, gold_sims):
        if inst.id not in pairs:
            raise ValidationError(f"instance {inst.id}: no round-trip pair")
        original, round_tripped = pairs[inst.id]
        identical = original.casefold() == round_tripped.casefold()
        groups[identical].append(sim)
    def mean(vals: list[float]) -> float | None:
        return sum(vals) / len(vals) if vals else None
    return RoundTripReport(
        system=foreign_table.system,
        identical_count=len(groups[True]),
        different_count=len(groups[False]),
        identical_mean_sim=mean(groups[True]),
        different_mean_sim=mean(groups[False]),
    )
