"""Combine score tables by weighted probability averaging.

Averaging operates on probabilities, never logits. Weights default to equal
and are normalized to sum to one; the averaged probabilities become both the
raw scores and the probabilities of the output table.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import AlignmentError, ValidationError
from .scoring import TABLE_ENSEMBLE, ScoreRow, ScoreTable, rank_order


@dataclass(frozen=True)
class EnsembleSpec:
    name: str
    members: tuple[str, ...]
    weights: tuple[float, ...]

    def __post_init__(self) -> None:
        if not self.name:
            raise ValidationError("ensemble name must be non-empty")
        if len(self.members) < 1:
            raise ValidationError(f"ensemble {self.name!r}: needs at least one member")
        if len(set(self.members)) != len(self.members):
            raise ValidationError(f"ensemble {self.name!r}: duplicate member name")
        if len(self.weights) != len(self.members):
            raise ValidationError(
                f"ensemble {self.name!r}: {len(self.weights)} weights for "
                f"{len(self.members)} members"
            )
        if any(w <= 0 for w in self.weights):
            raise ValidationError(f"ensemble {self.name!r}: weights must be positive")

    @classmethod
    def make(cls, name: str, members, weights=None) -> "EnsembleSpec":
        """Build a spec, defaulting to equal weights and normalizing to sum 1."""
        members = tuple(members)
        if weights is None:
            weights = (1.0 / len(members),) * len(members) if members else ()
        else:
            total = math.fsum(weights)
            if total <= 0:
                raise ValidationError(f"ensemble {name!r}: weights must be positive")
            weights = tuple(w / total for w in weights)
        return cls(name=name, members=members, weights=weights)


def ensemble_tables(tables: list[ScoreTable], spec: EnsembleSpec) -> ScoreTable:
    """Weighted per-candidate probability average across aligned member tables.

    Accumulation uses exact summation, so equal-weight ensembling is invariant
    under member permutation down to the bit.
    """
    by_name = {t.system: t for t in tables}
    missing = [m for m in spec.members if m not in by_name]
    if missing:
        raise ValidationError(f"ensemble {spec.name!r}: no table for members {missing}")
    members = [by_name[m] for m in spec.members]

    first = members[0]
    for other in members[1:]:
        if len(other.rows) != len(first.rows):
            raise AlignmentError(
                f"ensemble {spec.name!r}: {other.system!r} has {len(other.rows)} rows, "
                f"{first.system!r} has {len(first.rows)}"
            )
        for row_a, row_b in zip(first.rows, other.rows):
            if row_a.instance_id != row_b.instance_id:
                raise AlignmentError(
                    f"ensemble {spec.name!r}: instance {row_a.instance_id!r} in "
                    f"{first.system!r} vs {row_b.instance_id!r} in {other.system!r}"
                )
            if row_a.candidates != row_b.candidates:
                raise AlignmentError(
                    f"ensemble {spec.name!r}: candidate order differs at instance "
                    f"{row_a.instance_id}"
                )

    rows = []
    for idx in range(len(first.rows)):
        member_rows = [t.rows[idx] for t in members]
        base = first.rows[idx]
        avg = [
            min(1.0, max(0.0, math.fsum(
                w * row.probs[c] for w, row in zip(spec.weights, member_rows)
            )))
            for c in range(len(base.candidates))
        ]
        order = rank_order(avg)
        ranking = tuple(base.candidates[i] for i in order)
        rows.append(
            ScoreRow(
                instance_id=base.instance_id,
                candidates=base.candidates,
                raw_scores=tuple(avg),
                probs=tuple(avg),
                predicted=ranking[0],
                ranking=ranking,
            )
        )
    return ScoreTable(system=spec.name, kind=TABLE_ENSEMBLE, rows=tuple(rows))
