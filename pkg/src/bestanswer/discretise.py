"""Within-question rank discretisation of answer features.

Answers are grouped by question, sorted on each feature in the direction
that puts accepted answers first, and given ordinal ranks 1..n.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from datetime import datetime
from typing import Iterable, Mapping, Sequence


class SortDirection(str, enum.Enum):
    DESCENDING = "descending"
    ASCENDING = "ascending"

    def flipped(self) -> "SortDirection":
        return SortDirection.ASCENDING if self is SortDirection.DESCENDING else SortDirection.DESCENDING


@dataclass(frozen=True)
class DirectionEntry:
    direction: SortDirection
    # None when the direction was fixed by hand rather than learned
    accepted_mean: float | None
    non_accepted_mean: float | None


def _opt_float(value) -> float | None:
    return None if value is None else float(value)


@dataclass(frozen=True)
class DirectionProfile:
    entries: Mapping[str, DirectionEntry]

    def __getitem__(self, name: str) -> SortDirection:
        return self.entries[name].direction

    def __contains__(self, name: object) -> bool:
        return name in self.entries

    def to_json(self) -> dict:
        return {
            name: {
                "direction": e.direction.value,
                "accepted_mean": e.accepted_mean,
                "non_accepted_mean": e.non_accepted_mean,
            }
            for name, e in sorted(self.entries.items())
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "DirectionProfile":
        return cls(
            {
                name: DirectionEntry(SortDirection(e["direction"]), _opt_float(e["accepted_mean"]), _opt_float(e["non_accepted_mean"]))
                for name, e in doc.items()
            }
        )

    @classmethod
    def fixed(cls, directions: Mapping[str, SortDirection]) -> "DirectionProfile":
        """Profile with given directions and no supporting statistics."""
        return cls({name: DirectionEntry(SortDirection(d), None, None) for name, d in directions.items()})


@dataclass(frozen=True)
class FeatureRow:
    """One answer's feature values inside a question group."""

    answer_id: int
    creation_date: datetime
    values: Mapping[str, float]
    is_accepted: bool = False


def learn_directions(groups: Iterable[Sequence[FeatureRow]], feature_names: Sequence[str]) -> DirectionProfile:
    """Choose, per feature, the sort order under which accepted answers rank first.

    Descending when the accepted mean is at least the non-accepted mean.
    """
    acc_sum = dict.fromkeys(feature_names, 0.0)
    rest_sum = dict.fromkeys(feature_names, 0.0)
    n_acc = n_rest = 0
    for group in groups:
        for row in group:
            target = acc_sum if row.is_accepted else rest_sum
            for name in feature_names:
                target[name] += row.values[name]
            if row.is_accepted:
                n_acc += 1
            else:
                n_rest += 1
    if n_acc == 0:
        raise ValueError("cannot learn directions: no accepted answers")
    if n_rest == 0:
        raise ValueError("cannot learn directions: no non-accepted answers")
    entries = {}
    for name in feature_names:
        acc_mean, rest_mean = acc_sum[name] / n_acc, rest_sum[name] / n_rest
        direction = SortDirection.DESCENDING if acc_mean >= rest_mean else SortDirection.ASCENDING
        entries[name] = DirectionEntry(direction, acc_mean, rest_mean)
    return DirectionProfile(entries)


def rank_group(
    values: Sequence[float],
    direction: SortDirection,
    tiebreak_keys: Sequence[tuple[datetime, int]],
) -> list[int]:
    """1-based ordinal ranks; ties go to the earlier answer, then the smaller id."""
    n = len(values)
    if n == 0 or n != len(tiebreak_keys):
        raise ValueError("values and tiebreak_keys must be non-empty and of equal length")
    if any(math.isnan(v) for v in values):
        raise ValueError("NaN feature value")
    if direction is SortDirection.DESCENDING:
        order = sorted(range(n), key=lambda i: (-values[i], tiebreak_keys[i]))
    else:
        order = sorted(range(n), key=lambda i: (values[i], tiebreak_keys[i]))
    ranks = [0] * n
    for position, i in enumerate(order, start=1):
        ranks[i] = position
    return ranks


def discretise_threads(
    table: Iterable[Sequence[FeatureRow]],
    profile: DirectionProfile,
    features: Sequence[str] | None = None,
) -> dict[int, dict[str, int]]:
    """Rank every feature within every group; returns answer id -> {feature: rank}.

    ``features`` defaults to all features present in the rows.
    """
    out: dict[int, dict[str, int]] = {}
    for group in table:
        if not group:
            continue
        names = features if features is not None else list(group[0].values)
        missing = [name for name in names if name not in profile]
        if missing:
            raise KeyError(f"no direction learned for {missing}")
        keys = [(row.creation_date, row.answer_id) for row in group]
        for row in group:
            out[row.answer_id] = {}
        for name in names:
            ranks = rank_group([row.values[name] for row in group], profile[name], keys)
            for row, rank in zip(group, ranks):
                out[row.answer_id][name] = rank
    return out
