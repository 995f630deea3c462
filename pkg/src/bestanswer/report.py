"""Monthly activity and feature means for accepted vs other answers."""
from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from bestanswer.ingest import SiteCorpus
from bestanswer.textfeat import FEATURES, BackgroundModel, build_background_model, compute_features, segment


@dataclass(frozen=True)
class MonthlyPoint:
    month: str  # YYYY-MM, UTC
    n_answers: int
    accepted: dict[str, float | None] = field(default_factory=dict)
    other: dict[str, float | None] = field(default_factory=dict)
    accepted_std: dict[str, float | None] = field(default_factory=dict)
    other_std: dict[str, float | None] = field(default_factory=dict)
    n_accepted: int = 0


def _mean_std(values: list[float]) -> tuple[float | None, float | None]:
    if not values:
        return None, None
    mean = math.fsum(values) / len(values)
    var = math.fsum((v - mean) ** 2 for v in values) / len(values)
    return mean, math.sqrt(var)


def monthly_drift(corpus: SiteCorpus, model: BackgroundModel) -> list[MonthlyPoint]:
    buckets: dict[str, dict[bool, list[dict[str, float]]]] = defaultdict(lambda: {True: [], False: []})
    for thread in corpus.threads:
        for answer in thread.answers:
            month = answer.creation_date.strftime("%Y-%m")
            buckets[month][answer.is_accepted].append(compute_features(segment(answer.body_text), model).as_dict())
    points = []
    for month in sorted(buckets):
        split = buckets[month]
        stats = {
            flag: {f: _mean_std([row[f] for row in split[flag]]) for f in FEATURES} for flag in (True, False)
        }
        points.append(
            MonthlyPoint(
                month=month,
                n_answers=len(split[True]) + len(split[False]),
                accepted={f: stats[True][f][0] for f in FEATURES},
                other={f: stats[False][f][0] for f in FEATURES},
                accepted_std={f: stats[True][f][1] for f in FEATURES},
                other_std={f: stats[False][f][1] for f in FEATURES},
                n_accepted=len(split[True]),
            )
        )
    return points


def drift_header(include_std: bool = False) -> list[str]:
    header = ["month", "n_answers"]
    for f in FEATURES:
        header += [f"{f}_accepted", f"{f}_other"]
    if include_std:
        for f in FEATURES:
            header += [f"{f}_accepted_std", f"{f}_other_std"]
    return header


def _cell(value: float | None) -> str:
    return "" if value is None else repr(float(value))


def export_drift_csv(points: Sequence[MonthlyPoint], path: str | Path, include_std: bool = False) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(drift_header(include_std))
        for p in points:
            row = [p.month, p.n_answers]
            for f in FEATURES:
                row += [_cell(p.accepted.get(f)), _cell(p.other.get(f))]
            if include_std:
                for f in FEATURES:
                    row += [_cell(p.accepted_std.get(f)), _cell(p.other_std.get(f))]
            writer.writerow(row)
    return path


def read_drift_csv(path: str | Path) -> list[dict[str, float | str | None]]:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = []
        for raw in csv.DictReader(fh):
            row: dict[str, float | str | None] = {"month": raw.pop("month"), "n_answers": int(raw.pop("n_answers"))}
            row.update({k: (float(v) if v != "" else None) for k, v in raw.items()})
            rows.append(row)
    return rows


def site_summary(corpora: Sequence[SiteCorpus], model: BackgroundModel | None = None) -> list[dict[str, float | str | int]]:
    """Mean of each raw linguistic feature over all answers of each site.

    Without ``model`` each site is scored against a background model built
    from its own answers. Sites without answers are left out.
    """
    if not corpora:
        raise ValueError("no corpora given")
    rows = []
    for corpus in corpora:
        texts = [segment(a.body_text) for t in corpus.threads for a in t.answers]
        if not texts:
            continue
        bg = model if model is not None else build_background_model(texts)
        feats = [compute_features(t, bg).as_dict() for t in texts]
        row: dict[str, float | str | int] = {"site": corpus.site_name, "n_answers": len(feats)}
        row.update({f: math.fsum(x[f] for x in feats) / len(feats) for f in FEATURES})
        rows.append(row)
    return rows
