"""Per-answer example rows for the six feature-set cases."""
from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from bestanswer.discretise import DirectionProfile, FeatureRow, discretise_threads
from bestanswer.ingest import QuestionThread, SiteCorpus
from bestanswer.textfeat import FEATURES, BackgroundModel, TokenizedText, compute_features, segment

OTHER = ("answer_count", "creation_epoch")
# every feature that can be discretised, and the name of its rank column
RANKED = FEATURES + ("creation_epoch", "reputation", "score")
RANK_NAMES = {name: f"{name}_rank" for name in FEATURES}
RANK_NAMES.update(creation_epoch="creation_rank", reputation="reputation_rank", score="score_rank")


class FeatureCase(enum.IntEnum):
    CASE1 = 1  # linguistic
    CASE2 = 2  # linguistic + discretisation
    CASE3 = 3  # + other
    CASE4 = 4  # linguistic + other + user rating, no discretisation
    CASE5 = 5  # case 3 + user rating with discretisation
    CASE6 = 6  # case 5 + answer rating with discretisation

    @classmethod
    def parse(cls, value: "int | str | FeatureCase") -> "FeatureCase":
        if isinstance(value, str):
            value = value.lower().removeprefix("case")
        return cls(int(value))


def feature_names(case: FeatureCase) -> list[str]:
    case = FeatureCase(case)
    linguistic = list(FEATURES)
    ranks = [RANK_NAMES[f] for f in FEATURES]
    if case is FeatureCase.CASE1:
        return linguistic
    if case is FeatureCase.CASE4:
        return linguistic + list(OTHER) + ["reputation"]
    names = linguistic + ranks
    if case >= FeatureCase.CASE3:
        names += ["answer_count", "creation_epoch", "creation_rank"]
    if case >= FeatureCase.CASE5:
        names += ["reputation", "reputation_rank"]
    if case >= FeatureCase.CASE6:
        names += ["score", "score_rank"]
    return names


def uses_ranks(case: FeatureCase) -> bool:
    return any(name.endswith("_rank") for name in feature_names(case))


def needs_reputation(case: FeatureCase) -> bool:
    return "reputation" in feature_names(case)


def needs_score(case: FeatureCase) -> bool:
    return "score" in feature_names(case)


class MissingInputError(ValueError):
    pass


@dataclass(frozen=True)
class ExampleRow:
    question_id: int
    answer_id: int
    label: bool
    features: Mapping[str, float]


@dataclass(frozen=True)
class Dataset:
    case: FeatureCase
    feature_order: tuple[str, ...]
    rows: tuple[ExampleRow, ...]

    def matrix(self) -> np.ndarray:
        return np.array([[row.features[f] for f in self.feature_order] for row in self.rows], dtype=float).reshape(
            len(self.rows), len(self.feature_order)
        )

    def labels(self) -> np.ndarray:
        return np.array([row.label for row in self.rows], dtype=bool)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(list(self.feature_order) + ["question_id", "answer_id", "label"])
        for row in self.rows:
            writer.writerow(
                [repr(float(row.features[f])) for f in self.feature_order]
                + [row.question_id, row.answer_id, int(row.label)]
            )
        return buf.getvalue()


def thread_feature_rows(
    thread: QuestionThread,
    model: BackgroundModel,
    tokenized: Mapping[int, TokenizedText] | None = None,
) -> list[FeatureRow]:
    """Raw (undiscretised) feature values for every answer of one thread."""
    rows = []
    for answer in thread.answers:
        text = tokenized[answer.id] if tokenized is not None else segment(answer.body_text)
        values = compute_features(text, model).as_dict()
        values["answer_count"] = float(thread.answer_count)
        values["creation_epoch"] = answer.creation_date.timestamp()
        values["reputation"] = float(answer.owner_reputation)
        values["score"] = float(answer.score)
        rows.append(FeatureRow(answer.id, answer.creation_date, values, answer.is_accepted))
    return rows


def check_inputs(corpus: SiteCorpus, case: FeatureCase) -> None:
    if needs_reputation(case) and not corpus.users_loaded:
        raise MissingInputError(
            f"case {int(case)} needs owner reputations but corpus {corpus.site_name!r} was built without Users.xml"
        )


def dataset_from_groups(
    groups: Sequence[Sequence[FeatureRow]],
    question_ids: Sequence[int],
    case: FeatureCase,
    profile: DirectionProfile | None,
) -> Dataset:
    case = FeatureCase(case)
    order = feature_names(case)
    ranks: dict[int, dict[str, int]] = {}
    if uses_ranks(case):
        if profile is None:
            raise ValueError(f"case {int(case)} uses rank features and needs a direction profile")
        ranked = [f for f in RANKED if RANK_NAMES[f] in order]
        ranks = discretise_threads(groups, profile, ranked)
    out = []
    for qid, group in sorted(zip(question_ids, groups), key=lambda pair: pair[0]):
        for row in sorted(group, key=lambda r: r.answer_id):
            values = dict(row.values)
            for name, rank in ranks.get(row.answer_id, {}).items():
                values[RANK_NAMES[name]] = float(rank)
            features = {f: values[f] for f in order}
            if not all(math.isfinite(v) for v in features.values()):
                raise ValueError(f"non-finite feature for answer {row.answer_id}")
            out.append(ExampleRow(qid, row.answer_id, row.is_accepted, features))
    return Dataset(case, tuple(order), tuple(out))


def assemble(
    corpus: SiteCorpus,
    case: FeatureCase,
    model: BackgroundModel,
    profile: DirectionProfile | None = None,
    tokenized: Mapping[int, TokenizedText] | None = None,
) -> Dataset:
    """Build the example rows of one case for every answer in ``corpus``."""
    case = FeatureCase(case)
    check_inputs(corpus, case)
    groups = [thread_feature_rows(t, model, tokenized) for t in corpus.threads]
    return dataset_from_groups(groups, [t.question_id for t in corpus.threads], case, profile)


def tokenize_corpus(threads: Iterable[QuestionThread]) -> dict[int, TokenizedText]:
    return {a.id: segment(a.body_text) for t in threads for a in t.answers}
