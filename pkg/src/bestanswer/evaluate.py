"""Grouped k-fold evaluation, classification metrics and macro-averaging."""
from __future__ import annotations

import csv
import io
import json
import random
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import rankdata

from bestanswer.dataset import RANKED, FeatureCase, check_inputs, dataset_from_groups, thread_feature_rows, tokenize_corpus, uses_ranks
from bestanswer.discretise import learn_directions
from bestanswer.ingest import SiteCorpus
from bestanswer.model import ClassifierConfig, train
from bestanswer.textfeat import build_background_model

METRIC_NAMES = ("precision", "recall", "f_measure", "auc")
REPORT_NOTES = {
    "metric_class": "precision/recall/F computed for the accepted class at probability >= 0.5",
    "fold_grouping": "folds partition questions; all answers of a question share a fold",
    "fitted_per_fold": "background model and sort directions learned on training-fold answers only",
}


@dataclass(frozen=True)
class Metrics:
    precision: float
    recall: float
    f_measure: float
    auc: float

    @classmethod
    def mean_of(cls, items: Sequence["Metrics"]) -> "Metrics":
        if not items:
            raise ValueError("no metrics to average")
        return cls(*(float(np.mean([getattr(m, name) for m in items])) for name in METRIC_NAMES))


@dataclass(frozen=True)
class FoldSplit:
    index: int
    train: frozenset[int]
    test: frozenset[int]


def grouped_kfold(answer_counts: dict[int, int] | Sequence[tuple[int, int]], k: int, seed: int = 0) -> list[FoldSplit]:
    """Deal questions into ``k`` folds.

    Questions are shuffled with ``seed``, stably sorted by answer count and
    dealt round-robin, so fold sizes differ by at most one and thread sizes are
    spread evenly.
    """
    items = list(answer_counts.items()) if isinstance(answer_counts, dict) else list(answer_counts)
    if k < 2:
        raise ValueError("k must be >= 2")
    if len(items) < k:
        raise ValueError(f"need at least k={k} questions, got {len(items)}")
    ids = sorted(qid for qid, _ in items)
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate question ids")
    counts = dict(items)
    random.Random(seed).shuffle(ids)
    ids.sort(key=lambda qid: counts[qid])
    folds: list[list[int]] = [[] for _ in range(k)]
    for position, qid in enumerate(ids):
        folds[position % k].append(qid)
    everything = frozenset(ids)
    return [FoldSplit(i, everything - frozenset(f), frozenset(f)) for i, f in enumerate(folds)]


def roc_auc(labels: Sequence[bool], scores: Sequence[float]) -> float:
    """Mann-Whitney AUC with midranks for tied scores."""
    y = np.asarray(labels, dtype=bool)
    s = np.asarray(scores, dtype=float)
    if y.shape != s.shape:
        raise ValueError("labels and scores differ in length")
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs at least one positive and one negative label")
    ranks = rankdata(s, method="average")
    return float((ranks[y].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def binary_metrics(labels: Sequence[bool], predicted: Sequence[bool]) -> tuple[float, float, float]:
    y = np.asarray(labels, dtype=bool)
    p = np.asarray(predicted, dtype=bool)
    if len(y) == 0:
        raise ValueError("empty input")
    tp = int((y & p).sum())
    fp = int((~y & p).sum())
    fn = int((y & ~p).sum())
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f


def score_predictions(labels: Sequence[bool], probabilities: Sequence[float], threshold: float = 0.5) -> Metrics:
    probs = np.asarray(probabilities, dtype=float)
    p, r, f = binary_metrics(labels, probs >= threshold)
    return Metrics(p, r, f, roc_auc(labels, probs))


@dataclass
class CaseReport:
    site_name: str
    case: FeatureCase
    folds: list[Metrics]
    config_digest: str
    seed: int
    k: int
    notes: dict = field(default_factory=lambda: dict(REPORT_NOTES))

    @property
    def mean(self) -> Metrics:
        return Metrics.mean_of(self.folds)

    def to_json(self) -> dict:
        return {
            "site_name": self.site_name,
            "case": int(self.case),
            "k": self.k,
            "seed": self.seed,
            "config_digest": self.config_digest,
            "folds": [asdict(m) for m in self.folds],
            "mean": asdict(self.mean),
            "notes": self.notes,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["site", "case", "fold", *METRIC_NAMES, "seed", "config_digest"])
        rows = [(str(i), m) for i, m in enumerate(self.folds)] + [("mean", self.mean)]
        for fold, m in rows:
            writer.writerow(
                [self.site_name, int(self.case), fold, *(repr(getattr(m, n)) for n in METRIC_NAMES), self.seed, self.config_digest]
            )
        return buf.getvalue()

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n"


def evaluate_cases(
    corpus: SiteCorpus,
    cases: Iterable[FeatureCase | int],
    k: int = 10,
    config: ClassifierConfig = ClassifierConfig(),
    seed: int = 0,
    alpha: float = 1.0,
) -> dict[FeatureCase, CaseReport]:
    """Evaluate several cases on the same folds.

    Per fold the background model and direction profile are fitted on the
    training questions only and then applied to both partitions.
    """
    cases = [FeatureCase(c) for c in cases]
    for case in cases:
        check_inputs(corpus, case)
    tokenized = tokenize_corpus(corpus.threads)
    by_id = {t.question_id: t for t in corpus.threads}
    splits = grouped_kfold({t.question_id: t.answer_count for t in corpus.threads}, k, seed)
    fold_metrics: dict[FeatureCase, list[Metrics]] = {c: [] for c in cases}
    for split in splits:
        train_threads = [by_id[q] for q in sorted(split.train)]
        test_threads = [by_id[q] for q in sorted(split.test)]
        bg = build_background_model((tokenized[a.id] for t in train_threads for a in t.answers), alpha)
        train_groups = [thread_feature_rows(t, bg, tokenized) for t in train_threads]
        test_groups = [thread_feature_rows(t, bg, tokenized) for t in test_threads]
        profile = learn_directions(train_groups, RANKED) if any(uses_ranks(c) for c in cases) else None
        bg_digest = bg.digest()
        train_ids = [t.question_id for t in train_threads]
        test_ids = [t.question_id for t in test_threads]
        for case in cases:
            ds_train = dataset_from_groups(train_groups, train_ids, case, profile)
            ds_test = dataset_from_groups(test_groups, test_ids, case, profile)
            model = train(ds_train, config, profile, bg_digest)
            fold_metrics[case].append(score_predictions(ds_test.labels(), model.predict_matrix(ds_test.matrix())))
    return {
        case: CaseReport(corpus.site_name, case, fold_metrics[case], config.digest(), seed, k) for case in cases
    }


def evaluate_case(
    corpus: SiteCorpus,
    case: FeatureCase | int,
    k: int = 10,
    config: ClassifierConfig = ClassifierConfig(),
    seed: int = 0,
    alpha: float = 1.0,
) -> CaseReport:
    return evaluate_cases(corpus, [case], k, config, seed, alpha)[FeatureCase(case)]


def macro_average(reports: Sequence[CaseReport]) -> Metrics:
    """Unweighted mean over sites of each site's mean fold metrics."""
    if not reports:
        raise ValueError("no reports to average")
    if len({r.case for r in reports}) != 1:
        raise ValueError("cannot macro-average reports of different cases")
    return Metrics.mean_of([r.mean for r in reports])
