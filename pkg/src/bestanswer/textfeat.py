"""Markup stripping, segmentation and the five shallow linguistic features."""
from __future__ import annotations

import hashlib
import json
import math
import re
import string
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property
from html.parser import HTMLParser
from typing import Iterable, Mapping

FEATURES = ("length", "avg_word_length", "words_per_sentence", "longest_sentence", "vocab_logprob")

_BLOCK_TAGS = frozenset(
    "p br div li ul ol pre blockquote h1 h2 h3 h4 h5 h6 hr tr td th table dd dt dl img".split()
)
_CODE_TAGS = frozenset(("code", "pre"))
_DROP_TAGS = frozenset(("script", "style"))
_WS = re.compile(r"\s+")
_SENTENCE_END = re.compile(r"(?<=[.!?])\s+")


class _TextExtractor(HTMLParser):
    def __init__(self, keep_code: bool):
        super().__init__(convert_charrefs=True)
        self.keep_code = keep_code
        self.parts: list[str] = []
        self._skip = 0

    def _skipping(self, tag: str) -> bool:
        return tag in _DROP_TAGS or (tag in _CODE_TAGS and not self.keep_code)

    def handle_starttag(self, tag, attrs):
        if tag in _BLOCK_TAGS or tag in _CODE_TAGS:
            self.parts.append(" ")
        if self._skipping(tag):
            self._skip += 1

    def handle_startendtag(self, tag, attrs):
        if tag in _BLOCK_TAGS:
            self.parts.append(" ")

    def handle_endtag(self, tag):
        if self._skipping(tag) and self._skip:
            self._skip -= 1
        if tag in _BLOCK_TAGS or tag in _CODE_TAGS:
            self.parts.append(" ")

    def handle_data(self, data):
        if not self._skip:
            self.parts.append(data)


def strip_markup(body: str, keep_code: bool = False) -> str:
    """Return the visible text of an HTML fragment with whitespace collapsed.

    Entities are decoded. Unless ``keep_code`` is set, everything inside
    ``<code>`` and ``<pre>`` is dropped.
    """
    parser = _TextExtractor(keep_code)
    parser.feed(body)
    parser.close()
    return _WS.sub(" ", "".join(parser.parts)).strip()


@dataclass(frozen=True)
class TokenizedText:
    sentences: tuple[tuple[str, ...], ...]

    @property
    def tokens(self) -> list[str]:
        return [tok for sent in self.sentences for tok in sent]

    # cached summaries; texts are re-scored against many background models
    @cached_property
    def bag(self) -> Counter[str]:
        return Counter(tok.lower() for sent in self.sentences for tok in sent)

    @cached_property
    def n_tokens(self) -> int:
        return sum(len(s) for s in self.sentences)

    @cached_property
    def n_chars(self) -> int:
        return sum(len(tok) for sent in self.sentences for tok in sent)


def segment(text: str) -> TokenizedText:
    """Split into sentences on ``.!?`` + whitespace, then into tokens.

    Tokens are whitespace-delimited with surrounding ASCII punctuation removed;
    tokens and sentences left empty are discarded.
    """
    sentences = []
    for chunk in _SENTENCE_END.split(text):
        tokens = tuple(t for t in (raw.strip(string.punctuation) for raw in chunk.split()) if t)
        if tokens:
            sentences.append(tokens)
    return TokenizedText(tuple(sentences))


@dataclass(frozen=True)
class BackgroundModel:
    """Add-alpha unigram model with one reserved out-of-vocabulary bucket."""

    counts: Mapping[str, int]
    total_tokens: int
    alpha: float = 1.0
    _denominator: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        object.__setattr__(self, "_denominator", self.total_tokens + self.alpha * (len(self.counts) + 1))

    @property
    def vocab_size(self) -> int:
        return len(self.counts)

    def prob(self, token: str) -> float:
        return (self.counts.get(token.lower(), 0) + self.alpha) / self._denominator

    def mean_logprob(self, bag: Mapping[str, int]) -> float:
        """Mean natural-log probability over a bag of lowercased tokens."""
        n = sum(bag.values())
        if not n:
            return 0.0
        get, alpha = self.counts.get, self.alpha
        total = math.fsum(c * math.log(get(tok, 0) + alpha) for tok, c in bag.items())
        return total / n - math.log(self._denominator)

    def oov_prob(self) -> float:
        return self.alpha / self._denominator

    def to_json(self) -> dict:
        return {
            "alpha": self.alpha,
            "total_tokens": self.total_tokens,
            "counts": dict(sorted(self.counts.items())),
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "BackgroundModel":
        counts = {str(k): int(v) for k, v in doc["counts"].items()}
        total = int(doc["total_tokens"])
        if total != sum(counts.values()):
            raise ValueError("background model total_tokens does not match counts")
        return cls(counts, total, float(doc["alpha"]))

    def digest(self) -> str:
        payload = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def build_background_model(texts: Iterable[TokenizedText], alpha: float = 1.0) -> BackgroundModel:
    counts: Counter[str] = Counter()
    for text in texts:
        counts.update(text.bag)
    return BackgroundModel(dict(counts), sum(counts.values()), alpha)


def token_logprob(model: BackgroundModel, token: str) -> float:
    return math.log(model.prob(token))


@dataclass(frozen=True)
class LinguisticFeatures:
    length: float = 0.0
    avg_word_length: float = 0.0
    words_per_sentence: float = 0.0
    longest_sentence: float = 0.0
    vocab_logprob: float = 0.0

    def as_dict(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in FEATURES}


def compute_features(text: TokenizedText, model: BackgroundModel) -> LinguisticFeatures:
    n = text.n_tokens
    if not n:
        return LinguisticFeatures()
    return LinguisticFeatures(
        length=float(n),
        avg_word_length=text.n_chars / n,
        words_per_sentence=n / len(text.sentences),
        longest_sentence=float(max(len(s) for s in text.sentences)),
        vocab_logprob=model.mean_logprob(text.bag),
    )
