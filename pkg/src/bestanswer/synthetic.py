"""Synthetic StackExchange-like sites for tests and demos.

Each answer gets a latent length; the accepted answer of a thread is the one
maximising latent length plus Gaussian noise. A site can be "distorted": its
token counts pass through a strictly increasing map and its words are longer,
which shifts raw feature scales without changing within-thread order.
"""
from __future__ import annotations

import string
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Callable
from xml.sax.saxutils import quoteattr

import numpy as np

from bestanswer.ingest import MarkupPolicy, PostType, RawPost, SiteCorpus, build_corpus, format_timestamp

EPOCH = datetime(2012, 1, 1, tzinfo=timezone.utc)


def identity(n: float) -> float:
    return n


def stretch(n: float) -> float:
    return 2.5 * n + 0.004 * n * n + 30.0


@dataclass(frozen=True)
class SiteSpec:
    name: str
    n_threads: int = 2000
    min_answers: int = 2
    max_answers: int = 6
    noise_sd: float = 12.0
    length_map: Callable[[float], float] = identity
    word_length_shift: int = 0
    months: int = 24
    code_rate: float = 0.1


def _vocabulary(rng: np.random.Generator, size: int, shift: int) -> list[str]:
    letters = np.array(list(string.ascii_lowercase))
    lengths = rng.integers(2, 9, size=size) + shift
    return ["".join(rng.choice(letters, size=n)) for n in lengths]


def generate_posts(spec: SiteSpec, seed: int = 0, id_offset: int = 0) -> tuple[list[RawPost], dict[int, int]]:
    """Posts and user reputations for one synthetic site."""
    rng = np.random.default_rng(seed)
    vocab = _vocabulary(rng, 3000, spec.word_length_shift)
    zipf = 1.0 / np.arange(1, len(vocab) + 1) ** 1.1
    zipf /= zipf.sum()
    n_users = max(50, spec.n_threads // 4)
    users = {id_offset + u: int(rng.lognormal(4.0, 1.5)) for u in range(1, n_users + 1)}
    user_ids = np.array(sorted(users))
    posts: list[RawPost] = []
    next_id = id_offset + 1
    span = spec.months * 30 * 86400
    for _ in range(spec.n_threads):
        qid = next_id
        next_id += 1
        asked = EPOCH + timedelta(seconds=int(rng.integers(0, span)))
        n = int(rng.integers(spec.min_answers, spec.max_answers + 1))
        latent = rng.lognormal(np.log(50.0), 0.5, size=n)
        accepted_idx = int(np.argmax(latent + rng.normal(0.0, spec.noise_sd, size=n)))
        answers = []
        for i in range(n):
            aid = next_id
            next_id += 1
            created = asked + timedelta(seconds=int(rng.integers(60, 7 * 86400)))
            n_tokens = max(3, int(round(spec.length_map(float(latent[i])))))
            body = _body(rng, vocab, zipf, n_tokens, spec.code_rate)
            is_acc = i == accepted_idx
            score = int(rng.poisson(1.0 + 3.0 * is_acc)) - int(rng.poisson(0.5))
            answers.append(
                RawPost(
                    id=aid,
                    post_type=PostType.ANSWER,
                    creation_date=created,
                    score=score,
                    body=body,
                    parent_id=qid,
                    owner_user_id=int(rng.choice(user_ids)),
                )
            )
        posts.append(
            RawPost(
                id=qid,
                post_type=PostType.QUESTION,
                creation_date=asked,
                score=int(rng.poisson(2.0)),
                body="<p>How do I do this?</p>",
                accepted_answer_id=answers[accepted_idx].id,
                owner_user_id=int(rng.choice(user_ids)),
                answer_count=n,
            )
        )
        posts.extend(answers)
    return posts, users


def _body(rng, vocab, weights, n_tokens, code_rate) -> str:
    words = rng.choice(len(vocab), size=n_tokens, p=weights)
    sentences = []
    i = 0
    while i < n_tokens:
        k = int(rng.integers(5, 21))
        chunk = [vocab[w] for w in words[i : i + k]]
        chunk[0] = chunk[0].capitalize()
        sentences.append(" ".join(chunk) + ".")
        i += k
    body = "<p>" + " ".join(sentences) + "</p>"
    if rng.random() < code_rate:
        body += "<pre><code>for (int i = 0; i &lt; n; i++) { x += y; }</code></pre>"
    return body


def generate_site(spec: SiteSpec, seed: int = 0, id_offset: int = 0, with_users: bool = True) -> SiteCorpus:
    posts, users = generate_posts(spec, seed, id_offset)
    return build_corpus(posts, users if with_users else None, min_answers=2, markup_policy=MarkupPolicy(), site_name=spec.name)


def pooled_corpus(name: str, corpora: list[SiteCorpus]) -> SiteCorpus:
    threads = [t for c in corpora for t in c.threads]
    counts: dict[str, int] = {}
    for c in corpora:
        for key, value in c.counts.items():
            counts[key] = counts.get(key, 0) + value
    return SiteCorpus(name, threads, users_loaded=all(c.users_loaded for c in corpora), counts=counts)


def two_site_benchmark(n_threads: int = 2000, seed: int = 0) -> tuple[SiteCorpus, SiteCorpus]:
    """Site A as generated, site B with stretched lengths and longer words."""
    a = generate_site(SiteSpec("site-a", n_threads=n_threads), seed=seed)
    b = generate_site(
        SiteSpec("site-b", n_threads=n_threads, length_map=stretch, word_length_shift=3),
        seed=seed + 1,
        id_offset=10_000_000,
    )
    return a, b


def write_dump(posts: list[RawPost], users: dict[int, int] | None, directory: str | Path) -> Path:
    """Write ``Posts.xml`` (and ``Users.xml`` when users are given) in dump layout."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    type_codes = {PostType.QUESTION: "1", PostType.ANSWER: "2", PostType.OTHER: "5"}
    with open(directory / "Posts.xml", "w", encoding="utf-8") as fh:
        fh.write('<?xml version="1.0" encoding="utf-8"?>\n<posts>\n')
        for p in posts:
            attrs = {
                "Id": p.id,
                "PostTypeId": type_codes[p.post_type],
                "ParentId": p.parent_id,
                "AcceptedAnswerId": p.accepted_answer_id,
                "CreationDate": format_timestamp(p.creation_date),
                "Score": p.score,
                "Body": p.body,
                "OwnerUserId": p.owner_user_id,
                "AnswerCount": p.answer_count,
            }
            text = " ".join(f"{k}={quoteattr(str(v))}" for k, v in attrs.items() if v is not None)
            fh.write(f"  <row {text} />\n")
        fh.write("</posts>\n")
    if users is not None:
        with open(directory / "Users.xml", "w", encoding="utf-8") as fh:
            fh.write('<?xml version="1.0" encoding="utf-8"?>\n<users>\n')
            for uid, rep in sorted(users.items()):
                fh.write(f'  <row Id="{uid}" Reputation="{rep}" />\n')
            fh.write("</users>\n")
    return directory
