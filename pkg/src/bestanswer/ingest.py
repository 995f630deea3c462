"""Streaming ingestion of StackExchange data-dump XML.

``Posts.xml`` and ``Users.xml`` are read with expat in fixed-size chunks so
memory stays flat regardless of dump size. Parsed posts are then linked into
question threads (``build_corpus``) and optionally persisted as JSON lines.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import IO, Iterable, Iterator, Mapping
from xml.parsers import expat

from bestanswer.textfeat import strip_markup

CHUNK_SIZE = 1 << 16
CORPUS_FORMAT = "bestanswer-corpus/1"


class DumpParseError(ValueError):
    """Malformed XML in a dump file."""

    def __init__(self, message: str, byte_offset: int):
        super().__init__(f"{message} (at byte {byte_offset})")
        self.byte_offset = byte_offset


class RecordError(ValueError):
    """A single ``row`` element that cannot be converted."""

    def __init__(self, message: str, row_id: str | None):
        super().__init__(f"row {row_id}: {message}")
        self.row_id = row_id


class PostType(str, enum.Enum):
    QUESTION = "question"
    ANSWER = "answer"
    OTHER = "other"


@dataclass(frozen=True)
class RawPost:
    id: int
    post_type: PostType
    creation_date: datetime
    score: int = 0
    body: str = ""
    parent_id: int | None = None
    accepted_answer_id: int | None = None
    owner_user_id: int | None = None
    answer_count: int | None = None


@dataclass(frozen=True)
class AnswerRecord:
    id: int
    creation_date: datetime
    score: int
    owner_reputation: int
    body_text: str
    is_accepted: bool


@dataclass(frozen=True)
class QuestionThread:
    question_id: int
    creation_date: datetime
    accepted_answer_id: int | None
    answers: tuple[AnswerRecord, ...]

    @property
    def answer_count(self) -> int:
        return len(self.answers)


@dataclass
class SiteCorpus:
    site_name: str
    threads: list[QuestionThread]
    users_loaded: bool = False
    # bookkeeping filled in by build_corpus; see corpus_stats
    counts: dict[str, int] = field(default_factory=dict)


@dataclass(frozen=True)
class MarkupPolicy:
    keep_code: bool = False


def parse_timestamp(value: str) -> datetime:
    """Parse a dump timestamp (ISO-8601, naive values are UTC)."""
    text = value.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    parsed = datetime.fromisoformat(text)
    if parsed.tzinfo is None:
        return parsed.replace(tzinfo=timezone.utc)
    return parsed.astimezone(timezone.utc)


def format_timestamp(value: datetime) -> str:
    return value.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%f")[:-3]


def _iter_rows(stream: IO[bytes], chunk_size: int = CHUNK_SIZE) -> Iterator[dict[str, str]]:
    parser = expat.ParserCreate()
    pending: list[dict[str, str]] = []

    def start(name, attrs):
        if name == "row":
            pending.append(attrs)

    parser.StartElementHandler = start
    parser.buffer_text = True
    while True:
        chunk = stream.read(chunk_size)
        if isinstance(chunk, str):
            chunk = chunk.encode("utf-8")
        final = not chunk
        try:
            parser.Parse(chunk, final)
        except expat.ExpatError as exc:
            raise DumpParseError(expat.errors.messages[exc.code], parser.ErrorByteIndex) from exc
        yield from pending
        pending.clear()
        if final:
            return


def _opt_int(attrs: Mapping[str, str], key: str) -> int | None:
    raw = attrs.get(key)
    if raw is None or raw == "":
        return None
    return int(raw)


def _raw_post(attrs: Mapping[str, str]) -> RawPost:
    row_id = attrs.get("Id")
    try:
        post_id = int(row_id)  # type: ignore[arg-type]
    except (TypeError, ValueError):
        raise RecordError("missing or non-integer Id", row_id) from None
    try:
        created = parse_timestamp(attrs["CreationDate"])
    except (KeyError, ValueError):
        raise RecordError(f"unparseable CreationDate {attrs.get('CreationDate')!r}", row_id) from None
    try:
        type_code = attrs.get("PostTypeId")
        post_type = {"1": PostType.QUESTION, "2": PostType.ANSWER}.get(type_code or "", PostType.OTHER)
        parent_id = _opt_int(attrs, "ParentId")
        if post_type is PostType.ANSWER and parent_id is None:
            raise RecordError("answer without ParentId", row_id)
        return RawPost(
            id=post_id,
            post_type=post_type,
            creation_date=created,
            score=_opt_int(attrs, "Score") or 0,
            body=attrs.get("Body", ""),
            parent_id=parent_id if post_type is PostType.ANSWER else None,
            accepted_answer_id=_opt_int(attrs, "AcceptedAnswerId") if post_type is PostType.QUESTION else None,
            owner_user_id=_opt_int(attrs, "OwnerUserId"),
            answer_count=_opt_int(attrs, "AnswerCount") if post_type is PostType.QUESTION else None,
        )
    except ValueError as exc:
        if isinstance(exc, RecordError):
            raise
        raise RecordError(str(exc), row_id) from None


def parse_posts(stream: IO[bytes], errors: str = "raise") -> Iterator[RawPost]:
    """Lazily yield one ``RawPost`` per ``row`` of a ``Posts.xml`` stream.

    With ``errors="skip"`` rows that fail conversion are dropped instead of
    raising ``RecordError``. XML syntax errors always raise ``DumpParseError``.
    """
    if errors not in ("raise", "skip"):
        raise ValueError(f"errors must be 'raise' or 'skip', not {errors!r}")
    for attrs in _iter_rows(stream):
        try:
            yield _raw_post(attrs)
        except RecordError:
            if errors == "raise":
                raise


def parse_users(stream: IO[bytes]) -> dict[int, int]:
    """Map user id to reputation; rows lacking either attribute are ignored."""
    users: dict[int, int] = {}
    for attrs in _iter_rows(stream):
        uid, rep = attrs.get("Id"), attrs.get("Reputation")
        if uid is None or rep is None:
            continue
        try:
            users[int(uid)] = max(int(rep), 0)
        except ValueError:
            raise RecordError(f"bad Reputation {rep!r}", uid) from None
    return users


def build_corpus(
    posts: Iterable[RawPost],
    users: Mapping[int, int] | None = None,
    min_answers: int = 2,
    resolved_only: bool = True,
    markup_policy: MarkupPolicy = MarkupPolicy(),
    site_name: str = "site",
) -> SiteCorpus:
    """Link answers to their questions and filter threads.

    Posts may arrive in any order. Answers whose question never appears are
    counted as orphans. A question whose ``AcceptedAnswerId`` names no parsed
    answer counts as unresolved.
    """
    if min_answers < 1:
        raise ValueError("min_answers must be >= 1")
    users_map = users or {}
    questions: dict[int, RawPost] = {}
    answers_by_parent: dict[int, list[RawPost]] = {}
    n_answer_posts = 0
    for post in posts:
        if post.post_type is PostType.QUESTION:
            if post.id in questions:
                raise ValueError(f"duplicate question id {post.id}")
            questions[post.id] = post
        elif post.post_type is PostType.ANSWER:
            n_answer_posts += 1
            answers_by_parent.setdefault(post.parent_id, []).append(post)  # type: ignore[arg-type]

    orphans = sum(len(v) for pid, v in answers_by_parent.items() if pid not in questions)
    threads: list[QuestionThread] = []
    resolved = dropped_min = dropped_unresolved = answers_dropped = 0
    for qid in sorted(questions):
        question = questions[qid]
        raw_answers = sorted(answers_by_parent.get(qid, []), key=lambda a: (a.creation_date, a.id))
        answer_ids = {a.id for a in raw_answers}
        accepted = question.accepted_answer_id if question.accepted_answer_id in answer_ids else None
        if accepted is not None:
            resolved += 1
        if len(raw_answers) < min_answers:
            dropped_min += 1
            answers_dropped += len(raw_answers)
            continue
        if resolved_only and accepted is None:
            dropped_unresolved += 1
            answers_dropped += len(raw_answers)
            continue
        records = tuple(
            AnswerRecord(
                id=a.id,
                creation_date=a.creation_date,
                score=a.score,
                owner_reputation=users_map.get(a.owner_user_id, 0) if a.owner_user_id is not None else 0,
                body_text=strip_markup(a.body, keep_code=markup_policy.keep_code),
                is_accepted=a.id == accepted,
            )
            for a in raw_answers
        )
        threads.append(QuestionThread(qid, question.creation_date, accepted, records))

    counts = {
        "questions_seen": len(questions),
        "questions_resolved": resolved,
        "answer_posts_seen": n_answer_posts,
        "orphan_answers": orphans,
        "threads_dropped_min_answers": dropped_min,
        "threads_dropped_unresolved": dropped_unresolved,
        "answers_in_dropped_threads": answers_dropped,
    }
    return SiteCorpus(site_name, threads, users_loaded=users is not None, counts=counts)


def corpus_stats(corpus: SiteCorpus) -> dict[str, float | int]:
    n_answers = sum(t.answer_count for t in corpus.threads)
    n_accepted = sum(a.is_accepted for t in corpus.threads for a in t.answers)
    counts = corpus.counts
    seen = counts.get("questions_seen", 0)
    stats: dict[str, float | int] = {
        "threads": len(corpus.threads),
        "answers": n_answers,
        "accepted_answers": n_accepted,
        "resolved_fraction": counts.get("questions_resolved", 0) / seen if seen else 0.0,
        "positive_rate": n_accepted / n_answers if n_answers else 0.0,
    }
    for key in (
        "questions_seen",
        "questions_resolved",
        "answer_posts_seen",
        "orphan_answers",
        "threads_dropped_min_answers",
        "threads_dropped_unresolved",
        "answers_in_dropped_threads",
    ):
        stats[key] = counts.get(key, 0)
    return stats


# --- persisted corpus: one JSON document per line -------------------------


def _thread_to_json(thread: QuestionThread) -> dict:
    return {
        "question_id": thread.question_id,
        "creation_date": format_timestamp(thread.creation_date),
        "accepted_answer_id": thread.accepted_answer_id,
        "answers": [
            {
                "id": a.id,
                "creation_date": format_timestamp(a.creation_date),
                "score": a.score,
                "owner_reputation": a.owner_reputation,
                "body_text": a.body_text,
                "is_accepted": a.is_accepted,
            }
            for a in thread.answers
        ],
    }


def _thread_from_json(doc: dict) -> QuestionThread:
    answers = tuple(
        AnswerRecord(
            id=int(a["id"]),
            creation_date=parse_timestamp(a["creation_date"]),
            score=int(a["score"]),
            owner_reputation=int(a["owner_reputation"]),
            body_text=a["body_text"],
            is_accepted=bool(a["is_accepted"]),
        )
        for a in doc["answers"]
    )
    return QuestionThread(
        int(doc["question_id"]),
        parse_timestamp(doc["creation_date"]),
        doc.get("accepted_answer_id"),
        answers,
    )


def save_corpus(corpus: SiteCorpus, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        header = {
            "format": CORPUS_FORMAT,
            "site_name": corpus.site_name,
            "users_loaded": corpus.users_loaded,
            "counts": corpus.counts,
        }
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for thread in corpus.threads:
            fh.write(json.dumps(_thread_to_json(thread), sort_keys=True, ensure_ascii=False) + "\n")


def load_corpus(path: str | Path) -> SiteCorpus:
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
        if not first:
            raise ValueError(f"{path}: empty corpus file")
        header = json.loads(first)
        if header.get("format") != CORPUS_FORMAT:
            raise ValueError(f"{path}: unsupported corpus format {header.get('format')!r}")
        threads = [_thread_from_json(json.loads(line)) for line in fh if line.strip()]
    return SiteCorpus(
        header["site_name"], threads, users_loaded=bool(header.get("users_loaded")), counts=dict(header.get("counts", {}))
    )


def load_site(
    posts_path: str | Path,
    users_path: str | Path | None = None,
    site_name: str | None = None,
    min_answers: int = 2,
    resolved_only: bool = True,
    keep_code: bool = False,
) -> SiteCorpus:
    """Convenience wrapper: parse extracted dump files into a corpus."""
    users = None
    if users_path is not None:
        with open(users_path, "rb") as fh:
            users = parse_users(fh)
    with open(posts_path, "rb") as fh:
        return build_corpus(
            parse_posts(fh),
            users,
            min_answers=min_answers,
            resolved_only=resolved_only,
            markup_policy=MarkupPolicy(keep_code=keep_code),
            site_name=site_name or Path(posts_path).resolve().parent.name,
        )
