import io
import random
import tracemalloc
from datetime import timedelta

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bestanswer.ingest import (
    DumpParseError,
    PostType,
    RawPost,
    RecordError,
    build_corpus,
    corpus_stats,
    load_corpus,
    parse_posts,
    parse_users,
    save_corpus,
)
from tests.conftest import POSTS_FIXTURE, T0


def _question(qid, accepted=None, when=T0):
    return RawPost(id=qid, post_type=PostType.QUESTION, creation_date=when, accepted_answer_id=accepted)


def _answer(aid, parent, when=T0, user=None, body="<p>text here.</p>"):
    return RawPost(id=aid, post_type=PostType.ANSWER, creation_date=when, parent_id=parent, owner_user_id=user, body=body)


class TestParsePosts:
    def test_empty_root(self):
        assert list(parse_posts(io.BytesIO(b"<posts></posts>"))) == []

    def test_fixture_rows(self, posts_xml):
        posts = list(parse_posts(posts_xml))
        assert [p.id for p in posts] == [1, 3, 4]
        q, a1, a2 = posts
        assert q.post_type is PostType.QUESTION
        assert q.accepted_answer_id == 4
        assert q.answer_count == 2
        assert q.owner_user_id == 7
        assert q.score == 5
        assert q.creation_date.isoformat() == "2013-09-01T12:00:00+00:00"
        assert a1.post_type is PostType.ANSWER and a1.parent_id == 1 and a1.score == -1
        assert a2.owner_user_id is None
        assert a2.body == "<p>Like <code>this</code> indeed.</p>"

    def test_other_post_type(self):
        xml = b'<posts><row Id="8" PostTypeId="5" CreationDate="2013-01-01T00:00:00.000" /></posts>'
        (post,) = parse_posts(io.BytesIO(xml))
        assert post.post_type is PostType.OTHER

    def test_malformed_xml_reports_offset(self):
        xml = b'<posts><row Id="1" PostTypeId="1" CreationDate="2013-01-01T00:00:00" /><row Id="2" </posts>'
        with pytest.raises(DumpParseError) as err:
            list(parse_posts(io.BytesIO(xml)))
        assert 0 < err.value.byte_offset <= len(xml)

    def test_bad_date_carries_row_id(self):
        xml = b'<posts><row Id="42" PostTypeId="2" ParentId="1" CreationDate="yesterday" /></posts>'
        with pytest.raises(RecordError) as err:
            list(parse_posts(io.BytesIO(xml)))
        assert err.value.row_id == "42"

    def test_skip_mode_drops_bad_rows(self):
        xml = (
            b'<posts><row Id="42" PostTypeId="2" ParentId="1" CreationDate="nope" />'
            b'<row Id="43" PostTypeId="2" ParentId="1" CreationDate="2013-01-01T00:00:00.000" /></posts>'
        )
        assert [p.id for p in parse_posts(io.BytesIO(xml), errors="skip")] == [43]

    def test_streaming_memory_is_flat(self):
        class RowStream(io.RawIOBase):
            """Generates a large Posts.xml on the fly without holding it."""

            def __init__(self, n):
                self.n, self.i, self.buf = n, 0, b"<posts>"

            def readable(self):
                return True

            def read(self, size=-1):
                while len(self.buf) < size and self.i <= self.n:
                    if self.i == self.n:
                        self.buf += b"</posts>"
                    else:
                        self.buf += (
                            b'<row Id="%d" PostTypeId="2" ParentId="1" CreationDate="2013-01-01T00:00:00.000" '
                            b'Body="%s" />' % (self.i + 2, b"x" * 300)
                        )
                    self.i += 1
                out, self.buf = self.buf[:size], self.buf[size:]
                return out

        n = 60_000  # ~25 MB of XML
        tracemalloc.start()
        count = sum(1 for _ in parse_posts(RowStream(n)))
        _, peak = tracemalloc.get_traced_memory()
        tracemalloc.stop()
        assert count == n
        assert peak < 4_000_000


class TestParseUsers:
    def test_empty(self):
        assert parse_users(io.BytesIO(b"<users/>")) == {}

    def test_fixture(self, users_xml):
        assert parse_users(users_xml) == {7: 120, 9: 0}

    def test_duplicates_keep_last(self):
        xml = b'<users><row Id="7" Reputation="1" /><row Id="7" Reputation="55" /></users>'
        assert parse_users(io.BytesIO(xml)) == {7: 55}

    def test_malformed(self):
        with pytest.raises(DumpParseError):
            parse_users(io.BytesIO(b"<users><row Id="))


class TestBuildCorpus:
    def test_fixture_end_to_end(self, posts_xml, users_xml):
        corpus = build_corpus(parse_posts(posts_xml), parse_users(users_xml))
        (thread,) = corpus.threads
        assert thread.accepted_answer_id == 4
        assert [a.id for a in thread.answers] == [3, 4]
        assert [a.is_accepted for a in thread.answers] == [False, True]
        assert [a.owner_reputation for a in thread.answers] == [0, 0]  # user 9 has 0, answer 4 has no owner
        assert thread.answers[1].body_text == "Like indeed."
        assert corpus.users_loaded

    def test_resolved_filter(self):
        posts = [
            _question(1, accepted=11), _answer(11, 1), _answer(12, 1),
            _question(2, accepted=21), _answer(21, 2), _answer(22, 2),
            _question(3), _answer(31, 3), _answer(32, 3),
        ]
        corpus = build_corpus(posts, {}, resolved_only=True)
        assert [t.question_id for t in corpus.threads] == [1, 2]
        assert corpus_stats(corpus)["resolved_fraction"] == pytest.approx(2 / 3)

    def test_min_answers(self):
        corpus = build_corpus([_question(1, accepted=11), _answer(11, 1)], {}, min_answers=2)
        assert corpus.threads == []
        assert corpus.counts["threads_dropped_min_answers"] == 1

    def test_dangling_accepted_id_is_unresolved(self):
        posts = [_question(1, accepted=99), _answer(11, 1), _answer(12, 1)]
        assert build_corpus(posts, {}, resolved_only=True).threads == []
        (thread,) = build_corpus(posts, {}, resolved_only=False).threads
        assert thread.accepted_answer_id is None
        assert not any(a.is_accepted for a in thread.answers)

    def test_reputation_lookup(self):
        posts = [_question(1, accepted=11), _answer(11, 1, user=7), _answer(12, 1, user=8)]
        thread = build_corpus(posts, {7: 300}).threads[0]
        assert [a.owner_reputation for a in thread.answers] == [300, 0]

    def test_orphans_counted(self):
        posts = [_question(1, accepted=11), _answer(11, 1), _answer(12, 1), _answer(13, 555)]
        corpus = build_corpus(posts, {})
        assert corpus.counts["orphan_answers"] == 1

    def test_min_answers_validated(self):
        with pytest.raises(ValueError):
            build_corpus([], {}, min_answers=0)

    def test_without_users(self):
        corpus = build_corpus([_question(1, accepted=11), _answer(11, 1), _answer(12, 1)], None)
        assert not corpus.users_loaded


@st.composite
def post_soup(draw):
    n_q = draw(st.integers(0, 8))
    posts = []
    next_id = 1000
    for qid in range(1, n_q + 1):
        n_a = draw(st.integers(0, 4))
        ids = list(range(next_id, next_id + n_a))
        next_id += n_a
        accepted = draw(st.sampled_from(ids + [None, 99999]))
        posts.append(_question(qid, accepted=accepted))
        posts += [_answer(a, qid, when=T0 + timedelta(minutes=a)) for a in ids]
    n_orphans = draw(st.integers(0, 3))
    posts += [_answer(next_id + i, 5000 + i) for i in range(n_orphans)]
    seed = draw(st.integers(0, 2**16))
    return posts, seed


@settings(max_examples=60, deadline=None)
@given(post_soup(), st.integers(1, 3), st.booleans())
def test_linking_is_order_independent(soup, min_answers, resolved_only):
    posts, seed = soup
    shuffled = posts[:]
    random.Random(seed).shuffle(shuffled)
    a = build_corpus(posts, {}, min_answers=min_answers, resolved_only=resolved_only)
    b = build_corpus(shuffled, {}, min_answers=min_answers, resolved_only=resolved_only)
    assert a.threads == b.threads
    assert a.counts == b.counts
    seen_answers = set()
    for thread in b.threads:
        accepted = [x for x in thread.answers if x.is_accepted]
        assert len(accepted) <= 1
        assert (thread.accepted_answer_id is not None) == (len(accepted) == 1)
        assert thread.answer_count == len(thread.answers) >= min_answers
        if resolved_only:
            assert thread.accepted_answer_id is not None
        ids = {x.id for x in thread.answers}
        assert not ids & seen_answers
        seen_answers |= ids
    # answers kept + orphans + answers of dropped threads = answer posts
    n_answer_posts = sum(p.post_type is PostType.ANSWER for p in posts)
    kept = sum(t.answer_count for t in b.threads)
    assert kept + b.counts["orphan_answers"] + b.counts["answers_in_dropped_threads"] == n_answer_posts


class TestCorpusStats:
    def test_empty(self):
        stats = corpus_stats(build_corpus([], {}))
        assert all(v == 0 for v in stats.values())

    def test_arithmetic(self):
        posts = [_question(1, accepted=11), _answer(11, 1), _answer(12, 1), _answer(13, 1),
                 _question(2, accepted=21), _answer(21, 2), _answer(22, 2)]
        stats = corpus_stats(build_corpus(posts, {}))
        assert stats["answers"] == 5
        assert stats["threads"] == 2
        assert stats["positive_rate"] == pytest.approx(2 / 5)

    def test_counts_match_recount_of_fixture(self, tmp_path):
        from bestanswer.synthetic import SiteSpec, generate_posts, write_dump
        from bestanswer.ingest import load_site

        posts, users = generate_posts(SiteSpec("s", n_threads=40), seed=3)
        write_dump(posts, users, tmp_path)
        # independent recount straight from the XML lines
        lines = (tmp_path / "Posts.xml").read_text().splitlines()
        n_questions = sum('PostTypeId="1"' in line for line in lines)
        n_answers = sum('PostTypeId="2"' in line for line in lines)
        stats = corpus_stats(load_site(tmp_path / "Posts.xml", tmp_path / "Users.xml"))
        assert stats["questions_seen"] == n_questions
        assert stats["answer_posts_seen"] == n_answers
        assert stats["answers"] == n_answers  # synthetic threads all have >= 2 answers and an accepted one


def test_corpus_file_round_trip(tmp_path, posts_xml, users_xml):
    corpus = build_corpus(parse_posts(posts_xml), parse_users(users_xml), site_name="demo")
    path = tmp_path / "c.jsonl"
    save_corpus(corpus, path)
    again = load_corpus(path)
    assert again.threads == corpus.threads
    assert again.site_name == "demo" and again.users_loaded and again.counts == corpus.counts
    assert len(path.read_text().splitlines()) == 1 + len(corpus.threads)
