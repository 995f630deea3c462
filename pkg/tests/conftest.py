from __future__ import annotations

import io
from datetime import datetime, timedelta, timezone

import pytest

from bestanswer.ingest import AnswerRecord, QuestionThread, SiteCorpus

T0 = datetime(2013, 9, 1, 12, 0, tzinfo=timezone.utc)

POSTS_FIXTURE = b"""<?xml version="1.0" encoding="utf-8"?>
<posts>
  <row Id="1" PostTypeId="1" AcceptedAnswerId="4" CreationDate="2013-09-01T12:00:00.000" Score="5" Body="&lt;p&gt;How?&lt;/p&gt;" OwnerUserId="7" AnswerCount="2" />
  <row Id="3" PostTypeId="2" ParentId="1" CreationDate="2013-09-01T12:05:00.000" Score="-1" Body="&lt;p&gt;Maybe.&lt;/p&gt;" OwnerUserId="9" />
  <row Id="4" PostTypeId="2" ParentId="1" CreationDate="2013-09-01T12:10:00.000" Score="3" Body="&lt;p&gt;Like &lt;code&gt;this&lt;/code&gt; indeed.&lt;/p&gt;" />
</posts>
"""

USERS_FIXTURE = b"""<?xml version="1.0" encoding="utf-8"?>
<users>
  <row Id="7" Reputation="120" DisplayName="a" />
  <row Id="9" Reputation="0" DisplayName="b" />
</users>
"""


@pytest.fixture
def posts_xml():
    return io.BytesIO(POSTS_FIXTURE)


@pytest.fixture
def users_xml():
    return io.BytesIO(USERS_FIXTURE)


def make_thread(qid: int, bodies: list[str], accepted: int, start_id: int | None = None, t0: datetime = T0,
                scores=None, reps=None) -> QuestionThread:
    """Thread whose answers get ids start_id, start_id+1, ... one hour apart."""
    start_id = start_id if start_id is not None else qid * 100
    answers = tuple(
        AnswerRecord(
            id=start_id + i,
            creation_date=t0 + timedelta(hours=i + 1),
            score=scores[i] if scores else 0,
            owner_reputation=reps[i] if reps else 0,
            body_text=body,
            is_accepted=i == accepted,
        )
        for i, body in enumerate(bodies)
    )
    return QuestionThread(qid, t0, start_id + accepted, answers)


def make_corpus(threads: list[QuestionThread], name: str = "fixture", users_loaded: bool = True) -> SiteCorpus:
    return SiteCorpus(name, threads, users_loaded=users_loaded)


# --- acceptance summary: one pass/fail line per criterion -------------------

_acceptance: list[tuple[str, str, float]] = []


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        name = report.nodeid.split("::")[-1]
        outcome = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[report.outcome]
        _acceptance.append((name, outcome, report.duration))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome, duration in _acceptance:
        terminalreporter.write_line(f"{outcome:4}  {name}  ({duration:.2f}s)")
