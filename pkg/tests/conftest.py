"""Shared fixture builders.

Most suites construct tiny datasets by hand; these helpers keep that
terse. Each builder fills every non-essential field with a neutral
default so a test only spells out what it is actually exercising.
"""

from __future__ import annotations

from jobrec.entities import (
    Dataset,
    EventLog,
    Impression,
    Interaction,
    InteractionKind,
    Item,
    User,
)

KIND = {
    "click": InteractionKind.CLICK,
    "bookmark": InteractionKind.BOOKMARK,
    "reply": InteractionKind.REPLY,
    "delete": InteractionKind.DELETE,
}


def make_user(uid, **kw):
    kw.setdefault("jobroles", frozenset())
    return User(id=uid, **kw)


def make_item(iid, active=True, **kw):
    kw.setdefault("tags", frozenset())
    kw.setdefault("title", frozenset())
    return Item(id=iid, active_during_test=active, **kw)


def ev(u, i, kind="click", ts=0):
    return Interaction(user_id=u, item_id=i, kind=KIND[kind], timestamp=ts)


def imp(u, i, week):
    return Impression(user_id=u, item_id=i, week=week)


def make_dataset(users, items, interactions=(), impressions=(), targets=None):
    """Dataset from entity lists; targets default to every user."""
    users = {u.id: u for u in users}
    items = {i.id: i for i in items}
    log = EventLog(interactions, impressions)
    if targets is None:
        targets = sorted(users)
    return Dataset(users=users, items=items, events=log, target_users=list(targets))


# ---------------------------------------------------------------------------
# acceptance reporting: each acceptance test records one verdict here and the
# terminal summary prints one PASS/FAIL line per criterion.

ACCEPTANCE_RESULTS: dict[int, tuple[str, bool, str]] = {}


def record_acceptance(num, name, ok, detail=""):
    ACCEPTANCE_RESULTS[num] = (name, bool(ok), detail)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance summary")
    for num in sorted(ACCEPTANCE_RESULTS):
        name, ok, detail = ACCEPTANCE_RESULTS[num]
        line = f"criterion {num} ({name}): {'PASS' if ok else 'FAIL'}"
        if detail:
            line += f" [{detail}]"
        terminalreporter.write_line(line)
