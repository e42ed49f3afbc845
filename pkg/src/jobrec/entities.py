"""Core entity types: users, items, interaction/impression logs.

All ids are integers. Multi-valued fields (tags, title terms, job roles)
are frozensets of integer token ids. Missing categorical attributes are
stored as 0, missing coordinates/created_at as None.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

WEEK_SECONDS = 7 * 24 * 3600
DAY_SECONDS = 24 * 3600


class InteractionKind(IntEnum):
    CLICK = 1
    BOOKMARK = 2
    REPLY = 3
    DELETE = 4


# kinds that count as a positive signal; DELETE is the negative one
POSITIVE_KINDS = frozenset(
    {InteractionKind.CLICK, InteractionKind.BOOKMARK, InteractionKind.REPLY}
)


@dataclass(frozen=True, slots=True)
class User:
    id: int
    jobroles: frozenset[int] = frozenset()
    career_level: int = 0
    discipline_id: int = 0
    industry_id: int = 0
    country: int = 0
    region: int = 0
    experience_n_entries_class: int = 0
    experience_years_experience: int = 0
    experience_years_in_current: int = 0
    edu_degree: int = 0
    edu_fieldofstudies: frozenset[int] = frozenset()


@dataclass(frozen=True, slots=True)
class Item:
    id: int
    title: frozenset[int] = frozenset()
    tags: frozenset[int] = frozenset()
    career_level: int = 0
    discipline_id: int = 0
    industry_id: int = 0
    country: int = 0
    region: int = 0
    employment: int = 0
    latitude: float | None = None
    longitude: float | None = None
    created_at: int | None = None
    active_during_test: bool = False

    def __post_init__(self) -> None:
        if (self.latitude is None) != (self.longitude is None):
            raise ValueError(
                f"item {self.id}: latitude and longitude must be both present or both missing"
            )


@dataclass(frozen=True, slots=True)
class Interaction:
    user_id: int
    item_id: int
    kind: InteractionKind
    timestamp: int

    @property
    def week(self) -> int:
        """Epoch week bucket of the event."""
        return self.timestamp // WEEK_SECONDS


@dataclass(frozen=True, slots=True)
class Impression:
    """One shown item. A raw impressions row expands to one of these per item."""

    user_id: int
    item_id: int
    week: int


_EMPTY: frozenset[int] = frozenset()


class EventLog:
    """Interaction and impression logs plus per-user / per-item adjacency.

    Per-user and per-item lists are sorted by time (stable, so ties keep
    input order). Derived id sets (positive items of a user, users of an
    item, ...) are precomputed once; lookups for unknown ids return empty.
    """

    def __init__(self, interactions, impressions) -> None:
        self.interactions: list[Interaction] = list(interactions)
        self.impressions: list[Impression] = list(impressions)

        self.by_user_interactions: dict[int, list[Interaction]] = {}
        self.by_item_interactions: dict[int, list[Interaction]] = {}
        for ev in self.interactions:
            self.by_user_interactions.setdefault(ev.user_id, []).append(ev)
            self.by_item_interactions.setdefault(ev.item_id, []).append(ev)
        for lst in self.by_user_interactions.values():
            lst.sort(key=lambda e: e.timestamp)
        for lst in self.by_item_interactions.values():
            lst.sort(key=lambda e: e.timestamp)

        self.by_user_impressions: dict[int, list[Impression]] = {}
        self.by_item_impressions: dict[int, list[Impression]] = {}
        for im in self.impressions:
            self.by_user_impressions.setdefault(im.user_id, []).append(im)
            self.by_item_impressions.setdefault(im.item_id, []).append(im)
        for lst in self.by_user_impressions.values():
            lst.sort(key=lambda e: e.week)
        for lst in self.by_item_impressions.values():
            lst.sort(key=lambda e: e.week)

        self.max_timestamp: int = max((e.timestamp for e in self.interactions), default=0)
        self.max_impression_week: int = max((im.week for im in self.impressions), default=0)

        self._int_items: dict[int, frozenset[int]] = {}
        self._del_items: dict[int, frozenset[int]] = {}
        for u, evs in self.by_user_interactions.items():
            pos = frozenset(e.item_id for e in evs if e.kind in POSITIVE_KINDS)
            neg = frozenset(e.item_id for e in evs if e.kind == InteractionKind.DELETE)
            if pos:
                self._int_items[u] = pos
            if neg:
                self._del_items[u] = neg
        self._imp_items: dict[int, frozenset[int]] = {
            u: frozenset(im.item_id for im in lst)
            for u, lst in self.by_user_impressions.items()
        }
        self._int_users: dict[int, frozenset[int]] = {}
        for i, evs in self.by_item_interactions.items():
            pos = frozenset(e.user_id for e in evs if e.kind in POSITIVE_KINDS)
            if pos:
                self._int_users[i] = pos
        self._imp_users: dict[int, frozenset[int]] = {
            i: frozenset(im.user_id for im in lst)
            for i, lst in self.by_item_impressions.items()
        }

    def interactions_of(self, user_id: int) -> list[Interaction]:
        return self.by_user_interactions.get(user_id, [])

    def impressions_of(self, user_id: int) -> list[Impression]:
        return self.by_user_impressions.get(user_id, [])

    def item_interactions(self, item_id: int) -> list[Interaction]:
        return self.by_item_interactions.get(item_id, [])

    def item_impressions(self, item_id: int) -> list[Impression]:
        return self.by_item_impressions.get(item_id, [])

    def int_items(self, user_id: int) -> frozenset[int]:
        """Items the user interacted with positively (click/bookmark/reply)."""
        return self._int_items.get(user_id, _EMPTY)

    def del_items(self, user_id: int) -> frozenset[int]:
        return self._del_items.get(user_id, _EMPTY)

    def imp_items(self, user_id: int) -> frozenset[int]:
        return self._imp_items.get(user_id, _EMPTY)

    def int_users(self, item_id: int) -> frozenset[int]:
        """Users who interacted positively with the item."""
        return self._int_users.get(item_id, _EMPTY)

    def imp_users(self, item_id: int) -> frozenset[int]:
        return self._imp_users.get(item_id, _EMPTY)

    def users_with_positives(self) -> list[int]:
        return sorted(self._int_items)


@dataclass
class Dataset:
    """A full challenge-format dataset: entity tables plus the event log."""

    users: dict[int, User]
    items: dict[int, Item]
    events: EventLog
    target_users: list[int]
    row_counts: dict[str, int] = field(default_factory=dict)

    @property
    def interactions(self) -> list[Interaction]:
        return self.events.interactions

    @property
    def impressions(self) -> list[Impression]:
        return self.events.impressions

    def active_item_ids(self) -> list[int]:
        return sorted(i for i, it in self.items.items() if it.active_during_test)


# ground truth: target user -> non-empty set of held-out positively
# interacted items; users without positives are omitted entirely
GroundTruth = dict[int, set[int]]
