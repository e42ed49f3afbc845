"""Temporal train/holdout splitting of a dataset."""

from __future__ import annotations

import logging
from dataclasses import dataclass

from .entities import (
    WEEK_SECONDS,
    Dataset,
    EventLog,
    GroundTruth,
    Impression,
    Interaction,
    POSITIVE_KINDS,
)

log = logging.getLogger(__name__)


@dataclass
class Holdout:
    interactions: list[Interaction]
    impressions: list[Impression]
    boundary_timestamp: int
    boundary_week: int


def _span_weeks(dataset: Dataset) -> int:
    """Distinct week buckets covered, the larger of both event sides."""
    ev = dataset.events
    int_weeks = {(ev.max_timestamp - e.timestamp) // WEEK_SECONDS for e in ev.interactions}
    imp_weeks = {im.week for im in ev.impressions}
    return max(len(int_weeks), len(imp_weeks))


def temporal_split(dataset: Dataset, holdout_weeks: int = 1) -> tuple[Dataset, Holdout]:
    """Cut the last `holdout_weeks` weeks of events into a holdout.

    Interactions are cut at max_timestamp - holdout_weeks * WEEK_SECONDS
    (train keeps strictly-earlier events). Impressions only carry a week
    index, so the last `holdout_weeks` observed week indexes go to the
    holdout. holdout_weeks=0 returns the full dataset and an empty holdout.
    """
    if holdout_weeks < 0:
        raise ValueError(f"holdout_weeks must be >= 0, got {holdout_weeks}")
    ev = dataset.events
    if holdout_weeks == 0:
        train = Dataset(
            users=dataset.users,
            items=dataset.items,
            events=EventLog(ev.interactions, ev.impressions),
            target_users=dataset.target_users,
        )
        return train, Holdout([], [], ev.max_timestamp + 1, ev.max_impression_week + 1)

    if _span_weeks(dataset) < 2:
        raise ValueError("dataset spans a single week, nothing left to train on after a holdout")

    boundary_ts = ev.max_timestamp - holdout_weeks * WEEK_SECONDS
    boundary_week = ev.max_impression_week - holdout_weeks

    train_int = [e for e in ev.interactions if e.timestamp < boundary_ts]
    hold_int = [e for e in ev.interactions if e.timestamp >= boundary_ts]
    train_imp = [im for im in ev.impressions if im.week <= boundary_week]
    hold_imp = [im for im in ev.impressions if im.week > boundary_week]

    if not train_int:
        log.warning("temporal_split: no interactions before the holdout boundary, train side is empty")

    train = Dataset(
        users=dataset.users,
        items=dataset.items,
        events=EventLog(train_int, train_imp),
        target_users=dataset.target_users,
    )
    return train, Holdout(hold_int, hold_imp, boundary_ts, boundary_week)


def build_ground_truth(holdout: Holdout, target_users: list[int]) -> GroundTruth:
    """Positively interacted holdout items per target user; empty sets omitted."""
    targets = set(target_users)
    truth: GroundTruth = {}
    for e in holdout.interactions:
        if e.kind in POSITIVE_KINDS and e.user_id in targets:
            truth.setdefault(e.user_id, set()).add(e.item_id)
    return truth
