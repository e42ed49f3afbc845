"""Leaderboard-style scoring of ranked predictions.

A user's score combines precision at cutoffs 2, 4, 6 and 20, a success
flag (any hit in the 30 slots), and a recall term:

    user_score = 20 * (p@2 + p@4 + success + recall) + 10 * (p@6 + p@20)

The recall denominator has two modes: "corrected" divides the hit count
by max(1, |truth|) (a true recall), "literal" divides by min(1, |truth|),
reproducing the historical formula this pipeline is scored against.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .dataio import _write_tsv
from .entities import GroundTruth

RECALL_MODES = ("corrected", "literal")
MAX_ITEMS = 30


def _check_prediction(items: Sequence[int]) -> None:
    if len(items) > MAX_ITEMS:
        raise ValueError(f"prediction has {len(items)} items, limit is {MAX_ITEMS}")
    if len(set(items)) != len(items):
        raise ValueError("prediction contains duplicate items")


def precision_at_k(items: Sequence[int], truth: set[int], k: int) -> float:
    """Fraction of the first k ranks filled with true items."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    hits = sum(1 for i in items[:k] if i in truth)
    return hits / k


def recall_term(items: Sequence[int], truth: set[int], mode: str = "corrected") -> float:
    if mode not in RECALL_MODES:
        raise ValueError(f"recall mode must be one of {RECALL_MODES}, got {mode!r}")
    if not truth:
        raise ValueError("recall is undefined for an empty truth set")
    hits = sum(1 for i in items if i in truth)
    denom = max(1, len(truth)) if mode == "corrected" else min(1, len(truth))
    return hits / denom


def user_success(items: Sequence[int], truth: set[int]) -> int:
    return 1 if any(i in truth for i in items) else 0


@dataclass(frozen=True, slots=True)
class UserScore:
    user_id: int
    p2: float
    p4: float
    p6: float
    p20: float
    success: int
    recall: float
    score: float


@dataclass
class ScoreReport:
    total: float
    recall_mode: str
    users: list[UserScore]

    def save(self, path: str | Path, provenance=None) -> None:
        header = ["user_id", "p_at_2", "p_at_4", "p_at_6", "p_at_20", "success", "recall", "score"]
        rows = (
            [
                str(u.user_id),
                repr(u.p2),
                repr(u.p4),
                repr(u.p6),
                repr(u.p20),
                str(u.success),
                repr(u.recall),
                repr(u.score),
            ]
            for u in self.users
        )
        _write_tsv(Path(path), header, rows, provenance)


def score_user(items: Sequence[int], truth: set[int], mode: str = "corrected") -> tuple[float, ...]:
    """(p2, p4, p6, p20, success, recall, score) for one user."""
    _check_prediction(items)
    p2 = precision_at_k(items, truth, 2)
    p4 = precision_at_k(items, truth, 4)
    p6 = precision_at_k(items, truth, 6)
    p20 = precision_at_k(items, truth, 20)
    us = user_success(items, truth)
    r = recall_term(items, truth, mode)
    score = 20.0 * (p2 + p4 + us + r) + 10.0 * (p6 + p20)
    return p2, p4, p6, p20, us, r, score


def total_score(
    predictions: Mapping[int, Sequence[int]],
    ground_truth: GroundTruth,
    mode: str = "corrected",
    sample_fraction: float | None = None,
    seed: int = 0,
) -> ScoreReport:
    """Sum of user scores over ground-truth users, ascending user id.

    Users without a ground-truth entry contribute nothing; a missing
    prediction counts as an empty list. sample_fraction scores a seeded
    subsample of the ground-truth users instead of all of them.
    """
    if mode not in RECALL_MODES:
        raise ValueError(f"recall mode must be one of {RECALL_MODES}, got {mode!r}")
    users = sorted(ground_truth)
    if sample_fraction is not None:
        if not 0.0 < sample_fraction <= 1.0:
            raise ValueError(f"sample_fraction must be in (0, 1], got {sample_fraction}")
        rng = np.random.default_rng(seed)
        keep = rng.choice(len(users), size=max(1, round(sample_fraction * len(users))), replace=False)
        users = [users[j] for j in sorted(keep)]
    for u, items in predictions.items():
        _check_prediction(list(items))
    scores: list[UserScore] = []
    total = 0.0
    for u in users:
        items = list(predictions.get(u, ()))
        p2, p4, p6, p20, us, r, s = score_user(items, ground_truth[u], mode)
        scores.append(UserScore(u, p2, p4, p6, p20, int(us), r, s))
        total += s
    return ScoreReport(total=total, recall_mode=mode, users=scores)
