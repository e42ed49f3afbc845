"""Candidate generation: nine per-user rankings merged with provenance.

Each generator emits at most `cap` active items as a ranked list. The two
content-knn generators each produce four sub-rankings (candidate field
crossed with source field), so a merged list carries up to 15 rank slots
per item. Inactive items are filtered before capping, which keeps every
slot's ranks dense in 1..cap.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from enum import IntEnum
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np
from scipy import sparse

from .dataio import DataFormatError, _read_table, _write_tsv
from .entities import Dataset, POSITIVE_KINDS, WEEK_SECONDS
from .similarity import (
    shared_token_vocab,
    token_csr,
    user_impression_index,
    user_interaction_index,
)

DEFAULT_CAP = 60
DEFAULT_NEIGHBORS = 60


class GeneratorId(IntEnum):
    RECENT_INTERACTIONS = 1
    RECENT_IMPRESSIONS = 2
    SIMILAR_USER_INTERACTIONS = 3
    SIMILAR_USER_IMPRESSIONS = 4
    CONTENT_KNN_INTERACTIONS = 5
    CONTENT_KNN_IMPRESSIONS = 6
    JOBROLES_TAGS = 7
    JOBROLES_TITLE = 8
    GLOBAL_POPULAR = 9


# content-knn sub-rankings: (candidate item field, source item field)
_KNN_VARIANTS = [
    ("tags", "tags"),
    ("title", "title"),
    ("tags", "title"),
    ("title", "tags"),
]

# fixed slot order; column names double as feature names downstream
SLOT_COLUMNS: list[tuple[GeneratorId, str]] = (
    [
        (GeneratorId.RECENT_INTERACTIONS, "recent_interactions"),
        (GeneratorId.RECENT_IMPRESSIONS, "recent_impressions"),
        (GeneratorId.SIMILAR_USER_INTERACTIONS, "similar_user_interactions"),
        (GeneratorId.SIMILAR_USER_IMPRESSIONS, "similar_user_impressions"),
    ]
    + [
        (GeneratorId.CONTENT_KNN_INTERACTIONS, f"content_int_{cf}_{sf}")
        for cf, sf in _KNN_VARIANTS
    ]
    + [
        (GeneratorId.CONTENT_KNN_IMPRESSIONS, f"content_imp_{cf}_{sf}")
        for cf, sf in _KNN_VARIANTS
    ]
    + [
        (GeneratorId.JOBROLES_TAGS, "jobroles_tags"),
        (GeneratorId.JOBROLES_TITLE, "jobroles_title"),
        (GeneratorId.GLOBAL_POPULAR, "global_popular"),
    ]
)

SLOT_NAMES: list[str] = [col for _, col in SLOT_COLUMNS]


def slots_for(generator: GeneratorId) -> list[str]:
    return [col for gen, col in SLOT_COLUMNS if gen == generator]


class CandidateList:
    """Merged candidates of one user: item -> slot -> 1-based rank."""

    def __init__(self, user_id: int) -> None:
        self.user_id = user_id
        self.ranks: dict[int, dict[str, int]] = {}

    def add(self, item_id: int, slot: str, rank: int) -> None:
        self.ranks.setdefault(item_id, {})[slot] = rank

    def items(self) -> list[int]:
        return list(self.ranks)

    def __len__(self) -> int:
        return len(self.ranks)

    def __contains__(self, item_id: int) -> bool:
        return item_id in self.ranks


class CandidateGenerator:
    """All nine generators over one dataset variant.

    Indexes (inverted user/item indexes, token matrices, the popularity
    ranking) are built once in the constructor and never mutated, so
    generate() is safe to call from multiple threads.
    """

    def __init__(
        self,
        dataset: Dataset,
        cap: int = DEFAULT_CAP,
        neighbor_count: int = DEFAULT_NEIGHBORS,
    ) -> None:
        if cap < 1:
            raise ValueError(f"cap must be >= 1, got {cap}")
        self.dataset = dataset
        self.events = dataset.events
        self.cap = cap
        self.neighbor_count = neighbor_count

        self.active_ids = np.array(dataset.active_item_ids(), dtype=np.int64)
        self._active_set = frozenset(int(i) for i in self.active_ids)

        self._int_index = user_interaction_index(self.events)
        self._imp_index = user_impression_index(self.events)

        self._build_token_matrices()
        self._popular: list[int] | None = None
        self._recent_cache: dict[tuple[int, str], list[int]] = {}

    # ------------------------------------------------------------ token side

    def _build_token_matrices(self) -> None:
        """CSR item x token matrices for tags and title over a shared vocab."""
        items = self.dataset.items
        self._all_ids = np.array(sorted(items), dtype=np.int64)
        self._row_of = {int(i): r for r, i in enumerate(self._all_ids)}
        self._vocab = shared_token_vocab(items, (int(i) for i in self._all_ids))
        all_tags = token_csr(items, self._all_ids, "tags", self._vocab)
        all_title = token_csr(items, self._all_ids, "title", self._vocab)
        active_rows = np.array([self._row_of[i] for i in self.active_ids], dtype=np.int64)
        self._field_all = {"tags": all_tags, "title": all_title}
        self._field_active = {
            "tags": all_tags[active_rows] if len(active_rows) else all_tags[:0],
            "title": all_title[active_rows] if len(active_rows) else all_title[:0],
        }

    def _rank_scored(self, scores: np.ndarray, cap: int) -> list[int]:
        """Order active items by (score desc, id asc), keep score >= 1."""
        idx = np.nonzero(scores >= 1)[0]
        if len(idx) == 0:
            return []
        order = np.lexsort((self.active_ids[idx], -scores[idx]))
        return [int(i) for i in self.active_ids[idx[order[:cap]]]]

    def _knn_scores(self, source_items: list[int], cand_field: str, src_field: str) -> np.ndarray:
        rows = [self._row_of[i] for i in source_items if i in self._row_of]
        if not rows or len(self.active_ids) == 0:
            return np.zeros(len(self.active_ids), dtype=np.int64)
        src = self._field_all[src_field][rows]
        overlap = self._field_active[cand_field] @ src.T
        return np.asarray(overlap.max(axis=1).todense()).ravel()

    # ------------------------------------------------------------ generators

    def recent_items(self, user_id: int, source: str) -> list[int]:
        """Active items of the user's log, most recent week first.

        Ordered by (latest event week desc, event count desc, item id asc);
        uncapped, shared by the recency generators and neighbor expansion.
        """
        key = (user_id, source)
        cached = self._recent_cache.get(key)
        if cached is not None:
            return cached
        latest: dict[int, int] = {}
        count: dict[int, int] = {}
        if source == "interactions":
            for ev in self.events.interactions_of(user_id):
                if ev.kind not in POSITIVE_KINDS:
                    continue
                week = ev.timestamp // WEEK_SECONDS
                if week > latest.get(ev.item_id, -1):
                    latest[ev.item_id] = week
                count[ev.item_id] = count.get(ev.item_id, 0) + 1
        elif source == "impressions":
            for im in self.events.impressions_of(user_id):
                if im.week > latest.get(im.item_id, -1):
                    latest[im.item_id] = im.week
                count[im.item_id] = count.get(im.item_id, 0) + 1
        else:
            raise ValueError(f"unknown event source {source!r}")
        ranked = sorted(
            (i for i in latest if i in self._active_set),
            key=lambda i: (-latest[i], -count[i], i),
        )
        self._recent_cache[key] = ranked
        return ranked

    def gen_recent_interactions(self, user_id: int) -> list[int]:
        return self.recent_items(user_id, "interactions")[: self.cap]

    def gen_recent_impressions(self, user_id: int) -> list[int]:
        return self.recent_items(user_id, "impressions")[: self.cap]

    def gen_similar_user_items(self, user_id: int, source: str) -> list[int]:
        index = self._int_index if source == "interactions" else self._imp_index
        neighbors = index.top_k_jaccard(user_id, self.neighbor_count)
        out: list[int] = []
        seen: set[int] = set()
        for nb in neighbors:
            for item in self.recent_items(nb.id, source):
                if item in seen:
                    continue
                seen.add(item)
                out.append(item)
                if len(out) == self.cap:
                    return out
        return out

    def gen_content_knn(self, user_id: int, source: str) -> dict[str, list[int]]:
        """Four sub-rankings keyed by slot column name."""
        if source == "interactions":
            source_items = sorted(self.events.int_items(user_id))
            prefix = "content_int"
        else:
            source_items = sorted(self.events.imp_items(user_id))
            prefix = "content_imp"
        out: dict[str, list[int]] = {}
        for cand_field, src_field in _KNN_VARIANTS:
            col = f"{prefix}_{cand_field}_{src_field}"
            if not source_items:
                out[col] = []
                continue
            scores = self._knn_scores(source_items, cand_field, src_field)
            out[col] = self._rank_scored(scores, self.cap)
        return out

    def gen_jobroles_match(self, user_id: int, field: str) -> list[int]:
        user = self.dataset.users.get(user_id)
        if user is None or not user.jobroles:
            return []
        cols = [self._vocab[t] for t in user.jobroles if t in self._vocab]
        if not cols or len(self.active_ids) == 0:
            return []
        qvec = sparse.csr_matrix(
            (np.ones(len(cols), dtype=np.int32), ([0] * len(cols), cols)),
            shape=(1, self._field_active[field].shape[1]),
        )
        scores = np.asarray((self._field_active[field] @ qvec.T).todense()).ravel()
        return self._rank_scored(scores, self.cap)

    def gen_popular(self) -> list[int]:
        if self._popular is None:
            counts: dict[int, int] = {}
            for ev in self.events.interactions:
                if ev.kind in POSITIVE_KINDS:
                    counts[ev.item_id] = counts.get(ev.item_id, 0) + 1
            ranked = sorted(
                (i for i in counts if i in self._active_set),
                key=lambda i: (-counts[i], i),
            )
            self._popular = ranked[: self.cap]
        return self._popular

    # --------------------------------------------------------------- merging

    def generate(self, user_id: int) -> CandidateList:
        merged = CandidateList(user_id)

        def put(slot: str, ranking: list[int]) -> None:
            for rank, item in enumerate(ranking, start=1):
                merged.add(item, slot, rank)

        put("recent_interactions", self.gen_recent_interactions(user_id))
        put("recent_impressions", self.gen_recent_impressions(user_id))
        put("similar_user_interactions", self.gen_similar_user_items(user_id, "interactions"))
        put("similar_user_impressions", self.gen_similar_user_items(user_id, "impressions"))
        for col, ranking in self.gen_content_knn(user_id, "interactions").items():
            put(col, ranking)
        for col, ranking in self.gen_content_knn(user_id, "impressions").items():
            put(col, ranking)
        put("jobroles_tags", self.gen_jobroles_match(user_id, "tags"))
        put("jobroles_title", self.gen_jobroles_match(user_id, "title"))
        put("global_popular", self.gen_popular())
        return merged

    def generate_all(self, user_ids: Iterable[int], threads: int = 1) -> dict[int, CandidateList]:
        ids = list(user_ids)
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                lists = list(pool.map(self.generate, ids))
        else:
            lists = [self.generate(u) for u in ids]
        return {u: cl for u, cl in zip(ids, lists)}


def coverage(candidates: Mapping[int, CandidateList], ground_truth: Mapping[int, set[int]]) -> float:
    """Fraction of held-out positives present in the merged candidate lists."""
    total = sum(len(items) for items in ground_truth.values())
    if total == 0:
        raise ValueError("ground truth is empty, coverage is undefined")
    hits = 0
    for u, items in ground_truth.items():
        cl = candidates.get(u)
        if cl is None:
            continue
        hits += sum(1 for i in items if i in cl)
    return hits / total


# ------------------------------------------------------------------- file io


def save_candidates(
    candidates: Mapping[int, CandidateList], path: str | Path, provenance=None
) -> None:
    header = ["user_id", "item_id"] + SLOT_NAMES

    def rows():
        for u, cl in candidates.items():
            for item, ranks in cl.ranks.items():
                yield [str(u), str(item)] + [
                    str(ranks[col]) if col in ranks else "" for col in SLOT_NAMES
                ]

    _write_tsv(Path(path), header, rows(), provenance)


def load_candidates(path: str | Path) -> dict[int, CandidateList]:
    path = Path(path)
    out: dict[int, CandidateList] = {}
    for lineno, cols, f in _read_table(path, ["user_id", "item_id"] + SLOT_NAMES):
        try:
            uid = int(f[cols["user_id"]])
            item = int(f[cols["item_id"]])
        except ValueError:
            raise DataFormatError(f"{path}:{lineno}: non-integer user/item id") from None
        cl = out.get(uid)
        if cl is None:
            cl = out[uid] = CandidateList(uid)
        for col in SLOT_NAMES:
            raw = f[cols[col]]
            if raw != "":
                try:
                    cl.add(item, col, int(raw))
                except ValueError:
                    raise DataFormatError(f"{path}:{lineno}: bad rank {raw!r} in {col}") from None
        if item not in cl.ranks:
            cl.ranks[item] = {}
    return out
