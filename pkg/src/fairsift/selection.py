"""Group-balanced greedy selection (post-hoc bias mitigation).

Candidates are split into per-group score-sorted pools plus a neutral pool.
Each round compares the balanced tuple (the best remaining candidate of every
group) against the best remaining neutral candidate by mean score: the tuple
is taken unless the neutral candidate is strictly better. Groups that run dry
drop out of the tuple; when every group is empty the bag is topped up from
the neutral pool, so the bag is only short when the corpus itself is.

Neutral picks are consumed in pairs (the top two neutrals) while capacity
allows. A neutral pair occupies the same two slots a balanced group pair
would, so with ample pools the bag bias lands exactly on its floor:
zero for even k, 1/k for odd k. A lone trailing neutral (odd count, e.g. the
pool ran out mid-pair) is completed with the next available neutral before
any unpaired group member is admitted.

When a whole tuple no longer fits in the remaining capacity, single slots are
filled from the group pools by the odd-pick policy: the highest-scored pool
top (deterministic default) or a seeded uniform group choice.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .attributes import PredictionSet
from .corpus import ImageRecord, QueryRecord
from .errors import EmptyCandidateSet, MissingPrediction
from .rng import derive_rng
from .similarity import RetrievalBag, ScoredImage, score_images, sorted_order


class OddPickPolicy(enum.Enum):
    BEST_SCORE = "best-score"
    RANDOM_GROUP = "random-group"


@dataclass(frozen=True)
class SelectionConfig:
    k: int
    fair_probability: float = 1.0
    seed: int = 0
    odd_pick_policy: OddPickPolicy = OddPickPolicy.BEST_SCORE

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not 0.0 <= self.fair_probability <= 1.0:
            raise ValueError("fair_probability must be in [0, 1]")


class _GroupedPool:
    """Score-sorted candidate lists per group key (None = neutral), with cursors."""

    def __init__(self, query: QueryRecord, images: Sequence[ImageRecord], predictions: PredictionSet):
        if not images:
            raise EmptyCandidateSet(f"no candidates for query {query.id!r}")
        scores = score_images(query, images)
        order = sorted_order([im.id for im in images], scores)
        self._lists: dict[int | None, list[ScoredImage]] = {}
        for i in order:
            image = images[int(i)]
            pred = predictions.get(image.id)
            if pred is None:
                raise MissingPrediction(image.id)
            self._lists.setdefault(pred.label.group, []).append(
                ScoredImage(image.id, float(scores[int(i)])))
        self._pos: dict[int | None, int] = {key: 0 for key in self._lists}
        self.neutral_taken = 0

    def top(self, key: int | None) -> ScoredImage | None:
        items = self._lists.get(key)
        if items is None:
            return None
        pos = self._pos[key]
        return items[pos] if pos < len(items) else None

    def pop(self, key: int | None) -> ScoredImage:
        item = self.top(key)
        assert item is not None
        self._pos[key] += 1
        if key is None:
            self.neutral_taken += 1
        return item

    def group_tops(self) -> list[tuple[int, ScoredImage]]:
        tops = []
        for key in sorted(k for k in self._lists if k is not None):
            item = self.top(key)
            if item is not None:
                tops.append((key, item))
        return tops

    def pop_global_top(self) -> ScoredImage | None:
        best_key: int | None = None
        best: ScoredImage | None = None
        for key in self._lists:
            item = self.top(key)
            if item is None:
                continue
            if best is None or (-item.score, item.image_id) < (-best.score, best.image_id):
                best, best_key = item, key
        if best is None:
            return None
        return self.pop(best_key)


def _fair_step(
    pool: _GroupedPool,
    remaining: int,
    policy: OddPickPolicy,
    rng: np.random.Generator,
) -> list[ScoredImage]:
    """One balanced-selection round; returns at most ``remaining`` items."""
    tops = pool.group_tops()
    neutral_top = pool.top(None)
    if not tops:
        return [pool.pop(None)] if neutral_top is not None else []
    tuple_mean = float(np.mean([item.score for _, item in tops]))
    if remaining >= 2 and neutral_top is not None and neutral_top.score > tuple_mean:
        taken = [pool.pop(None)]
        if pool.top(None) is not None:  # pair the neutral to keep the balance slots intact
            taken.append(pool.pop(None))
        return taken
    if len(tops) <= remaining:
        return [pool.pop(key) for key, _ in tops]
    # Tuple no longer fits: fill one slot.
    if pool.neutral_taken % 2 == 1 and neutral_top is not None:
        return [pool.pop(None)]
    if policy is OddPickPolicy.BEST_SCORE:
        key = min(tops, key=lambda kt: (-kt[1].score, kt[1].image_id))[0]
    else:
        key = tops[int(rng.integers(len(tops)))][0]
    return [pool.pop(key)]


def _finalize(query_id: str, selected: list[ScoredImage], k: int) -> RetrievalBag:
    items = tuple(sorted(selected, key=lambda s: (-s.score, s.image_id)))
    return RetrievalBag(query_id, items, k)


def pbm_select(
    query: QueryRecord,
    images: Sequence[ImageRecord],
    predictions: PredictionSet,
    config: SelectionConfig,
) -> RetrievalBag:
    """Deterministic group-balanced selection (fair step every round)."""
    pool = _GroupedPool(query, images, predictions)
    rng_pick = derive_rng(config.seed, query.id, "pick")
    selected: list[ScoredImage] = []
    while len(selected) < config.k:
        step = _fair_step(pool, config.k - len(selected), config.odd_pick_policy, rng_pick)
        if not step:
            break
        selected.extend(step)
    return _finalize(query.id, selected, config.k)


def pbm_select_tradeoff(
    query: QueryRecord,
    images: Sequence[ImageRecord],
    predictions: PredictionSet,
    config: SelectionConfig,
) -> RetrievalBag:
    """Stochastic mix: each round is a fair step with probability
    ``fair_probability``, otherwise the single best-scored remaining candidate.

    At fair_probability 1 this equals pbm_select, at 0 it equals rank_top_k,
    for every seed; the gate and group-pick substreams are kept separate to
    preserve those identities exactly.
    """
    pool = _GroupedPool(query, images, predictions)
    rng_gate = derive_rng(config.seed, query.id, "gate")
    rng_pick = derive_rng(config.seed, query.id, "pick")
    selected: list[ScoredImage] = []
    while len(selected) < config.k:
        if rng_gate.random() < config.fair_probability:
            step = _fair_step(pool, config.k - len(selected), config.odd_pick_policy, rng_pick)
        else:
            top = pool.pop_global_top()
            step = [top] if top is not None else []
        if not step:
            break
        selected.extend(step)
    return _finalize(query.id, selected, config.k)


def random_select(
    query: QueryRecord,
    images: Sequence[ImageRecord],
    k: int,
    seed: int,
    restrict_to_relevant: bool = False,
) -> RetrievalBag:
    """Uniform draw of k candidates with replacement; scores attached for reporting."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if restrict_to_relevant:
        candidates = [im for im in images if im.id in query.relevant_ids]
    else:
        candidates = list(images)
    if not candidates:
        raise EmptyCandidateSet(f"no candidates for query {query.id!r}")
    scores = score_images(query, candidates)
    rng = derive_rng(seed, query.id, "random")
    drawn = rng.integers(0, len(candidates), size=k)
    selected = [ScoredImage(candidates[int(i)].id, float(scores[int(i)])) for i in drawn]
    return _finalize(query.id, selected, k)
