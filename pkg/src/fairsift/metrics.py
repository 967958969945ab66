"""Evaluation metrics for retrieval bags.

Bias metrics read group membership only; the bag's configured k is the
denominator even when a bag is short, so missing slots contribute zero.
Recall is micro-averaged over queries that have a non-empty relevant set.
Mean average precision sums precision at every rank 1..k and divides by k.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import IO, Mapping, NamedTuple, Sequence

from .corpus import AttributeLabel, QueryRecord
from .errors import EmptyInput, MissingLabel, NoRelevantImages
from .similarity import RetrievalBag


def _signed_sum(bag: RetrievalBag, labels: Mapping[str, AttributeLabel]) -> int:
    total = 0
    for item in bag.items:
        label = labels.get(item.image_id)
        if label is None:
            raise MissingLabel(item.image_id)
        total += label.signed_weight
    return total


def bag_bias(bag: RetrievalBag, labels: Mapping[str, AttributeLabel]) -> float:
    """Normalized absolute group-count difference |sum g| / k, neutral weighing 0."""
    return abs(_signed_sum(bag, labels)) / bag.k


def signed_bag_bias(bag: RetrievalBag, labels: Mapping[str, AttributeLabel]) -> float:
    return _signed_sum(bag, labels) / bag.k


def abs_bias_at_k(bags: Sequence[RetrievalBag], labels: Mapping[str, AttributeLabel]) -> float:
    if not bags:
        raise EmptyInput("no bags to evaluate")
    return sum(bag_bias(bag, labels) for bag in bags) / len(bags)


def bias_at_k(bags: Sequence[RetrievalBag], labels: Mapping[str, AttributeLabel]) -> float:
    """Signed variant; opposite-leaning queries cancel, unlike abs_bias_at_k."""
    if not bags:
        raise EmptyInput("no bags to evaluate")
    return sum(signed_bag_bias(bag, labels) for bag in bags) / len(bags)


def _relevant_index(queries: Sequence[QueryRecord]) -> dict[str, frozenset[str]]:
    return {q.id: q.relevant_ids for q in queries}


def recall_at_k(bags: Sequence[RetrievalBag], queries: Sequence[QueryRecord]) -> float:
    """Micro-averaged percentage of relevant images retrieved.

    Queries with an empty relevant set are excluded from numerator and
    denominator.
    """
    if not bags:
        raise EmptyInput("no bags to evaluate")
    relevant = _relevant_index(queries)
    hits = 0
    total = 0
    for bag in bags:
        rel = relevant.get(bag.query_id, frozenset())
        if not rel:
            continue
        hits += len(set(bag.ids()) & rel)
        total += len(rel)
    if total == 0:
        raise NoRelevantImages("every query has an empty relevant set")
    return 100.0 * hits / total


def average_precision_at_k(bag: RetrievalBag, relevant: frozenset[str]) -> float:
    """(1/k) * sum over ranks r=1..k of |top-r intersect relevant| / r, as a percentage."""
    hits = 0
    seen: set[str] = set()
    acc = 0.0
    for rank in range(1, bag.k + 1):
        if rank <= len(bag.items):
            image_id = bag.items[rank - 1].image_id
            if image_id in relevant and image_id not in seen:
                hits += 1
            seen.add(image_id)
        acc += hits / rank
    return 100.0 * acc / bag.k


def map_at_k(bags: Sequence[RetrievalBag], queries: Sequence[QueryRecord]) -> float:
    if not bags:
        raise EmptyInput("no bags to evaluate")
    relevant = _relevant_index(queries)
    return sum(
        average_precision_at_k(bag, relevant.get(bag.query_id, frozenset())) for bag in bags
    ) / len(bags)


class PerQueryMetrics(NamedTuple):
    bag_bias: float
    signed_bias: float
    recall_hits: int
    relevant_count: int
    avg_prec: float


class AggregateMetrics(NamedTuple):
    abs_bias_at_k: float
    bias_at_k: float
    recall_at_k_percent: float
    map_at_k_percent: float


@dataclass(frozen=True)
class EvaluationReport:
    k: int
    method: str
    per_query: dict[str, PerQueryMetrics]
    aggregate: AggregateMetrics
    seed: int | None = None

    def to_text(self) -> str:
        lines = [
            "# fairsift evaluation report",
            f"method: {self.method}",
            f"k: {self.k}",
            f"seed: {'-' if self.seed is None else self.seed}",
            f"queries: {len(self.per_query)}",
            "",
            f"abs_bias_at_k:        {self.aggregate.abs_bias_at_k:.6f}",
            f"bias_at_k:            {self.aggregate.bias_at_k:+.6f}",
            f"recall_at_k_percent:  {self.aggregate.recall_at_k_percent:.4f}",
            f"map_at_k_percent:     {self.aggregate.map_at_k_percent:.4f}",
            "",
            f"{'query_id':<24}{'bag_bias':>10}{'signed':>10}{'hits':>7}{'relevant':>10}{'avg_prec':>10}",
        ]
        for query_id in sorted(self.per_query):
            row = self.per_query[query_id]
            lines.append(
                f"{query_id:<24}{row.bag_bias:>10.4f}{row.signed_bias:>+10.4f}"
                f"{row.recall_hits:>7d}{row.relevant_count:>10d}{row.avg_prec:>10.4f}")
        return "\n".join(lines) + "\n"

    def write_csv(self, fh: IO) -> None:
        writer = csv.writer(fh)
        writer.writerow(["query_id", "bag_bias", "signed_bias", "recall_hits",
                         "relevant_count", "avg_prec_percent"])
        for query_id in sorted(self.per_query):
            row = self.per_query[query_id]
            writer.writerow([query_id, repr(row.bag_bias), repr(row.signed_bias),
                             row.recall_hits, row.relevant_count, repr(row.avg_prec)])


def build_report(
    bags: Sequence[RetrievalBag],
    queries: Sequence[QueryRecord],
    labels: Mapping[str, AttributeLabel],
    method: str,
    seed: int | None = None,
) -> EvaluationReport:
    if not bags:
        raise EmptyInput("no bags to evaluate")
    relevant = _relevant_index(queries)
    per_query: dict[str, PerQueryMetrics] = {}
    for bag in bags:
        rel = relevant.get(bag.query_id, frozenset())
        per_query[bag.query_id] = PerQueryMetrics(
            bag_bias=bag_bias(bag, labels),
            signed_bias=signed_bag_bias(bag, labels),
            recall_hits=len(set(bag.ids()) & rel),
            relevant_count=len(rel),
            avg_prec=average_precision_at_k(bag, rel),
        )
    try:
        recall = recall_at_k(bags, queries)
    except NoRelevantImages:
        recall = float("nan")
    aggregate = AggregateMetrics(
        abs_bias_at_k=abs_bias_at_k(bags, labels),
        bias_at_k=bias_at_k(bags, labels),
        recall_at_k_percent=recall,
        map_at_k_percent=map_at_k(bags, queries),
    )
    return EvaluationReport(bags[0].k, method, per_query, aggregate, seed)
