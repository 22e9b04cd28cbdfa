"""Ranking metrics: reconstruction MAP, link-prediction MAP, binary link AP, HitRate@k.

Scores are raw inner products.  Ties are always broken by ascending node id
(or ascending ``(i, j)`` pair for the binary protocol).
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .graph import EdgeSplit, WeightedGraph

_QUERY_BATCH = 256


class EvaluationError(ValueError):
    """Raised when a protocol has nothing to measure."""


@dataclass
class EvalReport:
    metric_name: str
    value: float
    per_query: list[tuple[str, float]]
    config_echo: dict = field(default_factory=dict)

    @property
    def included(self) -> int:
        return len(self.per_query)


def score(emb: np.ndarray, i: int, j: int) -> float:
    return float(emb[i] @ emb[j])


def _order(scores: np.ndarray, candidates: np.ndarray) -> np.ndarray:
    # descending score, then ascending id
    return candidates[np.lexsort((candidates, -scores[candidates]))]


def rank_candidates(emb: np.ndarray, query: int, exclusions: Iterable[int] = ()) -> np.ndarray:
    """All nodes except ``query`` and ``exclusions`` by descending score."""
    scores = emb @ emb[query]
    keep = np.ones(emb.shape[0], dtype=bool)
    keep[query] = False
    excl = np.fromiter(exclusions, dtype=np.int64)
    keep[excl] = False
    return _order(scores, np.flatnonzero(keep))


def average_precision(ranked: Sequence, relevant: Iterable) -> float:
    """Mean of precision@r over the ranks ``r`` holding a relevant item.

    Returns 0 when no relevant item appears in ``ranked``.
    """
    relevant = set(relevant) if not isinstance(relevant, (set, frozenset)) else relevant
    ranked = np.asarray(ranked)
    if ranked.size == 0 or not relevant:
        return 0.0
    if ranked.dtype == object or ranked.ndim != 1:
        hits = np.fromiter((x in relevant for x in ranked.tolist()), dtype=bool, count=len(ranked))
    else:
        hits = np.isin(ranked, np.fromiter(relevant, dtype=ranked.dtype))
    positions = np.flatnonzero(hits) + 1
    if positions.size == 0:
        return 0.0
    return float(np.mean(np.arange(1, positions.size + 1) / positions))


def _sample_queries(n: int, sample_size: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(n, size=min(sample_size, n), replace=False))


def _map_over_queries(emb, queries, relevant_of, exclusions_of):
    per_query = []
    for start in range(0, len(queries), _QUERY_BATCH):
        batch = queries[start:start + _QUERY_BATCH]
        block = emb[batch] @ emb.T
        for row, q in zip(block, batch):
            q = int(q)
            keep = np.ones(emb.shape[0], dtype=bool)
            keep[q] = False
            keep[exclusions_of(q)] = False
            ranked = _order(row, np.flatnonzero(keep))
            per_query.append((q, average_precision(ranked, relevant_of(q))))
    return per_query


def _mean(per_query) -> float:
    return float(np.mean([s for _, s in per_query]))


def _check_shape(graph: WeightedGraph, emb: np.ndarray) -> None:
    if emb.ndim != 2 or emb.shape[0] != graph.node_count:
        raise ValueError(f"embedding shape {emb.shape} does not match {graph.node_count} nodes")


def map_reconstruction(
    graph: WeightedGraph, emb: np.ndarray, sample_size: int = 1024, seed: int = 0
) -> EvalReport:
    """MAP of recovering each sampled node's neighbors from the full ranking.

    Zero-degree nodes drawn in the sample are dropped from the mean.
    """
    _check_shape(graph, emb)
    sampled = _sample_queries(graph.node_count, sample_size, seed)
    queries = sampled[graph.degrees()[sampled] > 0]
    if queries.size == 0:
        raise EvaluationError("no sampled node has an edge")
    empty = np.empty(0, dtype=np.int64)
    per_query = _map_over_queries(
        emb, queries, relevant_of=lambda q: set(graph.neighbors(q).tolist()), exclusions_of=lambda q: empty
    )
    echo = {"protocol": "reconstruction", "sample_size": sample_size, "seed": seed,
            "sampled": int(sampled.size), "included": len(per_query)}
    return EvalReport("map_reconstruction", _mean(per_query), [(str(q), s) for q, s in per_query], echo)


def map_link_prediction(
    split: EdgeSplit, emb: np.ndarray, sample_size: int = 1024, seed: int = 0
) -> EvalReport:
    """MAP of ranking held-out neighbors, with training neighbors excluded."""
    train = split.train
    _check_shape(train, emb)
    test_nbrs = split.test_neighbors()
    sampled = _sample_queries(train.node_count, sample_size, seed)
    queries = np.array([q for q in sampled if int(q) in test_nbrs], dtype=np.int64)
    if queries.size == 0:
        raise EvaluationError("no sampled node has a held-out edge")
    per_query = _map_over_queries(
        emb, queries, relevant_of=lambda q: test_nbrs[q], exclusions_of=train.neighbors
    )
    echo = {"protocol": "link_prediction", "sample_size": sample_size, "seed": seed,
            "sampled": int(sampled.size), "included": len(per_query),
            "exclude_train_neighbors": True, "split_fraction": split.fraction, "split_seed": split.seed}
    return EvalReport("map_link_prediction", _mean(per_query), [(str(q), s) for q, s in per_query], echo)


def sample_non_edges(split: EdgeSplit, count: int, seed: int) -> list[tuple[int, int]]:
    """``count`` distinct pairs ``i < j`` that are neither train nor test edges."""
    train = split.train
    n = train.node_count
    taken = set(train.undirected_edges()) | set(split.test_edges)
    available = n * (n - 1) // 2 - len(taken)
    if available < count:
        raise EvaluationError(f"need {count} negative pairs, only {available} non-edges exist")
    rng = np.random.default_rng(seed)
    chosen: set[tuple[int, int]] = set()
    out = []
    while len(out) < count:
        a, b = (int(x) for x in rng.integers(n, size=2))
        if a == b:
            continue
        pair = (a, b) if a < b else (b, a)
        if pair in taken or pair in chosen:
            continue
        chosen.add(pair)
        out.append(pair)
    return out


def binary_link_ap(split: EdgeSplit, emb: np.ndarray, seed: int = 0) -> EvalReport:
    """Average precision of held-out edges against an equal number of sampled non-edges."""
    _check_shape(split.train, emb)
    positives = sorted(split.test_edges)
    if not positives:
        raise EvaluationError("split has no held-out edges")
    negatives = sample_non_edges(split, len(positives), seed)
    pairs = np.array(positives + negatives, dtype=np.int64)
    scores = np.einsum("ij,ij->i", emb[pairs[:, 0]], emb[pairs[:, 1]])
    codes = pairs[:, 0] * emb.shape[0] + pairs[:, 1]
    order = np.lexsort((pairs[:, 1], pairs[:, 0], -scores))
    positive_codes = set(codes[: len(positives)].tolist())
    value = average_precision(codes[order], positive_codes)
    per_query = [(f"{a}-{b}", float(s)) for (a, b), s in zip(pairs.tolist(), scores)]
    echo = {"protocol": "binary_link_ap", "seed": seed, "positives": len(positives),
            "negatives": len(negatives), "split_fraction": split.fraction, "split_seed": split.seed}
    # per_query here carries pair scores, not per-pair AP
    return EvalReport("binary_link_ap", value, per_query, echo)


@dataclass
class InteractionLog:
    """Distinct graph-node items per user."""

    users: dict[str, frozenset[int]]
    rejected: int = 0

    @classmethod
    def from_records(cls, records: Iterable[tuple[str, str]], label_map: dict[str, int]) -> "InteractionLog":
        grouped: dict[str, set[int]] = {}
        rejected = 0
        for user, item in records:
            node = label_map.get(item)
            if node is None:
                rejected += 1
                continue
            grouped.setdefault(user, set()).add(node)
        return cls({u: frozenset(items) for u, items in grouped.items()}, rejected)


def load_interaction_log(path: Union[str, os.PathLike], label_map: dict[str, int]) -> InteractionLog:
    """Read a ``user_id,item_id`` CSV; items missing from the graph are counted and dropped."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"user_id", "item_id"} <= set(reader.fieldnames):
            raise ValueError(f"{path}: expected header 'user_id,item_id'")
        return InteractionLog.from_records(((r["user_id"], r["item_id"]) for r in reader), label_map)


def hit_rate_at_k(emb: np.ndarray, log: InteractionLog, k: int = 10, seed: int = 0) -> EvalReport:
    """Share of users whose top-k list for one random history item hits another history item."""
    if k < 1:
        raise ValueError("k must be >= 1")
    rng = np.random.default_rng(seed)
    per_query = []
    skipped = 0
    for user in sorted(log.users):
        items = sorted(log.users[user])
        if len(items) < 2:
            skipped += 1
            continue
        seed_item = items[int(rng.integers(len(items)))]
        top = rank_candidates(emb, seed_item, ())[:k]
        rest = set(items) - {seed_item}
        per_query.append((user, 1.0 if rest.intersection(top.tolist()) else 0.0))
    if not per_query:
        raise EvaluationError("no user has two or more distinct items")
    echo = {"protocol": "hit_rate", "k": k, "seed": seed, "included": len(per_query),
            "excluded_users": skipped, "rejected_records": log.rejected}
    return EvalReport(f"hit_rate@{k}", _mean(per_query), per_query, echo)
