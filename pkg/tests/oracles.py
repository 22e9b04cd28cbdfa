"""Brute-force reference implementations used only by the tests.

These deliberately avoid the library's code paths: plain Python loops, full
score matrices, and AP computed straight from its definition.
"""

from fractions import Fraction

import numpy as np


def full_ranking(scores, query, excluded):
    """Sort every admissible candidate by (-score, id) using Python tuples."""
    cands = [j for j in range(len(scores)) if j != query and j not in excluded]
    return [j for _, j in sorted((-scores[j], j) for j in cands)]


def ap_by_definition(ranked, relevant):
    hits = 0
    total = Fraction(0)
    for r, item in enumerate(ranked, start=1):
        if item in relevant:
            hits += 1
            total += Fraction(hits, r)
    return float(total / hits) if hits else 0.0


def adjacency_sets(n, pairs):
    adj = {i: set() for i in range(n)}
    for i, j in pairs:
        adj[i].add(j)
        adj[j].add(i)
    return adj


def score_matrix(emb):
    n = len(emb)
    return [[sum(float(a) * float(b) for a, b in zip(emb[i], emb[j])) for j in range(n)] for i in range(n)]


def map_reconstruction_oracle(n, pairs, emb):
    adj = adjacency_sets(n, pairs)
    s = score_matrix(emb)
    aps = [ap_by_definition(full_ranking(s[q], q, set()), adj[q]) for q in range(n) if adj[q]]
    return sum(aps) / len(aps)


def map_link_prediction_oracle(n, train_pairs, test_pairs, emb):
    train = adjacency_sets(n, train_pairs)
    test = adjacency_sets(n, test_pairs)
    s = score_matrix(emb)
    aps = [ap_by_definition(full_ranking(s[q], q, train[q]), test[q]) for q in range(n) if test[q]]
    return sum(aps) / len(aps)


def binary_ap_oracle(positives, negatives, emb):
    s = score_matrix(emb)
    scored = [(-s[a][b], (a, b), True) for a, b in positives] + [(-s[a][b], (a, b), False) for a, b in negatives]
    scored.sort(key=lambda t: (t[0], t[1]))
    ranked = [pair for _, pair, _ in scored]
    return ap_by_definition(ranked, set(positives))


def dense_jacobi_step(transition, emb, eta):
    """``w' = w + eta * P^T w`` with explicit loops over the dense matrix."""
    n, k = emb.shape
    out = emb.copy()
    for j in range(n):
        for i in range(n):
            if transition[i, j] != 0.0:
                out[j] += eta * transition[i, j] * emb[i]
    return out


def random_small_graph(rng, max_nodes=8, min_nodes=2):
    n = int(rng.integers(min_nodes, max_nodes + 1))
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < rng.uniform(0.2, 0.8)]
    return n, pairs


def integer_embeddings(rng, n, k=3, low=-2, high=3):
    # small integers keep every dot product exact, so ties are real ties
    return rng.integers(low, high, size=(n, k)).astype(np.float64)
