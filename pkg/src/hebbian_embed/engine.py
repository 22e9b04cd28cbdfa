"""Annealed Hebbian propagation of node embeddings.

Each iteration every directed edge ``i -> j`` pushes a noisy copy of ``w_i``
(``w_i + N(0, sigma2 I)``) into ``w_j`` scaled by ``learning_rate * p_ij``.
One random non-neighbor per node receives the negated noisy embeddings with a
fixed weight.  The noise variance is divided by ``tau`` after every sweep.

All randomness comes from streams keyed by ``(seed, iteration, node)``, so the
result does not depend on how sources are distributed over workers.
"""

from __future__ import annotations

import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .graph import WeightedGraph, sample_negative

logger = logging.getLogger(__name__)

BATCHED = "batched"
IN_PLACE = "in_place"

_INIT_TAG = 0
_ITER_TAG = 1

# sources handled per unit of work; fixed so accumulation order never depends on worker count
BLOCK_SOURCES = 512


class DivergenceError(ArithmeticError):
    """Raised when training produces a non-finite embedding entry."""

    def __init__(self, node: int, iteration: int):
        super().__init__(f"non-finite embedding at node {node} in iteration {iteration}")
        self.node = node
        self.iteration = iteration


@dataclass(frozen=True)
class AnnealingSchedule:
    sigma2_0: float = 10.0
    tau: float = 1.1

    def __post_init__(self):
        if self.sigma2_0 < 0:
            raise ValueError("sigma2_0 must be non-negative")
        if not self.tau > 1:
            raise ValueError("tau must be greater than 1")

    def variance(self, m: int) -> float:
        """Variance used in iteration ``m`` (closed form ``sigma2_0 / tau**m``)."""
        return self.sigma2_0 / self.tau ** m


@dataclass(frozen=True)
class TrainConfig:
    dim: int
    iterations: int = 10
    learning_rate: float = 1.0
    schedule: AnnealingSchedule = field(default_factory=AnnealingSchedule)
    negative_weight: float = 0.5
    negatives: bool = True
    seed: int = 0
    mode: str = BATCHED

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if self.mode not in (BATCHED, IN_PLACE):
            raise ValueError(f"mode must be {BATCHED!r} or {IN_PLACE!r}, got {self.mode!r}")


@dataclass(frozen=True)
class IterationStats:
    iteration: int
    sigma2: float
    mean_norm: float
    max_norm: float
    seconds: float


@dataclass
class TrainResult:
    embeddings: np.ndarray
    telemetry: list[IterationStats]
    config: TrainConfig


def node_stream(seed: int, *key: int) -> np.random.Generator:
    """Counter-based generator for one ``(seed, *key)`` tuple."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence((seed, *key))))


def init_embeddings(node_count: int, config: TrainConfig) -> np.ndarray:
    """``node_count x dim`` matrix with i.i.d. ``N(0, sigma2_0)`` entries.

    Row ``i`` depends only on ``(seed, i)``.
    """
    if node_count < 1:
        raise ValueError("node_count must be >= 1")
    std = math.sqrt(config.schedule.sigma2_0)
    out = np.empty((node_count, config.dim))
    for i in range(node_count):
        out[i] = node_stream(config.seed, _INIT_TAG, i).standard_normal(config.dim)
    return out * std


def perturb(w: np.ndarray, sigma2: float, rng: np.random.Generator) -> np.ndarray:
    """``w + g`` with ``g`` i.i.d. ``N(0, sigma2)`` per coordinate."""
    if sigma2 < 0:
        raise ValueError("sigma2 must be non-negative")
    return w + math.sqrt(sigma2) * rng.standard_normal(np.shape(w))


def anneal_step(sigma2: float, tau: float) -> float:
    if not sigma2 > 0:
        raise ValueError("sigma2 must be positive")
    if not tau > 1:
        raise ValueError("tau must be greater than 1")
    return sigma2 / tau


def _draw_source(graph, w, i, sigma2, config, iteration):
    """Targets, coefficients and noisy vectors emitted by source ``i``.

    Draw order on the node's stream: one noise row per outgoing edge, then the
    negative node, then the two noise rows for the negative pair.
    """
    rng = node_stream(config.seed, _ITER_TAG, iteration, i)
    nbrs = graph.neighbors(i)
    rows = perturb(np.broadcast_to(w[i], (nbrs.shape[0], w.shape[1])), sigma2, rng)
    coefs = graph.transition_probs(i)
    if not config.negatives:
        return nbrs, coefs, rows
    neg = sample_negative(i, graph, rng)
    if neg is None:
        return nbrs, coefs, rows
    neg_rows = np.stack([perturb(w[i], sigma2, rng), perturb(w[neg], sigma2, rng)])
    weight = -config.negative_weight
    return (
        np.concatenate([nbrs, [neg, i]]),
        np.concatenate([coefs, [weight, weight]]),
        np.concatenate([rows, neg_rows]),
    )


def _block_contributions(graph, w, lo, hi, sigma2, config, iteration):
    parts = [_draw_source(graph, w, i, sigma2, config, iteration) for i in range(lo, hi)]
    parts = [p for p in parts if p[0].shape[0]]
    if not parts:
        return None
    targets = np.concatenate([p[0] for p in parts]).astype(np.int64)
    coefs = np.concatenate([p[1] for p in parts])
    rows = np.concatenate([p[2] for p in parts])
    return targets, (config.learning_rate * coefs)[:, None] * rows


def _iterate_batched(graph, w, sigma2, config, iteration, workers):
    delta = np.zeros_like(w)
    blocks = [(lo, min(lo + BLOCK_SOURCES, graph.node_count))
              for lo in range(0, graph.node_count, BLOCK_SOURCES)]

    def apply(result):
        # np.add.at is unbuffered: contributions land in row order, i.e. ascending source
        if result is not None:
            np.add.at(delta, result[0], result[1])

    if workers <= 1:
        for lo, hi in blocks:
            apply(_block_contributions(graph, w, lo, hi, sigma2, config, iteration))
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            window = 2 * workers
            for start in range(0, len(blocks), window):
                futures = [pool.submit(_block_contributions, graph, w, lo, hi, sigma2, config, iteration)
                           for lo, hi in blocks[start:start + window]]
                for fut in futures:
                    apply(fut.result())
    return w + delta


def _iterate_in_place(graph, w, sigma2, config, iteration):
    w = w.copy()
    eta = config.learning_rate
    for i in range(graph.node_count):
        rng = node_stream(config.seed, _ITER_TAG, iteration, i)
        nbrs = graph.neighbors(i)
        probs = graph.transition_probs(i)
        # no self-loops, so w[i] stays fixed while its own edges fire
        rows = perturb(np.broadcast_to(w[i], (nbrs.shape[0], w.shape[1])), sigma2, rng)
        for k, j in enumerate(nbrs):
            w[j] += eta * probs[k] * rows[k]
        if not config.negatives:
            continue
        neg = sample_negative(i, graph, rng)
        if neg is None:
            continue
        noisy_i = perturb(w[i], sigma2, rng)
        noisy_neg = perturb(w[neg], sigma2, rng)
        w[neg] += eta * -config.negative_weight * noisy_i
        w[i] += eta * -config.negative_weight * noisy_neg
    return w


def iterate(
    graph: WeightedGraph,
    emb: np.ndarray,
    config: TrainConfig,
    sigma2: float,
    iteration: int,
    workers: int = 1,
) -> np.ndarray:
    """One propagation sweep; returns a new matrix.

    ``batched`` reads a start-of-sweep snapshot and applies all updates at the
    end. ``in_place`` updates rows immediately in ascending ``(i, j)`` order and
    always runs on one thread.
    """
    if emb.shape[0] != graph.node_count:
        raise ValueError(f"embedding has {emb.shape[0]} rows, graph has {graph.node_count} nodes")
    if sigma2 < 0:
        raise ValueError("sigma2 must be non-negative")
    # overflow is reported below as DivergenceError rather than as warnings
    with np.errstate(over="ignore", invalid="ignore"):
        if config.mode == IN_PLACE:
            out = _iterate_in_place(graph, emb, sigma2, config, iteration)
        else:
            out = _iterate_batched(graph, emb, sigma2, config, iteration, workers)
    bad = ~np.isfinite(out).all(axis=1)
    if bad.any():
        raise DivergenceError(int(np.flatnonzero(bad)[0]), iteration)
    return out


def default_workers() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:
        return os.cpu_count() or 1


def train(graph: WeightedGraph, config: TrainConfig, workers: Optional[int] = None) -> TrainResult:
    """Initialize, then run ``config.iterations`` annealed sweeps."""
    if graph.node_count < 1:
        raise ValueError("graph has no nodes")
    workers = default_workers() if workers is None else max(1, workers)
    w = init_embeddings(graph.node_count, config)
    telemetry = []
    for m in range(config.iterations):
        sigma2 = config.schedule.variance(m)
        start = time.perf_counter()
        w = iterate(graph, w, config, sigma2, m, workers=workers)
        with np.errstate(over="ignore"):
            norms = np.linalg.norm(w, axis=1)
        stats = IterationStats(m, sigma2, float(norms.mean()), float(norms.max()), time.perf_counter() - start)
        logger.info("iter %d sigma2=%.6g mean_norm=%.4g max_norm=%.4g %.2fs",
                    m, sigma2, stats.mean_norm, stats.max_norm, stats.seconds)
        telemetry.append(stats)
    return TrainResult(embeddings=w, telemetry=telemetry, config=config)
