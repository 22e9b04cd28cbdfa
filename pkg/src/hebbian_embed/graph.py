"""Edge-list ingestion, transition probabilities, edge splits and negative sampling."""

from __future__ import annotations

import gzip
import hashlib
import io
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Iterator, Optional, Union

import numpy as np

PathOrStream = Union[str, os.PathLike, IO[str], IO[bytes]]


class EdgeListError(ValueError):
    """Raised for malformed or empty edge-list input."""


def _label_sort_key(label: str):
    # integer labels sort numerically so SNAP ids keep their natural order
    try:
        return (0, int(label), "")
    except ValueError:
        return (1, 0, label)


@dataclass
class RawEdgeList:
    """Deduplicated ``(source, target) -> count`` records keyed by node label.

    ``nodes`` holds every label seen in the input, including labels that only
    appeared on dropped self-loop lines.
    """

    records: dict[tuple[str, str], float]
    nodes: set[str] = field(default_factory=set)
    self_loops: int = 0

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[tuple[str, str, float]]:
        for (src, dst), count in self.records.items():
            yield src, dst, count


def _open_text(source: PathOrStream) -> tuple[IO[str], bool]:
    if isinstance(source, (str, os.PathLike)):
        path = Path(source)
        if path.suffix == ".gz":
            return gzip.open(path, "rt", encoding="utf-8"), True
        return open(path, "r", encoding="utf-8"), True
    if isinstance(source, io.TextIOBase):
        return source, False
    # anything else is treated as a binary stream
    return io.TextIOWrapper(source, encoding="utf-8"), False


def load_edge_list(source: PathOrStream, comment: str = "#", allow_empty: bool = False) -> RawEdgeList:
    """Parse a whitespace-separated ``src dst [count]`` edge list.

    Duplicate ``(src, dst)`` lines have their counts summed; self-loops are
    dropped and tallied in ``RawEdgeList.self_loops``.
    """
    stream, owned = _open_text(source)
    records: dict[tuple[str, str], float] = {}
    nodes: set[str] = set()
    self_loops = 0
    try:
        for lineno, line in enumerate(stream, start=1):
            text = line.strip()
            if not text or text.startswith(comment):
                continue
            parts = text.split()
            if len(parts) not in (2, 3):
                raise EdgeListError(f"line {lineno}: expected 'src dst [count]', got {text!r}")
            src, dst = parts[0], parts[1]
            count = 1.0
            if len(parts) == 3:
                try:
                    count = float(parts[2])
                except ValueError:
                    raise EdgeListError(f"line {lineno}: bad count {parts[2]!r}") from None
                if not math.isfinite(count) or count <= 0:
                    raise EdgeListError(f"line {lineno}: count must be positive and finite, got {parts[2]!r}")
            nodes.add(src)
            nodes.add(dst)
            if src == dst:
                self_loops += 1
                continue
            key = (src, dst)
            records[key] = records.get(key, 0.0) + count
    finally:
        if owned:
            stream.close()
    if not records and not allow_empty:
        raise EdgeListError("edge list contains no usable edges")
    return RawEdgeList(records=records, nodes=nodes, self_loops=self_loops)


@dataclass(frozen=True, eq=False)
class WeightedGraph:
    """Immutable CSR adjacency with per-entry counts and transition probabilities.

    Row ``i`` of the CSR structure lists ``(j, p_ij)`` sorted by ``j``.
    """

    indptr: np.ndarray
    indices: np.ndarray
    counts: np.ndarray
    probs: np.ndarray
    labels: tuple[str, ...]

    def __post_init__(self):
        for arr in (self.indptr, self.indices, self.counts, self.probs):
            arr.setflags(write=False)

    @property
    def node_count(self) -> int:
        return len(self.labels)

    @property
    def nnz(self) -> int:
        """Number of directed adjacency entries."""
        return int(self.indices.shape[0])

    def neighbors(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    def transition_probs(self, i: int) -> np.ndarray:
        return self.probs[self.indptr[i]:self.indptr[i + 1]]

    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def degree(self, i: int) -> int:
        return int(self.indptr[i + 1] - self.indptr[i])

    def has_edge(self, i: int, j: int) -> bool:
        row = self.neighbors(i)
        k = np.searchsorted(row, j)
        return bool(k < row.shape[0] and row[k] == j)

    def sources(self) -> np.ndarray:
        """Source node of every directed entry, aligned with ``indices``."""
        return np.repeat(np.arange(self.node_count, dtype=np.int64), self.degrees())

    def undirected_edges(self) -> list[tuple[int, int]]:
        """Sorted list of pairs ``(i, j)``, ``i < j``, joined in either direction."""
        src = self.sources()
        dst = self.indices
        lo = np.minimum(src, dst)
        hi = np.maximum(src, dst)
        pairs = np.unique(np.stack([lo, hi], axis=1), axis=0) if src.size else np.empty((0, 2), np.int64)
        return [(int(a), int(b)) for a, b in pairs]

    @property
    def label_map(self) -> dict[str, int]:
        return {label: i for i, label in enumerate(self.labels)}

    def dense_id(self, label: str) -> int:
        return self.label_map[label]

    def transition_matrix(self) -> np.ndarray:
        """Dense ``P x P`` matrix of ``p_ij``; meant for small graphs and checks."""
        mat = np.zeros((self.node_count, self.node_count))
        mat[self.sources(), self.indices] = self.probs
        return mat

    def checksum(self) -> str:
        """Content hash over labels and directed counts."""
        h = hashlib.sha256()
        h.update("\n".join(self.labels).encode("utf-8"))
        for arr in (self.indptr.astype("<i8"), self.indices.astype("<i8"), self.counts.astype("<f8")):
            h.update(arr.tobytes())
        return h.hexdigest()


def _from_count_table(table: dict[tuple[int, int], float], labels: tuple[str, ...]) -> WeightedGraph:
    n = len(labels)
    if table:
        keys = np.array(sorted(table), dtype=np.int64)
        counts = np.array([table[(int(a), int(b))] for a, b in keys], dtype=np.float64)
        src, dst = keys[:, 0], keys[:, 1]
    else:
        src = dst = np.empty(0, dtype=np.int64)
        counts = np.empty(0, dtype=np.float64)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, src + 1, 1)
    indptr = np.cumsum(indptr)
    totals = np.zeros(n, dtype=np.float64)
    np.add.at(totals, src, counts)
    probs = counts / totals[src] if counts.size else counts
    return WeightedGraph(indptr=indptr, indices=dst.copy(), counts=counts, probs=probs, labels=labels)


def build_graph(raw: RawEdgeList, symmetrize: bool = True) -> WeightedGraph:
    """Normalize raw counts into ``p_ij = count(i->j) / sum_k count(i->k)``.

    With ``symmetrize`` every record adds its count to both directions before
    normalization, so the structure is undirected while the probabilities of the
    two directions stay independent.
    """
    if not raw.records:
        raise EdgeListError("cannot build a graph from an empty edge list")
    labels = tuple(sorted(raw.nodes | {s for s, _ in raw.records} | {d for _, d in raw.records},
                          key=_label_sort_key))
    ids = {label: i for i, label in enumerate(labels)}
    table: dict[tuple[int, int], float] = {}
    for src, dst, count in raw:
        i, j = ids[src], ids[dst]
        table[(i, j)] = table.get((i, j), 0.0) + count
        if symmetrize:
            table[(j, i)] = table.get((j, i), 0.0) + count
    return _from_count_table(table, labels)


def graph_from_pairs(
    node_count: int,
    pairs: Iterable[tuple[int, int]],
    labels: Optional[Iterable[str]] = None,
) -> WeightedGraph:
    """Undirected unit-count graph over dense ids ``0..node_count-1``.

    Unlike :func:`build_graph` this accepts an empty pair list.
    """
    labels = tuple(labels) if labels is not None else tuple(str(i) for i in range(node_count))
    if len(labels) != node_count:
        raise ValueError("labels must have one entry per node")
    table: dict[tuple[int, int], float] = {}
    for i, j in pairs:
        if i == j:
            continue
        table[(i, j)] = table.get((i, j), 0.0) + 1.0
        table[(j, i)] = table.get((j, i), 0.0) + 1.0
    return _from_count_table(table, labels)


def remove_edges(graph: WeightedGraph, pairs: Iterable[tuple[int, int]]) -> WeightedGraph:
    """Copy of ``graph`` without the given undirected pairs, rows renormalized."""
    drop = set()
    for i, j in pairs:
        drop.add((i, j))
        drop.add((j, i))
    src = graph.sources()
    table = {
        (int(a), int(b)): float(c)
        for a, b, c in zip(src, graph.indices, graph.counts)
        if (int(a), int(b)) not in drop
    }
    return _from_count_table(table, graph.labels)


@dataclass(frozen=True)
class EdgeSplit:
    train: WeightedGraph
    test_edges: frozenset[tuple[int, int]]
    fraction: float
    seed: int

    def test_neighbors(self) -> dict[int, set[int]]:
        out: dict[int, set[int]] = {}
        for i, j in self.test_edges:
            out.setdefault(i, set()).add(j)
            out.setdefault(j, set()).add(i)
        return out


def split_edges(graph: WeightedGraph, fraction: float, seed: int) -> EdgeSplit:
    """Hold out ``round(fraction * |E|)`` undirected edges chosen uniformly.

    No connectivity repair is attempted; nodes are never removed.
    """
    if not 0 < fraction < 1:
        raise ValueError(f"fraction must lie in (0, 1), got {fraction}")
    edges = graph.undirected_edges()
    n_test = int(math.floor(fraction * len(edges) + 0.5))
    if n_test >= len(edges):
        raise ValueError(f"fraction {fraction} would remove all {len(edges)} edges")
    rng = np.random.default_rng(seed)
    chosen = rng.choice(len(edges), size=n_test, replace=False)
    test = frozenset(edges[k] for k in chosen)
    return EdgeSplit(train=remove_edges(graph, test), test_edges=test, fraction=fraction, seed=seed)


def sample_negative(i: int, graph: WeightedGraph, rng: np.random.Generator) -> Optional[int]:
    """Uniform non-neighbor of ``i`` (never ``i``) by rejection, or None if none exists."""
    n = graph.node_count
    row = graph.neighbors(i)
    if n - 1 - row.shape[0] <= 0:
        return None
    while True:
        j = int(rng.integers(n))
        if j == i:
            continue
        k = np.searchsorted(row, j)
        if k < row.shape[0] and row[k] == j:
            continue
        return j


# -- split files -------------------------------------------------------------

def save_split(split: EdgeSplit, directory: Union[str, os.PathLike]) -> None:
    """Write ``train.edges``, ``test.edges`` and a one-line ``split.json`` sidecar."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    train, labels = split.train, split.train.labels
    with open(out / "train.edges", "w", encoding="utf-8") as fh:
        for a, b, c in zip(train.sources(), train.indices, train.counts):
            fh.write(f"{labels[a]} {labels[b]} {float(c)!r}\n")
    with open(out / "test.edges", "w", encoding="utf-8") as fh:
        for a, b in sorted(split.test_edges):
            fh.write(f"{labels[a]} {labels[b]}\n")
    isolated = [labels[i] for i in np.flatnonzero(train.degrees() == 0)]
    meta = {"fraction": split.fraction, "seed": split.seed, "nodes": train.node_count, "isolated": isolated}
    (out / "split.json").write_text(json.dumps(meta) + "\n", encoding="utf-8")


def load_split(directory: Union[str, os.PathLike]) -> EdgeSplit:
    """Inverse of :func:`save_split`; dense ids match the graph the split came from."""
    src = Path(directory)
    meta = json.loads((src / "split.json").read_text(encoding="utf-8"))
    raw = load_edge_list(src / "train.edges")
    test_raw = load_edge_list(src / "test.edges", allow_empty=True)
    raw.nodes |= test_raw.nodes | set(meta.get("isolated", []))
    # train.edges already lists both directions with their counts
    train = build_graph(raw, symmetrize=False)
    if train.node_count != meta["nodes"]:
        raise EdgeListError(f"split declares {meta['nodes']} nodes, files contain {train.node_count}")
    ids = train.label_map
    test = frozenset(tuple(sorted((ids[a], ids[b]))) for a, b, _ in test_raw)
    return EdgeSplit(train=train, test_edges=test, fraction=meta["fraction"], seed=meta["seed"])
