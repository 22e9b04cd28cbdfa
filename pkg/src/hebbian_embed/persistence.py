"""Embedding files, run manifests, telemetry and report CSVs."""

from __future__ import annotations

import io
import json
import math
import os
import struct
from pathlib import Path
from typing import IO, Iterable, Optional, Sequence, Union

import numpy as np

from . import __version__
from .engine import AnnealingSchedule, IterationStats, TrainConfig
from .evaluation import EvalReport

BINARY_MAGIC = b"HGEEMB\x00\x01"
_HEADER = struct.Struct("<QQ")

Sink = Union[str, os.PathLike, IO[bytes]]


class EmbeddingFormatError(ValueError):
    pass


def format_float(x: float) -> str:
    """Shortest round-trip decimal; integral values drop the trailing ``.0``."""
    text = repr(float(x))
    return text[:-2] if text.endswith(".0") else text


def _open(target, mode):
    if isinstance(target, (str, os.PathLike)):
        return open(target, mode), True
    return target, False


def save_embeddings(emb: np.ndarray, labels: Sequence[str], sink: Sink, mode: str = "text") -> None:
    """Write ``emb`` as text (``P K`` header, ``label v1 .. vK`` rows) or binary."""
    emb = np.asarray(emb, dtype=np.float64)
    if emb.ndim != 2 or emb.shape[0] != len(labels):
        raise EmbeddingFormatError(f"{emb.shape} embedding does not match {len(labels)} labels")
    if not np.isfinite(emb).all():
        raise EmbeddingFormatError("refusing to save non-finite embeddings")
    if any(not label or any(c.isspace() for c in label) for label in labels):
        raise EmbeddingFormatError("labels must be non-empty and contain no whitespace")
    fh, owned = _open(sink, "wb")
    try:
        if mode == "binary":
            fh.write(BINARY_MAGIC)
            fh.write(_HEADER.pack(*emb.shape))
            fh.write(emb.astype("<f8", copy=False).tobytes(order="C"))
            blob = "\n".join(labels).encode("utf-8")
            fh.write(struct.pack("<Q", len(blob)))
            fh.write(blob)
        elif mode == "text":
            out = io.TextIOWrapper(fh, encoding="utf-8", newline="\n")
            out.write(f"{emb.shape[0]} {emb.shape[1]}\n")
            for label, row in zip(labels, emb.tolist()):
                out.write(label + " " + " ".join(map(format_float, row)) + "\n")
            out.flush()
            out.detach()
        else:
            raise ValueError(f"unknown mode {mode!r}")
    finally:
        if owned:
            fh.close()


def _load_binary(data: bytes) -> tuple[np.ndarray, list[str]]:
    offset = len(BINARY_MAGIC)
    if len(data) < offset + _HEADER.size:
        raise EmbeddingFormatError("truncated binary header")
    p, k = _HEADER.unpack_from(data, offset)
    offset += _HEADER.size
    body = p * k * 8
    if len(data) < offset + body + 8:
        raise EmbeddingFormatError(f"header declares {p}x{k} but body is truncated at byte {len(data)}")
    emb = np.frombuffer(data, dtype="<f8", count=p * k, offset=offset).reshape(p, k).astype(np.float64)
    offset += body
    (n,) = struct.unpack_from("<Q", data, offset)
    offset += 8
    if len(data) != offset + n:
        raise EmbeddingFormatError(f"label block length mismatch at byte {offset}")
    labels = data[offset:].decode("utf-8").split("\n") if p else []
    if len(labels) != p:
        raise EmbeddingFormatError(f"header declares {p} rows, found {len(labels)} labels")
    bad = np.flatnonzero(~np.isfinite(emb).all(axis=1))
    if bad.size:
        raise EmbeddingFormatError(f"non-finite value in row {int(bad[0])}")
    return emb, labels


def _load_text(data: bytes) -> tuple[np.ndarray, list[str]]:
    lines = data.decode("utf-8").splitlines()
    if not lines:
        raise EmbeddingFormatError("empty embedding file")
    try:
        p, k = (int(x) for x in lines[0].split())
    except ValueError:
        raise EmbeddingFormatError(f"line 1: bad header {lines[0]!r}") from None
    rows = lines[1:]
    if len(rows) != p:
        raise EmbeddingFormatError(f"header declares {p} rows, found {len(rows)}")
    emb = np.empty((p, k))
    labels = []
    for lineno, line in enumerate(rows, start=2):
        parts = line.split()
        if len(parts) != k + 1:
            raise EmbeddingFormatError(f"line {lineno}: expected {k} values, found {len(parts) - 1}")
        try:
            values = [float(v) for v in parts[1:]]
        except ValueError:
            raise EmbeddingFormatError(f"line {lineno}: unparseable value") from None
        if not all(math.isfinite(v) for v in values):
            raise EmbeddingFormatError(f"line {lineno}: non-finite value")
        labels.append(parts[0])
        emb[lineno - 2] = values
    return emb, labels


def load_embeddings(source: Sink) -> tuple[np.ndarray, list[str]]:
    """Read either format (detected by the binary magic)."""
    fh, owned = _open(source, "rb")
    try:
        data = fh.read()
    finally:
        if owned:
            fh.close()
    if isinstance(data, str):
        data = data.encode("utf-8")
    if data.startswith(BINARY_MAGIC):
        return _load_binary(data)
    return _load_text(data)


def align_embeddings(emb: np.ndarray, emb_labels: Sequence[str], graph_labels: Sequence[str]) -> np.ndarray:
    """Reorder rows so row ``i`` belongs to ``graph_labels[i]``."""
    index = {label: i for i, label in enumerate(emb_labels)}
    missing = [label for label in graph_labels if label not in index]
    if missing or len(emb_labels) != len(graph_labels):
        raise EmbeddingFormatError(
            f"embedding labels do not match the graph ({len(missing)} graph nodes missing)")
    return emb[[index[label] for label in graph_labels]]


# -- manifests ---------------------------------------------------------------

def write_manifest(path: Union[str, os.PathLike], dataset: str, graph_checksum: str,
                   config: TrainConfig, symmetrize: bool = True, **extra) -> None:
    """Flat ``key=value`` record of everything needed to repeat a training run."""
    fields = {
        "dataset": dataset,
        "graph_checksum": graph_checksum,
        "symmetrize": symmetrize,
        "dim": config.dim,
        "iterations": config.iterations,
        "learning_rate": repr(config.learning_rate),
        "sigma2_0": repr(config.schedule.sigma2_0),
        "tau": repr(config.schedule.tau),
        "negative_weight": repr(config.negative_weight),
        "negatives": config.negatives,
        "seed": config.seed,
        "mode": config.mode,
        "tool_version": __version__,
    }
    fields.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        for key, value in fields.items():
            fh.write(f"{key}={value}\n")


def read_manifest(path: Union[str, os.PathLike]) -> dict[str, str]:
    out = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def config_from_manifest(manifest: dict[str, str]) -> TrainConfig:
    return TrainConfig(
        dim=int(manifest["dim"]),
        iterations=int(manifest["iterations"]),
        learning_rate=float(manifest["learning_rate"]),
        schedule=AnnealingSchedule(float(manifest["sigma2_0"]), float(manifest["tau"])),
        negative_weight=float(manifest["negative_weight"]),
        negatives=manifest["negatives"] == "True",
        seed=int(manifest["seed"]),
        mode=manifest["mode"],
    )


# -- CSV outputs -------------------------------------------------------------

def write_telemetry(path: Union[str, os.PathLike], telemetry: Iterable[IterationStats],
                    header: Optional[dict] = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# tool=hebbian-embed {__version__}\n")
        for key, value in (header or {}).items():
            fh.write(f"# {key}={value}\n")
        fh.write("iter,sigma2,mean_norm,max_norm,seconds\n")
        for s in telemetry:
            fh.write(f"{s.iteration},{s.sigma2!r},{s.mean_norm!r},{s.max_norm!r},{s.seconds:.6f}\n")


def read_telemetry(path: Union[str, os.PathLike]) -> list[IterationStats]:
    rows = [r for r in Path(path).read_text(encoding="utf-8").splitlines() if not r.startswith("#")][1:]
    out = []
    for row in rows:
        it, s2, mean, mx, sec = row.split(",")
        out.append(IterationStats(int(it), float(s2), float(mean), float(mx), float(sec)))
    return out


def write_report(report: EvalReport, sink: Union[str, os.PathLike, IO[str]],
                 per_query: bool = False, header: Optional[dict] = None) -> None:
    """Report CSV: ``#`` metadata comments, then ``metric,query,value`` rows.

    The summary row uses ``*`` as its query id.
    """
    fh, owned = (open(sink, "w", encoding="utf-8"), True) if isinstance(sink, (str, os.PathLike)) else (sink, False)
    try:
        fh.write(f"# tool=hebbian-embed {__version__}\n")
        for key, value in (header or {}).items():
            fh.write(f"# {key}={value}\n")
        fh.write(f"# config={json.dumps(report.config_echo, sort_keys=True)}\n")
        fh.write("metric,query,value\n")
        fh.write(f"{report.metric_name},*,{report.value!r}\n")
        if per_query:
            for query, value in report.per_query:
                fh.write(f"{report.metric_name},{query},{value!r}\n")
    finally:
        if owned:
            fh.close()
