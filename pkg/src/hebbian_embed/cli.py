"""Command line entry point: ``hge embed | split | eval | sweep``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .engine import (
    BATCHED,
    IN_PLACE,
    AnnealingSchedule,
    DivergenceError,
    TrainConfig,
    default_workers,
    train,
)
from .evaluation import (
    EvaluationError,
    binary_link_ap,
    hit_rate_at_k,
    load_interaction_log,
    map_link_prediction,
    map_reconstruction,
)
from .graph import EdgeListError, build_graph, load_edge_list, load_split, save_split, split_edges
from .persistence import (
    EmbeddingFormatError,
    align_embeddings,
    config_from_manifest,
    load_embeddings,
    read_manifest,
    save_embeddings,
    write_manifest,
    write_report,
    write_telemetry,
)

log = logging.getLogger("hebbian_embed")

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_DIVERGED = 2
EXIT_PARTIAL = 3

DEFAULT_DIMS = (10, 20, 50, 100, 200, 300, 400, 500)
SWEEP_FIELDS = ["dataset", "dim", "seed", "protocol", "map", "seconds", "status"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # usage problems are input errors (exit 1); exit 2 is reserved for divergence
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _add_train_flags(p: argparse.ArgumentParser, with_dim: bool = True) -> None:
    if with_dim:
        p.add_argument("--dim", type=int, default=200, help="embedding dimensionality (default 200)")
    p.add_argument("--iters", type=int, default=10, help="propagation sweeps (default 10)")
    p.add_argument("--lr", type=float, default=1.0, help="learning rate (default 1.0)")
    p.add_argument("--sigma2", type=float, default=10.0, help="initial noise variance (default 10)")
    p.add_argument("--tau", type=float, default=1.1, help="variance divisor per sweep (default 1.1)")
    p.add_argument("--neg-weight", type=float, default=0.5, help="negative-edge weight (default 0.5)")
    p.add_argument("--no-negatives", action="store_true", help="disable negative-edge repulsion")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", choices=["batched", "in-place"], default="batched")
    p.add_argument("--threads", type=int, default=None, help="worker threads (default: available CPUs)")
    p.add_argument("--directed", action="store_true", help="do not symmetrize input edges")


def _config(args, dim: Optional[int] = None, seed: Optional[int] = None) -> TrainConfig:
    return TrainConfig(
        dim=args.dim if dim is None else dim,
        iterations=args.iters,
        learning_rate=args.lr,
        schedule=AnnealingSchedule(args.sigma2, args.tau),
        negative_weight=args.neg_weight,
        negatives=not args.no_negatives,
        seed=args.seed if seed is None else seed,
        mode=IN_PLACE if args.mode == "in-place" else BATCHED,
    )


def _flag_header(args) -> dict:
    flags = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    return {"flags": " ".join(f"{k}={v}" for k, v in flags.items())}


def _load_graph(path, directed: bool = False):
    return build_graph(load_edge_list(path), symmetrize=not directed)


# -- embed -------------------------------------------------------------------

def cmd_embed(args) -> int:
    graph = _load_graph(args.edges, args.directed)
    symmetrize = not args.directed
    if args.from_manifest:
        manifest = read_manifest(args.from_manifest)
        config = config_from_manifest(manifest)
        symmetrize = manifest.get("symmetrize", "True") == "True"
        if symmetrize != (not args.directed):
            graph = _load_graph(args.edges, not symmetrize)
        if manifest.get("graph_checksum") != graph.checksum():
            raise EdgeListError(f"{args.edges} does not match the graph recorded in {args.from_manifest}")
    else:
        config = _config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    result = train(graph, config, workers=args.threads)
    seconds = time.perf_counter() - start
    if args.format in ("text", "both"):
        save_embeddings(result.embeddings, graph.labels, out / "embeddings.txt", mode="text")
    if args.format in ("binary", "both"):
        save_embeddings(result.embeddings, graph.labels, out / "embeddings.bin", mode="binary")
    write_manifest(out / "manifest.txt", args.dataset or Path(args.edges).name, graph.checksum(), config,
                   symmetrize=symmetrize, train_seconds=f"{seconds:.3f}")
    write_telemetry(out / "telemetry.csv", result.telemetry, header=_flag_header(args))
    print(f"embedded {graph.node_count} nodes in {config.dim} dimensions ({seconds:.1f}s) -> {out}")
    return EXIT_OK


# -- split -------------------------------------------------------------------

def cmd_split(args) -> int:
    graph = _load_graph(args.edges, args.directed)
    split = split_edges(graph, args.fraction, args.seed)
    save_split(split, args.out)
    print(f"held out {len(split.test_edges)} of {len(graph.undirected_edges())} edges -> {args.out}")
    return EXIT_OK


# -- eval --------------------------------------------------------------------

def _aligned(emb_path, labels):
    emb, emb_labels = load_embeddings(emb_path)
    return align_embeddings(emb, emb_labels, labels)


def cmd_eval(args) -> int:
    protocol = args.protocol
    if protocol == "recon":
        if not args.graph:
            raise UsageError("eval recon requires --graph")
        graph = _load_graph(args.graph, args.directed)
        report = map_reconstruction(graph, _aligned(args.emb, graph.labels), args.sample, args.seed)
    elif protocol in ("linkpred", "linkpred-ap"):
        if not args.split:
            raise UsageError(f"eval {protocol} requires --split (a directory written by 'hge split')")
        split = load_split(args.split)
        emb = _aligned(args.emb, split.train.labels)
        if protocol == "linkpred":
            report = map_link_prediction(split, emb, args.sample, args.seed)
        else:
            report = binary_link_ap(split, emb, args.seed)
    elif protocol == "hitrate":
        if not args.log:
            raise UsageError("eval hitrate requires --log")
        emb, labels = load_embeddings(args.emb)
        log_ = load_interaction_log(args.log, {label: i for i, label in enumerate(labels)})
        report = hit_rate_at_k(emb, log_, args.k, args.seed)
    else:  # argparse restricts choices
        raise UsageError(f"unknown protocol {protocol}")
    line = f"{report.metric_name} {report.value:.6f} (queries={report.included})"
    if protocol == "hitrate":
        line += f" = {100 * report.value:.2f}%"
    print(line)
    if args.out:
        write_report(report, args.out, per_query=args.per_query, header=_flag_header(args))
    return EXIT_OK


# -- sweep -------------------------------------------------------------------

def _parse_datasets(items: Sequence[str]) -> list[tuple[str, str]]:
    out = []
    for item in items:
        name, sep, path = item.partition("=")
        if not sep:
            path, name = item, Path(item).name
        out.append((name, path))
    return out


def _read_existing(path: Path) -> tuple[list[str], list[dict]]:
    header, rows = [], []
    with open(path, encoding="utf-8", newline="") as fh:
        lines = fh.read().splitlines()
    body = []
    for line in lines:
        (header if line.startswith("#") else body).append(line)
    if body:
        rows = list(csv.DictReader(body))
    return header, rows


def cmd_sweep(args) -> int:
    dims = args.dims or list(DEFAULT_DIMS)
    seeds = args.seeds or [0]
    protocols = args.protocols or ["recon"]
    datasets = _parse_datasets(args.dataset)
    out = Path(args.out)
    done: set[tuple[str, str, str, str]] = set()
    if args.resume and out.exists():
        header, rows = _read_existing(out)
        kept = [r for r in rows if r.get("status") == "ok"]
        done = {(r["dataset"], r["dim"], r["seed"], r["protocol"]) for r in kept}
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write("\n".join(header) + "\n" if header else "")
            writer = csv.DictWriter(fh, SWEEP_FIELDS, lineterminator="\n")
            writer.writeheader()
            writer.writerows({k: r[k] for k in SWEEP_FIELDS} for r in kept)
    else:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(f"# tool=hebbian-embed {__version__}\n# {_flag_header(args)['flags']}\n")
            csv.DictWriter(fh, SWEEP_FIELDS, lineterminator="\n").writeheader()

    failures = 0
    with open(out, "a", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, SWEEP_FIELDS, lineterminator="\n")
        for name, path in datasets:
            try:
                graph = _load_graph(path, args.directed)
            except (OSError, EdgeListError) as exc:
                graph, load_error = None, exc
            for seed in seeds:
                split = None
                for dim in dims:
                    models = {}
                    for protocol in protocols:
                        key = (name, str(dim), str(seed), protocol)
                        if key in done:
                            continue
                        start = time.perf_counter()
                        row = {"dataset": name, "dim": dim, "seed": seed, "protocol": protocol, "map": ""}
                        try:
                            if graph is None:
                                raise load_error
                            if protocol == "recon":
                                if "full" not in models:
                                    models["full"] = train(graph, _config(args, dim, seed), args.threads)
                                value = map_reconstruction(graph, models["full"].embeddings,
                                                           args.sample, seed).value
                            else:
                                if split is None:
                                    split = split_edges(graph, args.fraction, seed)
                                if "train" not in models:
                                    models["train"] = train(split.train, _config(args, dim, seed), args.threads)
                                emb = models["train"].embeddings
                                if protocol == "linkpred":
                                    value = map_link_prediction(split, emb, args.sample, seed).value
                                else:
                                    value = binary_link_ap(split, emb, seed).value
                            row["map"] = repr(value)
                            row["status"] = "ok"
                        except (DivergenceError, EvaluationError, EdgeListError, ValueError, OSError) as exc:
                            failures += 1
                            row["status"] = f"error: {exc}"
                            log.error("cell %s failed: %s", key, exc)
                        row["seconds"] = f"{time.perf_counter() - start:.3f}"
                        writer.writerow(row)
                        fh.flush()
                        if row["status"] == "ok":
                            print(f"{name} dim={dim} seed={seed} {protocol}: {float(row['map']):.4f}")
    return EXIT_PARTIAL if failures else EXIT_OK


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hge", description="Hebbian graph embeddings: train and evaluate.")
    parser.add_argument("--version", action="version", version=f"hge {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("embed", help="train embeddings on an edge list")
    p.add_argument("edges")
    _add_train_flags(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--format", choices=["text", "binary", "both"], default="both")
    p.add_argument("--dataset", help="dataset name recorded in the manifest")
    p.add_argument("--from-manifest", help="repeat the run described by a manifest")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("split", help="hold out a fraction of edges for link prediction")
    p.add_argument("edges")
    p.add_argument("--fraction", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--directed", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("eval", help="evaluate embeddings")
    p.add_argument("protocol", choices=["recon", "linkpred", "linkpred-ap", "hitrate"])
    p.add_argument("--emb", required=True, help="embedding file (text or binary)")
    p.add_argument("--graph", help="edge list (recon)")
    p.add_argument("--split", help="split directory (linkpred, linkpred-ap)")
    p.add_argument("--log", help="user_id,item_id CSV (hitrate)")
    p.add_argument("--sample", type=int, default=1024)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--directed", action="store_true")
    p.add_argument("--out", help="write the report CSV here")
    p.add_argument("--per-query", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="dimension sweep emitting long-format CSV")
    p.add_argument("--dataset", action="append", required=True, metavar="NAME=PATH")
    p.add_argument("--dims", type=_int_list, default=None, help="default 10,20,50,100,200,300,400,500")
    p.add_argument("--seeds", type=_int_list, default=None, help="default 0")
    p.add_argument("--protocols", type=lambda s: s.split(","), default=None,
                   help="comma list of recon, linkpred, linkpred-ap (default recon)")
    p.add_argument("--sample", type=int, default=1024)
    p.add_argument("--fraction", type=float, default=0.1)
    p.add_argument("--out", required=True)
    p.add_argument("--resume", action="store_true", help="skip cells already completed in --out")
    _add_train_flags(p, with_dim=False)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "protocols", None):
        bad = set(args.protocols) - {"recon", "linkpred", "linkpred-ap"}
        if bad:
            print(f"error: unknown protocol(s) {sorted(bad)}", file=sys.stderr)
            return EXIT_INPUT
    if getattr(args, "threads", None) is None and hasattr(args, "threads"):
        args.threads = default_workers()
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (EdgeListError, EmbeddingFormatError, EvaluationError, ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
