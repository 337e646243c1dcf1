"""Command-line interface.

Subcommands::

    kdecluster kde        --input X --self|--queries Q --method exact|ckns ...
    kdecluster cluster    --input X --k K --a A --graph full|approx ...
    kdecluster bench-kde  --input X --m M --grid SPEC --a A --report R
    kdecluster generate   --kind blobs|moons --n N ... --output X

Outputs are written to a temporary file next to the target and renamed into
place only after the command succeeds, so a failed run leaves no output.
"""

from __future__ import annotations

import argparse
import contextlib
import itertools
import json
import logging
import os
import statistics
import sys
import tempfile
import time
from dataclasses import asdict, dataclass, field
from typing import Dict, Iterator, List, Sequence

import numpy as np

from . import __version__
from .cluster import (approximate_similarity_graph, similarity_graph,
                      spectral_cluster)
from .data import load_matrix, save_matrix
from .datasets import make_blobs, make_moons
from .kde import CKNSEstimator, ExactKDE

log = logging.getLogger("kdecluster")

REPORT_FORMAT = "kdecluster-bench-kde/1"
DEFAULT_GRID = "exact;ckns:k1=1|2|4,k2_constant=1|5"

# Grid keys accepted for ckns entries and their types; values left out of an
# entry take the estimator defaults.
_CKNS_KEYS = {
    "eps": float,
    "min_mu": float,
    "k1": int,
    "k2_constant": float,
    "p_offset": int,
    "max_tables": int,
}
_CKNS_DEFAULTS = {"eps": 0.5, "min_mu": None, "k1": None, "k2_constant": 5.0,
                  "p_offset": 0, "max_tables": 128}


class CLIError(Exception):
    """A validation failure reported to the user without a traceback."""


# ---------------------------------------------------------------------------
# Output staging
# ---------------------------------------------------------------------------

@contextlib.contextmanager
def staged_outputs(*paths: str) -> Iterator[List[str]]:
    """Yield temporary paths standing in for ``paths``; on success each is
    renamed onto its target, on failure all are removed."""
    temps = []
    try:
        for p in paths:
            directory = os.path.dirname(os.path.abspath(p))
            fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
            os.close(fd)
            temps.append(tmp)
        yield list(temps)
        for tmp, p in zip(temps, paths):
            os.replace(tmp, p)
        temps = []
    finally:
        for tmp in temps:
            with contextlib.suppress(OSError):
                os.remove(tmp)


def write_values(values: np.ndarray, path: str) -> None:
    with open(path, "w", newline="\n") as fh:
        for v in values:
            fh.write(f"{float(v)!r}\n")


def write_labels(labels: np.ndarray, path: str) -> None:
    with open(path, "w", newline="\n") as fh:
        for v in labels:
            fh.write(f"{int(v)}\n")


# ---------------------------------------------------------------------------
# Benchmark grid and report
# ---------------------------------------------------------------------------

def parse_grid(spec: str) -> List[Dict[str, object]]:
    """Expand a grid spec into a list of configurations.

    Entries are separated by ``;``.  An entry is ``exact`` or
    ``ckns[:key=v1|v2,key=v]``; alternatives separated by ``|`` expand to
    their cartesian product.  Example: ``exact;ckns:k1=1|2,k2_constant=5``.
    """
    configs: List[Dict[str, object]] = []
    entries = [e.strip() for e in spec.split(";") if e.strip()]
    if not entries:
        raise CLIError("grid spec is empty")
    for entry in entries:
        method, _, rest = entry.partition(":")
        method = method.strip()
        if method == "exact":
            if rest.strip():
                raise CLIError("the exact method takes no parameters")
            configs.append({"method": "exact"})
            continue
        if method != "ckns":
            raise CLIError(f"unknown method {method!r} in grid spec")
        axes: Dict[str, list] = {}
        for item in filter(None, (s.strip() for s in rest.split(","))):
            key, eq, values = item.partition("=")
            key = key.strip().replace("-", "_")
            if not eq or key not in _CKNS_KEYS:
                raise CLIError(f"bad grid parameter {item!r}")
            if key in axes:
                raise CLIError(f"grid parameter {key!r} given twice")
            try:
                axes[key] = [_CKNS_KEYS[key](v) for v in values.split("|")]
            except ValueError:
                raise CLIError(f"bad value in grid parameter {item!r}") from None
        keys = list(axes)
        for combo in itertools.product(*(axes[k] for k in keys)):
            cfg: Dict[str, object] = {"method": "ckns", **_CKNS_DEFAULTS}
            cfg.update(zip(keys, combo))
            configs.append(cfg)
    return configs


@dataclass
class BenchRecord:
    config: Dict[str, object]
    error: float
    time_per_query: float
    kernel_evals: int
    seed: int
    estimates: np.ndarray = field(repr=False, default=None)


def relative_error(estimates: np.ndarray, truth: np.ndarray) -> float:
    """Mean of ``|est - truth| / truth`` over the queries."""
    return float(np.mean(np.abs(estimates - truth) / truth))


def _format_value(v) -> str:
    if v is None:
        return "default"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def format_text_report(header: Dict[str, object], records: Sequence[BenchRecord]) -> str:
    lines = [f"# format: {REPORT_FORMAT}"]
    lines += [f"# {k}: {_format_value(v)}" for k, v in header.items()]
    for r in records:
        fields = [f"{k}={_format_value(v)}" for k, v in r.config.items()]
        fields += [f"error={r.error!r}", f"time_per_query={r.time_per_query!r}",
                   f"kernel_evals={r.kernel_evals}", f"seed={r.seed}"]
        lines.append(" ".join(fields))
    return "\n".join(lines) + "\n"


def parse_text_report(text: str):
    """Inverse of the text report: ``(header, records)`` with records as
    dicts of strings."""
    header: Dict[str, str] = {}
    records = []
    for line in text.splitlines():
        if line.startswith("# "):
            key, _, value = line[2:].partition(": ")
            header[key] = value
        elif line.strip():
            records.append(dict(f.split("=", 1) for f in line.split()))
    return header, records


def format_json_report(header: Dict[str, object], records: Sequence[BenchRecord],
                       query_indices: np.ndarray, truth: np.ndarray) -> str:
    doc = {
        "format": REPORT_FORMAT,
        "header": header,
        "query_indices": [int(i) for i in query_indices],
        "truth": [float(v) for v in truth],
        "records": [
            {**{k: v for k, v in asdict(r).items() if k != "estimates"},
             "estimates": [float(v) for v in r.estimates]}
            for r in records],
    }
    return json.dumps(doc, indent=1) + "\n"


def _timed_queries(estimator, Q: np.ndarray, repeats: int):
    before = estimator.kernel_eval_count
    times = []
    estimates = None
    for rep in range(repeats):
        start = time.perf_counter()
        out = estimator.query_batch(Q)
        times.append(time.perf_counter() - start)
        if rep == 0:
            estimates = out
            evals = estimator.kernel_eval_count - before
    return estimates, statistics.median(times) / len(Q), evals


def run_benchmark(X: np.ndarray, m: int, configs: Sequence[Dict[str, object]],
                  a: float, seed: int, repeats: int = 3):
    """Run every configuration on ``m`` queries sampled from ``X`` without
    replacement.  Returns ``(query_indices, truth, exact_record, records)``
    with records sorted by error."""
    n = X.shape[0]
    if not 1 <= m <= n:
        raise CLIError(f"--m must lie in [1, {n}], got {m}")
    if repeats < 1:
        raise CLIError("--repeats must be positive")
    sample_ss, build_ss = np.random.SeedSequence(seed).spawn(2)
    idx = np.sort(np.random.default_rng(sample_ss).choice(n, size=m, replace=False))
    Q = X[idx]
    exact = ExactKDE(X, a)
    truth, exact_time, exact_evals = _timed_queries(exact, Q, repeats)
    exact_record = BenchRecord({"method": "exact"}, 0.0, exact_time, exact_evals,
                               seed, truth)

    records = []
    for cfg in configs:
        log.info("running %s", cfg)
        if cfg["method"] == "exact":
            est = ExactKDE(X, a)
        else:
            est = CKNSEstimator(X, a, eps=cfg["eps"], min_mu=cfg["min_mu"],
                                K1=cfg["k1"], K2_constant=cfg["k2_constant"],
                                p_offset=cfg["p_offset"], seed=build_ss,
                                max_tables=cfg["max_tables"])
        estimates, per_query, evals = _timed_queries(est, Q, repeats)
        records.append(BenchRecord(dict(cfg), relative_error(estimates, truth),
                                   per_query, evals, seed, estimates))
    records.sort(key=lambda r: r.error)
    return idx, truth, exact_record, records


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def _load(path: str) -> np.ndarray:
    if not os.path.isfile(path):
        raise CLIError(f"input file not found: {path}")
    return load_matrix(path)


def cmd_kde(args) -> None:
    X = _load(args.input)
    Q = X if args.self_query else _load(args.queries)
    if args.method == "exact":
        est = ExactKDE(X, args.a)
    else:
        est = CKNSEstimator(X, args.a, eps=args.eps, min_mu=args.min_mu, K1=args.k1,
                            K2_constant=args.k2_constant, p_offset=args.p_offset,
                            seed=args.seed)
    values = est.query_batch(Q)
    with staged_outputs(args.output) as (out,):
        write_values(values, out)


def cmd_cluster(args) -> None:
    X = _load(args.input)
    if args.graph == "full":
        g = similarity_graph(X, args.a)
    else:
        g = approximate_similarity_graph(X, args.a, t=args.t, seed=args.seed)
    log.info("graph: %d vertices, %d edges", g.n, g.number_of_edges)
    labels = spectral_cluster(g, args.k, seed=args.seed)
    with staged_outputs(args.labels_output) as (out,):
        write_labels(labels, out)


def cmd_bench_kde(args) -> None:
    configs = parse_grid(args.grid)
    X = _load(args.input)
    idx, truth, exact, records = run_benchmark(X, args.m, configs, args.a, args.seed,
                                               repeats=args.repeats)
    n, d = X.shape
    header = {"input": os.path.basename(args.input), "n": n, "d": d, "m": args.m,
              "a": args.a, "seed": args.seed, "grid": args.grid,
              "repeats": args.repeats,
              "exact_time_per_query": exact.time_per_query,
              "exact_kernel_evals": exact.kernel_evals}
    if args.json:
        text = format_json_report(header, records, idx, truth)
    else:
        text = format_text_report(header, records)
    with staged_outputs(args.report) as (out,):
        with open(out, "w", newline="\n") as fh:
            fh.write(text)


def cmd_generate(args) -> None:
    if args.kind == "blobs":
        noise = 1.0 if args.noise is None else args.noise
        X, labels = make_blobs(args.n, args.d, args.k, noise, seed=args.seed)
    else:
        if args.k != 2:
            raise CLIError("moons always has k = 2")
        noise = 0.05 if args.noise is None else args.noise
        X, labels = make_moons(args.n, noise, seed=args.seed, d=args.d)
    labels_path = args.labels_output or os.path.splitext(args.output)[0] + ".labels"
    with staged_outputs(args.output, labels_path) as (out, lab):
        save_matrix(X, out)
        write_labels(labels, lab)


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def _positive_float(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return v


def _non_negative_int(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be non-negative, got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kdecluster",
        description="Gaussian KDE with LSH and KDE-based spectral clustering.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("kde", help="estimate kernel densities")
    p.add_argument("--input", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--queries")
    src.add_argument("--self", dest="self_query", action="store_true",
                     help="query every input point")
    p.add_argument("--method", choices=("exact", "ckns"), default="ckns")
    p.add_argument("--a", type=_positive_float, required=True)
    p.add_argument("--eps", type=float, default=0.5)
    p.add_argument("--min-mu", type=float, default=None)
    p.add_argument("--k1", type=_positive_int, default=None)
    p.add_argument("--k2-constant", type=_positive_float, default=5.0)
    p.add_argument("--p-offset", type=_non_negative_int, default=0)
    p.add_argument("--seed", type=_non_negative_int, default=0)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_kde)

    p = sub.add_parser("cluster", help="spectral clustering of a dataset")
    p.add_argument("--input", required=True)
    p.add_argument("--k", type=_positive_int, required=True)
    p.add_argument("--a", type=_positive_float, required=True)
    p.add_argument("--graph", choices=("full", "approx"), default="approx")
    p.add_argument("--t", type=_positive_int, default=None,
                   help="samples per vertex for the approximate graph")
    p.add_argument("--seed", type=_non_negative_int, default=0)
    p.add_argument("--labels-output", required=True)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("bench-kde", help="relative error versus cost of KDE methods")
    p.add_argument("--input", required=True)
    p.add_argument("--m", type=_positive_int, required=True)
    p.add_argument("--grid", default=DEFAULT_GRID)
    p.add_argument("--a", type=_positive_float, required=True)
    p.add_argument("--seed", type=_non_negative_int, default=0)
    p.add_argument("--report", required=True)
    p.add_argument("--json", action="store_true", help="write a JSON report")
    p.add_argument("--repeats", type=_positive_int, default=3,
                   help="timing repetitions; the median is reported")
    p.set_defaults(func=cmd_bench_kde)

    p = sub.add_parser("generate", help="write a synthetic dataset and its labels")
    p.add_argument("--kind", choices=("blobs", "moons"), required=True)
    p.add_argument("--n", type=_positive_int, required=True)
    p.add_argument("--d", type=_positive_int, default=2)
    p.add_argument("--k", type=_positive_int, default=2)
    p.add_argument("--noise", type=float, default=None)
    p.add_argument("--seed", type=_non_negative_int, default=0)
    p.add_argument("--output", required=True)
    p.add_argument("--labels-output", default=None,
                   help="defaults to the output path with a .labels suffix")
    p.set_defaults(func=cmd_generate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (CLIError, ValueError, OSError, IndexError) as exc:
        print(f"kdecluster {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
