"""Command-line interface: ``hdspectral analyze`` and ``hdspectral simulate``."""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import re
import sys

import numpy as np

from .errors import (ConvergenceFailure, DegenerateInverse, DegenerateSpectrum, EmptyGrid,
                     GenerationFailure, HDSpectralError, InfeasiblePenalty, InvalidBandwidth,
                     InvalidOrder, SingularTransfer)
from .pipeline import analyze
from .simulation import KINDS, ExperimentConfig, run_experiment
from .spectral import KERNELS

EXIT_OK, EXIT_CONFIG, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3
SCHEMA_VERSION = 1
MIN_ROWS = 64

CONFIG_ERRORS = (InvalidBandwidth, InvalidOrder, EmptyGrid)
NUMERIC_ERRORS = (SingularTransfer, DegenerateSpectrum, DegenerateInverse, InfeasiblePenalty,
                  ConvergenceFailure, GenerationFailure)


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------------------
# parsing helpers


def _is_number(token: str) -> bool:
    try:
        float(token)
        return True
    except ValueError:
        return False


def read_csv(path: str):
    """Rows are time points, columns are series; an all-text first row is a header."""
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}", EXIT_INPUT) from None
    with fh:
        rows = [(i, r) for i, r in enumerate(csv.reader(fh), start=1) if any(t.strip() for t in r)]
    if not rows:
        raise CliError(f"{path}: empty file", EXIT_INPUT)
    header = None
    first = [t.strip() for t in rows[0][1]]
    if not all(_is_number(t) for t in first):
        header = first
        rows = rows[1:]
    width = len(header) if header else None
    data = []
    for line, row in rows:
        tokens = [t.strip() for t in row]
        if width is None:
            width = len(tokens)
        if len(tokens) != width:
            raise CliError(f"{path}: line {line}: expected {width} fields, got {len(tokens)}",
                           EXIT_INPUT)
        try:
            values = [float(t) for t in tokens]
        except ValueError:
            raise CliError(f"{path}: line {line}: non-numeric value", EXIT_INPUT) from None
        if not all(math.isfinite(v) for v in values):
            raise CliError(f"{path}: line {line}: non-finite value", EXIT_INPUT)
        data.append(values)
    x = np.array(data, dtype=float)
    if x.ndim != 2 or x.shape[1] < 2:
        raise CliError(f"{path}: need at least 2 columns", EXIT_INPUT)
    if x.shape[0] < MIN_ROWS:
        raise CliError(f"{path}: need at least {MIN_ROWS} rows, got {x.shape[0]}", EXIT_INPUT)
    return x, header


_BAND = re.compile(r"^\s*([0-9.eE+-]+)\s*:\s*([0-9.eE+-]+)\s*(hz|Hz|HZ)?\s*$")


def parse_band(text: str, sampling_rate: float | None):
    """'LO:HI' in radians or 'LO:HIHz' in Hz; returns (lo, hi) in radians."""
    m = _BAND.match(text)
    if not m:
        raise CliError(f"invalid band {text!r}; expected LO:HI or LO:HIHz", EXIT_CONFIG)
    try:
        lo, hi = float(m.group(1)), float(m.group(2))
    except ValueError:
        raise CliError(f"invalid band {text!r}", EXIT_CONFIG) from None
    if m.group(3):
        if not sampling_rate or sampling_rate <= 0:
            raise CliError("a band in Hz needs --sampling-rate", EXIT_CONFIG)
        lo, hi = 2 * math.pi * lo / sampling_rate, 2 * math.pi * hi / sampling_rate
    if not (0.0 <= lo < hi <= math.pi + 1e-12):
        raise CliError(f"band [{lo}, {hi}] must satisfy 0 <= lo < hi <= pi", EXIT_CONFIG)
    return lo, min(hi, math.pi)


def parse_pairs(text: str | None, p: int):
    """'1-2,3-5' with 1-based indices."""
    if text is None or text == "all":
        return None
    out = []
    for item in text.split(","):
        try:
            u, v = (int(t) for t in item.split("-"))
        except ValueError:
            raise CliError(f"invalid pair {item!r}; expected U-V", EXIT_CONFIG) from None
        if u == v or not (1 <= u <= p and 1 <= v <= p):
            raise CliError(f"invalid pair {item!r} for p={p}", EXIT_CONFIG)
        out.append((u - 1, v - 1))
    return out


def _complex(z) -> dict:
    return {"re": float(np.real(z)), "im": float(np.imag(z))}


def _write(path: str | None, text: str):
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    with open(path, "w") as fh:
        fh.write(text)


# ---------------------------------------------------------------------------
# analyze


def result_document(res, args, band, header) -> dict:
    stats = []
    for s in res.test.statistics:
        stats.append({
            "u": s.u + 1, "v": s.v + 1, "T": s.T, "exceeded": s.exceeded,
            "clamped": s.clamped,
            "per_frequency": [{"omega": w, "rho_de": _complex(a), "rho_plugin": _complex(b),
                               "quadratic_form": q} for w, a, b, q in s.per_frequency],
        })
    tuning = dict(res.tuning)
    tuning["band_input"] = args.band
    tuning["band_radians"] = list(band)
    tuning["sampling_rate"] = args.sampling_rate
    tuning["seed"] = args.seed
    return {
        "schema_version": SCHEMA_VERSION,
        "input": os.path.basename(args.input),
        "columns": header,
        "t_hat": res.t_hat,
        "above_cap": res.test.above_cap,
        "q": res.test.q,
        "d": res.grid.d,
        "edges": [[u + 1, v + 1] for u, v in res.edges],
        "pairs": stats,
        "tuning": tuning,
    }


def dot_graph(res, p: int, header) -> str:
    names = header if header else [str(i + 1) for i in range(p)]
    lines = ["graph partial_coherence {"]
    for name in names:
        lines.append(f'  "{name}";')
    by_pair = {(s.u, s.v): s for s in res.test.statistics}
    for u, v in res.edges:
        mag = max(abs(r[1]) for r in by_pair[(u, v)].per_frequency)
        lines.append(f'  "{names[u]}" -- "{names[v]}" [label="{mag:.3f}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def cmd_analyze(args) -> int:
    if not 0.0 <= args.delta < 1.0:
        raise CliError("--delta must lie in [0, 1)", EXIT_CONFIG)
    if not 0.0 < args.alpha < 1.0:
        raise CliError("--alpha must lie in (0, 1)", EXIT_CONFIG)
    bandwidth = "auto" if args.bandwidth == "auto" else _positive_int(args.bandwidth, "--bandwidth")
    lam = "auto" if args.lam == "auto" else _positive_float(args.lam, "--lambda")
    band = parse_band(args.band, args.sampling_rate)
    x, header = read_csv(args.input)
    pairs = parse_pairs(args.pairs, x.shape[1])
    res = analyze(x, delta=args.delta, alpha=args.alpha, band=band, kernel=args.kernel,
                  bandwidth=bandwidth, prewhiten=args.prewhiten == "on", order=args.order,
                  inverse=args.inverse, lam=lam, pairs=pairs, workers=args.workers)
    doc = result_document(res, args, band, header)
    _write(args.output, json.dumps(doc, indent=2, sort_keys=True) + "\n")
    if args.dot:
        _write(args.dot, dot_graph(res, x.shape[1], header))
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate


def cmd_simulate(args) -> int:
    if args.list_kinds:
        sys.stdout.write("\n".join(KINDS) + "\n")
        return EXIT_OK
    if args.kind not in KINDS:
        raise CliError(f"unknown kind {args.kind!r}; choose from {', '.join(KINDS)}",
                       EXIT_CONFIG)
    if args.reps < 1 or args.p < 2 or args.n < 64:
        raise CliError("need --reps >= 1, --p >= 2, --n >= 64", EXIT_CONFIG)
    if not 0.0 < args.density <= 0.2:
        raise CliError("--density must lie in (0, 0.2]", EXIT_CONFIG)
    if not 0.0 < args.alpha < 1.0 or not 0.0 <= args.delta < 1.0:
        raise CliError("--alpha must lie in (0, 1) and --delta in [0, 1)", EXIT_CONFIG)
    cfg = ExperimentConfig(kind=args.kind, p=args.p, n=args.n, alpha=args.alpha,
                           delta=args.delta, method=args.method, replications=args.reps,
                           seed=args.seed, density=args.density)
    report = run_experiment(cfg, workers=args.workers)
    _write(args.output, report.to_json() + "\n")
    if args.table:
        _write(args.table, report.table())
    elif args.output not in (None, "-"):
        sys.stdout.write(report.table())
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point


def _positive_int(text, flag):
    try:
        val = int(text)
    except ValueError:
        raise CliError(f"{flag} expects 'auto' or an integer", EXIT_CONFIG) from None
    if val < 1:
        raise CliError(f"{flag} must be positive", EXIT_CONFIG)
    return val


def _positive_float(text, flag):
    try:
        val = float(text)
    except ValueError:
        raise CliError(f"{flag} expects 'auto' or a number", EXIT_CONFIG) from None
    if not val > 0:
        raise CliError(f"{flag} must be positive", EXIT_CONFIG)
    return val


def build_parser() -> argparse.ArgumentParser:
    workers = os.cpu_count() or 1
    parser = argparse.ArgumentParser(prog="hdspectral",
                                     description="Partial coherence graphs for multivariate time series.")
    sub = parser.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="test partial coherences of a CSV time series")
    a.add_argument("--input", required=True, help="CSV file, rows = time, columns = series")
    a.add_argument("--delta", type=float, default=0.0)
    a.add_argument("--alpha", type=float, default=0.1)
    a.add_argument("--band", default=f"0:{math.pi!r}", help="LO:HI in radians or LO:HIHz")
    a.add_argument("--sampling-rate", type=float, default=None, dest="sampling_rate")
    a.add_argument("--kernel", choices=sorted(KERNELS), default="bartlett_modified")
    a.add_argument("--bandwidth", default="auto", help="auto or an integer truncation lag")
    a.add_argument("--prewhiten", choices=("on", "off"), default="on")
    a.add_argument("--order", type=int, default=None, help="VAR order (default ceil(log10 n))")
    a.add_argument("--inverse", choices=("glasso", "clime"), default="glasso")
    a.add_argument("--lambda", dest="lam", default="auto", help="auto (BIC) or a fixed penalty")
    a.add_argument("--pairs", default=None, help="all, or 1-based list like 1-2,2-3")
    a.add_argument("--output", default=None, help="result JSON (stdout if omitted)")
    a.add_argument("--dot", default=None, help="write rejected edges as a DOT graph")
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--workers", type=int, default=workers)
    a.set_defaults(func=cmd_analyze)

    s = sub.add_parser("simulate", help="FDR and power of the tests on simulated data")
    s.add_argument("--kind", default="varma11")
    s.add_argument("--list-kinds", action="store_true", dest="list_kinds")
    s.add_argument("--p", type=int, default=20)
    s.add_argument("--n", type=int, default=2048)
    s.add_argument("--density", type=float, default=0.05)
    s.add_argument("--alpha", type=float, default=0.1)
    s.add_argument("--delta", type=float, default=0.0)
    s.add_argument("--reps", type=int, default=10)
    s.add_argument("--method", choices=("testing", "regularizing", "both"), default="testing")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--output", default=None, help="report JSON (stdout if omitted)")
    s.add_argument("--table", default=None, help="write the plain-text summary table here")
    s.add_argument("--workers", type=int, default=workers)
    s.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except CONFIG_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERIC_ERRORS as exc:
        stage = getattr(exc, "stage", "unknown")
        print(f"error: numerical failure in stage {stage}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except HDSpectralError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
