"""``ccsketch`` command line.

Subcommands: ``generate``, ``estimate``, ``benchmark``, ``tables``.
Exit codes: 0 success, 1 usage/config error, 2 data/parse error,
3 turnstile violation.
"""

from __future__ import annotations

import argparse
import logging
import sys
from contextlib import contextmanager
from pathlib import Path

from . import harness
from .estimators import EstimatorKind
from .sketch import StreamParseError, TurnstileViolation

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_TURNSTILE = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 is reserved for data errors here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(s: str) -> list[float]:
    return [float(x) for x in s.split(",") if x.strip()]


def _ints(s: str) -> list[int]:
    return [int(x) for x in s.split(",") if x.strip()]


def _kinds(s: str) -> list[EstimatorKind]:
    return [EstimatorKind.parse(x) for x in s.split(",") if x.strip()]


# config-file key -> (converter, argparse dest)
_CONFIG_KEYS = {
    "alphas": _floats,
    "k_values": _ints,
    "trials": int,
    "seed": int,
    "estimators": _kinds,
    "signal": str,
    "domain_size": int,
    "total_mass": float,
    "deletion_fraction": float,
    "zipf_s": float,
    "stream": str,
}


def read_config(path: str | Path) -> dict:
    """Parse a ``key=value`` file (``#`` comments, blank lines ignored)."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        s = line.split("#", 1)[0].strip()
        if not s:
            continue
        if "=" not in s:
            raise UsageError(f"{path}:{lineno}: expected key=value, got {s!r}")
        key, value = (t.strip() for t in s.split("=", 1))
        key = key.replace("-", "_")
        if key not in _CONFIG_KEYS:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            out[key] = _CONFIG_KEYS[key](value)
        except ValueError as exc:
            raise UsageError(f"{path}:{lineno}: bad value for {key}: {exc}") from None
    return out


def _add_signal_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("signal")
    g.add_argument("--signal", choices=harness.SIGNAL_KINDS, help="signal kind (default uniform)")
    g.add_argument("--domain-size", "-D", dest="domain_size", type=int, help="domain size D (default 16)")
    g.add_argument("--total-mass", dest="total_mass", type=float, help="sum of the net signal (default 16)")
    g.add_argument("--deletion-fraction", dest="deletion_fraction", type=float,
                   help="fraction of events that are cancelling insert/delete pairs (default 0)")
    g.add_argument("--zipf-s", dest="zipf_s", type=float, help="zipf exponent (default 1.0)")
    g.add_argument("--stream", help="stream file for --signal file")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ccsketch", description="Compressed Counting sketches and benchmarks.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a synthetic turnstile stream file")
    _add_signal_args(g)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", "-o", required=True, help="output stream file ('-' for stdout)")

    e = sub.add_parser("estimate", help="sketch a stream file and estimate F_(alpha)")
    e.add_argument("stream", help="stream file")
    e.add_argument("--alpha", type=float, required=True)
    e.add_argument("--k", type=int, required=True, help="number of counters")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--estimator", type=EstimatorKind.parse, default=EstimatorKind.GEOMETRIC_MEAN,
                   help="gm, hm, mle, op or oq (default gm)")

    b = sub.add_parser("benchmark", help="Monte Carlo campaign over alphas, k values and estimators")
    b.add_argument("--config", help="key=value file; flags override its values")
    b.add_argument("--alphas", type=_floats)
    b.add_argument("--k-values", dest="k_values", type=_ints)
    b.add_argument("--trials", type=int)
    b.add_argument("--seed", type=int)
    b.add_argument("--estimators", type=_kinds, help="comma list of gm,hm,mle,op,oq")
    _add_signal_args(b)
    b.add_argument("--out", "-o", default="-", help="CSV output ('-' for stdout)")

    t = sub.add_parser("tables", help="export or recompute the optimal-quantile table")
    t.add_argument("mode", choices=["export", "recompute"])
    t.add_argument("--alphas", type=_floats, default=None)
    t.add_argument("--n", type=int, default=10**7, help="sample size for W_q (recompute)")
    t.add_argument("--k", type=int, default=250, help="sample size per trial for q* (recompute)")
    t.add_argument("--trials", type=int, default=40_000, help="trials for q* (recompute)")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out", "-o", default="-", help="CSV output ('-' for stdout)")
    return p


@contextmanager
def _open_out(path: str):
    if path == "-":
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            yield fh


def _signal_from(values: dict) -> harness.SignalSpec:
    kw = {k: values[k] for k in ("domain_size", "total_mass", "deletion_fraction", "zipf_s")
          if values.get(k) is not None}
    kind = values.get("signal") or ("file" if values.get("stream") else "uniform")
    return harness.SignalSpec(kind=kind, path=values.get("stream"), **kw)


def _merged(args: argparse.Namespace) -> dict:
    values = read_config(args.config) if getattr(args, "config", None) else {}
    for key in _CONFIG_KEYS:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    return values


def _run(args: argparse.Namespace) -> int:
    if args.command == "generate":
        spec = _signal_from(vars(args))
        with _open_out(args.out) as fh:
            n = harness.cmd_generate(spec, args.seed, fh)
        print(f"wrote {n} events", file=sys.stderr)
        return EXIT_OK
    if args.command == "estimate":
        harness.cmd_estimate(args.stream, args.alpha, args.k, args.seed, args.estimator, out=sys.stdout)
        return EXIT_OK
    if args.command == "benchmark":
        values = _merged(args)
        cfg_kw = {k: values[k] for k in ("alphas", "k_values", "trials", "seed", "estimators") if k in values}
        cfg = harness.BenchmarkConfig(signal=_signal_from(values), **cfg_kw)
        with _open_out(args.out) as fh:
            summary = harness.cmd_benchmark(cfg, fh)
        print(f"{summary['rows']} rows, {len(summary['skipped'])} skipped", file=sys.stderr)
        return EXIT_OK
    with _open_out(args.out) as fh:
        summary = harness.cmd_tables(args.alphas, args.mode, fh, n=args.n, seed=args.seed,
                                     k=args.k, trials=args.trials)
    for d in summary["discrepancies"]:
        print(f"DISCREPANCY alpha={d['alpha']}: published W={d['published_w']} "
              f"oracle W={d['oracle_w_at_published_q']:.7g} ({100 * d['w_rel_gap']:.1f}% apart)",
              file=sys.stderr)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help, or a usage error already reported
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _run(args)
    except TurnstileViolation as exc:
        print(f"turnstile violation: {exc}", file=sys.stderr)
        return EXIT_TURNSTILE
    except (StreamParseError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (UsageError, ValueError, KeyError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
