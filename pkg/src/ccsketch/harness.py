"""Stream synthesis, single-stream estimation, Monte Carlo campaigns, table recomputation.

These functions back the ``ccsketch`` command line; each also works as a
plain library call and returns a summary dict.
"""

from __future__ import annotations

import csv
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import TextIO

import numpy as np

from . import estimators as est
from . import tables
from .estimators import EstimatorKind
from .sketch import (
    CCSketch,
    ExactSignal,
    TurnstileEvent,
    exact_moment,
    read_stream,
    write_stream,
)
from .stable import philox_key, project_signal, trial_seed

log = logging.getLogger(__name__)

__all__ = [
    "SignalSpec",
    "BenchmarkConfig",
    "WORKERS_ENV",
    "generate_events",
    "cmd_generate",
    "cmd_estimate",
    "run_trials",
    "cmd_benchmark",
    "cmd_tables",
    "ESTIMATE_HEADER",
    "BENCHMARK_HEADER",
    "TABLES_HEADER",
]

WORKERS_ENV = "CCSKETCH_WORKERS"

ESTIMATE_HEADER = ["alpha", "k", "estimator", "estimate", "exact", "rel_err"]
BENCHMARK_HEADER = ["alpha", "k", "estimator", "emp_mean", "emp_var_factor", "theory_var_factor", "trials"]
TABLES_HEADER = ["alpha", "q_star", "var_factor", "w_qstar", "source"]

SIGNAL_KINDS = ("uniform", "zipf", "file")


@dataclass
class SignalSpec:
    """How to build a turnstile stream.

    ``kind`` is ``uniform`` (every coordinate gets ``total_mass / D``),
    ``zipf`` (coordinate ``i`` gets mass proportional to ``i**-zipf_s``) or
    ``file`` (events read from ``path``).  With ``deletion_fraction = f``,
    cancelling insert/delete pairs are mixed in until they make up a
    fraction ``f`` of all events.
    """

    kind: str = "uniform"
    domain_size: int = 16
    total_mass: float = 16.0
    deletion_fraction: float = 0.0
    zipf_s: float = 1.0
    path: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in SIGNAL_KINDS:
            raise ValueError(f"signal kind must be one of {SIGNAL_KINDS}, got {self.kind!r}")
        if self.kind == "file" and not self.path:
            raise ValueError("file signal needs a path")
        if self.domain_size < 1:
            raise ValueError(f"domain_size must be >= 1, got {self.domain_size}")
        if not self.total_mass > 0:
            raise ValueError(f"total_mass must be > 0, got {self.total_mass}")
        if not 0.0 <= self.deletion_fraction < 1.0:
            raise ValueError(f"deletion_fraction must lie in [0, 1), got {self.deletion_fraction}")


def _base_events(spec: SignalSpec) -> tuple[int, list[TurnstileEvent]]:
    if spec.kind == "file":
        return read_stream(spec.path)
    d = spec.domain_size
    if spec.kind == "uniform":
        share = spec.total_mass / d
        return d, [TurnstileEvent(i, share) for i in range(1, d + 1)]
    weights = np.arange(1, d + 1, dtype=np.float64) ** -spec.zipf_s
    masses = spec.total_mass * weights / weights.sum()
    return d, [TurnstileEvent(i, float(m)) for i, m in enumerate(masses, start=1) if m > 0]


def generate_events(spec: SignalSpec, seed: int) -> tuple[int, list[TurnstileEvent]]:
    """Events whose net signal is the one described by ``spec``.

    Cancelling pairs land at random positions; about half of them put the
    deletion first, so coordinates go negative between queries.
    """
    d, events = _base_events(spec)
    f = spec.deletion_fraction
    if f == 0.0 or not events:
        return d, events
    n_pairs = max(1, round(len(events) * f / (1.0 - f) / 2.0))
    rng = np.random.default_rng(np.random.Philox(key=philox_key(seed, 0xD31)))
    idx = rng.integers(1, d + 1, size=n_pairs)
    amt = rng.integers(1, 100, size=n_pairs).astype(np.float64)
    delete_first = rng.random(n_pairs) < 0.5
    # slots of the merged stream that hold pair members; pair m takes the
    # m-th two of them, so its members stay in order
    total = len(events) + 2 * n_pairs
    is_pair = np.zeros(total, dtype=bool)
    is_pair[rng.choice(total, size=2 * n_pairs, replace=False)] = True
    pair_members = []
    for i, a, first in zip(idx, amt, delete_first):
        ins, dele = TurnstileEvent(int(i), float(a)), TurnstileEvent(int(i), -float(a))
        pair_members.extend((dele, ins) if first else (ins, dele))
    base_it, pair_it = iter(events), iter(pair_members)
    return d, [next(pair_it) if p else next(base_it) for p in is_pair]


def cmd_generate(spec: SignalSpec, seed: int, out: str | Path | TextIO) -> int:
    """Write a stream file for ``spec``; returns the number of events."""
    d, events = generate_events(spec, seed)
    comment = (
        f"signal={spec.kind} D={d} total_mass={spec.total_mass!r} "
        f"deletion_fraction={spec.deletion_fraction!r} seed={seed}"
    )
    return write_stream(out, d, events, comment=comment)


def _fmt(x: float) -> str:
    return repr(float(x))


def _check_estimator(kind: EstimatorKind, alpha: float) -> None:
    if kind is EstimatorKind.QUANTILE:
        raise ValueError("the generic quantile estimator needs (q, W_q); use 'oq' instead")
    est.check_kind(kind, alpha)


def cmd_estimate(stream: str | Path | TextIO, alpha: float, k: int, seed: int,
                 estimator: EstimatorKind | str, out: TextIO | None = None) -> dict:
    """Sketch a stream file, estimate ``F_(alpha)``, compare with the exact value."""
    kind = EstimatorKind.parse(estimator) if isinstance(estimator, str) else estimator
    _check_estimator(kind, alpha)  # before any I/O
    if kind is EstimatorKind.GEOMETRIC_MEAN and k < 2:
        raise ValueError("geometric mean estimator needs k >= 2")
    d, events = read_stream(stream)
    sk = CCSketch(alpha, k, d, seed)
    sig = ExactSignal(d)
    for ev in events:
        sk.update(ev.index, ev.increment)
        sig.update(ev.index, ev.increment)
    exact = exact_moment(sig, alpha)
    value = float(est.evaluate(kind, sk.counters, alpha))
    rel_err = (value - exact) / exact if exact > 0 else math.nan
    row = [_fmt(alpha), str(k), kind.value, _fmt(value), _fmt(exact), _fmt(rel_err)]
    if out is not None:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(ESTIMATE_HEADER)
        w.writerow(row)
    band = 5.0 * math.sqrt(est.variance_factor(kind, alpha) / k)
    flagged = math.isfinite(rel_err) and abs(rel_err) > band
    if flagged:
        log.warning("relative error %.4g outside the advisory band 5*sqrt(V/k) = %.4g", rel_err, band)
    return {"alpha": alpha, "k": k, "estimator": kind.value, "estimate": value, "exact": exact,
            "rel_err": rel_err, "band": band, "flagged": flagged}


@dataclass
class BenchmarkConfig:
    alphas: list[float] = field(default_factory=lambda: [0.5, 1.5])
    k_values: list[int] = field(default_factory=lambda: [100])
    trials: int = 1000
    seed: int = 0
    estimators: list[EstimatorKind] = field(
        default_factory=lambda: [EstimatorKind.GEOMETRIC_MEAN, EstimatorKind.OPTIMAL_QUANTILE]
    )
    signal: SignalSpec = field(default_factory=SignalSpec)

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")
        for a in self.alphas:
            est.kappa(a)
        for k in self.k_values:
            if k < 1:
                raise ValueError(f"k must be >= 1, got {k}")
        self.estimators = [EstimatorKind.parse(e) if isinstance(e, str) else e for e in self.estimators]


def _workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    return max(1, n)


def run_trials(sig: ExactSignal, alpha: float, k: int, trials: int, seed: int,
               workers: int | None = None) -> np.ndarray:
    """Counters of ``trials`` independent sketches of ``sig``, shape ``(trials, k)``.

    Trial ``t`` uses seed ``trial_seed(seed, t)``.  Work is split into
    contiguous seed ranges and reassembled in order, so the result does not
    depend on the worker count.
    """
    idx, vals = sig.nonzero()
    seeds = [trial_seed(seed, t) for t in range(trials)]
    workers = _workers() if workers is None else max(1, workers)
    if workers == 1 or trials < 2 * workers:
        return project_signal(idx, vals, seeds, k, alpha)
    bounds = np.linspace(0, trials, workers + 1).astype(int)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = pool.map(lambda b: project_signal(idx, vals, seeds[b[0]:b[1]], k, alpha),
                         zip(bounds[:-1], bounds[1:]))
        return np.concatenate(list(parts), axis=0)


def cmd_benchmark(cfg: BenchmarkConfig, out: TextIO) -> dict:
    """Empirical mean and variance factor per (alpha, k, estimator), as CSV rows.

    ``emp_mean`` is the mean of ``F_hat / F`` (1 means unbiased) and
    ``emp_var_factor`` is ``k * Var(F_hat) / F**2``; ``F`` always comes from
    the exact signal.
    """
    d, events = generate_events(cfg.signal, cfg.seed)
    sig = ExactSignal.from_events(d, events)
    w = csv.writer(out, lineterminator="\n")
    w.writerow(BENCHMARK_HEADER)
    rows, skipped = 0, []
    for alpha in cfg.alphas:
        exact = exact_moment(sig, alpha)
        for k in cfg.k_values:
            runnable = []
            for kind in cfg.estimators:
                try:
                    _check_estimator(kind, alpha)
                    if kind is EstimatorKind.GEOMETRIC_MEAN and k < 2:
                        raise ValueError("geometric mean estimator needs k >= 2")
                except (ValueError, KeyError) as exc:
                    log.warning("skipping %s at alpha=%g, k=%d: %s", kind.value, alpha, k, exc)
                    skipped.append((alpha, k, kind.value, str(exc)))
                    continue
                runnable.append(kind)
            if not runnable:
                continue
            counters = run_trials(sig, alpha, k, cfg.trials, cfg.seed)
            for kind in runnable:
                rel = est.evaluate(kind, counters, alpha) / exact
                var = rel.var(ddof=1) if cfg.trials > 1 else math.nan
                w.writerow([_fmt(alpha), str(k), kind.value, _fmt(rel.mean()), _fmt(k * var),
                            _fmt(est.variance_factor(kind, alpha)), str(cfg.trials)])
                rows += 1
    return {"rows": rows, "skipped": skipped}


def cmd_tables(alphas: list[float] | None, mode: str, out: TextIO, *, n: int = 10**7,
               seed: int = 0, k: int = 250, trials: int = 40_000, tolerance: float = 0.02) -> dict:
    """Dump the optimal-quantile table or recompute it with the Monte Carlo oracles.

    ``recompute`` writes a ``paper`` row (the published values, when
    tabulated) and an ``oracle`` row per alpha.  The oracle row carries the re-derived ``q*``, its
    variance factor, and ``W`` at that ``q*``.  Separately, ``W`` is also
    evaluated at the published ``q*``; a relative gap above ``tolerance``
    is reported in ``discrepancies`` and logged.
    """
    if mode not in ("export", "recompute"):
        raise ValueError(f"mode must be 'export' or 'recompute', got {mode!r}")
    w = csv.writer(out, lineterminator="\n")
    if mode == "export":
        entries = list(tables.OQ_TABLE) if not alphas else [tables.lookup(a) for a in alphas]
        w.writerow(TABLES_HEADER)
        for e in entries:
            w.writerow([_fmt(e.alpha), _fmt(e.q_star), _fmt(e.var_factor), _fmt(e.w_qstar), "paper"])
        return {"rows": len(entries), "discrepancies": []}

    if not alphas:
        raise ValueError("recompute needs at least one alpha")
    for a in alphas:
        est.kappa(a)
        if tables.in_exclusion_window(a):
            lo, hi = tables.EXCLUSION_WINDOW
            raise ValueError(f"alpha={a} lies in the exclusion window ({lo}, {hi}); no constants are derived there")
    w.writerow(TABLES_HEADER)
    discrepancies, details, rows = [], [], 0
    for a in alphas:
        try:
            published = tables.lookup(a)
        except tables.NoEntryError:
            published = None
        q_star, v_star = tables.derive_qstar(a, k=k, trials=trials, seed=seed)
        dist = tables.build_empirical(a, n=n, seed=seed)
        w_star = tables.derive_wq(dist, q_star)
        if published is not None:
            w.writerow([_fmt(a), _fmt(published.q_star), _fmt(published.var_factor),
                        _fmt(published.w_qstar), "paper"])
            rows += 1
        w.writerow([_fmt(a), _fmt(q_star), _fmt(v_star), _fmt(w_star), "oracle"])
        rows += 1
        info = {"alpha": a, "q_star": q_star, "var_factor": v_star, "w_qstar": w_star}
        if published is not None:
            w_at_published_q = tables.derive_wq(dist, published.q_star)
            gap = abs(w_at_published_q - published.w_qstar) / published.w_qstar
            info.update(published_w=published.w_qstar, oracle_w_at_published_q=w_at_published_q, w_rel_gap=gap)
            if gap > tolerance:
                discrepancies.append(info)
                log.warning("alpha=%g: published W=%.7g but oracle W at q*=%g is %.7g (%.1f%% apart)",
                            a, published.w_qstar, published.q_star, w_at_published_q, 100 * gap)
        details.append(info)
    return {"rows": rows, "discrepancies": discrepancies, "details": details}
