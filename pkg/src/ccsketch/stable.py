"""Sampling of skewed alpha-stable laws and the implicit projection matrix.

All variates use the parameterization in which a sum ``sum_i r_i * a_i`` of
i.i.d. ``S(alpha, beta, 1)`` entries with nonnegative weights ``a_i`` is
``S(alpha, beta, sum_i a_i**alpha)``.  The third parameter is therefore the
alpha-th power of the usual scale: a variate with scale ``F`` is
``F**(1/alpha)`` times a standard one.

Random bits come from numpy's Philox counter-based generator.  Projection
entries ``r_ij`` are keyed by ``(seed, i)`` in the Philox key/counter, so any
entry can be regenerated at any time without storing the matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "StableParams",
    "SeededGenerator",
    "sample_standard",
    "stable_transform",
    "scale_to",
    "sample_projection_entry",
    "projection_row",
    "projection_rows",
    "project_signal",
    "trial_seed",
]

_MASK64 = (1 << 64) - 1

# second Philox key word; separates the independent random streams
_STREAM_SEQUENTIAL = 0x5EC0
_STREAM_PROJECTION = 0x960E


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha <= 2.0:
        raise ValueError(f"alpha must lie in (0, 2], got {alpha!r}")
    if alpha == 1.0:
        raise ValueError("alpha = 1 is excluded: F_(1) is a plain sum of increments")


def _check_beta(beta: float) -> None:
    if not -1.0 <= beta <= 1.0:
        raise ValueError(f"beta must lie in [-1, 1], got {beta!r}")


@dataclass(frozen=True)
class StableParams:
    """Parameters ``(alpha, beta, scale)`` of a stable law.

    ``scale`` is the quantity a projected sketch counter carries, i.e. the
    frequency moment ``F_(alpha)`` when the law describes a counter.
    """

    alpha: float
    beta: float = 1.0
    scale: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha <= 2.0:
            raise ValueError(f"alpha must lie in (0, 2], got {self.alpha!r}")
        _check_beta(self.beta)
        if not self.scale >= 0.0:
            raise ValueError(f"scale must be >= 0, got {self.scale!r}")

    def sample(self, gen: "SeededGenerator", n: int) -> np.ndarray:
        u, e = gen.uniform_exponential(n)
        return scale_to(stable_transform(self.alpha, self.beta, u, e), self.scale, self.alpha)


def _mix64(x: int) -> int:
    # splitmix64 finalizer
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def trial_seed(seed: int, trial: int) -> int:
    """Seed of Monte Carlo trial ``trial`` derived from a campaign seed."""
    return (seed & _MASK64) ^ _mix64(trial)


def _raw_to_uniform(raw: np.ndarray) -> np.ndarray:
    # 53-bit midpoint grid: never exactly 0 or 1
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * (1.0 / 9007199254740992.0)


def _raw_to_pair(raw: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    u = _raw_to_uniform(raw[0::2])
    e = -np.log(_raw_to_uniform(raw[1::2]))
    return u, e


@dataclass
class SeededGenerator:
    """Sequential source of (uniform, exponential) pairs.

    The output is a pure function of ``(seed, position)``; ``position`` counts
    raw 64-bit words consumed, two per pair.
    """

    seed: int
    position: int = 0
    _bitgen: np.random.Philox = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.seed &= _MASK64
        self._bitgen = np.random.Philox(key=philox_key(self.seed, _STREAM_SEQUENTIAL))
        blocks, rest = divmod(self.position, 4)
        if blocks:
            self._bitgen.advance(blocks)
        if rest:
            self._bitgen.random_raw(rest)

    def raw(self, n: int) -> np.ndarray:
        out = self._bitgen.random_raw(n)
        self.position += n
        return out

    def uniform_exponential(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Draw ``n`` uniforms on (0, 1) and ``n`` unit exponentials."""
        return _raw_to_pair(self.raw(2 * n))


def stable_transform(alpha: float, beta: float, u, e):
    """Chambers-Mallows-Stuck transform, vectorized over ``u`` and ``e``.

    Maps a uniform on (0, 1) and an independent unit exponential to a
    standard ``S(alpha, beta, 1)`` variate.  ``alpha = 1`` is rejected.
    """
    _check_alpha(alpha)
    _check_beta(beta)
    v = np.pi * (np.asarray(u, dtype=np.float64) - 0.5)
    w = np.asarray(e, dtype=np.float64)
    t = beta * math.tan(math.pi * alpha / 2.0)
    shift = math.atan(t) / alpha
    amp = (1.0 + t * t) ** (1.0 / (2.0 * alpha))
    arg = alpha * (v + shift)
    return (
        amp
        * np.sin(arg)
        / np.cos(v) ** (1.0 / alpha)
        * (np.cos(v - arg) / w) ** ((1.0 - alpha) / alpha)
    )


def sample_standard(alpha: float, beta: float, u: float, e: float) -> float:
    """One ``S(alpha, beta, 1)`` variate from a uniform ``u`` and exponential ``e``."""
    if not 0.0 < u < 1.0:
        raise ValueError(f"u must lie in (0, 1), got {u!r}")
    if not e > 0.0:
        raise ValueError(f"e must be > 0, got {e!r}")
    return float(stable_transform(alpha, beta, u, e))


def scale_to(sample_std, scale: float, alpha: float):
    """Rescale a standard variate to scale parameter ``scale``: ``scale**(1/alpha) * x``."""
    if not 0.0 < alpha <= 2.0:
        raise ValueError(f"alpha must lie in (0, 2], got {alpha!r}")
    if not scale >= 0.0:
        raise ValueError(f"scale must be >= 0, got {scale!r}")
    return scale ** (1.0 / alpha) * sample_std


def philox_key(seed: int, stream: int) -> np.ndarray:
    # a plain list would go through float64 for seeds >= 2**63
    return np.array([seed & _MASK64, stream], dtype=np.uint64)


def _row_bitgen(seed: int, i: int) -> np.random.Philox:
    return np.random.Philox(key=philox_key(seed, _STREAM_PROJECTION),
                            counter=np.array([0, i, 0, 0], dtype=np.uint64))


def projection_row(seed: int, i: int, k: int, alpha: float) -> np.ndarray:
    """Entries ``r_i0 .. r_i(k-1)`` of the implicit projection matrix, beta = 1.

    Entry ``j`` depends only on ``(seed, i, j, alpha)``; asking for a longer
    row never changes the leading entries.
    """
    if i < 0:
        raise ValueError(f"row index must be >= 0, got {i}")
    u, e = _raw_to_pair(_row_bitgen(seed, i).random_raw(2 * k))
    return stable_transform(alpha, 1.0, u, e)


def projection_rows(seed: int, indices, k: int, alpha: float) -> np.ndarray:
    """Stack of :func:`projection_row` for each index, shape ``(len(indices), k)``."""
    idx = [int(i) for i in indices]
    raw = np.empty((len(idx), 2 * k), dtype=np.uint64)
    for n, i in enumerate(idx):
        raw[n] = _row_bitgen(seed, i).random_raw(2 * k)
    u, e = _raw_to_pair(raw.T)
    return stable_transform(alpha, 1.0, u, e).T


def sample_projection_entry(seed: int, i: int, j: int, alpha: float) -> float:
    """Single entry ``r_ij``; identical to ``projection_row(seed, i, k, alpha)[j]``."""
    if j < 0:
        raise ValueError(f"column index must be >= 0, got {j}")
    bg = _row_bitgen(seed, i)
    blocks, rest = divmod(2 * j, 4)
    if blocks:
        bg.advance(blocks)
    if rest:
        bg.random_raw(rest)
    u, e = _raw_to_pair(bg.random_raw(2))
    return float(stable_transform(alpha, 1.0, u, e)[0])


def project_signal(indices, values, seeds, k: int, alpha: float) -> np.ndarray:
    """Float64 projections of one fixed signal under many seeds.

    Returns shape ``(len(seeds), k)``; row ``t`` is ``R_t^T A`` for the matrix
    keyed by ``seeds[t]``.  This is the Monte Carlo fast path: it sums in
    ordinary floating point, so it agrees with the exactly-accumulated
    :class:`~ccsketch.sketch.CCSketch` counters only up to rounding.
    """
    idx = [int(i) for i in indices]
    a = np.asarray(values, dtype=np.float64)
    seeds = [int(s) for s in seeds]
    out = np.empty((len(seeds), k), dtype=np.float64)
    chunk = max(1, 2**20 // (2 * k * max(1, len(idx))))
    for lo in range(0, len(seeds), chunk):
        block = seeds[lo : lo + chunk]
        raw = np.empty((len(block), len(idx), 2 * k), dtype=np.uint64)
        for t, s in enumerate(block):
            for n, i in enumerate(idx):
                raw[t, n] = _row_bitgen(s, i).random_raw(2 * k)
        u, e = _raw_to_pair(np.moveaxis(raw, -1, 0))
        r = stable_transform(alpha, 1.0, u, e)  # (k, T, D)
        out[lo : lo + len(block)] = np.einsum("jtd,d->tj", r, a)
    return out
