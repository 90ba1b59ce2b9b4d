"""Compressed Counting sketch over a turnstile stream, plus the exact oracle.

Counters are accumulated exactly.  Every float64 is an integer multiple of
``2**-1074`` and every product of two float64 values is an integer multiple
of ``2**-2148``, so each counter is held as a Python int in units of
``2**-2148`` and reported as the correctly rounded float64 of that sum.
Because of this, the reported counters depend only on the net signal:
applying an event and its negation, reordering events, or merging
sketches gives bit-identical floats.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, TextIO

import numpy as np

from .stable import _check_alpha, projection_row

__all__ = [
    "TurnstileEvent",
    "CCSketch",
    "ExactSignal",
    "TurnstileViolation",
    "StreamParseError",
    "sketch_new",
    "sketch_update",
    "sketch_merge",
    "batch_project",
    "exact_moment",
    "read_stream",
    "write_stream",
]

_SIGNAL_BITS = 1074  # float64 grid
_COUNTER_BITS = 2 * _SIGNAL_BITS  # grid of a product of two float64


class TurnstileViolation(ValueError):
    """A coordinate of the signal is negative at query time."""


class StreamParseError(ValueError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


@dataclass(frozen=True)
class TurnstileEvent:
    """One arrival ``(index, increment)``; index is 1-based."""

    index: int
    increment: float


def _to_fixed(x: float) -> int:
    """Exact ``x * 2**1074`` as an int."""
    if not math.isfinite(x):
        raise ValueError(f"non-finite value {x!r}")
    num, den = x.as_integer_ratio()
    return num << (_SIGNAL_BITS - den.bit_length() + 1)


def _products_fixed(row: np.ndarray, a_fixed: int) -> list[int]:
    """Exact ``row[j] * a`` in units of ``2**-2148``, with ``a`` given in units of ``2**-1074``."""
    return [_to_fixed(r) * a_fixed for r in row.tolist()]


def _fixed_to_float(n: int, bits: int) -> float:
    # int / int true division is correctly rounded
    return n / (1 << bits)


@dataclass
class CCSketch:
    """``k`` projected counters ``x = R^T A`` with ``R`` keyed by ``seed``.

    The projection matrix has ``domain_size`` rows and is never stored; row
    ``i`` is regenerated from ``(seed, i)`` whenever index ``i`` is updated.
    """

    alpha: float
    k: int
    domain_size: int
    seed: int
    _acc: list[int] = field(default_factory=list, repr=False)

    def __post_init__(self) -> None:
        _check_alpha(self.alpha)
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.domain_size < 1:
            raise ValueError(f"domain_size must be >= 1, got {self.domain_size}")
        if not self._acc:
            self._acc = [0] * self.k
        elif len(self._acc) != self.k:
            raise ValueError("accumulator length differs from k")

    @property
    def counters(self) -> np.ndarray:
        return np.array([_fixed_to_float(n, _COUNTER_BITS) for n in self._acc])

    def _check_index(self, index: int) -> None:
        if not 1 <= index <= self.domain_size:
            raise IndexError(f"index {index} outside [1, {self.domain_size}]")

    def _add_fixed(self, index: int, a_fixed: int) -> None:
        if a_fixed == 0:
            return
        row = projection_row(self.seed, index, self.k, self.alpha)
        for j, p in enumerate(_products_fixed(row, a_fixed)):
            self._acc[j] += p

    def update(self, index: int, increment: float) -> None:
        """Apply one event in place: ``x_j += r_(index, j) * increment``."""
        self._check_index(index)
        self._add_fixed(index, _to_fixed(float(increment)))

    def ingest(self, events: Iterable[TurnstileEvent]) -> None:
        for ev in events:
            self.update(ev.index, ev.increment)

    def compatible(self, other: "CCSketch") -> bool:
        return (self.alpha, self.k, self.domain_size, self.seed) == (
            other.alpha,
            other.k,
            other.domain_size,
            other.seed,
        )

    def copy(self) -> "CCSketch":
        return CCSketch(self.alpha, self.k, self.domain_size, self.seed, list(self._acc))

    def to_dict(self) -> dict:
        """Plain serialization: parameters plus exact counter state."""
        return {
            "alpha": self.alpha,
            "k": self.k,
            "domain_size": self.domain_size,
            "seed": self.seed,
            "acc": [str(n) for n in self._acc],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CCSketch":
        return cls(d["alpha"], d["k"], d["domain_size"], d["seed"], [int(n) for n in d["acc"]])


def sketch_new(alpha: float, k: int, domain_size: int, seed: int) -> CCSketch:
    return CCSketch(alpha, k, domain_size, seed)


def sketch_update(sk: CCSketch, ev: TurnstileEvent) -> CCSketch:
    """Return a new sketch with ``ev`` applied; ``sk`` is left untouched."""
    out = sk.copy()
    out.update(ev.index, ev.increment)
    return out


def sketch_merge(a: CCSketch, b: CCSketch) -> CCSketch:
    """Counter-wise sum; equals the sketch of the concatenated streams."""
    if not a.compatible(b):
        raise ValueError(
            "cannot merge sketches with different (alpha, k, domain_size, seed): "
            f"{(a.alpha, a.k, a.domain_size, a.seed)} vs {(b.alpha, b.k, b.domain_size, b.seed)}"
        )
    return CCSketch(a.alpha, a.k, a.domain_size, a.seed, [x + y for x, y in zip(a._acc, b._acc)])


class ExactSignal:
    """The full vector ``A_t``, held exactly and sparsely.

    Validation oracle only; it costs ``O(D)`` space.
    """

    def __init__(self, domain_size: int):
        if domain_size < 1:
            raise ValueError(f"domain_size must be >= 1, got {domain_size}")
        self.domain_size = domain_size
        self._fixed: dict[int, int] = {}

    @classmethod
    def from_events(cls, domain_size: int, events: Iterable[TurnstileEvent]) -> "ExactSignal":
        sig = cls(domain_size)
        for ev in events:
            sig.update(ev.index, ev.increment)
        return sig

    def update(self, index: int, increment: float) -> None:
        if not 1 <= index <= self.domain_size:
            raise IndexError(f"index {index} outside [1, {self.domain_size}]")
        v = self._fixed.get(index, 0) + _to_fixed(float(increment))
        if v:
            self._fixed[index] = v
        else:
            self._fixed.pop(index, None)

    def nonzero(self) -> tuple[list[int], np.ndarray]:
        """Sorted nonzero indices and their (rounded) values."""
        idx = sorted(self._fixed)
        vals = np.array([_fixed_to_float(self._fixed[i], _SIGNAL_BITS) for i in idx], dtype=np.float64)
        return idx, vals

    @property
    def values(self) -> np.ndarray:
        """Dense length-``D`` vector; ``values[i - 1]`` is coordinate ``i``."""
        out = np.zeros(self.domain_size, dtype=np.float64)
        idx, vals = self.nonzero()
        if idx:
            out[np.asarray(idx) - 1] = vals
        return out

    def __getitem__(self, index: int) -> float:
        return _fixed_to_float(self._fixed.get(index, 0), _SIGNAL_BITS)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ExactSignal):
            return NotImplemented
        return self.domain_size == other.domain_size and self._fixed == other._fixed


def batch_project(sig: ExactSignal, alpha: float, k: int, seed: int) -> CCSketch:
    """Sketch of the net signal, built in one pass over its nonzero coordinates."""
    sk = CCSketch(alpha, k, sig.domain_size, seed)
    for i in sorted(sig._fixed):
        sk._add_fixed(i, sig._fixed[i])
    return sk


def exact_moment(sig: ExactSignal, alpha: float) -> float:
    """``F_(alpha) = sum_i A[i]**alpha`` over nonzero coordinates.

    Nonnegativity is checked here, at query time, and nowhere else.
    """
    idx, vals = sig.nonzero()
    neg = [i for i, v in zip(idx, vals) if v < 0]
    if neg:
        raise TurnstileViolation(
            f"{len(neg)} coordinate(s) negative at query time, first at index {neg[0]}"
        )
    return math.fsum(float(v) ** alpha for v in vals)


_HEADER = re.compile(r"^D\s*=\s*(\d+)$")


def _iter_stream(lines: Iterable[str]) -> Iterator[tuple[int, str]]:
    for lineno, line in enumerate(lines, start=1):
        s = line.strip()
        if s and not s.startswith("#"):
            yield lineno, s


def read_stream(source: str | Path | TextIO) -> tuple[int, list[TurnstileEvent]]:
    """Parse a stream file: ``D=<n>`` header then ``<index> <increment>`` lines.

    Returns ``(domain_size, events)``; raises :class:`StreamParseError` with
    the offending line number.
    """
    if isinstance(source, (str, Path)):
        with open(source, encoding="utf-8") as fh:
            return read_stream(fh)
    domain_size = None
    events: list[TurnstileEvent] = []
    for lineno, s in _iter_stream(source):
        if domain_size is None:
            m = _HEADER.match(s)
            if not m:
                raise StreamParseError(lineno, f"expected header 'D=<domain_size>', got {s!r}")
            domain_size = int(m.group(1))
            if domain_size < 1:
                raise StreamParseError(lineno, "domain size must be >= 1")
            continue
        parts = s.split()
        if len(parts) != 2:
            raise StreamParseError(lineno, f"expected '<index> <increment>', got {s!r}")
        try:
            index = int(parts[0])
            inc = float(parts[1])
        except ValueError:
            raise StreamParseError(lineno, f"malformed event {s!r}") from None
        if not math.isfinite(inc):
            raise StreamParseError(lineno, f"non-finite increment {parts[1]!r}")
        if not 1 <= index <= domain_size:
            raise StreamParseError(lineno, f"index {index} outside [1, {domain_size}]")
        events.append(TurnstileEvent(index, inc))
    if domain_size is None:
        raise StreamParseError(0, "missing 'D=<domain_size>' header")
    return domain_size, events


def _fmt(x: float) -> str:
    return str(int(x)) if x.is_integer() and abs(x) < 2**53 else repr(x)


def write_stream(dest: str | Path | TextIO, domain_size: int, events: Iterable[TurnstileEvent],
                 comment: str | None = None) -> int:
    """Write events in the stream format; returns the number of events written."""
    if isinstance(dest, (str, Path)):
        with open(dest, "w", encoding="utf-8", newline="\n") as fh:
            return write_stream(fh, domain_size, events, comment)
    if comment:
        for line in comment.splitlines():
            dest.write(f"# {line}\n")
    dest.write(f"D={domain_size}\n")
    n = 0
    for ev in events:
        dest.write(f"{ev.index} {_fmt(float(ev.increment))}\n")
        n += 1
    return n
