"""Estimators of ``F_(alpha)`` from the ``k`` counters of a sketch.

Every ``estimate_*`` function takes a 1-D counter vector and returns an
:class:`EstimateResult`.  The matching ``*_values`` functions accept an
array of shape ``(..., k)`` and return raw estimates over the leading axes;
Monte Carlo code uses those to evaluate many trials at once.
"""

from __future__ import annotations

import enum
import math
import threading
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import gamma, gammaln, logsumexp, rgamma

from . import tables
from .tables import order_rank

__all__ = [
    "EstimatorKind",
    "EstimateResult",
    "kappa",
    "log_abs_moment",
    "gm_denominator",
    "estimate_gm",
    "estimate_hm",
    "estimate_mle05",
    "g_function",
    "lambda_domain",
    "optimal_lambda",
    "estimate_op",
    "estimate_quantile",
    "estimate_oq",
    "variance_factor",
    "check_kind",
    "evaluate",
    "order_rank",
]


class EstimatorKind(enum.Enum):
    GEOMETRIC_MEAN = "gm"
    HARMONIC_MEAN = "hm"
    MLE05 = "mle"
    OPTIMAL_POWER = "op"
    QUANTILE = "quantile"
    OPTIMAL_QUANTILE = "oq"

    @classmethod
    def parse(cls, name: str) -> "EstimatorKind":
        key = name.strip().lower()
        for kind in cls:
            if key in (kind.value, kind.name.lower()):
                return kind
        raise ValueError(f"unknown estimator {name!r}; expected one of {[k.value for k in cls]}")


@dataclass(frozen=True)
class EstimateResult:
    value: float
    kind: EstimatorKind
    k: int


def kappa(alpha: float) -> float:
    """``alpha`` below 1, ``2 - alpha`` above 1."""
    if not 0.0 < alpha <= 2.0:
        raise ValueError(f"alpha must lie in (0, 2], got {alpha!r}")
    if alpha == 1.0:
        raise ValueError("alpha = 1 is excluded")
    return alpha if alpha < 1.0 else 2.0 - alpha


def log_abs_moment(gam, alpha: float):
    """``log E|X|**gam`` for ``X ~ S(alpha, 1, 1)``.

    Finite for every ``gam < alpha`` when ``alpha < 1`` (the law is positive),
    for ``-1 < gam < alpha`` when ``1 < alpha < 2``, and for every
    ``gam > -1`` at ``alpha = 2`` (Gaussian); ``nan`` outside.
    """
    kap = kappa(alpha)
    gam = np.asarray(gam, dtype=np.float64)
    if alpha == 2.0:
        # N(0, 2): every moment above -1 exists
        with np.errstate(invalid="ignore"):
            out = gam * math.log(2.0) + gammaln((1.0 + gam) / 2.0) - 0.5 * math.log(math.pi)
        return np.where(gam > -1.0, out, np.nan)
    log_c = math.log(math.cos(kap * math.pi / 2.0))
    if alpha < 1.0:
        out = -(gam / alpha) * log_c + gammaln(1.0 - gam / alpha) - gammaln(1.0 - gam)
        return np.where(gam < alpha, out, np.nan)
    # 1/(Gamma(1-g) cos(pi g/2)) has a removable zero-over-zero at g = 1;
    # (2/pi) Gamma(g) sin(pi g/2) is the same quantity, regular away from g <= 0
    with np.errstate(invalid="ignore", divide="ignore"):
        hi = (2.0 / math.pi) * gamma(np.where(gam > 0.5, gam, 1.0)) * np.sin(math.pi * gam / 2.0)
        lo = rgamma(1.0 - gam) / np.cos(math.pi * gam / 2.0)
        inv = np.where(gam > 0.5, hi, lo)
        val = gamma(1.0 - gam / alpha) * np.cos(kap * gam * math.pi / (2.0 * alpha)) * inv
        out = np.log(val) - (gam / alpha) * log_c
    return np.where((gam > -1.0) & (gam < alpha), out, np.nan)


def gm_denominator(alpha: float, k: int) -> float:
    """Normalizer making ``prod |x_j|**(alpha/k)`` unbiased for ``F_(alpha)``."""
    if k < 2:
        raise ValueError(f"geometric mean needs k >= 2, got {k}")
    kap = kappa(alpha)
    log_val = (
        k * math.log(math.cos(kap * math.pi / (2.0 * k)))
        - math.log(math.cos(kap * math.pi / 2.0))
        + k
        * (
            math.log(2.0 / math.pi)
            + math.log(math.sin(math.pi * alpha / (2.0 * k)))
            + math.lgamma(1.0 - 1.0 / k)
            + math.lgamma(alpha / k)
        )
    )
    return math.exp(log_val)


def _as_counters(counters) -> np.ndarray:
    x = np.asarray(counters, dtype=np.float64)
    if x.ndim < 1 or x.shape[-1] < 1:
        raise ValueError("need at least one counter")
    return x


def gm_values(counters, alpha: float) -> np.ndarray:
    x = _as_counters(counters)
    k = x.shape[-1]
    den = gm_denominator(alpha, k)
    with np.errstate(divide="ignore"):
        log_prod = (alpha / k) * np.log(np.abs(x)).sum(axis=-1)
    # a zero counter yields exp(-inf) = 0
    return np.exp(log_prod - math.log(den))


def estimate_gm(counters, alpha: float) -> EstimateResult:
    """Geometric mean estimator; exactly unbiased, any ``alpha != 1``."""
    x = _as_counters(counters)
    return EstimateResult(float(gm_values(x, alpha)), EstimatorKind.GEOMETRIC_MEAN, x.shape[-1])


def _hm_variance_factor(alpha: float) -> float:
    return 2.0 * math.exp(2.0 * math.lgamma(1.0 + alpha) - math.lgamma(1.0 + 2.0 * alpha)) - 1.0


def hm_values(counters, alpha: float) -> np.ndarray:
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"harmonic mean estimator needs 0 < alpha < 1, got {alpha!r}")
    x = _as_counters(counters)
    if np.any(x <= 0):
        raise ValueError("harmonic mean estimator needs strictly positive counters")
    k = x.shape[-1]
    norm = k * math.cos(alpha * math.pi / 2.0) / math.gamma(1.0 + alpha)
    corr = 1.0 - _hm_variance_factor(alpha) / k
    return norm / np.power(x, -alpha).sum(axis=-1) * corr


def estimate_hm(counters, alpha: float) -> EstimateResult:
    """Bias-corrected harmonic mean estimator, ``0 < alpha < 1``."""
    x = _as_counters(counters)
    return EstimateResult(float(hm_values(x, alpha)), EstimatorKind.HARMONIC_MEAN, x.shape[-1])


def mle05_values(counters) -> np.ndarray:
    x = _as_counters(counters)
    if np.any(x <= 0):
        raise ValueError("alpha = 0.5 MLE needs strictly positive counters")
    k = x.shape[-1]
    return (1.0 - 0.75 / k) * np.sqrt(k / (1.0 / x).sum(axis=-1))


def estimate_mle05(counters) -> EstimateResult:
    """Bias-corrected maximum likelihood estimator at ``alpha = 0.5``."""
    x = _as_counters(counters)
    return EstimateResult(float(mle05_values(x)), EstimatorKind.MLE05, x.shape[-1])


LAMBDA_EPS = 1e-3
LAMBDA_GRID_STEP = 1e-2


def lambda_domain(alpha: float) -> tuple[float, float]:
    """Open interval of exponents with a finite power-estimator variance.

    Upper end ``1/2`` below ``alpha = 2``.  For ``alpha > 1`` the lower end
    is ``-1/(2 alpha)`` (negative moments stop at order -1).  For
    ``alpha < 1`` every negative moment exists and the minimizer drifts to
    ``-inf`` as ``alpha -> 1``; the lower end is a finite cutoff well past
    it.  At ``alpha = 2`` all positive moments exist, so the interval
    extends past ``lambda = 1`` (the arithmetic mean of ``x**2``).
    """
    kappa(alpha)
    if alpha == 2.0:
        return -0.25 + LAMBDA_EPS, 4.0
    if alpha > 1.0:
        return -1.0 / (2.0 * alpha) + LAMBDA_EPS, 0.5 - LAMBDA_EPS
    return -(10.0 / (1.0 - alpha) + 10.0), 0.5 - LAMBDA_EPS


def _power_ratio(lam, alpha: float):
    """``E|x|**(2 lam alpha) / (E|x|**(lam alpha))**2`` in log form."""
    lam = np.asarray(lam, dtype=np.float64)
    return log_abs_moment(2.0 * lam * alpha, alpha) - 2.0 * log_abs_moment(lam * alpha, alpha)


def g_function(lam, alpha: float):
    """Asymptotic variance factor of the ``lam``-power estimator."""
    lam_arr = np.asarray(lam, dtype=np.float64)
    lo, hi = lambda_domain(alpha)
    bad = (lam_arr <= lo) | (lam_arr >= hi) | (lam_arr == 0.0)
    if np.ndim(lam) == 0 and bad:
        raise ValueError(f"lambda={float(lam)!r} outside the finite-variance domain ({lo:g}, {hi:g}) minus 0")
    with np.errstate(invalid="ignore", over="ignore"):
        out = np.expm1(_power_ratio(lam_arr, alpha)) / lam_arr**2
    out = np.where(bad, np.nan, out)
    return float(out) if np.ndim(lam) == 0 else out


def _lambda_grid(alpha: float) -> np.ndarray:
    lo, hi = lambda_domain(alpha)
    near_lo = max(lo, -1.0 / (2.0 * alpha) + LAMBDA_EPS) if alpha < 1.0 else lo
    grid = np.arange(near_lo, hi, LAMBDA_GRID_STEP)
    if alpha < 1.0:
        far = -np.geomspace(-lo, -near_lo, 4000)
        grid = np.concatenate([far[:-1], grid])
    return grid[np.abs(grid) >= LAMBDA_EPS]


_LAMBDA_CACHE: dict[float, float] = {}
_LAMBDA_LOCK = threading.Lock()


def optimal_lambda(alpha: float) -> float:
    """Minimizer of :func:`g_function` over :func:`lambda_domain`.

    A coarse grid brackets the minimum, then golden-section search refines
    it.  A minimum on the domain edge is an error.
    """
    cached = _LAMBDA_CACHE.get(alpha)
    if cached is not None:
        return cached
    grid = _lambda_grid(alpha)
    vals = g_function(grid, alpha)
    vals = np.where(np.isfinite(vals) & (vals > 0), vals, np.inf)
    i = int(np.argmin(vals))
    if not np.isfinite(vals[i]) or i == 0 or i == len(grid) - 1:
        raise ArithmeticError(f"g(lambda; {alpha}) has no interior minimum on the search grid")
    a, b, c = grid[i - 1], grid[i], grid[i + 1]
    if a < 0.0 < c:
        # bracket straddles the excluded point lambda = 0
        a, c = (a, -LAMBDA_EPS) if b < 0 else (LAMBDA_EPS, c)
    res = minimize_scalar(
        lambda t: g_function(t, alpha),
        bracket=(a, b, c),
        method="golden",
        options={"xtol": 1e-8 / max(1.0, abs(b))},
    )
    lam = float(res.x)
    if not (a <= lam <= c) or not res.success:
        raise ArithmeticError(f"golden-section search for lambda* failed at alpha={alpha}")
    with _LAMBDA_LOCK:
        _LAMBDA_CACHE.setdefault(alpha, lam)
    return lam


def op_values(counters, alpha: float, lam: float) -> np.ndarray:
    x = _as_counters(counters)
    g_function(lam, alpha)  # domain check
    if alpha < 1.0 and np.any(x <= 0):
        raise ValueError("power estimator with alpha < 1 needs strictly positive counters")
    k = x.shape[-1]
    gam = lam * alpha
    with np.errstate(divide="ignore"):
        logs = gam * np.log(np.abs(x))
    log_mean = logsumexp(logs, axis=-1) - math.log(k)
    log_m1 = float(log_abs_moment(gam, alpha))
    ratio_m1 = math.expm1(float(_power_ratio(lam, alpha)))
    corr = 1.0 - (1.0 / k) * (1.0 / (2.0 * lam)) * (1.0 / lam - 1.0) * ratio_m1
    return np.exp((log_mean - log_m1) / lam) * corr


def estimate_op(counters, alpha: float, lam: float | None = None) -> EstimateResult:
    """Bias-corrected power estimator; ``lam`` defaults to :func:`optimal_lambda`."""
    x = _as_counters(counters)
    if lam is None:
        lam = optimal_lambda(alpha)
    return EstimateResult(float(op_values(x, alpha, lam)), EstimatorKind.OPTIMAL_POWER, x.shape[-1])


def quantile_values(counters, alpha: float, q: float, w_q: float) -> np.ndarray:
    kappa(alpha)
    if not w_q > 0:
        raise ValueError(f"w_q must be > 0, got {w_q!r}")
    z = np.abs(_as_counters(counters))
    r = order_rank(q, z.shape[-1]) - 1
    stat = np.partition(z, r, axis=-1)[..., r]
    return (stat / w_q) ** alpha


def estimate_quantile(counters, alpha: float, q: float, w_q: float) -> EstimateResult:
    """``(q-quantile of |x| / w_q) ** alpha`` using the ``ceil(q k)``-th order statistic."""
    x = _as_counters(counters)
    return EstimateResult(float(quantile_values(x, alpha, q, w_q)), EstimatorKind.QUANTILE, x.shape[-1])


def estimate_oq(counters, alpha: float) -> EstimateResult:
    """Quantile estimator at the tabulated optimal ``(q*, W_q*)`` for ``alpha``."""
    entry = tables.lookup(alpha)
    x = _as_counters(counters)
    value = float(quantile_values(x, alpha, entry.q_star, entry.w_qstar))
    return EstimateResult(value, EstimatorKind.OPTIMAL_QUANTILE, x.shape[-1])


def check_kind(kind: EstimatorKind, alpha: float) -> None:
    """Raise ``ValueError`` if ``kind`` cannot be used at ``alpha``."""
    kappa(alpha)
    if kind is EstimatorKind.HARMONIC_MEAN and not alpha < 1.0:
        raise ValueError(f"harmonic mean estimator needs alpha < 1, got {alpha}")
    if kind is EstimatorKind.MLE05 and alpha != 0.5:
        raise ValueError(f"MLE estimator is defined only at alpha = 0.5, got {alpha}")
    if kind is EstimatorKind.OPTIMAL_QUANTILE:
        tables.lookup(alpha)


def evaluate(kind: EstimatorKind, counters, alpha: float, *, q: float | None = None,
             w_q: float | None = None, lam: float | None = None) -> np.ndarray:
    """Vectorized estimates for counter arrays of shape ``(..., k)``."""
    check_kind(kind, alpha)
    if kind is EstimatorKind.GEOMETRIC_MEAN:
        return gm_values(counters, alpha)
    if kind is EstimatorKind.HARMONIC_MEAN:
        return hm_values(counters, alpha)
    if kind is EstimatorKind.MLE05:
        return mle05_values(counters)
    if kind is EstimatorKind.OPTIMAL_POWER:
        return op_values(counters, alpha, optimal_lambda(alpha) if lam is None else lam)
    if kind is EstimatorKind.QUANTILE:
        if q is None or w_q is None:
            raise ValueError("quantile estimator needs q and w_q")
        return quantile_values(counters, alpha, q, w_q)
    entry = tables.lookup(alpha)
    return quantile_values(counters, alpha, entry.q_star, entry.w_qstar)


def variance_factor(kind: EstimatorKind, alpha: float) -> float:
    """Asymptotic ``V`` in ``Var(F_hat) = V F**2 / k + O(1/k**2)``.

    The generic quantile estimator has no closed form here; use
    :func:`ccsketch.tables.derive_variance_factor` for it.
    """
    check_kind(kind, alpha)
    if kind is EstimatorKind.GEOMETRIC_MEAN:
        kap = kappa(alpha)
        return math.pi**2 / 12.0 * (alpha**2 + 2.0 - 3.0 * kap**2)
    if kind is EstimatorKind.HARMONIC_MEAN:
        return _hm_variance_factor(alpha)
    if kind is EstimatorKind.MLE05:
        return 0.5
    if kind is EstimatorKind.OPTIMAL_POWER:
        return float(g_function(optimal_lambda(alpha), alpha))
    if kind is EstimatorKind.OPTIMAL_QUANTILE:
        return tables.lookup(alpha).var_factor
    raise ValueError("no closed-form variance factor for an arbitrary quantile; "
                     "use tables.derive_variance_factor")
