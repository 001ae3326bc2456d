"""Error measures between estimated and exact posteriors, and batch-means
confidence intervals over independently restarted chains.

Every measure skips the ``skip`` variables (normally the evidence) and
averages over the rest.  KL divergence and the squared Hellinger distance
use base-2 logarithms and are averaged per variable; MSE and the absolute
error are averaged per variable-value pair.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import NormalDist
from typing import Dict, Iterable, List, Sequence

import numpy as np

from .model import Marginals

# Two-sided t critical values t_{alpha/2, df} for df = 1..30.
_T_TABLE = {
    0.2: (3.0777, 1.8856, 1.6377, 1.5332, 1.4759, 1.4398, 1.4149, 1.3968, 1.3830, 1.3722,
          1.3634, 1.3562, 1.3502, 1.3450, 1.3406, 1.3368, 1.3334, 1.3304, 1.3277, 1.3253,
          1.3232, 1.3212, 1.3195, 1.3178, 1.3163, 1.3150, 1.3137, 1.3125, 1.3114, 1.3104),
    0.1: (6.3138, 2.9200, 2.3534, 2.1318, 2.0150, 1.9432, 1.8946, 1.8595, 1.8331, 1.8125,
          1.7959, 1.7823, 1.7709, 1.7613, 1.7531, 1.7459, 1.7396, 1.7341, 1.7291, 1.7247,
          1.7207, 1.7171, 1.7139, 1.7109, 1.7081, 1.7056, 1.7033, 1.7011, 1.6991, 1.6973),
    0.05: (12.7062, 4.3027, 3.1824, 2.7764, 2.5706, 2.4469, 2.3646, 2.3060, 2.2622, 2.2281,
           2.2010, 2.1788, 2.1604, 2.1448, 2.1314, 2.1199, 2.1098, 2.1009, 2.0930, 2.0860,
           2.0796, 2.0739, 2.0687, 2.0639, 2.0595, 2.0555, 2.0518, 2.0484, 2.0452, 2.0423),
    0.02: (31.8205, 6.9646, 4.5407, 3.7469, 3.3649, 3.1427, 2.9980, 2.8965, 2.8214, 2.7638,
           2.7181, 2.6810, 2.6503, 2.6245, 2.6025, 2.5835, 2.5669, 2.5524, 2.5395, 2.5280,
           2.5176, 2.5083, 2.4999, 2.4922, 2.4851, 2.4786, 2.4727, 2.4671, 2.4620, 2.4573),
    0.01: (63.6567, 9.9248, 5.8409, 4.6041, 4.0321, 3.7074, 3.4995, 3.3554, 3.2498, 3.1693,
           3.1058, 3.0545, 3.0123, 2.9768, 2.9467, 2.9208, 2.8982, 2.8784, 2.8609, 2.8453,
           2.8314, 2.8188, 2.8073, 2.7969, 2.7874, 2.7787, 2.7707, 2.7633, 2.7564, 2.7500),
}


def t_critical(alpha: float, df: int) -> float:
    """Two-sided critical value t_{alpha/2, df}.

    Tabulated for df <= 30; beyond that a Cornish-Fisher expansion around
    the normal quantile, accurate to about 1e-4.
    """
    if df < 1:
        raise ValueError("degrees of freedom must be >= 1")
    key = min(_T_TABLE, key=lambda a: abs(a - alpha))
    if abs(key - alpha) > 1e-12:
        raise ValueError(f"alpha must be one of {sorted(_T_TABLE)}")
    if df <= 30:
        return _T_TABLE[key][df - 1]
    z = NormalDist().inv_cdf(1.0 - alpha / 2.0)
    v = float(df)
    return (z + (z ** 3 + z) / (4 * v)
            + (5 * z ** 5 + 16 * z ** 3 + 3 * z) / (96 * v ** 2)
            + (3 * z ** 7 + 19 * z ** 5 + 17 * z ** 3 - 15 * z) / (384 * v ** 3))


def _pairs(exact: Marginals, est: Marginals, skip: Iterable[int]):
    if len(exact) != len(est):
        raise ValueError("marginals cover different numbers of variables")
    skip = set(skip)
    for i in range(len(exact)):
        if i in skip:
            continue
        p, q = np.asarray(exact[i], dtype=float), np.asarray(est[i], dtype=float)
        if p.shape != q.shape:
            raise ValueError(f"variable {i}: domain sizes differ")
        yield i, p, q


def mse(exact: Marginals, est: Marginals, skip: Iterable[int] = ()) -> float:
    """Mean squared difference over unobserved variable-value pairs."""
    total, count = 0.0, 0
    for _, p, q in _pairs(exact, est, skip):
        total += float(np.sum((p - q) ** 2))
        count += len(p)
    return total / count if count else 0.0


def avg_abs_error(exact: Marginals, est: Marginals, skip: Iterable[int] = ()) -> float:
    """Mean absolute difference over unobserved variable-value pairs."""
    total, count = 0.0, 0
    for _, p, q in _pairs(exact, est, skip):
        total += float(np.sum(np.abs(p - q)))
        count += len(p)
    return total / count if count else 0.0


def kl_per_variable(exact: Marginals, est: Marginals, skip: Iterable[int] = ()) -> Dict[int, float]:
    """sum_x P(x) lg(P(x)/Q(x)) per variable; +inf where Q misses P's support."""
    out = {}
    for i, p, q in _pairs(exact, est, skip):
        d = 0.0
        for a, b in zip(p, q):
            if a <= 0.0:
                continue
            if b <= 0.0:
                d = math.inf
                break
            d += a * math.log2(a / b)
        out[i] = d
    return out


def kl_avg(exact: Marginals, est: Marginals, skip: Iterable[int] = ()) -> float:
    """Average KL divergence over variables with finite divergence."""
    vals = [d for d in kl_per_variable(exact, est, skip).values() if math.isfinite(d)]
    return float(sum(vals) / len(vals)) if vals else 0.0


def kl_infinite(exact: Marginals, est: Marginals, skip: Iterable[int] = ()) -> List[int]:
    """Variables whose divergence is infinite (excluded from kl_avg)."""
    return [i for i, d in kl_per_variable(exact, est, skip).items() if not math.isfinite(d)]


def hellinger_per_variable(exact: Marginals, est: Marginals, skip: Iterable[int] = ()) -> Dict[int, float]:
    return {i: float(np.sum((np.sqrt(p) - np.sqrt(q)) ** 2)) for i, p, q in _pairs(exact, est, skip)}


def hellinger_avg(exact: Marginals, est: Marginals, skip: Iterable[int] = ()) -> float:
    """Average squared Hellinger distance sum_x (sqrt P - sqrt Q)^2."""
    vals = list(hellinger_per_variable(exact, est, skip).values())
    return float(sum(vals) / len(vals)) if vals else 0.0


@dataclass(frozen=True)
class MetricsReport:
    mse: float
    avg_abs_error: float
    kl: float
    kl_infinite: tuple
    hellinger: float
    per_variable: Dict[int, dict]

    def rows(self, names: Sequence[str]) -> List[tuple]:
        """(metric, variable, value) rows, aggregates first under variable '*'."""
        out = [("mse", "*", self.mse), ("abs_error", "*", self.avg_abs_error),
               ("kl", "*", self.kl), ("kl_infinite", "*", float(len(self.kl_infinite))),
               ("hellinger", "*", self.hellinger)]
        for i in sorted(self.per_variable):
            for metric, value in self.per_variable[i].items():
                out.append((metric, names[i], value))
        return out


def compare(exact: Marginals, est: Marginals, skip: Iterable[int] = ()) -> MetricsReport:
    skip = set(skip)
    kl = kl_per_variable(exact, est, skip)
    hel = hellinger_per_variable(exact, est, skip)
    per = {}
    for i, p, q in _pairs(exact, est, skip):
        per[i] = {"mse": float(np.mean((p - q) ** 2)), "abs_error": float(np.mean(np.abs(p - q))),
                  "kl": kl[i], "hellinger": hel[i]}
    return MetricsReport(
        mse=mse(exact, est, skip),
        avg_abs_error=avg_abs_error(exact, est, skip),
        kl=kl_avg(exact, est, skip),
        kl_infinite=tuple(i for i, d in kl.items() if not math.isfinite(d)),
        hellinger=hellinger_avg(exact, est, skip),
        per_variable=per,
    )


# ---------------------------------------------------------------------------
# Batch means


@dataclass(frozen=True)
class ChainStatistics:
    """Per variable: pooled estimate, cross-chain variance and CI half-width."""

    chains: int
    alpha: float
    pooled: tuple
    variance: tuple
    half_width: tuple
    aggregate: float  # half-width averaged over unobserved variable-value pairs


def running_variance(total: np.ndarray, total_sq: np.ndarray, m: int) -> np.ndarray:
    """Sample variance from running sums of x and x^2 over m observations."""
    mean = total / m
    return np.maximum((total_sq - m * mean * mean) / (m - 1), 0.0)


def batch_means_ci(per_chain: Sequence[Marginals], alpha: float = 0.1, skip: Iterable[int] = ()) -> ChainStatistics:
    """Confidence intervals from M independent chains: pooled mean,
    variance of the chain estimates, and half-width t * sqrt(var / M)."""
    m = len(per_chain)
    if m < 2:
        raise ValueError("batch means need at least 2 chains")
    t = t_critical(alpha, m - 1)
    n = len(per_chain[0])
    skip = set(skip)
    pooled, var, half = [], [], []
    widths = []
    for i in range(n):
        total = np.zeros_like(np.asarray(per_chain[0][i], dtype=float))
        total_sq = np.zeros_like(total)
        for est in per_chain:
            x = np.asarray(est[i], dtype=float)
            total = total + x
            total_sq = total_sq + x * x
        s2 = running_variance(total, total_sq, m)
        h = t * np.sqrt(s2 / m)
        pooled.append(total / m)
        var.append(s2)
        half.append(h)
        if i not in skip:
            widths.extend(h.tolist())
    agg = float(np.mean(widths)) if widths else 0.0
    return ChainStatistics(m, alpha, tuple(pooled), tuple(var), tuple(half), agg)
