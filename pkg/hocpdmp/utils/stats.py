"""
Monte Carlo standard errors and mergeable estimator state
"""

import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np
from scipy import stats

from .constants import DEFAULT_BATCHES


def batch_means(values: np.ndarray, batches: int = DEFAULT_BATCHES) -> Tuple[float, float]:
    """
    Mean and batch-means standard error of a correlated sequence.

    The sequence is cut into `batches` contiguous blocks of (almost) equal
    length; the SE is the standard deviation of the block means over
    sqrt(batches).

    Args:
        values: 1D array in sampling order
        batches: Number of contiguous batches

    Returns:
        Tuple of (mean, standard error)
    """
    values = np.asarray(values, dtype=float)
    n = len(values)
    if n == 0:
        raise ValueError("batch_means needs at least one value")
    b = min(batches, n)
    if b < 2:
        return float(values.mean()), float("inf")
    blocks = np.array_split(values, b)
    means = np.array([blk.mean() for blk in blocks])
    sizes = np.array([len(blk) for blk in blocks], dtype=float)
    mean = float(np.dot(means, sizes) / sizes.sum())
    se = float(means.std(ddof=1) / math.sqrt(b))
    return mean, se


def weighted_batch_se(batch_values: np.ndarray) -> float:
    """Standard error of the mean of equally weighted batch values"""
    batch_values = np.asarray(batch_values, dtype=float)
    b = len(batch_values)
    if b < 2:
        return float("inf")
    return float(batch_values.std(ddof=1) / math.sqrt(b))


def ratio_se(num: float, num_se: float, den: float, den_se: float) -> float:
    """Delta-method SE of num/den, dropping the covariance term"""
    if den == 0:
        return float("inf")
    r = num / den
    return float(math.sqrt(num_se ** 2 + (r * den_se) ** 2) / abs(den))


def combined_se(*ses: float) -> float:
    """Root-sum-square of independent standard errors"""
    return float(math.sqrt(sum(s * s for s in ses)))


def ks_exponential(samples: np.ndarray, rate: float) -> Tuple[float, float]:
    """KS statistic and p-value of samples against Exp(rate)"""
    res = stats.kstest(np.asarray(samples, dtype=float), stats.expon(scale=1.0 / rate).cdf)
    return float(res.statistic), float(res.pvalue)


def ks_critical_value(n: int, alpha: float = 0.01) -> float:
    """Asymptotic one-sample KS critical value c(alpha) / sqrt(n)"""
    return float(stats.kstwobign.ppf(1.0 - alpha) / math.sqrt(n))


@dataclass
class MergeableEstimate:
    """
    Batch values keyed by a part id (stream, worker chunk).

    merge() is associative and commutative; finalisation sorts the keys and
    sums with math.fsum so the result never depends on merge order.
    """
    parts: Dict[int, np.ndarray] = field(default_factory=dict)

    def add(self, key: int, batch_values: np.ndarray) -> 'MergeableEstimate':
        if key in self.parts:
            raise ValueError(f"duplicate estimator part {key}")
        self.parts[key] = np.asarray(batch_values, dtype=float)
        return self

    def merge(self, other: 'MergeableEstimate') -> 'MergeableEstimate':
        out = MergeableEstimate(parts=dict(self.parts))
        for key, values in other.parts.items():
            out.add(key, values)
        return out

    def values(self) -> np.ndarray:
        if not self.parts:
            return np.zeros(0)
        return np.concatenate([self.parts[k] for k in sorted(self.parts)])

    @property
    def mean(self) -> float:
        v = self.values()
        return math.fsum(v) / len(v) if len(v) else float("nan")

    @property
    def se(self) -> float:
        v = self.values()
        if len(v) < 2:
            return float("inf")
        m = math.fsum(v) / len(v)
        var = math.fsum((x - m) ** 2 for x in v) / (len(v) - 1)
        return math.sqrt(var / len(v))

    def to_dict(self, label: Optional[str] = None) -> dict:
        d = {"mean": self.mean, "se": self.se, "batches": int(len(self.values()))}
        if label:
            d["label"] = label
        return d
