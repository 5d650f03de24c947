"""Small statistical helpers shared by the Monte Carlo modules."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import InsufficientDataError

N_BATCHES = 50


def gamma2_cdf(x, rate):
    """CDF of Gamma(shape 2, rate): ``1 - exp(-b x) (1 + b x)``."""
    bx = rate * np.maximum(np.asarray(x, dtype=float), 0.0)
    return -np.expm1(-bx) - bx * np.exp(-bx)


def ks_gamma2(samples, rate):
    """Kolmogorov-Smirnov statistic and p-value against Gamma(2, rate)."""
    res = stats.kstest(np.asarray(samples, dtype=float).ravel(), lambda x: gamma2_cdf(x, rate))
    return float(res.statistic), float(res.pvalue)


def ks_exponential(samples, mean):
    res = stats.kstest(np.asarray(samples, dtype=float).ravel(), "expon", args=(0.0, mean))
    return float(res.statistic), float(res.pvalue)


def batch_means(series, n_batches=N_BATCHES):
    """Mean of a (possibly autocorrelated) series and its batch-means standard error.

    ``series`` may be 2-D ``(replicas, time)``; every replica is cut into
    ``n_batches`` contiguous batches and all batches are pooled.
    """
    x = np.atleast_2d(np.asarray(series, dtype=float))
    n = x.shape[1] // n_batches
    if n < 1:
        raise InsufficientDataError(f"need at least {n_batches} samples per replica for batch means")
    b = x[:, : n * n_batches].reshape(x.shape[0], n_batches, n).mean(axis=2).ravel()
    return float(x.mean()), float(b.std(ddof=1) / np.sqrt(len(b)))


def lag1_autocorr(series) -> float:
    """Lag-1 autocorrelation pooled over replicas (rows)."""
    x = np.atleast_2d(np.asarray(series, dtype=float))
    x = x - x.mean(axis=1, keepdims=True)
    den = (x * x).sum()
    if den == 0:
        return 0.0
    return float((x[:, 1:] * x[:, :-1]).sum() / den)


@dataclass(frozen=True)
class TestResult:
    __test__ = False  # not a pytest class

    name: str
    statistic: float
    p_value: float
    passed: bool

    def __post_init__(self):
        object.__setattr__(self, "statistic", float(self.statistic))
        object.__setattr__(self, "p_value", float(self.p_value))
        object.__setattr__(self, "passed", bool(self.passed))

    def row(self):
        return self.name, self.statistic, self.p_value, int(self.passed)
