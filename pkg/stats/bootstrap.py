"""
Paired percentile-bootstrap confidence intervals.
"""

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from config import CI_LEVEL, CI_RESAMPLES
from exceptions import InsufficientDataError
from utils.rng import stream

# resamples are drawn in blocks, each from its own keyed stream
BLOCK_SIZE = 1000


@dataclass(frozen=True)
class CiReport:
    """Point estimate with percentile bootstrap bounds."""

    mean: float
    lo: float
    hi: float
    resamples: int
    seed: int

    def excludes_zero(self) -> bool:
        return self.lo > 0 or self.hi < 0

    def to_dict(self) -> dict:
        return {'mean': self.mean, 'lo': self.lo, 'hi': self.hi,
                'resamples': self.resamples, 'seed': self.seed}

    def __str__(self) -> str:
        return f"{self.mean:.4g} [{self.lo:.4g}, {self.hi:.4g}]"


def bootstrap_means(values: np.ndarray, resamples: int, seed: int, statistic=np.mean) -> np.ndarray:
    """
    Statistic of `resamples` with-replacement resamples of `values`.

    `statistic` is called as statistic(matrix, axis=1) on a block of resamples.
    """
    n = values.size
    out = np.empty(resamples)
    for block in range(math.ceil(resamples / BLOCK_SIZE)):
        start = block * BLOCK_SIZE
        size = min(BLOCK_SIZE, resamples - start)
        idx = stream("ci", seed, block).integers(0, n, size=(size, n))
        out[start:start + size] = statistic(values[idx], axis=1)
    return out


def paired_bootstrap_ci(values: Sequence[float], resamples: int = CI_RESAMPLES, seed: int = 0,
                        level: float = CI_LEVEL) -> CiReport:
    """
    Percentile bootstrap CI of the mean of pair-level statistics.

    For cross-method deltas pass the per-pair differences; pairing is the
    caller's responsibility.

    Args:
        values: Pair-level statistics
        resamples: Number of resamples
        seed: Resampling seed
        level: Two-sided coverage

    Returns:
        CiReport

    Raises:
        InsufficientDataError: If values is empty
    """
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    if values.size == 0:
        raise InsufficientDataError("Cannot bootstrap an empty sample")
    if resamples < 1:
        raise ValueError(f"resamples must be at least 1, got {resamples}")
    means = bootstrap_means(values, resamples, seed)
    tail = 100.0 * (1.0 - level) / 2.0
    lo, hi = np.percentile(means, [tail, 100.0 - tail])
    return CiReport(mean=float(values.mean()), lo=float(lo), hi=float(hi), resamples=resamples, seed=seed)


def bootstrap_ci(values: Sequence[float], statistic, resamples: int = CI_RESAMPLES, seed: int = 0,
                 level: float = CI_LEVEL) -> CiReport:
    """
    Percentile bootstrap CI of an arbitrary statistic (e.g. a sample std).

    Args:
        values: Sample
        statistic: Callable(matrix, axis=1) -> per-row statistic
        resamples: Number of resamples
        seed: Resampling seed
        level: Two-sided coverage

    Returns:
        CiReport whose mean field holds the statistic of the full sample
    """
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    if values.size == 0:
        raise InsufficientDataError("Cannot bootstrap an empty sample")
    stats = bootstrap_means(values, resamples, seed, statistic=statistic)
    tail = 100.0 * (1.0 - level) / 2.0
    lo, hi = np.percentile(stats, [tail, 100.0 - tail])
    point = float(statistic(values[None, :], axis=1)[0])
    return CiReport(mean=point, lo=float(lo), hi=float(hi), resamples=resamples, seed=seed)
