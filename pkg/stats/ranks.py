"""
Friedman rank test, mean ranks and the Nemenyi critical difference.
"""

import math
from dataclasses import dataclass
from itertools import combinations
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import chi2, rankdata

from exceptions import ConfigError, InsufficientDataError

# q_alpha(k) at alpha = 0.05 for k = 2..10 (studentized range / sqrt 2)
NEMENYI_Q05 = {
    2: 1.960, 3: 2.343, 4: 2.569, 5: 2.728, 6: 2.850,
    7: 2.949, 8: 3.031, 9: 3.102, 10: 3.164,
}


def mean_ranks(matrix) -> np.ndarray:
    """
    Within-row ranks (lowest value = rank 1, ties averaged), averaged per column.

    Args:
        matrix: rows x methods values, lower is better

    Returns:
        Mean rank per method

    Raises:
        ValueError: If the matrix contains NaN
    """
    values = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    if np.any(np.isnan(values)):
        raise ValueError("Rank matrix contains NaN")
    return rankdata(values, method="average", axis=1).mean(axis=0)


@dataclass
class RankTable:
    """Datasets x methods values (lower is better) with method names."""

    values: np.ndarray
    methods: Sequence[str]
    datasets: Optional[Sequence[str]] = None

    def __post_init__(self):
        self.values = np.atleast_2d(np.asarray(self.values, dtype=np.float64))
        if self.values.shape[1] != len(self.methods):
            raise ValueError(f"{self.values.shape[1]} value columns for {len(self.methods)} methods")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def k(self) -> int:
        return self.values.shape[1]

    @property
    def ranks(self) -> np.ndarray:
        return rankdata(self.values, method="average", axis=1)

    @property
    def mean_ranks(self) -> np.ndarray:
        return mean_ranks(self.values)


def friedman_from_mean_ranks(ranks: Sequence[float], n: int) -> Tuple[float, int, float]:
    """
    Friedman statistic from per-method mean ranks over n datasets.

    Returns:
        (chi2, df, p) with p from the chi-square upper tail

    Raises:
        InsufficientDataError: If n < 2 or fewer than 2 methods
    """
    ranks = np.asarray(ranks, dtype=np.float64)
    k = ranks.size
    if n < 2 or k < 2:
        raise InsufficientDataError(f"Friedman test needs N >= 2 and k >= 2, got N={n}, k={k}")
    stat = 12.0 * n / (k * (k + 1)) * float(np.sum((ranks - (k + 1) / 2.0) ** 2))
    df = k - 1
    return stat, df, float(chi2.sf(stat, df))


def friedman_test(rt: RankTable) -> Tuple[float, int, float]:
    """Friedman rank test over the table's datasets."""
    return friedman_from_mean_ranks(rt.mean_ranks, rt.n)


def nemenyi_cd(k: int, n: int, alpha: float = 0.05) -> float:
    """
    Nemenyi critical difference q_alpha(k) sqrt(k(k+1) / (6N)).

    Raises:
        ConfigError: If k is outside 2..10 or alpha is not 0.05
    """
    if not math.isclose(alpha, 0.05):
        raise ConfigError(f"Only alpha=0.05 is tabulated, got {alpha}")
    if k not in NEMENYI_Q05:
        raise ConfigError(f"Nemenyi table covers k=2..10, got k={k}")
    if n < 1:
        raise InsufficientDataError("Nemenyi CD needs N >= 1")
    return NEMENYI_Q05[k] * math.sqrt(k * (k + 1) / (6.0 * n))


def significant_pairs(ranks: Sequence[float], cd: float,
                      names: Optional[Sequence[str]] = None) -> List[Tuple[str, str, float]]:
    """Method pairs whose mean-rank gap exceeds the critical difference."""
    ranks = list(ranks)
    names = list(names) if names is not None else [str(i) for i in range(len(ranks))]
    return [(names[i], names[j], abs(ranks[i] - ranks[j]))
            for i, j in combinations(range(len(ranks)), 2)
            if abs(ranks[i] - ranks[j]) > cd]
