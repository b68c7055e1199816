"""
Ranking stability (top-K sets), predictive entropy and flip-recall curves.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence

import numpy as np
from scipy.integrate import trapezoid

from config import PROB_CLAMP
from exceptions import InsufficientDataError, ShapeError
from metrics.churn import seed_pairs
from metrics.predictions import PredictionSet

RECALL_LEVELS = (0.1, 0.3)


def _scores(p: np.ndarray) -> np.ndarray:
    """Positive-class probability for probability matrices, the values themselves otherwise."""
    p = np.asarray(p, dtype=np.float64)
    return p[:, 1] if p.ndim == 2 else p


def _tie_keys(n: int, ids: Optional[Sequence[str]]) -> np.ndarray:
    if ids is None:
        return np.arange(n)
    if len(ids) != n:
        raise ShapeError(f"Got {len(ids)} ids for {n} rows")
    keys = np.empty(n, dtype=np.int64)
    keys[np.argsort(np.asarray(ids, dtype=str), kind="stable")] = np.arange(n)
    return keys


def descending_order(scores: np.ndarray, ids: Optional[Sequence[str]] = None) -> np.ndarray:
    """Row positions by descending score, ties by ascending id (row order when ids is None)."""
    scores = np.asarray(scores, dtype=np.float64)
    return np.lexsort((_tie_keys(scores.size, ids), -scores))


def top_k(p: np.ndarray, k: int, ids: Optional[Sequence[str]] = None) -> np.ndarray:
    """
    Row positions of the top-K examples by positive-class probability.

    Raises:
        ShapeError: If K exceeds the number of rows
    """
    scores = _scores(p)
    if not 1 <= k <= scores.size:
        raise ShapeError(f"K={k} must lie in [1, {scores.size}]")
    return descending_order(scores, ids)[:k]


def topk_jaccard(pa: np.ndarray, pb: np.ndarray, k: int, ids: Optional[Sequence[str]] = None) -> float:
    """
    Jaccard overlap of two models' top-K sets.

    Args:
        pa: n x C probabilities (or n scores) of model A
        pb: Same for model B
        k: Set size
        ids: Test ids for tie-breaking

    Returns:
        |T_A & T_B| / |T_A | T_B|
    """
    a = set(top_k(pa, k, ids).tolist())
    b = set(top_k(pb, k, ids).tolist())
    return len(a & b) / len(a | b)


def hit_rate(p: np.ndarray, labels: np.ndarray, k: int, ids: Optional[Sequence[str]] = None) -> float:
    """Fraction of the top-K predicted actives whose label is 1."""
    labels = np.asarray(labels)
    return float(np.mean(labels[top_k(p, k, ids)] == 1))


def pairwise_topk_jaccard(ps: PredictionSet, k: int) -> np.ndarray:
    """Top-K Jaccard for every unordered seed pair."""
    if ps.n_seeds < 2:
        raise InsufficientDataError(f"Need at least 2 seeds, got {ps.n_seeds}")
    return np.array([topk_jaccard(ps.values[i], ps.values[j], k, ps.ids)
                     for i, j in seed_pairs(ps.n_seeds)])


def predictive_entropy(p: np.ndarray):
    """
    Entropy -sum p log p in nats, with clamped logs.

    Args:
        p: Probability vector, or n x C rows

    Returns:
        Float for a vector, array of row entropies for a matrix
    """
    p = np.asarray(p, dtype=np.float64)
    h = -np.sum(p * np.log(np.clip(p, PROB_CLAMP, None)), axis=-1)
    h = np.maximum(h, 0.0)
    return float(h) if h.ndim == 0 else h


@dataclass
class FlipRecallCurve:
    """
    Captured flip-mass fraction against reviewed fraction.

    ``coverage`` and ``recall`` have n+1 points starting at (0, 0). ``aupc``
    is the raw area divided by the area of the mass-sorted (perfect) ranking.
    """

    coverage: np.ndarray
    recall: np.ndarray
    precision: np.ndarray
    recall_at: Dict[float, float] = field(default_factory=dict)
    aupc: float = 0.0
    aupc_raw: float = 0.0


def reviewed_count(q: float, n: int) -> int:
    return min(n, max(0, math.ceil(q * n - 1e-9)))


def _precision_area(mass_sorted: np.ndarray) -> tuple:
    n = mass_sorted.size
    reviewed = np.arange(1, n + 1)
    precision = np.cumsum(mass_sorted) / reviewed
    if n == 1:
        return precision, float(precision[0])
    return precision, float(trapezoid(precision, reviewed / n))


def flip_recall_curve(scores: np.ndarray, flip_mass: np.ndarray,
                      ids: Optional[Sequence[str]] = None,
                      levels: Sequence[float] = RECALL_LEVELS) -> FlipRecallCurve:
    """
    Rank examples by a churn score and measure how much flip mass the top captures.

    Args:
        scores: Per-example score, higher = reviewed first
        flip_mass: Per-example non-negative flip mass
        ids: Test ids for tie-breaking
        levels: Reviewed fractions q at which recall is reported

    Returns:
        FlipRecallCurve; recall@q is read at ceil(q n) reviewed examples

    Raises:
        InsufficientDataError: If the total flip mass is zero
    """
    scores = np.asarray(scores, dtype=np.float64)
    mass = np.asarray(flip_mass, dtype=np.float64)
    if scores.shape != mass.shape or scores.ndim != 1:
        raise ShapeError(f"Scores {scores.shape} and flip mass {mass.shape} must be equal-length vectors")
    if np.any(mass < 0):
        raise ValueError("Flip mass must be non-negative")
    total = float(mass.sum())
    if total <= 0:
        raise InsufficientDataError("Total flip mass is zero; no flips to recall")

    n = mass.size
    ranked = mass[descending_order(scores, ids)]
    recall = np.minimum(np.concatenate([[0.0], np.cumsum(ranked) / total]), 1.0)
    recall[-1] = 1.0
    coverage = np.arange(n + 1) / n
    precision, raw = _precision_area(ranked)
    _, best = _precision_area(np.sort(mass)[::-1])
    return FlipRecallCurve(
        coverage=coverage,
        recall=recall,
        precision=precision,
        recall_at={q: float(recall[reviewed_count(q, n)]) for q in levels},
        aupc=raw / best,
        aupc_raw=raw,
    )
