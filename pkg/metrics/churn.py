"""
Churn and disagreement between retrainings.
"""

from dataclasses import dataclass
from enum import Enum
from itertools import combinations
from typing import List, Tuple

import numpy as np
from sklearn.metrics import (accuracy_score, average_precision_score, f1_score,
                             precision_score, recall_score)

from exceptions import InsufficientDataError, ShapeError
from metrics.predictions import PredictionSet
from nn_core.losses import symkl_rows
from utils.logger import get_logger

logger = get_logger(__name__)


def argmax_labels(probs: np.ndarray) -> np.ndarray:
    """Predicted classes; np.argmax returns the lowest index among ties."""
    return np.argmax(probs, axis=-1)


def _check_pair(pa: np.ndarray, pb: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    pa = np.asarray(pa, dtype=np.float64)
    pb = np.asarray(pb, dtype=np.float64)
    if pa.shape != pb.shape:
        raise ShapeError(f"Prediction shapes differ: {pa.shape} vs {pb.shape}")
    return pa, pb


def argmax_churn(pa: np.ndarray, pb: np.ndarray) -> float:
    """
    Fraction of rows whose predicted class differs between two models.

    Args:
        pa: n x C probabilities of model A
        pb: n x C probabilities of model B

    Returns:
        Churn rate in [0, 1]
    """
    pa, pb = _check_pair(pa, pb)
    return float(np.mean(argmax_labels(pa) != argmax_labels(pb)))


def symkl_disagreement(pa: np.ndarray, pb: np.ndarray) -> float:
    """
    Mean symmetric KL between two models' predictive distributions.

    Raises:
        ShapeError: If the inputs are not probability matrices
    """
    pa, pb = _check_pair(pa, pb)
    if pa.ndim != 2:
        raise ShapeError("Sym-KL disagreement needs classification probabilities (n x C)")
    return float(np.mean(symkl_rows(pa, pb)))


@dataclass
class PairwiseChurn:
    """Per-pair churn and sym-KL plus per-example flip statistics."""

    pairs: List[Tuple[int, int]]
    churn: np.ndarray
    symkl: np.ndarray
    flip_mass: np.ndarray

    @property
    def per_example(self) -> np.ndarray:
        """Fraction of seed pairs that disagree on each example."""
        return self.flip_mass / len(self.pairs)

    @property
    def mean_churn(self) -> float:
        return float(np.mean(self.churn))

    @property
    def mean_symkl(self) -> float:
        return float(np.mean(self.symkl))


def seed_pairs(n_seeds: int) -> List[Tuple[int, int]]:
    """All unordered seed-position pairs (i, j), i < j, in lexicographic order."""
    return list(combinations(range(n_seeds), 2))


def _require_seeds(ps: PredictionSet, minimum: int = 2) -> None:
    if ps.n_seeds < minimum:
        raise InsufficientDataError(f"Need at least {minimum} seeds, got {ps.n_seeds}")


def _require_classification(ps: PredictionSet) -> None:
    if not ps.is_classification:
        raise ShapeError("Operation needs classification predictions")


def flip_mass(ps: PredictionSet) -> np.ndarray:
    """
    Per-example count of disagreeing seed pairs.

    Computed from class counts: pairs - sum_c C(count_c, 2).
    """
    _require_classification(ps)
    labels = argmax_labels(ps.values)
    counts = np.stack([np.sum(labels == c, axis=0) for c in range(ps.n_classes)])
    s = ps.n_seeds
    agreeing = np.sum(counts * (counts - 1) // 2, axis=0)
    return (s * (s - 1) // 2 - agreeing).astype(np.float64)


def pairwise_churn(ps: PredictionSet) -> PairwiseChurn:
    """
    Churn and sym-KL over all unordered seed pairs.

    Args:
        ps: Classification predictions with >= 2 seeds

    Returns:
        PairwiseChurn with S(S-1)/2 pairs
    """
    _require_classification(ps)
    _require_seeds(ps)
    pairs = seed_pairs(ps.n_seeds)
    labels = argmax_labels(ps.values)
    churn = np.array([np.mean(labels[i] != labels[j]) for i, j in pairs])
    symkl = np.array([np.mean(symkl_rows(ps.values[i], ps.values[j])) for i, j in pairs])
    return PairwiseChurn(pairs=pairs, churn=churn, symkl=symkl, flip_mass=flip_mass(ps))


def per_class_churn(ps: PredictionSet, labels: np.ndarray) -> Tuple[float, float, float]:
    """
    Pairwise churn restricted to the y=0 and y=1 test subsets.

    Args:
        ps: Binary predictions
        labels: True test labels aligned with ps.ids

    Returns:
        (churn | y=0, churn | y=1, overall)

    Raises:
        InsufficientDataError: If a class is absent from the test set
    """
    labels = np.asarray(labels)
    if labels.shape != (ps.n_examples,):
        raise ShapeError(f"Expected {ps.n_examples} labels, got shape {labels.shape}")
    per_example = pairwise_churn(ps).per_example
    out = []
    for c in (0, 1):
        rows = labels == c
        if not np.any(rows):
            raise InsufficientDataError(f"Class y={c} is absent from the test set")
        out.append(float(np.mean(per_example[rows])))
    return out[0], out[1], float(np.mean(per_example))


class DriftMetric(str, Enum):
    ACC = "acc"
    PRECISION = "precision"
    RECALL = "recall"
    F1 = "f1"
    AP = "ap"


def zero_division_seeds(ps: PredictionSet, labels: np.ndarray, metric: DriftMetric) -> np.ndarray:
    """
    Per-seed mask of seeds whose metric has an empty denominator.

    Precision divides by predicted positives; recall and F1 by true positives.
    Accuracy and AP never hit this case.
    """
    _require_classification(ps)
    metric = DriftMetric(metric)
    if metric in (DriftMetric.ACC, DriftMetric.AP):
        return np.zeros(ps.n_seeds, dtype=bool)
    if metric is DriftMetric.PRECISION:
        return ~np.any(argmax_labels(ps.values) == 1, axis=1)
    return np.full(ps.n_seeds, not np.any(np.asarray(labels) == 1))


def per_seed_metric(ps: PredictionSet, labels: np.ndarray, metric: DriftMetric) -> np.ndarray:
    """
    One aggregate metric per seed on the test set.

    Precision/recall with an empty denominator count as 0 (logged, and
    reported by zero_division_seeds). AP of a test set without positives is
    undefined.

    Raises:
        InsufficientDataError: For AP on an all-negative test set
    """
    _require_classification(ps)
    metric = DriftMetric(metric)
    labels = np.asarray(labels, dtype=np.int64)
    if metric is DriftMetric.AP and not np.any(labels == 1):
        raise InsufficientDataError("Average precision is undefined without positive labels")
    zero = zero_division_seeds(ps, labels, metric)
    values = []
    for s in range(ps.n_seeds):
        pred = argmax_labels(ps.values[s])
        if metric is DriftMetric.ACC:
            values.append(accuracy_score(labels, pred))
        elif metric is DriftMetric.AP:
            values.append(average_precision_score(labels, ps.values[s, :, 1]))
        else:
            if zero[s]:
                logger.warning("Seed %d has an empty %s denominator; set to 0", ps.seeds[s], metric.value)
            fn = {DriftMetric.PRECISION: precision_score, DriftMetric.RECALL: recall_score,
                  DriftMetric.F1: f1_score}[metric]
            values.append(fn(labels, pred, zero_division=0))
    return np.asarray(values, dtype=np.float64)


def aggregate_drift_pairs(ps: PredictionSet, labels: np.ndarray, metric: DriftMetric) -> np.ndarray:
    """Per-pair |metric_s - metric_s'| in percentage points."""
    _require_seeds(ps)
    values = per_seed_metric(ps, labels, metric)
    return np.array([100.0 * abs(values[i] - values[j]) for i, j in seed_pairs(ps.n_seeds)])


def aggregate_drift(ps: PredictionSet, labels: np.ndarray, metric: DriftMetric) -> float:
    """
    Mean absolute metric difference over seed pairs, in percentage points.

    Args:
        ps: Binary predictions
        labels: True test labels
        metric: acc, precision, recall, f1 or ap

    Returns:
        Mean |delta| in pp
    """
    return float(np.mean(aggregate_drift_pairs(ps, labels, metric)))


@dataclass
class RegressionChurn:
    """Regression churn summary."""

    churn: float
    mae: float
    ratio: float
    per_pair: np.ndarray


def regression_pair_churn(ps: PredictionSet) -> np.ndarray:
    """Mean |f_A - f_B| over examples for every seed pair; needs no targets."""
    if ps.is_classification:
        raise ShapeError("regression_pair_churn needs regression predictions")
    _require_seeds(ps)
    return np.array([np.mean(np.abs(ps.values[i] - ps.values[j])) for i, j in seed_pairs(ps.n_seeds)])


def regression_churn(ps: PredictionSet, targets: np.ndarray) -> RegressionChurn:
    """
    Mean |f_A - f_B| over seed pairs and examples, the seed-mean MAE, and their ratio.

    Raises:
        ShapeError: For classification input
    """
    if ps.is_classification:
        raise ShapeError("regression_churn needs regression predictions")
    _require_seeds(ps)
    targets = np.asarray(targets, dtype=np.float64)
    if targets.shape != (ps.n_examples,):
        raise ShapeError(f"Expected {ps.n_examples} targets, got shape {targets.shape}")
    per_pair = regression_pair_churn(ps)
    churn = float(np.mean(per_pair))
    mae = float(np.mean(np.abs(ps.values - targets[None, :])))
    ratio = churn / mae if mae > 0 else float("nan")
    return RegressionChurn(churn=churn, mae=mae, ratio=ratio, per_pair=per_pair)


def seed_accuracies(ps: PredictionSet, labels: np.ndarray) -> np.ndarray:
    """Per-seed accuracy (classification) or MAE (regression)."""
    if ps.is_classification:
        return np.mean(argmax_labels(ps.values) == np.asarray(labels)[None, :], axis=1)
    return np.mean(np.abs(ps.values - np.asarray(labels, dtype=np.float64)[None, :]), axis=1)


def seed_stripes(ps: PredictionSet) -> Tuple[np.ndarray, np.ndarray]:
    """
    Seeds x examples predicted-class matrix, columns ordered by descending churn.

    Returns:
        (column order as example positions, S x n argmax matrix in that order)
    """
    _require_seeds(ps)
    mass = flip_mass(ps)
    order = np.lexsort((np.arange(ps.n_examples), -mass))
    return order, argmax_labels(ps.values)[:, order]


def inter_head_symkl(predictor, X: np.ndarray) -> float:
    """
    Mean disagreement between the two heads of a twin predictor.

    Sym-KL for classification; mean squared difference for regression.
    """
    heads = predictor.head_predictions(X)
    if heads.shape[0] != 2:
        raise ShapeError(f"Expected a two-head predictor, got {heads.shape[0]} heads")
    if heads.ndim == 3:
        return symkl_disagreement(heads[0], heads[1])
    return float(np.mean((heads[0] - heads[1]) ** 2))
