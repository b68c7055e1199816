"""
Pure analysis routines of the study designs: lambda selection rules,
log-log slopes, triage convergence, the entropy baseline and the compute
footprint table.
"""

from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from config import (LAMBDA_TOLERANCE, REGRESSION_LAMBDA_GRID, REGRESSION_MAE_TOLERANCE,
                    TRIAGE_REVIEW_FRAC, TRIAGE_SUBSET_SIZES, TRIAGE_SUBSETS)
from exceptions import InsufficientDataError
from methods.spec import MethodKind, MethodSpec
from metrics.churn import argmax_labels, flip_mass
from metrics.predictions import PredictionSet
from metrics.ranking import flip_recall_curve, predictive_entropy
from utils.logger import get_logger
from utils.rng import stream

logger = get_logger(__name__)

_SLACK = 1e-12


@dataclass
class SweepPoint:
    """
    One operating point of the lambda sweep.

    ``quality`` is id-accuracy for classification and id-MAE for regression;
    reference points (ERM, bagging) carry ``lam=None``.
    """

    label: str
    lam: Optional[float]
    quality: float
    quality_lo: float
    quality_hi: float
    churn: float
    churn_lo: float
    churn_hi: float
    symkl: float = float("nan")
    symkl_lo: float = float("nan")
    symkl_hi: float = float("nan")
    inter_head_symkl: float = float("nan")

    def to_dict(self) -> dict:
        return {
            'label': self.label, 'lambda': '' if self.lam is None else self.lam,
            'quality': self.quality, 'quality_lo': self.quality_lo, 'quality_hi': self.quality_hi,
            'churn': self.churn, 'churn_lo': self.churn_lo, 'churn_hi': self.churn_hi,
            'symkl': self.symkl, 'symkl_lo': self.symkl_lo, 'symkl_hi': self.symkl_hi,
            'inter_head_symkl': self.inter_head_symkl,
        }


SweepLike = Union[Sequence[SweepPoint], Mapping[float, float]]


def _lambda_quality(sweep: SweepLike) -> List[Tuple[float, float]]:
    if isinstance(sweep, Mapping):
        return [(float(lam), float(q)) for lam, q in sweep.items()]
    return [(p.lam, p.quality) for p in sweep if p.lam is not None]


def select_lambda(sweep: SweepLike, erm_acc: float, tolerance: float = LAMBDA_TOLERANCE) -> Optional[float]:
    """
    Largest lambda whose id-accuracy is within `tolerance` of ERM's.

    Args:
        sweep: Sweep points, or a mapping lambda -> id-accuracy
        erm_acc: ERM id-accuracy
        tolerance: Allowed accuracy drop

    Returns:
        The selected lambda, or None when every lambda falls short
    """
    passing = [lam for lam, acc in _lambda_quality(sweep) if acc >= erm_acc - tolerance - _SLACK]
    return max(passing) if passing else None


def select_lambda_regression(sweep: SweepLike, erm_mae: float,
                             tolerance: float = REGRESSION_MAE_TOLERANCE,
                             grid: Sequence[float] = REGRESSION_LAMBDA_GRID) -> Optional[float]:
    """
    Largest lambda of the regression grid whose id-MAE stays within `tolerance` of ERM's.
    """
    allowed = {float(g) for g in grid}
    passing = [lam for lam, mae in _lambda_quality(sweep)
               if lam in allowed and mae <= erm_mae + tolerance + _SLACK]
    return max(passing) if passing else None


def pareto_front(points: Sequence[SweepPoint], higher_quality_is_better: bool = True) -> List[bool]:
    """
    Flag the sweep points not dominated in (quality, churn).

    A point is dominated when another is at least as good on both axes and
    strictly better on one; lower churn is always better.
    """
    sign = 1.0 if higher_quality_is_better else -1.0
    flags = []
    for p in points:
        dominated = any(
            sign * q.quality >= sign * p.quality and q.churn <= p.churn
            and (sign * q.quality > sign * p.quality or q.churn < p.churn)
            for q in points if q is not p)
        flags.append(not dominated)
    return flags


def loglog_slope(ms: Sequence[float], values: Sequence[float]) -> float:
    """
    Least-squares slope of ln(values) on ln(ms).

    Raises:
        InsufficientDataError: With fewer than 2 points or non-positive entries
    """
    ms = np.asarray(ms, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if ms.size < 2 or ms.shape != values.shape:
        raise InsufficientDataError("A log-log slope needs at least 2 matching points")
    if np.any(ms <= 0) or np.any(values <= 0):
        raise InsufficientDataError("A log-log slope needs positive values")
    slope, _ = np.polyfit(np.log(ms), np.log(values), 1)
    return float(slope)


def subset_churn_score(ps: PredictionSet, seeds: Sequence[int]) -> np.ndarray:
    """Per-example churn estimated from a subset of seed positions."""
    sub = ps.subset_seeds(sorted(seeds))
    s = sub.n_seeds
    return flip_mass(sub) / (s * (s - 1) // 2)


def triage_convergence(ps: PredictionSet, subset_sizes: Sequence[int] = TRIAGE_SUBSET_SIZES,
                       n_subsets: int = TRIAGE_SUBSETS, review_frac: float = TRIAGE_REVIEW_FRAC,
                       seed: int = 0) -> List[dict]:
    """
    Recall of gold flip mass when ranking by churn estimated from K' seeds.

    Gold flip mass uses every seed. For K' below the seed count, recall is
    averaged over `n_subsets` random K'-subsets; K' equal to the seed count
    uses the single full set.

    Returns:
        Rows with k, subsets, mean recall and its standard deviation

    Raises:
        InsufficientDataError: If a subset size exceeds the seed count or is < 2
    """
    if max(subset_sizes) > ps.n_seeds or min(subset_sizes) < 2:
        raise InsufficientDataError(f"Subset sizes {list(subset_sizes)} need 2..{ps.n_seeds} seeds")
    gold = flip_mass(ps)
    rows = []
    for k in subset_sizes:
        if k == ps.n_seeds:
            subsets = [list(range(k))]
        else:
            subsets = [stream("triage", seed, k, j).choice(ps.n_seeds, size=k, replace=False)
                       for j in range(n_subsets)]
        recalls = [flip_recall_curve(subset_churn_score(ps, s), gold, ps.ids,
                                     levels=(review_frac,)).recall_at[review_frac]
                   for s in subsets]
        rows.append({'k': k, 'subsets': len(subsets), 'review_frac': review_frac,
                     'recall': float(np.mean(recalls)), 'recall_std': float(np.std(recalls))})
        logger.debug("Triage K'=%d: recall@%.2f = %.3f", k, review_frac, rows[-1]['recall'])
    return rows


def entropy_vs_churn(ps: PredictionSet, entropy_seed: int = 0,
                     churn_pair: Tuple[int, int] = (0, 1)) -> List[dict]:
    """
    Compare a two-seed churn score with single-model predictive entropy as
    predictors of gold flip mass.

    Args:
        ps: Classification predictions over >= 2 seeds
        entropy_seed: Seed position whose predictions give the entropy score
        churn_pair: Seed positions whose disagreement gives the churn score

    Returns:
        One row per score with recall@0.1, recall@0.3, AuPC and raw AuPC
    """
    gold = flip_mass(ps)
    labels = argmax_labels(ps.values)
    i, j = churn_pair
    scores: Dict[str, np.ndarray] = {
        'churn_k2': (labels[i] != labels[j]).astype(np.float64),
        'entropy': predictive_entropy(ps.values[entropy_seed]),
    }
    rows = []
    for name, score in scores.items():
        curve = flip_recall_curve(score, gold, ps.ids)
        rows.append({'score': name, 'recall_at_0.1': curve.recall_at[0.1],
                     'recall_at_0.3': curve.recall_at[0.3], 'aupc': curve.aupc, 'aupc_raw': curve.aupc_raw})
    return rows


@dataclass(frozen=True)
class FootprintRow:
    """Per-step training cost and inference fan-out in ERM units."""

    method: str
    train_fwd: str
    train_bwd: str
    test_models: str
    wallclock: str

    def to_dict(self) -> dict:
        return {'method': self.method, 'train_fwd_per_step': self.train_fwd,
                'train_bwd_per_step': self.train_bwd, 'test_models': self.test_models,
                'wallclock_vs_erm': self.wallclock}


def compute_footprint(spec: MethodSpec) -> FootprintRow:
    """Static compute accounting for one method."""
    kind = spec.kind
    if kind is MethodKind.TWIN:
        return FootprintRow(spec.label, "4", "1 (joint)", "2", "~2x")
    if kind in (MethodKind.DEEP_ENSEMBLE, MethodKind.BAGGING):
        k = spec.k
        wall = "1x" if k == 1 else f"{k}x (sequential)"
        return FootprintRow(spec.label, str(k), str(k), str(k), wall)
    if kind is MethodKind.MC_DROPOUT:
        return FootprintRow(spec.label, "1", "1", f"1 ({spec.passes} passes)", "1x")
    return FootprintRow(spec.label, "1", "1", "1", "1x")


FOOTPRINT_METHODS = ("erm", "deep_ensemble:K=5", "bagging:K=2", "bagging:K=5", "twin:lambda=auto")


def footprint_table(methods: Sequence[str] = FOOTPRINT_METHODS) -> List[FootprintRow]:
    return [compute_footprint(MethodSpec.parse(m)) for m in methods]
