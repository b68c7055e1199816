"""
Per-dataset Bayesian optimization of the twin consistency weight.

Trial 1 is a forced lambda=0 baseline that fixes the reference accuracy a0.
The next trials are log-uniform random draws; the rest maximize GP expected
improvement over a log-spaced candidate grid. Every trial trains two
independent twin pairs per fold and scores

    score = -mean_churn - penalty * max(0, a0 - delta - mean_acc)
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from config import (BO_BOUNDS, BO_DELTA, BO_FOLD_SEED, BO_FOLDS, BO_GRID_POINTS, BO_INIT_TRIALS,
                    BO_PENALTY, BO_TRIALS)
from bo.gp import expected_improvement, fit_gp, gp_posterior
from dataio.models import Dataset
from dataio.sampling import kfold_indices
from exceptions import ConfigError, InsufficientDataError
from methods.predictor import Predictor, predict
from methods.spec import OverlapMode
from methods.training import train_twin
from metrics.churn import argmax_churn
from nn_core.optim import TrainConfig
from utils.logger import get_logger
from utils.parallel import run_cells
from utils.rng import derive_seed, stream

logger = get_logger(__name__)


@dataclass
class BoTrial:
    """One evaluated lambda."""

    index: int
    lam: float
    fold_acc: List[float]
    fold_churn: List[float]
    mean_acc: float
    mean_churn: float
    score: float
    baseline: bool = False

    def to_row(self) -> dict:
        return {'trial': self.index, 'lambda': self.lam, 'val_acc': self.mean_acc,
                'val_churn': self.mean_churn, 'score': self.score}


@dataclass
class BoSettings:
    """Search budget and scoring constants."""

    trials: int = BO_TRIALS
    init_trials: int = BO_INIT_TRIALS
    folds: int = BO_FOLDS
    delta: float = BO_DELTA
    penalty: float = BO_PENALTY
    bounds: Tuple[float, float] = BO_BOUNDS
    grid_points: int = BO_GRID_POINTS
    fold_seed: int = BO_FOLD_SEED

    def __post_init__(self):
        lo, hi = self.bounds
        if not 0 < lo < hi:
            raise ConfigError(f"bo bounds must satisfy 0 < lo < hi, got {self.bounds}")
        if self.trials < 1 or self.init_trials < 0:
            raise ConfigError("bo needs trials >= 1 and init_trials >= 0")
        if self.grid_points < 2:
            raise ConfigError("bo candidate grid needs at least 2 points")


def bo_score(mean_acc: float, mean_churn: float, a0: float, delta: float, penalty: float) -> float:
    """Churn objective with a hinge penalty on accuracy shortfall."""
    return -mean_churn - penalty * max(0.0, a0 - delta - mean_acc)


def _fold_quality(pred: Predictor, val: Dataset) -> float:
    out = predict(pred, val.features)
    if val.task.is_classification:
        return float(np.mean(np.argmax(out, axis=1) == val.targets))
    return -float(np.mean(np.abs(out - val.targets)))


def _fold_disagreement(p1: Predictor, p2: Predictor, val: Dataset) -> float:
    a = predict(p1, val.features)
    b = predict(p2, val.features)
    if val.task.is_classification:
        return argmax_churn(a, b)
    return float(np.mean(np.abs(a - b)))


def evaluate_fold(pool: Dataset, fold_train: np.ndarray, fold_val: np.ndarray, cfg: TrainConfig,
                  lam: float, pair_seeds: Tuple[int, int]) -> Tuple[float, float]:
    """
    Train two independent twin pairs on a fold and score them on its validation rows.

    Accuracy is the mean of the two pairs' validation accuracy (negative MAE
    for regression); churn is the disagreement between the two 2-head ensembles.
    """
    train = pool.subset(fold_train)
    val = pool.subset(fold_val)
    pairs = [train_twin(train, cfg, seed, lam, OverlapMode.BOOTSTRAP) for seed in pair_seeds]
    acc = float(np.mean([_fold_quality(p, val) for p in pairs]))
    return acc, _fold_disagreement(pairs[0], pairs[1], val)


def candidate_grid(settings: BoSettings) -> np.ndarray:
    lo, hi = settings.bounds
    return np.linspace(np.log10(lo), np.log10(hi), settings.grid_points)


def bo_lambda_search(pool: Dataset, cfg: TrainConfig, train_seed: int,
                     settings: Optional[BoSettings] = None, n_jobs: int = 1) -> Tuple[float, List[BoTrial]]:
    """
    Search lambda on k folds of the pool.

    Args:
        pool: Training pool
        cfg: Training configuration of the twin pairs
        train_seed: Seed keying the random trials and the twin-pair seeds
        settings: Budget and scoring constants
        n_jobs: Workers for the per-fold trainings

    Returns:
        (lambda with the best score, trial log)

    Raises:
        InsufficientDataError: If the pool cannot be carved into the folds
    """
    settings = settings or BoSettings()
    folds = kfold_indices(np.arange(pool.n), settings.folds, settings.fold_seed)
    if min(f[0].size for f in folds) < 2:
        raise InsufficientDataError("Fold training sets are too small to train on")
    pair_seeds = [(derive_seed("bo_pair", train_seed, f, 0), derive_seed("bo_pair", train_seed, f, 1))
                  for f in range(settings.folds)]
    cache: Dict[float, Tuple[List[float], List[float]]] = {}

    def evaluate(lam: float) -> Tuple[List[float], List[float]]:
        if lam not in cache:
            results = run_cells(evaluate_fold,
                                [(pool, tr, va, cfg, lam, pair_seeds[f]) for f, (tr, va) in enumerate(folds)],
                                n_jobs=n_jobs)
            cache[lam] = ([r[0] for r in results], [r[1] for r in results])
        return cache[lam]

    trials: List[BoTrial] = []
    a0 = None

    def record(lam: float, baseline: bool = False) -> BoTrial:
        nonlocal a0
        accs, churns = evaluate(lam)
        mean_acc = float(np.mean(accs))
        mean_churn = float(np.mean(churns))
        if baseline:
            a0 = mean_acc
        trial = BoTrial(index=len(trials) + 1, lam=lam, fold_acc=accs, fold_churn=churns,
                        mean_acc=mean_acc, mean_churn=mean_churn,
                        score=bo_score(mean_acc, mean_churn, a0, settings.delta, settings.penalty),
                        baseline=baseline)
        trials.append(trial)
        logger.debug("BO trial %d: lambda=%g acc=%.4f churn=%.4f score=%.4f",
                     trial.index, lam, mean_acc, mean_churn, trial.score)
        return trial

    record(0.0, baseline=True)
    lo, hi = np.log10(settings.bounds[0]), np.log10(settings.bounds[1])
    init_rng = stream("bo_init", train_seed)
    for _ in range(min(settings.init_trials, settings.trials - 1)):
        record(float(10.0 ** init_rng.uniform(lo, hi)))

    grid = candidate_grid(settings)
    while len(trials) < settings.trials:
        observed = [t for t in trials if not t.baseline]
        if not observed:
            record(float(10.0 ** init_rng.uniform(lo, hi)))
            continue
        gp = fit_gp([np.log10(t.lam) for t in observed], [t.score for t in observed])
        mu, var = gp_posterior(gp, grid)
        ei = expected_improvement(mu, np.sqrt(var), max(t.score for t in observed))
        record(float(10.0 ** grid[int(np.argmax(ei))]))

    best = max(trials, key=lambda t: t.score)
    logger.info("BO on %s seed %d: lambda*=%g (score %.4f, a0=%.4f)",
                pool.name, train_seed, best.lam, best.score, a0)
    return best.lam, trials


def median_lambda(lambda_stars: Sequence[float]) -> float:
    """
    Median of per-seed lambda* values (mean of the two middles for even counts).

    Raises:
        InsufficientDataError: If the sequence is empty
    """
    values = np.asarray(lambda_stars, dtype=np.float64)
    if values.size == 0:
        raise InsufficientDataError("No lambda values to aggregate")
    return float(np.median(values))


def bo_lambda_stage2(pool: Dataset, cfg: TrainConfig, seeds: Sequence[int],
                     lambda_stars: Sequence[float], n_jobs: int = 1) -> Tuple[float, List[Predictor]]:
    """
    Aggregate per-seed lambda* by the median and retrain a twin on the full pool per seed.

    Returns:
        (dataset lambda, one twin predictor per seed)
    """
    lam = median_lambda(lambda_stars)
    predictors = run_cells(train_twin, [(pool, cfg, s, lam, OverlapMode.BOOTSTRAP) for s in seeds],
                           n_jobs=n_jobs)
    logger.info("Stage 2 on %s: lambda=%g retrained on %d seeds", pool.name, lam, len(seeds))
    return lam, predictors
