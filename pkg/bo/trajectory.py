"""
Greedy BO trajectories on a regression candidate pool and their stability report.
"""

from dataclasses import dataclass, field
from itertools import combinations
from typing import List, Sequence

import numpy as np

from config import CI_RESAMPLES, TRAJECTORY_BUDGET, TRAJECTORY_INIT_SIZE, TRAJECTORY_SEED_STRIDE
from dataio.models import Dataset
from exceptions import ConfigError, InsufficientDataError
from methods.predictor import predict
from methods.spec import MethodKind, MethodSpec
from methods.training import train_method
from metrics.ranking import descending_order
from nn_core.optim import TrainConfig
from stats.bootstrap import CiReport, bootstrap_ci, paired_bootstrap_ci
from utils.logger import get_logger
from utils.rng import stream

logger = get_logger(__name__)


@dataclass
class Trajectory:
    """The acquisitions of one greedy BO run."""

    k: int
    method: str
    acquired: List[int] = field(default_factory=list)
    acquired_y: List[float] = field(default_factory=list)

    @property
    def final_best(self) -> float:
        return max(self.acquired_y) if self.acquired_y else float("nan")

    def to_rows(self) -> List[dict]:
        return [{'method': self.method, 'trajectory': self.k, 'step': t, 'index': i, 'y': y}
                for t, (i, y) in enumerate(zip(self.acquired, self.acquired_y), start=1)]


def initial_labelled(n: int, init_size: int, init_seed: int) -> np.ndarray:
    """Initial labelled rows, keyed by init_seed only and shared across trajectories."""
    return np.sort(stream("bo_init_set", init_seed).permutation(n)[:init_size])


def step_seed(k: int, t: int) -> int:
    return k * TRAJECTORY_SEED_STRIDE + t


def bo_trajectory(ds: Dataset, spec: MethodSpec, k: int, cfg: TrainConfig,
                  budget: int = TRAJECTORY_BUDGET, init_size: int = TRAJECTORY_INIT_SIZE,
                  init_seed: int = 0) -> Trajectory:
    """
    Run one greedy top-1 acquisition trajectory.

    At step t = 1..budget the surrogate is retrained with seed k * 10**6 + t on the
    labelled rows, predicts the unlabelled remainder, and the argmax
    prediction (ties by id) is acquired and its oracle y revealed.

    Args:
        ds: Regression candidate pool with oracle targets
        spec: Surrogate method
        k: Trajectory index
        cfg: Surrogate training configuration
        budget: Number of acquisitions
        init_size: Initial labelled set size
        init_seed: Seed of the initial labelled set

    Returns:
        Trajectory

    Raises:
        ConfigError: If the dataset is not regression or a twin lambda is unset
        InsufficientDataError: If the pool cannot supply init_size + budget rows
    """
    if ds.task.is_classification:
        raise ConfigError("BO trajectories need a regression dataset")
    if spec.kind is MethodKind.TWIN and spec.lam is None:
        raise ConfigError("BO trajectories need a concrete twin lambda")
    if init_size < 1 or budget < 0:
        raise ConfigError(f"Invalid trajectory sizes: init_size={init_size}, budget={budget}")
    if ds.n < init_size + budget:
        raise InsufficientDataError(f"Pool of {ds.n} rows cannot supply {init_size} + {budget} rows")

    labelled = list(initial_labelled(ds.n, init_size, init_seed))
    traj = Trajectory(k=k, method=spec.label)
    for t in range(1, budget + 1):
        taken = set(labelled)
        unlabelled = np.array([i for i in range(ds.n) if i not in taken])
        if unlabelled.size == 0:
            raise InsufficientDataError("Candidate pool exhausted")
        surrogate = train_method(ds.subset(labelled), spec, cfg, step_seed(k, t))
        yhat = predict(surrogate, ds.features[unlabelled])
        best = int(unlabelled[descending_order(yhat, [ds.ids[i] for i in unlabelled])[0]])
        labelled.append(best)
        traj.acquired.append(best)
        traj.acquired_y.append(float(ds.targets[best]))
    logger.debug("Trajectory %d (%s): final best %.4f", k, spec.label, traj.final_best)
    return traj


def jaccard(a: Sequence[int], b: Sequence[int]) -> float:
    sa, sb = set(a), set(b)
    if not sa and not sb:
        return 1.0
    return len(sa & sb) / len(sa | sb)


def _sample_std(values, axis):
    return np.std(values, axis=axis, ddof=1)


@dataclass
class TrajectoryReport:
    """Cross-trajectory stability of one method."""

    method: str
    n_trajectories: int
    final_best: CiReport
    std: CiReport
    std_over_range_pct: float
    mean_jaccard: float

    def to_rows(self) -> List[dict]:
        rows = []
        for metric, ci in (("final_best", self.final_best), ("final_best_std", self.std)):
            rows.append({'method': self.method, 'metric': metric, 'mean': ci.mean, 'lo': ci.lo, 'hi': ci.hi})
        rows.append({'method': self.method, 'metric': 'std_over_range_pct',
                     'mean': self.std_over_range_pct, 'lo': '', 'hi': ''})
        rows.append({'method': self.method, 'metric': 'acquired_jaccard',
                     'mean': self.mean_jaccard, 'lo': '', 'hi': ''})
        return rows


def trajectory_report(trajs: Sequence[Trajectory], y_range: float, resamples: int = CI_RESAMPLES,
                      seed: int = 0) -> TrajectoryReport:
    """
    Final-best mean and sample std with bootstrap CIs over trajectories,
    std as a percentage of the target range, and mean pairwise Jaccard of
    the acquired sets.

    Raises:
        InsufficientDataError: With fewer than 2 trajectories
    """
    if len(trajs) < 2:
        raise InsufficientDataError(f"Need at least 2 trajectories, got {len(trajs)}")
    if y_range <= 0:
        raise ValueError(f"y_range must be positive, got {y_range}")
    finals = np.array([t.final_best for t in trajs])
    std_ci = bootstrap_ci(finals, _sample_std, resamples=resamples, seed=seed)
    jacc = [jaccard(a.acquired, b.acquired) for a, b in combinations(trajs, 2)]
    return TrajectoryReport(
        method=trajs[0].method,
        n_trajectories=len(trajs),
        final_best=paired_bootstrap_ci(finals, resamples=resamples, seed=seed),
        std=std_ci,
        std_over_range_pct=100.0 * std_ci.mean / y_range,
        mean_jaccard=float(np.mean(jacc)),
    )
