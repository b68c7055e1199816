"""
Canonical splitting, bootstrap sampling, overlap statistics and the
majority-class inclusion filter.
"""

import math
from typing import List, Sequence, Tuple

import numpy as np

from config import (FILTER_BORDERLINE_GAP_PP, FILTER_BORDERLINE_MIN_TEST,
                    FILTER_PASS_GAP_PP, FILTER_PASS_MIN_TEST)
from dataio.models import (BootstrapSample, Dataset, FilterOutcome, FilterVerdict,
                           OverlapStats, Split)
from exceptions import InsufficientDataError, ShapeError, SplitError
from utils.logger import get_logger
from utils.rng import stream

logger = get_logger(__name__)

_EPS = 1e-9


def make_canonical_split(dataset: Dataset, canonical_seed: int, test_frac: float) -> Split:
    """
    Shuffle the rows with a stream keyed by the canonical seed and cut them
    into a training pool and an id-test set.

    Args:
        dataset: Dataset to split
        canonical_seed: Seed that fixes the split
        test_frac: Fraction of rows held out, 0 < test_frac < 1

    Returns:
        Split whose first ceil(N * (1 - test_frac)) shuffled rows form the pool

    Raises:
        SplitError: If either side would be empty
    """
    if not 0.0 < test_frac < 1.0:
        raise SplitError(f"test_frac must lie in (0, 1), got {test_frac}")
    n = dataset.n
    if n * test_frac < 1.0 - _EPS:
        raise SplitError(f"test_frac={test_frac} leaves no test rows for N={n}")
    n_train = math.ceil(n * (1.0 - test_frac) - _EPS)
    if n_train < 1 or n_train >= n:
        raise SplitError(f"Degenerate split sizes: {n_train} train / {n - n_train} test")

    order = stream("split", canonical_seed).permutation(n)
    split = Split(canonical_seed=canonical_seed,
                  train_pool=order[:n_train].astype(np.int64),
                  id_test=order[n_train:].astype(np.int64))
    logger.debug("Canonical split %d of %s: %d train / %d test",
                 canonical_seed, dataset.name, n_train, n - n_train)
    return split


def draw_bootstrap(pool: Sequence[int], seed: int, *subkeys: int) -> BootstrapSample:
    """
    Draw |pool| indices uniformly with replacement from the pool.

    Args:
        pool: Pool of row indices
        seed: Train seed keying the stream
        *subkeys: Further stream keys (member index, epoch, ...)

    Returns:
        BootstrapSample of the same length as the pool

    Raises:
        InsufficientDataError: If the pool is empty
    """
    pool = np.asarray(pool, dtype=np.int64)
    if pool.size == 0:
        raise InsufficientDataError("Cannot bootstrap an empty pool")
    draws = stream("bootstrap", seed, *subkeys).integers(0, pool.size, size=pool.size)
    return BootstrapSample(seed=seed, indices=pool[draws], pool_size=pool.size)


def overlap_stats(a: BootstrapSample, b: BootstrapSample) -> OverlapStats:
    """
    Unique-index overlap of two bootstraps drawn from the same pool.

    Args:
        a: First sample
        b: Second sample

    Returns:
        OverlapStats with shared fraction |unique(a) & unique(b)| / |pool|

    Raises:
        ShapeError: If the samples come from pools of different sizes
    """
    if a.pool_size != b.pool_size or a.indices.size != b.indices.size:
        raise ShapeError(f"Bootstrap pool mismatch: {a.pool_size} vs {b.pool_size}")
    shared = np.intersect1d(a.unique, b.unique, assume_unique=True).size
    return OverlapStats(shared_unique_frac=shared / a.pool_size,
                        unique_frac_a=a.unique_frac,
                        unique_frac_b=b.unique_frac)


def shared_unique_frac(indices_a: np.ndarray, indices_b: np.ndarray, pool_size: int) -> float:
    """Shared unique-index fraction of two raw index multisets."""
    shared = np.intersect1d(np.unique(indices_a), np.unique(indices_b), assume_unique=True).size
    return shared / pool_size


def majority_fraction(labels: Sequence[int]) -> float:
    """
    Largest class proportion of a label vector.

    Args:
        labels: Integer class labels

    Returns:
        Fraction of the most frequent class
    """
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        raise InsufficientDataError("Majority fraction of an empty label set")
    return float(np.bincount(labels).max() / labels.size)


def majority_filter(erm_acc: float, majority_frac: float, test_n: int,
                    dataset: str = "") -> FilterOutcome:
    """
    Apply the ERM-vs-majority inclusion rule.

    pass: gap >= 5 pp and test_n >= 60; borderline: 3 <= gap < 5 pp and
    test_n >= 50; fail otherwise.

    Args:
        erm_acc: Mean ERM id-test accuracy
        majority_frac: Largest class proportion on the id-test set
        test_n: Id-test size
        dataset: Dataset name for the report

    Returns:
        FilterOutcome
    """
    gap_pp = 100.0 * (erm_acc - majority_frac)
    if gap_pp >= FILTER_PASS_GAP_PP - _EPS and test_n >= FILTER_PASS_MIN_TEST:
        verdict = FilterVerdict.PASS
    elif (FILTER_BORDERLINE_GAP_PP - _EPS <= gap_pp < FILTER_PASS_GAP_PP - _EPS
          and test_n >= FILTER_BORDERLINE_MIN_TEST):
        verdict = FilterVerdict.BORDERLINE
    else:
        verdict = FilterVerdict.FAIL
    outcome = FilterOutcome(erm_acc=erm_acc, majority_frac=majority_frac, gap_pp=gap_pp,
                            verdict=verdict, test_n=int(test_n), dataset=dataset)
    logger.info("Majority filter %s: gap %+.1f pp on %d test rows -> %s",
                dataset or "<dataset>", gap_pp, test_n, verdict.value)
    return outcome


def kfold_indices(pool: Sequence[int], k: int, seed: int) -> List[Tuple[np.ndarray, np.ndarray]]:
    """
    Carve a pool deterministically into k (fold_train, fold_val) pairs.

    Args:
        pool: Row indices
        k: Number of folds
        seed: Fold seed

    Returns:
        List of k (train indices, validation indices)

    Raises:
        InsufficientDataError: If a fold would be too small to train on
    """
    pool = np.asarray(pool, dtype=np.int64)
    if k < 2 or pool.size < 2 * k:
        raise InsufficientDataError(f"Pool of {pool.size} rows cannot be split into {k} folds")
    shuffled = pool[stream("folds", seed).permutation(pool.size)]
    parts = np.array_split(shuffled, k)
    folds = []
    for f in range(k):
        train = np.concatenate([parts[g] for g in range(k) if g != f])
        folds.append((train, parts[f]))
    return folds
