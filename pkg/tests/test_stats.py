"""
Tests for bootstrap confidence intervals and the rank tests.
"""

import numpy as np
import pytest

from exceptions import ConfigError, InsufficientDataError
from stats.bootstrap import bootstrap_ci, paired_bootstrap_ci
from stats.ranks import (RankTable, friedman_from_mean_ranks, friedman_test, mean_ranks, nemenyi_cd,
                         significant_pairs)

PUBLISHED_MEAN_RANKS = [1.44, 1.67, 2.89, 4.94, 5.17, 5.78, 6.11]


def test_friedman_from_published_mean_ranks():
    """Test the chi-square from seven methods ranked over nine datasets."""
    stat, df, p = friedman_from_mean_ranks(PUBLISHED_MEAN_RANKS, 9)

    assert 44.0 <= stat <= 45.2
    assert df == 6
    assert p < 1e-7


def test_nemenyi_critical_difference():
    """Test CD for seven methods on nine datasets and its monotonicity in N."""
    assert nemenyi_cd(7, 9) == pytest.approx(3.00, abs=0.02)
    assert nemenyi_cd(7, 20) < nemenyi_cd(7, 9)


@pytest.mark.parametrize("k", [1, 11])
def test_nemenyi_outside_table(k):
    """Test that k outside the tabulated range is refused."""
    with pytest.raises(ConfigError, match="k=2..10"):
        nemenyi_cd(k, 9)


def test_friedman_needs_two_datasets():
    """Test that one dataset is not enough for a rank test."""
    with pytest.raises(InsufficientDataError):
        friedman_from_mean_ranks([1.0, 2.0], 1)


def test_mean_ranks_average_ties():
    """Test within-row ranking with ties averaged."""
    ranks = mean_ranks([[0.1, 0.2, 0.2], [0.3, 0.1, 0.2]])

    assert ranks.tolist() == [2.0, 1.75, 2.25]
    assert mean_ranks([[3.0, 1.0, 2.0]]).tolist() == [3.0, 1.0, 2.0]


def test_friedman_depends_only_on_ranks():
    """Test that a monotone transform of the values leaves the statistic unchanged."""
    rng = np.random.default_rng(5)
    values = rng.random((6, 4))
    rt = RankTable(values, ["a", "b", "c", "d"])

    assert friedman_test(rt)[0] == pytest.approx(friedman_test(RankTable(np.exp(3 * values), rt.methods))[0])
    assert rt.ranks.shape == (6, 4)


def test_rank_table_checks_columns():
    """Test that method names must match the value columns."""
    with pytest.raises(ValueError):
        RankTable(np.ones((2, 3)), ["a", "b"])


def test_significant_pairs():
    """Test that only gaps beyond the critical difference are reported."""
    pairs = significant_pairs(PUBLISHED_MEAN_RANKS[:3] + [6.11], 3.5, ["twin", "bag", "ens", "erm"])

    assert [(a, b) for a, b, _ in pairs] == [("twin", "erm"), ("bag", "erm")]
    assert pairs[0][2] == pytest.approx(4.67)


def test_paired_bootstrap_ci_is_deterministic():
    """Test that the CI depends only on the values and the seed."""
    values = np.random.default_rng(0).normal(0.1, 0.05, size=45)
    a = paired_bootstrap_ci(values, resamples=2500, seed=7)
    b = paired_bootstrap_ci(values, resamples=2500, seed=7)
    c = paired_bootstrap_ci(values, resamples=2500, seed=8)

    assert a == b
    assert (a.lo, a.hi) != (c.lo, c.hi)
    assert a.lo <= a.mean <= a.hi
    assert a.mean == pytest.approx(values.mean())
    assert a.excludes_zero()


def test_paired_bootstrap_ci_of_constant_sample():
    """Test that a constant sample has a degenerate interval."""
    report = paired_bootstrap_ci([0.2] * 10, resamples=100)

    assert report.lo == report.hi == pytest.approx(0.2)


def test_paired_bootstrap_ci_rejects_empty():
    """Test that an empty sample cannot be bootstrapped."""
    with pytest.raises(InsufficientDataError):
        paired_bootstrap_ci([])


def test_bootstrap_ci_of_standard_deviation():
    """Test a CI around a sample standard deviation."""
    values = np.random.default_rng(1).normal(0.0, 2.0, size=200)
    report = bootstrap_ci(values, lambda m, axis: np.std(m, axis=axis, ddof=1), resamples=1000, seed=0)

    assert report.mean == pytest.approx(values.std(ddof=1))
    assert report.lo < report.mean < report.hi
    assert report.to_dict()["resamples"] == 1000
