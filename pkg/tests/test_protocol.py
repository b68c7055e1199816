"""
Tests for the analysis rules and small end-to-end protocol runs.
"""

import math

import numpy as np
import pytest

from core.analysis import (SweepPoint, entropy_vs_churn, footprint_table, loglog_slope, pareto_front,
                           select_lambda, select_lambda_regression, triage_convergence)
from core.protocol import ROW_FIELDS, ExperimentRunner, ProtocolSettings, train_and_predict
from dataio.synthetic import SyntheticSpec, generate_synthetic
from exceptions import ConfigError, InsufficientDataError, TrainingError
from methods.spec import MethodKind, MethodSpec
from metrics.churn import pairwise_churn
from metrics.ranking import flip_recall_curve
from nn_core.optim import TrainConfig

WORKED_SWEEP = {1.0: 0.781, 3.0: 0.769, 10.0: 0.747, 30.0: 0.706, 100.0: 0.613, 300.0: 0.582}


def _point(label, lam, quality, churn) -> SweepPoint:
    return SweepPoint(label=label, lam=lam, quality=quality, quality_lo=quality, quality_hi=quality,
                      churn=churn, churn_lo=churn, churn_hi=churn)


@pytest.fixture
def fast_settings():
    """Three seeds, one replicate, a short grid and few resamples."""
    return ProtocolSettings(train_seeds=(0, 1, 2), canonical_seeds=(99,), resamples=200,
                            lambda_grid=(1.0, 10.0), sweep_references=("erm",), exempt_filter=True)


def test_select_lambda_worked_example():
    """Test the tolerance rule on a sweep where lambda=10 is the largest passing value."""
    assert select_lambda(WORKED_SWEEP, 0.742, 0.02) == 10.0


def test_select_lambda_accepts_sweep_points():
    """Test that reference points without lambda are ignored."""
    points = [_point("erm", None, 0.9, 0.1)] + [_point(f"twin:lambda={k:g}", k, v, 0.05)
                                                for k, v in WORKED_SWEEP.items()]

    assert select_lambda(points, 0.742) == 10.0


def test_select_lambda_is_monotone_in_tolerance():
    """Test that a looser tolerance never selects a smaller lambda."""
    chosen = [select_lambda(WORKED_SWEEP, 0.742, tol) for tol in (0.0, 0.02, 0.05, 0.2)]

    assert chosen == sorted(chosen)
    assert select_lambda(WORKED_SWEEP, 0.90, 0.02) is None


def test_select_lambda_regression_uses_its_grid():
    """Test the MAE rule restricted to the regression grid."""
    sweep = {1.0: 0.50, 3.0: 0.53, 10.0: 0.49}

    assert select_lambda_regression(sweep, 0.48, 0.04) == 1.0
    assert select_lambda_regression(sweep, 0.48, 0.06) == 3.0
    assert select_lambda_regression(sweep, 0.30, 0.04) is None


def test_pareto_front():
    """Test that dominated operating points are flagged."""
    points = [_point("a", 1.0, 0.80, 0.10), _point("b", 3.0, 0.78, 0.05),
              _point("c", 10.0, 0.75, 0.06), _point("d", 30.0, 0.70, 0.01)]

    assert pareto_front(points) == [True, True, False, True]
    assert pareto_front(points, higher_quality_is_better=False) == [False, False, False, True]


def test_loglog_slope():
    """Test the slope of an exact power law and of a constant."""
    ms = [50, 100, 200, 400]

    assert loglog_slope(ms, [m ** -0.2 for m in ms]) == pytest.approx(-0.2)
    assert loglog_slope(ms, [0.3] * 4) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(InsufficientDataError):
        loglog_slope([50], [0.1])
    with pytest.raises(InsufficientDataError):
        loglog_slope([50, 100], [0.1, 0.0])


def test_triage_convergence_rows(random_prediction_set):
    """Test that the full seed set recovers the gold ranking."""
    rows = triage_convergence(random_prediction_set, (2, 5, 10), n_subsets=5, review_frac=0.3)
    gold = pairwise_churn(random_prediction_set).flip_mass
    best = flip_recall_curve(gold, gold, random_prediction_set.ids, levels=(0.3,)).recall_at[0.3]

    assert [r['k'] for r in rows] == [2, 5, 10]
    assert [r['subsets'] for r in rows] == [5, 5, 1]
    assert rows[-1]['recall'] == pytest.approx(best)
    assert rows[-1]['recall_std'] == 0.0
    with pytest.raises(InsufficientDataError):
        triage_convergence(random_prediction_set, (2, 11))


def test_entropy_vs_churn_rows(random_prediction_set):
    """Test that both scores are evaluated on the same gold mass."""
    rows = entropy_vs_churn(random_prediction_set)

    assert [r['score'] for r in rows] == ['churn_k2', 'entropy']
    for row in rows:
        assert 0.0 <= row['recall_at_0.1'] <= row['recall_at_0.3'] <= 1.0
        assert 0.0 < row['aupc'] <= 1.0 + 1e-12


def test_footprint_table():
    """Test the static per-step compute accounting."""
    rows = {r.method: r for r in footprint_table()}

    assert rows['erm'].wallclock == "1x"
    assert rows['bagging:K=5'].wallclock == "5x (sequential)"
    assert rows['twin:lambda=auto'].train_fwd == "4"
    assert rows['twin:lambda=auto'].test_models == "2"
    assert footprint_table(["mc_dropout:T=20"])[0].test_models == "1 (20 passes)"


def test_protocol_settings_validation():
    """Test that a single or repeated train seed is refused."""
    with pytest.raises(ConfigError, match="at least 2"):
        ProtocolSettings(train_seeds=(0,))
    with pytest.raises(ConfigError, match="distinct"):
        ProtocolSettings(train_seeds=(0, 0))


def test_failed_cell_is_named(small_classification, tiny_config):
    """Test that a training failure reports the cell that failed."""
    with pytest.raises(TrainingError, match="tiny_cls/twin/seed 0"):
        train_and_predict(small_classification, MethodSpec.parse("twin:lambda=auto"), tiny_config, 0,
                          small_classification.features, "tiny_cls/twin/seed 0")


def test_filter_refuses_small_test_set(small_classification, tiny_config):
    """Test that a test split below the size floor fails the filter unless exempted."""
    runner = ExperimentRunner(small_classification, tiny_config,
                              ProtocolSettings(train_seeds=(0, 1), canonical_seeds=(99,), resamples=50))
    with pytest.raises(InsufficientDataError, match="exempt_filter"):
        runner.check_filter(99)


def test_run_comparison_classification(small_classification, tiny_config, fast_settings):
    """Test a full comparison: cells, resolved lambda and the long-format rows."""
    runner = ExperimentRunner(small_classification, tiny_config, fast_settings)
    result = runner.run_comparison([MethodSpec.parse("bagging:K=2"), MethodSpec.parse("twin:lambda=auto")])

    assert [c.method for c in result.cells] == ["erm", "bagging:K=2", "twin:lambda=auto"]
    assert result.resolved["twin:lambda=auto@99"] in ("twin:lambda=1", "twin:lambda=10")
    assert all(set(row) == set(ROW_FIELDS) for row in result.rows)
    erm = result.cells[0]
    assert erm.stats['delta_churn'].mean == 0.0
    assert erm.predictions.n_seeds == 3
    assert 'inter_head_symkl' in result.cells[2].stats
    assert any(row['replicate'] == "mean" and row['metric'] == "churn" for row in result.rows)
    for metric in ("precision", "recall", "f1"):
        flag = erm.scalars[f'drift_{metric}_zero_division']
        expected = float(np.any(~np.any(erm.predictions.values.argmax(axis=2) == 1, axis=1))) \
            if metric == "precision" else 0.0
        assert flag == expected
        assert any(row['metric'] == f'drift_{metric}_zero_division' for row in result.rows)


def test_predictions_are_cached(small_classification, tiny_config, fast_settings):
    """Test that a (method, replicate) cell is trained once."""
    runner = ExperimentRunner(small_classification, tiny_config, fast_settings)
    first, _ = runner.predictions(MethodSpec.parse("erm"), 99)

    assert runner.predictions(MethodSpec.parse("erm"), 99)[0] is first
    assert first.ids == tuple(small_classification.ids[i] for i in runner.split(99).id_test)


def test_sweep_lambda_points(small_classification, tiny_config, fast_settings):
    """Test one reference point plus one point per grid value."""
    runner = ExperimentRunner(small_classification, tiny_config, fast_settings)
    points = runner.sweep_lambda()

    assert [p.lam for p in points] == [None, 1.0, 10.0]
    assert math.isnan(points[0].inter_head_symkl)
    assert points[1].inter_head_symkl >= 0.0
    assert runner.selected_lambda(99) in (1.0, 10.0)


def test_run_comparison_regression(small_regression, tiny_regression_config, fast_settings):
    """Test the regression variant: MAE-based stats and no filter."""
    runner = ExperimentRunner(small_regression, tiny_regression_config, fast_settings)
    result = runner.run_comparison([MethodSpec.parse("twin:lambda=auto")])

    assert result.filter_outcome is None
    assert result.resolved["twin:lambda=auto@99"] in ("twin:lambda=1", "twin:lambda=3")
    twin = result.cells[1]
    assert {'id_mae', 'reg_churn', 'delta_reg_churn', 'delta_mae', 'inter_head_mse'} <= set(twin.stats)
    assert 'churn_mae_ratio' in twin.scalars


def test_n_scaling(small_classification, tiny_config, fast_settings):
    """Test nested pools and the fitted slope."""
    runner = ExperimentRunner(small_classification, tiny_config, fast_settings)
    rows, slope = runner.n_scaling([16, 32, 64])

    assert sorted({r['M'] for r in rows}) == [16, 32, 64]
    assert {r['metric'] for r in rows} == {'churn', 'symkl'}
    assert np.isfinite(slope)
    with pytest.raises(InsufficientDataError):
        runner.n_scaling([16, 1000])


def test_overlap_spectrum(small_classification, tiny_config, fast_settings):
    """Test the loader overlap of each mode."""
    runner = ExperimentRunner(small_classification, tiny_config, fast_settings)
    rows = {r['mode']: r for r in runner.overlap_spectrum(1.0)}

    assert rows['disjoint']['loader_overlap'] == 0.0
    assert rows['shared']['loader_overlap'] > rows['bootstrap']['loader_overlap'] > 0.0
    assert all(isinstance(r['collapsed'], bool) for r in rows.values())


@pytest.fixture(scope="module")
def overlapping_runner():
    """Ten seeds on a moderately separated 20-dimensional two-Gaussian set."""
    ds = generate_synthetic(SyntheticSpec(n=500, d=20, class_sep=1.5, name="overlapping"), seed=0)
    settings = ProtocolSettings(train_seeds=tuple(range(10)), canonical_seeds=(99,), resamples=1000,
                                lambda_grid=(10.0, 30.0, 100.0), sweep_references=("erm",),
                                exempt_filter=True)
    return ExperimentRunner(ds, TrainConfig(hidden_dims=(32,), epochs=10, batch_size=32), settings)


@pytest.mark.slow
def test_bagging_lowers_churn_against_erm(overlapping_runner):
    """Test that five-member bagging has a Delta-churn CI entirely below zero."""
    result = overlapping_runner.run_comparison([MethodSpec.parse("bagging:K=5")])
    bagging = result.cells[1]

    assert bagging.method == "bagging:K=5"
    assert bagging.stats['delta_churn'].mean < 0
    assert bagging.stats['delta_churn'].hi < 0


@pytest.mark.slow
def test_selected_lambda_pulls_heads_together(overlapping_runner):
    """Test that the heads' sym-KL at the selected lambda is under 25% of the lambda=0 value."""
    lam = overlapping_runner.selected_lambda(99)
    _, selected = overlapping_runner.predictions(MethodSpec(kind=MethodKind.TWIN, lam=lam), 99)
    _, unregularized = overlapping_runner.predictions(MethodSpec(kind=MethodKind.TWIN, lam=0.0), 99)

    assert lam in (10.0, 30.0, 100.0)
    assert np.mean(selected) < 0.25 * np.mean(unregularized)


@pytest.mark.slow
def test_churn_ranking_recovers_flips(overlapping_runner):
    """Test that churn-ranked review beats random review and two seeds do no better than ten."""
    study = overlapping_runner.triage(99, subset_sizes=(2, 10), n_subsets=10)
    recall = {row['k']: row['recall'] for row in study['convergence']}

    assert study['curve'].recall_at[0.3] >= 0.3
    assert recall[10] == pytest.approx(study['curve'].recall_at[0.3])
    assert 0.3 <= recall[2] <= recall[10] + 1e-12
