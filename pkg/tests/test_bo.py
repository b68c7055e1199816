"""
Tests for the Gaussian process, expected improvement, lambda search and BO trajectories.
"""

from dataclasses import replace

import numpy as np
import pytest

from bo.gp import expected_improvement, fit_gp, gp_posterior, matern52
from bo.lambda_search import BoSettings, bo_lambda_search, bo_lambda_stage2, bo_score, median_lambda
from bo.trajectory import (Trajectory, bo_trajectory, initial_labelled, jaccard, step_seed,
                           trajectory_report)
from dataio.models import TaskKind
from dataio.synthetic import SyntheticSpec, generate_synthetic
from exceptions import ConfigError, InsufficientDataError
from methods.predictor import predict
from methods.spec import MethodSpec
from methods.training import train_method
from metrics.ranking import descending_order
from nn_core.optim import TrainConfig


def test_matern_kernel_values():
    """Test the kernel at zero distance and its decay."""
    assert matern52(0.0, 0.0) == pytest.approx(1.0)
    assert matern52(0.0, 1.0, ell=1.0) == pytest.approx((1 + np.sqrt(5) + 5 / 3) * np.exp(-np.sqrt(5)))
    assert matern52(0.0, 2.0) < matern52(0.0, 1.0)
    with pytest.raises(ValueError):
        matern52(0.0, 1.0, ell=0.0)


def test_gp_interpolates_noise_free_data():
    """Test that with tiny noise the posterior mean passes through the observations."""
    x = np.array([-1.0, 0.0, 0.7, 2.0])
    y = np.array([0.3, -0.2, 0.9, 0.1])
    model = fit_gp(x, y, noise=1e-10)
    mu, var = gp_posterior(model, x)

    assert np.max(np.abs(mu - y)) < 1e-6
    assert np.all(var < 1e-6)


def test_gp_prior_without_data():
    """Test that an empty GP returns the prior."""
    mu, var = gp_posterior(fit_gp([], []), 0.5)

    assert mu == 0.0
    assert var > 0


def test_gp_posterior_variance_grows_away_from_data():
    """Test that uncertainty is larger far from the observations."""
    model = fit_gp([0.0, 1.0], [0.0, 1.0])

    assert gp_posterior(model, 5.0)[1] > gp_posterior(model, 0.5)[1]


def test_expected_improvement_without_uncertainty():
    """Test that EI at sigma=0 is the positive part of the improvement."""
    ei = expected_improvement(np.array([0.2, 0.5, 0.9]), np.zeros(3), best=0.5)

    assert ei.tolist() == pytest.approx([0.0, 0.0, 0.4])


def test_expected_improvement_at_the_incumbent():
    """Test that EI at mu = best is sigma times the standard normal density at 0."""
    assert expected_improvement(1.0, 2.0, best=1.0) == pytest.approx(2.0 * 0.39894, rel=1e-4)
    assert expected_improvement(-5.0, 0.1, best=1.0) >= 0.0
    with pytest.raises(ValueError):
        expected_improvement(0.0, -1.0, best=0.0)


def test_bo_score_penalizes_accuracy_shortfall():
    """Test the hinge penalty below a0 - delta."""
    assert bo_score(0.80, 0.10, a0=0.80, delta=0.01, penalty=10.0) == pytest.approx(-0.10)
    assert bo_score(0.75, 0.10, a0=0.80, delta=0.01, penalty=10.0) == pytest.approx(-0.10 - 0.4)


def test_median_lambda():
    """Test median aggregation of per-seed lambda values."""
    assert median_lambda([3.0, 300.0, 30.0]) == 30.0
    assert median_lambda([1.0, 3.0]) == 2.0
    with pytest.raises(InsufficientDataError):
        median_lambda([])


def test_bo_settings_validation():
    """Test that invalid bounds and budgets are refused."""
    with pytest.raises(ConfigError):
        BoSettings(bounds=(10.0, 1.0))
    with pytest.raises(ConfigError):
        BoSettings(trials=0)


def test_bo_lambda_search_trial_log(small_classification, tiny_config):
    """Test the forced baseline, the trial count and the recorded scores."""
    settings = BoSettings(trials=4, init_trials=1, folds=3, grid_points=9)
    best, trials = bo_lambda_search(small_classification, replace(tiny_config, epochs=2), 0, settings)

    assert len(trials) == 4
    assert trials[0].lam == 0.0 and trials[0].baseline
    assert all(settings.bounds[0] <= t.lam <= settings.bounds[1] for t in trials[1:])
    a0 = trials[0].mean_acc
    for t in trials:
        assert len(t.fold_acc) == 3
        assert t.score == pytest.approx(bo_score(t.mean_acc, t.mean_churn, a0, settings.delta, settings.penalty))
    assert best == max(trials, key=lambda t: t.score).lam


def test_bo_lambda_search_is_reproducible(small_classification, tiny_config):
    """Test that a fixed seed reproduces the same trial sequence."""
    settings = BoSettings(trials=3, init_trials=1, folds=2)
    cfg = replace(tiny_config, epochs=1)
    _, first = bo_lambda_search(small_classification, cfg, 3, settings)
    _, second = bo_lambda_search(small_classification, cfg, 3, settings)

    assert [t.to_row() for t in first] == [t.to_row() for t in second]


def test_bo_lambda_stage2(small_classification, tiny_config):
    """Test that stage 2 retrains one twin per seed at the median lambda."""
    lam, predictors = bo_lambda_stage2(small_classification, tiny_config, [0, 1], [1.0, 9.0, 100.0])

    assert lam == 9.0
    assert len(predictors) == 2
    assert [p.train_seed for p in predictors] == [0, 1]


def test_initial_labelled_is_shared():
    """Test that the initial labelled set depends only on its seed."""
    a = initial_labelled(100, 10, 0)

    assert a.size == 10
    assert np.array_equal(a, initial_labelled(100, 10, 0))
    assert step_seed(2, 5) == 2_000_005


def test_bo_trajectory_is_reproducible(small_regression, tiny_regression_config):
    """Test that a trajectory is a function of its index and acquires distinct rows."""
    spec = MethodSpec.parse("erm")
    a = bo_trajectory(small_regression, spec, 0, tiny_regression_config, budget=4, init_size=10)
    b = bo_trajectory(small_regression, spec, 0, tiny_regression_config, budget=4, init_size=10)

    assert a.acquired == b.acquired
    assert len(set(a.acquired)) == 4
    assert not set(a.acquired) & set(initial_labelled(small_regression.n, 10, 0))
    assert a.acquired_y == [float(small_regression.targets[i]) for i in a.acquired]


def test_bo_trajectory_first_step_uses_step_one_seed(small_regression, tiny_regression_config):
    """Test that the first acquisition comes from a surrogate trained with seed k * 10**6 + 1."""
    spec = MethodSpec.parse("erm")
    traj = bo_trajectory(small_regression, spec, 3, tiny_regression_config, budget=2, init_size=10)
    labelled = initial_labelled(small_regression.n, 10, 0)
    unlabelled = np.array([i for i in range(small_regression.n) if i not in set(labelled)])
    surrogate = train_method(small_regression.subset(list(labelled)), spec, tiny_regression_config,
                             step_seed(3, 1))
    yhat = predict(surrogate, small_regression.features[unlabelled])
    expected = int(unlabelled[descending_order(yhat, [small_regression.ids[i] for i in unlabelled])[0]])

    assert traj.acquired[0] == expected
    assert [r['step'] for r in traj.to_rows()] == [1, 2]


def test_bo_trajectory_rejects_classification(small_classification, tiny_config):
    """Test that trajectories need a regression pool."""
    with pytest.raises(ConfigError, match="regression"):
        bo_trajectory(small_classification, MethodSpec.parse("erm"), 0, tiny_config)


def test_bo_trajectory_rejects_auto_lambda(small_regression, tiny_regression_config):
    """Test that a twin surrogate needs a concrete lambda."""
    with pytest.raises(ConfigError, match="concrete twin lambda"):
        bo_trajectory(small_regression, MethodSpec.parse("twin:lambda=auto"), 0, tiny_regression_config)


def test_bo_trajectory_rejects_small_pool(small_regression, tiny_regression_config):
    """Test that the pool must cover the initial set plus the budget."""
    with pytest.raises(InsufficientDataError):
        bo_trajectory(small_regression, MethodSpec.parse("erm"), 0, tiny_regression_config,
                      budget=80, init_size=10)


def test_jaccard():
    """Test set overlap including the empty case."""
    assert jaccard([1, 2, 3], [2, 3, 4]) == 0.5
    assert jaccard([], []) == 1.0


def test_trajectory_report():
    """Test final-best statistics and acquired-set overlap across trajectories."""
    trajs = [
        Trajectory(k=0, method="erm", acquired=[1, 2], acquired_y=[1.0, 2.0]),
        Trajectory(k=1, method="erm", acquired=[1, 3], acquired_y=[1.0, 4.0]),
        Trajectory(k=2, method="erm", acquired=[1, 2], acquired_y=[3.0, 0.5]),
    ]
    report = trajectory_report(trajs, y_range=10.0, resamples=200)

    assert report.final_best.mean == pytest.approx(3.0)
    assert report.std.mean == pytest.approx(1.0)
    assert report.std_over_range_pct == pytest.approx(10.0)
    assert report.mean_jaccard == pytest.approx((1 / 3 + 1.0 + 1 / 3) / 3)
    assert len(report.to_rows()) == 4
    with pytest.raises(InsufficientDataError):
        trajectory_report(trajs[:1], y_range=10.0)


@pytest.mark.slow
def test_averaged_surrogates_give_steadier_trajectories():
    """Test that twin final-best spread and bagging acquired-set overlap are no worse than ERM."""
    ds = generate_synthetic(SyntheticSpec(n=300, d=4, task=TaskKind.REGRESSION, noise_sd=0.1,
                                          name="bo_pool"), seed=0)
    cfg = TrainConfig(hidden_dims=(16,), epochs=50, batch_size=16, learning_rate=1e-2,
                      task=TaskKind.REGRESSION)
    y_range = float(np.ptp(ds.targets))

    def report(text):
        spec = MethodSpec.parse(text)
        trajs = [bo_trajectory(ds, spec, k, cfg, budget=10, init_size=20) for k in range(10)]
        return trajectory_report(trajs, y_range, resamples=200)

    erm = report("erm")

    assert report("twin:lambda=3").std.mean <= erm.std.mean
    assert report("bagging:K=5").mean_jaccard >= erm.mean_jaccard
