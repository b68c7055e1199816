"""
Tests for churn metrics, ranking stability, flip-recall curves and prediction files.
"""

from itertools import combinations

import numpy as np
import pytest

from exceptions import DatasetFormatError, InsufficientDataError, ShapeError
from metrics.churn import (DriftMetric, aggregate_drift, argmax_churn, flip_mass, pairwise_churn,
                           per_class_churn, regression_churn, seed_accuracies, seed_stripes,
                           symkl_disagreement, zero_division_seeds)
from metrics.predictions import PredictionSet, load_predictions, save_predictions
from metrics.ranking import (flip_recall_curve, hit_rate, pairwise_topk_jaccard, predictive_entropy,
                             reviewed_count, top_k, topk_jaccard)


def _binary(p1) -> np.ndarray:
    p1 = np.asarray(p1, dtype=np.float64)
    return np.stack([1.0 - p1, p1], axis=-1)


def test_argmax_churn_example():
    """Test churn on a hand-checked pair: one of three rows flips."""
    pa = _binary([0.9, 0.2, 0.6])
    pb = _binary([0.8, 0.7, 0.6])

    assert argmax_churn(pa, pb) == pytest.approx(1 / 3)
    assert argmax_churn(pa, pa) == 0.0


def test_argmax_churn_ties_go_to_lowest_class():
    """Test that an exact 0.5 tie predicts class 0 on both sides."""
    assert argmax_churn(_binary([0.5]), _binary([0.4])) == 0.0


def test_churn_rejects_shape_mismatch():
    """Test that prediction matrices of different shapes are refused."""
    with pytest.raises(ShapeError):
        argmax_churn(_binary([0.1, 0.2]), _binary([0.1]))


def test_symkl_disagreement_zero_on_identical():
    """Test that identical models have zero sym-KL disagreement."""
    p = _binary([0.3, 0.7])
    assert symkl_disagreement(p, p) == 0.0
    assert symkl_disagreement(p, _binary([0.7, 0.3])) > 0


@pytest.mark.parametrize("trial", range(100))
def test_pairwise_churn_matches_brute_force(trial):
    """Test pairwise churn and flip mass against explicit enumeration of pairs."""
    rng = np.random.default_rng(trial)
    seeds, n, classes = int(rng.integers(2, 7)), int(rng.integers(1, 30)), int(rng.integers(2, 4))
    values = rng.dirichlet(np.ones(classes), size=(seeds, n))
    ps = PredictionSet([f"e{i}" for i in range(n)], values, range(seeds))
    result = pairwise_churn(ps)

    labels = values.argmax(axis=2)
    brute = [np.mean(labels[i] != labels[j]) for i, j in combinations(range(seeds), 2)]
    brute_mass = [sum(labels[i, e] != labels[j, e] for i, j in combinations(range(seeds), 2))
                  for e in range(n)]
    assert np.allclose(result.churn, brute, atol=1e-15)
    assert np.array_equal(result.flip_mass, np.asarray(brute_mass, dtype=np.float64))
    assert abs(result.per_example.mean() - result.mean_churn) < 1e-12


def test_pairwise_churn_pair_count(random_prediction_set):
    """Test that ten seeds give 45 pairs in lexicographic order."""
    result = pairwise_churn(random_prediction_set)

    assert len(result.pairs) == 45
    assert result.pairs[0] == (0, 1)
    assert result.pairs[-1] == (8, 9)


def test_pairwise_churn_needs_two_seeds(random_prediction_set):
    """Test that one seed cannot produce churn."""
    with pytest.raises(InsufficientDataError):
        pairwise_churn(random_prediction_set.subset_seeds([0]))


def test_per_class_churn(random_prediction_set):
    """Test that per-class churn averages to the overall churn with class weights."""
    labels = np.array([0, 1] * 25)
    c0, c1, overall = per_class_churn(random_prediction_set, labels)

    assert overall == pytest.approx(pairwise_churn(random_prediction_set).mean_churn)
    assert (c0 + c1) / 2 == pytest.approx(overall)
    with pytest.raises(InsufficientDataError, match="y=1"):
        per_class_churn(random_prediction_set, np.zeros(50, dtype=int))


def test_aggregate_drift_in_percentage_points():
    """Test accuracy drift on two seeds whose accuracies differ by 25 pp."""
    values = np.stack([_binary([0.9, 0.1, 0.9, 0.1]), _binary([0.9, 0.1, 0.9, 0.9])])
    ps = PredictionSet(list("abcd"), values, [0, 1])
    labels = np.array([1, 0, 1, 0])

    assert aggregate_drift(ps, labels, DriftMetric.ACC) == pytest.approx(25.0)
    with pytest.raises(InsufficientDataError):
        aggregate_drift(ps, np.zeros(4, dtype=int), DriftMetric.AP)


def test_precision_without_predicted_positives_is_flagged():
    """Test that a seed predicting no positives scores precision 0 and is flagged."""
    values = np.stack([_binary([0.9, 0.1, 0.9, 0.1]), _binary([0.1, 0.1, 0.1, 0.1])])
    ps = PredictionSet(list("abcd"), values, [0, 1])
    labels = np.array([1, 0, 1, 0])

    assert zero_division_seeds(ps, labels, DriftMetric.PRECISION).tolist() == [False, True]
    assert zero_division_seeds(ps, labels, DriftMetric.RECALL).tolist() == [False, False]
    assert zero_division_seeds(ps, np.zeros(4, dtype=int), DriftMetric.F1).tolist() == [True, True]
    assert not zero_division_seeds(ps, labels, DriftMetric.ACC).any()
    assert aggregate_drift(ps, labels, DriftMetric.PRECISION) == pytest.approx(100.0)


def test_regression_churn():
    """Test regression churn, MAE and their ratio."""
    values = np.array([[1.0, 2.0], [1.5, 2.0], [1.0, 3.0]])
    ps = PredictionSet(["a", "b"], values, [0, 1, 2])
    result = regression_churn(ps, np.array([1.0, 2.0]))

    assert result.per_pair.tolist() == [0.25, 0.5, 0.75]
    assert result.churn == pytest.approx(0.5)
    assert result.mae == pytest.approx((0 + 0.25 + 0.5) / 3)
    assert result.ratio == pytest.approx(result.churn / result.mae)


def test_seed_accuracies(random_prediction_set):
    """Test per-seed accuracy against direct computation."""
    labels = np.ones(50, dtype=int)
    expected = (random_prediction_set.values[:, :, 1] > 0.5).mean(axis=1)

    assert np.allclose(seed_accuracies(random_prediction_set, labels), expected)


def test_seed_stripes_orders_columns_by_churn():
    """Test that the stripe plot columns start with the most contested example."""
    values = np.stack([_binary([0.9, 0.9, 0.1]), _binary([0.9, 0.1, 0.1]), _binary([0.1, 0.9, 0.1])])
    ps = PredictionSet(["a", "b", "c"], values, [0, 1, 2])
    order, matrix = seed_stripes(ps)

    assert flip_mass(ps).tolist() == [2.0, 2.0, 0.0]
    assert order.tolist() == [0, 1, 2]
    assert matrix.shape == (3, 3)
    assert matrix[:, 2].tolist() == [0, 0, 0]


def test_top_k_breaks_ties_by_id():
    """Test that equal scores are ordered by ascending id."""
    p = _binary([0.5, 0.9, 0.5])

    assert top_k(p, 2, ids=["z", "b", "a"]).tolist() == [1, 2]
    with pytest.raises(ShapeError):
        top_k(p, 4)


def test_topk_jaccard_and_hit_rate():
    """Test Jaccard of partly overlapping top sets and the hit rate."""
    pa = _binary([0.9, 0.8, 0.1, 0.2])
    pb = _binary([0.9, 0.1, 0.8, 0.2])

    assert topk_jaccard(pa, pb, 2) == pytest.approx(1 / 3)
    assert topk_jaccard(pa, pa, 2) == 1.0
    assert hit_rate(pa, np.array([1, 0, 0, 1]), 2) == 0.5


def test_pairwise_topk_jaccard(random_prediction_set):
    """Test that the pairwise Jaccard has one entry per pair within [0, 1]."""
    values = pairwise_topk_jaccard(random_prediction_set, 10)

    assert values.shape == (45,)
    assert np.all((values >= 0) & (values <= 1))


def test_predictive_entropy():
    """Test entropy at the uniform point and at certainty."""
    assert predictive_entropy(np.array([0.5, 0.5])) == pytest.approx(np.log(2))
    assert predictive_entropy(np.array([1.0, 0.0])) == 0.0
    assert predictive_entropy(_binary([0.5, 1.0])).shape == (2,)


def test_flip_recall_perfect_ranking():
    """Test that ranking by the flip mass itself gives AuPC 1."""
    mass = np.array([0.0, 5.0, 1.0, 3.0, 0.0])
    curve = flip_recall_curve(mass, mass)

    assert curve.aupc == pytest.approx(1.0)
    assert curve.recall[0] == 0.0
    assert curve.recall[-1] == 1.0
    assert np.all(np.diff(curve.recall) >= 0)


def test_flip_recall_uniform_mass_is_diagonal():
    """Test that uniform mass gives recall equal to the reviewed fraction."""
    rng = np.random.default_rng(0)
    curve = flip_recall_curve(rng.random(20), np.ones(20))

    assert np.allclose(curve.recall, curve.coverage)
    assert curve.recall_at[0.1] == pytest.approx(0.1)
    assert curve.recall_at[0.3] == pytest.approx(0.3)


def test_flip_recall_worse_ranking_scores_lower():
    """Test that reversing the ranking lowers AuPC below 1."""
    mass = np.array([4.0, 3.0, 2.0, 1.0])
    reversed_curve = flip_recall_curve(-mass, mass)

    assert reversed_curve.aupc < 1.0
    assert np.all(np.diff(reversed_curve.recall) >= 0)


def test_flip_recall_rejects_zero_mass():
    """Test that a test set with no flips has no flip-recall curve."""
    with pytest.raises(InsufficientDataError, match="zero"):
        flip_recall_curve(np.arange(3.0), np.zeros(3))


def test_reviewed_count():
    """Test the ceiling rule for the reviewed prefix."""
    assert reviewed_count(0.1, 50) == 5
    assert reviewed_count(0.3, 7) == 3
    assert reviewed_count(1.0, 7) == 7


def test_prediction_set_rejects_off_simplex():
    """Test that probability rows must sum to one."""
    with pytest.raises(ShapeError, match="simplex"):
        PredictionSet(["a"], np.array([[[0.7, 0.7]]]), [0])


def test_save_and_load_predictions(tmp_path, random_prediction_set):
    """Test that a saved prediction set reloads exactly."""
    path = str(tmp_path / "erm.csv")
    save_predictions(random_prediction_set, path)
    loaded = load_predictions(path)

    assert loaded.method == "erm"
    assert loaded.ids == random_prediction_set.ids
    assert loaded.seeds == random_prediction_set.seeds
    assert np.array_equal(loaded.values, random_prediction_set.values)


def test_load_predictions_rejects_bad_header(tmp_path):
    """Test that a prediction file without seed,id columns is refused."""
    path = tmp_path / "bad.csv"
    path.write_text("id,seed,p0,p1\na,0,0.5,0.5\n", encoding="utf-8")
    with pytest.raises(DatasetFormatError, match="Header error"):
        load_predictions(str(path))


def test_load_predictions_rejects_uneven_ids(tmp_path):
    """Test that seeds must cover the same ids."""
    path = tmp_path / "uneven.csv"
    path.write_text("seed,id,yhat\n0,a,1.0\n0,b,2.0\n1,a,1.5\n", encoding="utf-8")
    with pytest.raises(DatasetFormatError, match="same id sequence"):
        load_predictions(str(path))


def test_load_predictions_keeps_hash_characters_in_ids(tmp_path):
    """Test that '#' inside prediction ids is kept and a config-hash line is skipped."""
    path = tmp_path / "erm.csv"
    path.write_text("# config_hash=abc\nseed,id,yhat\n0,mol#1,1.0\n0,b,2.0\n1,mol#1,1.5\n1,b,2.5\n",
                    encoding="utf-8")
    loaded = load_predictions(str(path))

    assert loaded.ids == ("mol#1", "b")
    assert loaded.values.tolist() == [[1.0, 2.0], [1.5, 2.5]]
