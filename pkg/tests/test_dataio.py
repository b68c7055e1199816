"""
Tests for dataset loading, canonical splits, bootstraps and the majority filter.
"""

import numpy as np
import pytest

from dataio.loader import load_dataset, load_split_file, save_dataset
from dataio.models import Dataset, FilterVerdict, TaskKind
from dataio.sampling import (draw_bootstrap, kfold_indices, majority_filter, majority_fraction,
                             make_canonical_split, overlap_stats)
from dataio.synthetic import SyntheticSpec, generate_synthetic
from exceptions import ConfigError, DatasetFormatError, InsufficientDataError, SplitError


def _write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


def test_load_dataset_reads_rows_in_file_order(tmp_path):
    """Test that a well-formed feature matrix loads with ids, targets and features."""
    path = _write(tmp_path, "bbbp.csv", "id,y,f0,f1\na,1,0.5,1.5\nb,0,-2,3e-1\n")
    ds = load_dataset(path, "binary_classification")

    assert ds.name == "bbbp"
    assert ds.ids == ("a", "b")
    assert ds.targets.tolist() == [1, 0]
    assert ds.features.tolist() == [[0.5, 1.5], [-2.0, 0.3]]
    assert ds.task is TaskKind.BINARY


def test_load_dataset_keeps_hash_characters_in_ids(tmp_path):
    """Test that '#' inside ids is data and only a leading config-hash line is skipped."""
    body = "id,y,f0\nmol#1,1,0.5\nC1=CC=C#N,0,0.25\n"
    plain = load_dataset(_write(tmp_path, "plain.csv", body), "binary_classification")
    stamped = load_dataset(_write(tmp_path, "stamped.csv", "# config_hash=abc\n" + body),
                           "binary_classification")

    assert plain.ids == stamped.ids == ("mol#1", "C1=CC=C#N")
    assert plain.features.tolist() == [[0.5], [0.25]]
    assert stamped.targets.tolist() == [1, 0]


@pytest.mark.parametrize("text, message", [
    ("id,label,f0\na,1,0.5\n", "Header error"),
    ("id,y,f1\na,1,0.5\n", "should be 'f0'"),
    ("id,y,f0\na,1,abc\n", "Non-numeric feature value 'abc'"),
    ("id,y,f0\na,2,0.5\n", "out of range"),
    ("id,y,f0\na,0.5,0.5\n", "not an integer"),
    ("id,y,f0\na,1,0.5\na,0,0.1\n", "Duplicate id 'a'"),
])
def test_load_dataset_diagnostics(tmp_path, text, message):
    """Test that each kind of malformed file raises its own diagnostic."""
    path = _write(tmp_path, "bad.csv", text)
    with pytest.raises(DatasetFormatError, match=message):
        load_dataset(path, "binary_classification")


def test_load_regression_accepts_real_targets(tmp_path):
    """Test that regression files keep real-valued targets."""
    path = _write(tmp_path, "esol.csv", "id,y,f0\na,-1.25,0.5\nb,3.5,0.1\n")
    ds = load_dataset(path, "regression")

    assert ds.targets.tolist() == [-1.25, 3.5]
    assert ds.output_dim == 1


def test_save_dataset_round_trip(tmp_path, small_classification):
    """Test that a saved dataset reloads bit-identically."""
    path = save_dataset(small_classification, str(tmp_path / "synthetic.csv"))
    loaded = load_dataset(path, small_classification.task)

    assert loaded.ids == small_classification.ids
    assert np.array_equal(loaded.features, small_classification.features)
    assert np.array_equal(loaded.targets, small_classification.targets)


def test_dataset_rejects_non_finite_features():
    """Test that NaN features are rejected at construction."""
    with pytest.raises(DatasetFormatError, match="NaN or Inf"):
        Dataset(ids=["a"], features=[[np.nan]], targets=[0], task=TaskKind.BINARY)


def test_canonical_split_sizes_and_determinism(toy_dataset):
    """Test that the split is ceil(N(1-f)) / rest, disjoint and seed-determined."""
    split = make_canonical_split(toy_dataset, 99, 0.2)
    again = make_canonical_split(toy_dataset, 99, 0.2)

    assert split.train_pool.size == 5
    assert split.id_test.size == 1
    assert set(split.train_pool) | set(split.id_test) == set(range(6))
    assert np.array_equal(split.train_pool, again.train_pool)


def test_canonical_split_differs_between_seeds(small_classification):
    """Test that different canonical seeds give different partitions."""
    a = make_canonical_split(small_classification, 99, 0.2)
    b = make_canonical_split(small_classification, 7, 0.2)

    assert not np.array_equal(np.sort(a.id_test), np.sort(b.id_test))


def test_canonical_split_rejects_empty_side(toy_dataset):
    """Test that a split leaving no test rows is refused."""
    with pytest.raises(SplitError):
        make_canonical_split(toy_dataset, 0, 0.1)


def test_split_file_overrides_partition(tmp_path, toy_dataset):
    """Test that an id,role file yields the given partition."""
    lines = "\n".join(f"x{i},{'test' if i in (1, 4) else 'train'}" for i in range(6))
    path = _write(tmp_path, "split.csv", f"id,role\n{lines}\n")
    split = load_split_file(path, toy_dataset)

    assert sorted(split.id_test.tolist()) == [1, 4]
    assert split.train_pool.size == 4


@pytest.mark.parametrize("body, message", [
    ("x0,train\nzz,test\n", "unknown id 'zz'"),
    ("x0,train\nx1,valid\n", "Unknown split role 'valid'"),
    ("x0,train\nx1,test\n", "covers 2 of 6 rows"),
])
def test_split_file_errors(tmp_path, toy_dataset, body, message):
    """Test that split files with bad ids, roles or coverage are rejected."""
    path = _write(tmp_path, "split.csv", f"id,role\n{body}")
    with pytest.raises(DatasetFormatError, match=message):
        load_split_file(path, toy_dataset)


def test_bootstrap_is_keyed_and_full_length():
    """Test that a bootstrap has |pool| draws and depends only on its keys."""
    pool = np.arange(100, 200)
    a = draw_bootstrap(pool, 3, 0)
    b = draw_bootstrap(pool, 3, 0)
    c = draw_bootstrap(pool, 3, 1)

    assert a.indices.size == pool.size
    assert np.all(np.isin(a.indices, pool))
    assert np.array_equal(a.indices, b.indices)
    assert not np.array_equal(a.indices, c.indices)


def test_bootstrap_of_empty_pool():
    """Test that an empty pool cannot be bootstrapped."""
    with pytest.raises(InsufficientDataError):
        draw_bootstrap([], 0)


@pytest.mark.parametrize("n", [10, 100, 1000])
def test_unique_coverage_matches_closed_form(n):
    """Test the unique fraction against 1 - (1 - 1/N)^N within 3 standard errors."""
    pool = np.arange(n)
    fracs = np.array([draw_bootstrap(pool, seed).unique_frac for seed in range(10000)])
    expected = 1.0 - (1.0 - 1.0 / n) ** n
    stderr = fracs.std(ddof=1) / np.sqrt(fracs.size)

    assert abs(fracs.mean() - expected) < 3 * stderr


def test_pairwise_shared_unique_fraction():
    """Test that two bootstraps of 1000 rows share about 0.63^2 of the pool."""
    pool = np.arange(1000)
    shared = [overlap_stats(draw_bootstrap(pool, s, 0), draw_bootstrap(pool, s, 1)).shared_unique_frac
              for s in range(200)]

    assert np.mean(shared) == pytest.approx(0.399, abs=0.01)


def test_overlap_single_element_pool():
    """Test that two bootstraps of a one-row pool share it completely."""
    stats = overlap_stats(draw_bootstrap([7], 0, 0), draw_bootstrap([7], 0, 1))

    assert stats.shared_unique_frac == 1.0


def test_majority_fraction():
    """Test the largest class proportion."""
    assert majority_fraction([0, 0, 1, 0]) == 0.75


@pytest.mark.parametrize("acc, maj, n, verdict", [
    (0.80, 0.70, 100, FilterVerdict.PASS),
    (0.75, 0.70, 60, FilterVerdict.PASS),
    (0.74, 0.70, 100, FilterVerdict.BORDERLINE),
    (0.73, 0.70, 55, FilterVerdict.BORDERLINE),
    (0.80, 0.70, 45, FilterVerdict.FAIL),
    (0.72, 0.70, 100, FilterVerdict.FAIL),
])
def test_majority_filter_thresholds(acc, maj, n, verdict):
    """Test the pass / borderline / fail rule on gap and test size."""
    assert majority_filter(acc, maj, n).verdict is verdict


def test_kfold_partitions_the_pool():
    """Test that the validation folds partition the pool deterministically."""
    pool = np.arange(30)
    folds = kfold_indices(pool, 3, 99)

    vals = np.concatenate([v for _, v in folds])
    assert sorted(vals.tolist()) == list(range(30))
    for train, val in folds:
        assert not set(train) & set(val)
    assert all(np.array_equal(a[1], b[1]) for a, b in zip(folds, kfold_indices(pool, 3, 99)))


def test_kfold_rejects_tiny_pool():
    """Test that a pool too small for k folds is rejected."""
    with pytest.raises(InsufficientDataError):
        kfold_indices(np.arange(4), 3, 99)


def test_synthetic_classification_is_balanced():
    """Test that the two-Gaussian generator gives balanced labels and stable output."""
    spec = SyntheticSpec(n=100, d=3)
    a = generate_synthetic(spec, 5)
    b = generate_synthetic(spec, 5)

    assert np.bincount(a.targets).tolist() == [50, 50]
    assert np.array_equal(a.features, b.features)
    assert a.ids[0] == "s00000"


def test_synthetic_rejects_bad_spec():
    """Test that invalid generator parameters are refused."""
    with pytest.raises(ConfigError):
        generate_synthetic(SyntheticSpec(n=2, d=3), 0)
