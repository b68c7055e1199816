"""
Test configuration and fixtures for Churn Lab.
"""

import numpy as np
import pytest

from dataio.models import Dataset, TaskKind
from dataio.synthetic import SyntheticSpec, generate_synthetic
from metrics.predictions import PredictionSet
from nn_core.optim import TrainConfig


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: end-to-end runs on synthetic data (deselect with -m 'not slow')")


@pytest.fixture
def small_classification():
    """A small, well-separated two-Gaussian dataset."""
    return generate_synthetic(SyntheticSpec(n=80, d=5, class_sep=3.0, name="tiny_cls"), seed=1)


@pytest.fixture
def small_regression():
    """A small linear-regression dataset."""
    return generate_synthetic(SyntheticSpec(n=80, d=4, task=TaskKind.REGRESSION, noise_sd=0.1,
                                            name="tiny_reg"), seed=2)


@pytest.fixture
def tiny_config():
    """A fast training configuration for unit tests."""
    return TrainConfig(hidden_dims=(8,), epochs=3, batch_size=16)


@pytest.fixture
def tiny_regression_config():
    """The fast configuration for regression pools."""
    return TrainConfig(hidden_dims=(8,), epochs=3, batch_size=16, task=TaskKind.REGRESSION)


@pytest.fixture
def random_prediction_set():
    """Random 10-seed x 50-example binary predictions."""
    rng = np.random.default_rng(123)
    p1 = rng.uniform(0.0, 1.0, size=(10, 50))
    values = np.stack([1.0 - p1, p1], axis=2)
    return PredictionSet([f"m{i:03d}" for i in range(50)], values, list(range(10)), method="random")


@pytest.fixture
def toy_dataset():
    """Six hand-written rows for loader and split checks."""
    features = np.arange(12, dtype=np.float64).reshape(6, 2)
    return Dataset(ids=[f"x{i}" for i in range(6)], features=features,
                   targets=[0, 1, 0, 1, 1, 0], task=TaskKind.BINARY, name="toy")
