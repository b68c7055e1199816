"""
Synthetic dataset generator for desk-scale runs without chemistry data.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from dataio.models import Dataset, TaskKind
from exceptions import ConfigError
from utils.logger import get_logger
from utils.rng import stream

logger = get_logger(__name__)


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of a synthetic dataset."""

    n: int
    d: int
    task: TaskKind = TaskKind.BINARY
    class_sep: float = 2.0
    noise_sd: float = 0.5
    name: Optional[str] = None


def generate_synthetic(spec: SyntheticSpec, seed: int) -> Dataset:
    """
    Generate a two-Gaussian classification or linear regression dataset.

    Classification: balanced labels, unit-variance isotropic clouds centred at
    -/+ class_sep/2 along a random unit direction. Regression: y = w.x + eps,
    x ~ N(0, I), w ~ N(0, I/d), eps ~ N(0, noise_sd^2).

    Args:
        spec: Generator parameters
        seed: Generator seed

    Returns:
        Dataset with ids "s00000", "s00001", ...

    Raises:
        ConfigError: If the parameters are invalid
    """
    task = TaskKind.parse(spec.task)
    if spec.n < 4 or spec.d < 1:
        raise ConfigError(f"Synthetic spec needs n >= 4 and d >= 1, got n={spec.n}, d={spec.d}")
    if task.is_classification and spec.class_sep < 0:
        raise ConfigError("class_sep must be non-negative")
    if not task.is_classification and spec.noise_sd < 0:
        raise ConfigError("noise_sd must be non-negative")

    rng = stream("synthetic", seed)
    x = rng.standard_normal((spec.n, spec.d))
    if task.is_classification:
        direction = rng.standard_normal(spec.d)
        direction /= np.linalg.norm(direction)
        labels = np.arange(spec.n) % 2
        labels = labels[rng.permutation(spec.n)]
        signs = np.where(labels == 1, 1.0, -1.0)
        x = x + np.outer(signs * spec.class_sep / 2.0, direction)
        targets = labels
        default_name = f"synthetic_cls_n{spec.n}_d{spec.d}"
    else:
        weights = rng.standard_normal(spec.d) / np.sqrt(spec.d)
        targets = x @ weights + spec.noise_sd * rng.standard_normal(spec.n)
        default_name = f"synthetic_reg_n{spec.n}_d{spec.d}"

    ids = [f"s{i:05d}" for i in range(spec.n)]
    dataset = Dataset(ids=ids, features=x, targets=targets, task=task, name=spec.name or default_name)
    logger.info("Generated %r with seed %d", dataset, seed)
    return dataset
