"""
Data models for datasets, splits and bootstrap samples.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from exceptions import DatasetFormatError


class TaskKind(str, Enum):
    """Supervised task kind of a dataset."""

    BINARY = "binary_classification"
    REGRESSION = "regression"

    @classmethod
    def parse(cls, value: "str | TaskKind") -> "TaskKind":
        """
        Parse a task name, accepting the short aliases used in config files.

        Args:
            value: Task name or TaskKind

        Returns:
            TaskKind member

        Raises:
            DatasetFormatError: If the name is unknown
        """
        if isinstance(value, TaskKind):
            return value
        aliases = {
            "binary_classification": cls.BINARY,
            "binary": cls.BINARY,
            "classification": cls.BINARY,
            "regression": cls.REGRESSION,
        }
        try:
            return aliases[str(value).strip().lower()]
        except KeyError:
            raise DatasetFormatError(f"Unknown task kind '{value}'")

    @property
    def is_classification(self) -> bool:
        return self is TaskKind.BINARY


class Dataset:
    """
    Immutable pre-featurized dataset: identifiers, feature matrix and targets.
    """

    def __init__(
        self,
        ids: Sequence[str],
        features: np.ndarray,
        targets: np.ndarray,
        task: TaskKind,
        name: str = "dataset",
        n_classes: Optional[int] = None
    ):
        """
        Initialize and validate a Dataset.

        Args:
            ids: Unique string identifiers, one per row
            features: N x d matrix of finite reals
            targets: Length-N class indices or real targets
            task: Task kind
            name: Human-readable dataset name
            n_classes: Number of classes (classification only); inferred when omitted

        Raises:
            DatasetFormatError: If any invariant is violated
        """
        features = np.array(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[0] < 1 or features.shape[1] < 1:
            raise DatasetFormatError(f"Feature matrix must be N x d with N, d >= 1, got shape {features.shape}")
        if not np.all(np.isfinite(features)):
            raise DatasetFormatError("Feature matrix contains NaN or Inf")
        ids = tuple(str(i) for i in ids)
        if len(ids) != features.shape[0]:
            raise DatasetFormatError(f"Got {len(ids)} ids for {features.shape[0]} feature rows")
        if len(set(ids)) != len(ids):
            seen = set()
            duplicate = next(i for i in ids if i in seen or seen.add(i))
            raise DatasetFormatError(f"Duplicate id '{duplicate}'")

        task = TaskKind.parse(task)
        if task.is_classification:
            raw = np.asarray(targets)
            targets = raw.astype(np.int64)
            if not np.array_equal(targets, raw):
                raise DatasetFormatError("Classification targets must be integers")
            if targets.size and targets.min() < 0:
                raise DatasetFormatError("Class labels must be non-negative")
            n_classes = 2 if n_classes is None else int(n_classes)
            if targets.size and targets.max() >= n_classes:
                raise DatasetFormatError(f"Class label {int(targets.max())} out of range for {n_classes} classes")
        else:
            targets = np.asarray(targets, dtype=np.float64)
            if not np.all(np.isfinite(targets)):
                raise DatasetFormatError("Regression targets contain NaN or Inf")
            n_classes = None
        if targets.shape != (features.shape[0],):
            raise DatasetFormatError(f"Targets must have shape ({features.shape[0]},), got {targets.shape}")

        features.setflags(write=False)
        targets.setflags(write=False)
        self.ids = ids
        self.features = features
        self.targets = targets
        self.task = task
        self.name = name
        self.n_classes = n_classes

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def output_dim(self) -> int:
        """Network output width: one logit per class, or 1 for regression."""
        return self.n_classes if self.task.is_classification else 1

    def subset(self, rows: Sequence[int], name: Optional[str] = None) -> "Dataset":
        """
        Return the dataset restricted to the given rows (in the given order).

        Args:
            rows: Row indices
            name: Optional name for the subset

        Returns:
            New Dataset
        """
        rows = np.asarray(rows, dtype=np.int64)
        return Dataset(
            ids=[self.ids[r] for r in rows],
            features=self.features[rows],
            targets=self.targets[rows],
            task=self.task,
            name=name or self.name,
            n_classes=self.n_classes
        )

    def to_dict(self) -> dict:
        """Summary dictionary (no matrix payload) for JSON reports."""
        return {
            'name': self.name,
            'task': self.task.value,
            'n': self.n,
            'd': self.d,
            'n_classes': self.n_classes,
        }

    def __str__(self) -> str:
        return f"Dataset(name='{self.name}', n={self.n}, d={self.d})"

    def __repr__(self) -> str:
        return (f"Dataset(name='{self.name}', task='{self.task.value}', "
                f"n={self.n}, d={self.d}, n_classes={self.n_classes})")


@dataclass(frozen=True)
class Split:
    """Canonical train-pool / id-test partition of a dataset's rows."""

    canonical_seed: int
    train_pool: np.ndarray
    id_test: np.ndarray

    def __post_init__(self):
        for arr in (self.train_pool, self.id_test):
            arr.setflags(write=False)


@dataclass(frozen=True)
class BootstrapSample:
    """A multiset of pool indices drawn with replacement."""

    seed: int
    indices: np.ndarray
    pool_size: int

    @property
    def unique(self) -> np.ndarray:
        return np.unique(self.indices)

    @property
    def unique_frac(self) -> float:
        return self.unique.size / self.pool_size


@dataclass(frozen=True)
class OverlapStats:
    """Unique-index overlap between two bootstrap samples of one pool."""

    shared_unique_frac: float
    unique_frac_a: float
    unique_frac_b: float


class FilterVerdict(str, Enum):
    PASS = "pass"
    BORDERLINE = "borderline"
    FAIL = "fail"


@dataclass(frozen=True)
class FilterOutcome:
    """Result of the ERM-vs-majority inclusion filter for one dataset."""

    erm_acc: float
    majority_frac: float
    gap_pp: float
    verdict: FilterVerdict
    test_n: int
    dataset: str = field(default="")

    def to_dict(self) -> dict:
        return {
            'dataset': self.dataset,
            'erm_acc': self.erm_acc,
            'majority_frac': self.majority_frac,
            'gap_pp': self.gap_pp,
            'verdict': self.verdict.value,
            'test_n': self.test_n,
        }
