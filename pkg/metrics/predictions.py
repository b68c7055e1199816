"""
PredictionSet: per-seed predictions of one method over a fixed test set.
"""

import os
from typing import Sequence

import numpy as np
import pandas as pd

from exceptions import DatasetFormatError, ShapeError
from utils.artifacts import read_hash_header
from utils.logger import get_logger

logger = get_logger(__name__)

SIMPLEX_TOL = 1e-6


class PredictionSet:
    """
    Seeds x examples x classes probabilities, or seeds x examples scalars.
    """

    def __init__(self, ids: Sequence[str], values: np.ndarray, seeds: Sequence[int], method: str = ""):
        """
        Initialize and validate a PredictionSet.

        Args:
            ids: Test ids, one per example
            values: S x n x C probabilities (classification) or S x n reals (regression)
            seeds: Train seed of each slice
            method: Method label

        Raises:
            ShapeError: If shapes disagree or probability rows are off the simplex
        """
        values = np.asarray(values, dtype=np.float64)
        ids = tuple(str(i) for i in ids)
        seeds = tuple(int(s) for s in seeds)
        if values.ndim not in (2, 3):
            raise ShapeError(f"Prediction tensor must be 2-D or 3-D, got shape {values.shape}")
        if values.shape[0] != len(seeds) or values.shape[1] != len(ids):
            raise ShapeError(f"Prediction tensor {values.shape} does not match "
                             f"{len(seeds)} seeds x {len(ids)} ids")
        if values.ndim == 3 and values.size:
            if np.any(values < -SIMPLEX_TOL) or np.max(np.abs(values.sum(axis=2) - 1.0)) > SIMPLEX_TOL:
                raise ShapeError("Probability rows must lie on the simplex")
        self.ids = ids
        self.values = values
        self.seeds = seeds
        self.method = method

    @property
    def is_classification(self) -> bool:
        return self.values.ndim == 3

    @property
    def n_seeds(self) -> int:
        return self.values.shape[0]

    @property
    def n_examples(self) -> int:
        return self.values.shape[1]

    @property
    def n_classes(self) -> int:
        return self.values.shape[2] if self.is_classification else 0

    def subset_seeds(self, rows: Sequence[int]) -> "PredictionSet":
        """Restrict to the given seed positions (in the given order)."""
        rows = list(rows)
        return PredictionSet(self.ids, self.values[rows], [self.seeds[r] for r in rows], self.method)

    def __repr__(self) -> str:
        return (f"PredictionSet(method='{self.method}', seeds={self.n_seeds}, "
                f"examples={self.n_examples}, classes={self.n_classes})")


def save_predictions(ps: PredictionSet, path: str) -> None:
    """
    Write ``seed,id,p0,...,p{C-1}`` (or ``seed,id,yhat``) rows.

    Args:
        ps: Predictions to save
        path: Target CSV path
    """
    seeds = np.repeat(ps.seeds, ps.n_examples)
    ids = np.tile(ps.ids, ps.n_seeds)
    frame = pd.DataFrame({"seed": seeds, "id": ids})
    if ps.is_classification:
        flat = ps.values.reshape(-1, ps.n_classes)
        for c in range(ps.n_classes):
            frame[f"p{c}"] = flat[:, c]
    else:
        frame["yhat"] = ps.values.reshape(-1)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    frame.to_csv(path, index=False, float_format="%.17g")
    logger.debug("Wrote %r to %s", ps, path)


def load_predictions(path: str, method: str = "") -> PredictionSet:
    """
    Read a prediction CSV written by save_predictions.

    Every seed must cover the same id sequence in the same order.

    Raises:
        DatasetFormatError: On a malformed header or inconsistent id coverage
    """
    frame = pd.read_csv(path, skiprows=0 if read_hash_header(path) is None else 1, dtype={"id": str},
                        keep_default_na=False)
    columns = list(frame.columns)
    if columns[:2] != ["seed", "id"] or len(columns) < 3:
        raise DatasetFormatError(f"Header error: expected 'seed,id,...' in {path}, got {','.join(columns)}")
    value_cols = columns[2:]
    classification = value_cols != ["yhat"]
    if classification and value_cols != [f"p{c}" for c in range(len(value_cols))]:
        raise DatasetFormatError(f"Header error: probability columns must be p0..p{{C-1}}, got {value_cols}")
    try:
        values_flat = frame[value_cols].to_numpy(dtype=np.float64)
    except ValueError as e:
        raise DatasetFormatError(f"Non-numeric prediction in {path}: {e}")

    seeds = list(dict.fromkeys(frame["seed"].astype(int)))
    groups = [frame.index[frame["seed"] == s] for s in seeds]
    ids = list(frame.loc[groups[0], "id"])
    for s, rows in zip(seeds, groups):
        if list(frame.loc[rows, "id"]) != ids:
            raise DatasetFormatError(f"Seed {s} does not cover the same id sequence as seed {seeds[0]}")
    values = np.stack([values_flat[rows] for rows in groups])
    if not classification:
        values = values[:, :, 0]
    return PredictionSet(ids, values, seeds, method=method or os.path.splitext(os.path.basename(path))[0])
