"""
File input/output for feature matrices, split files and prediction sets.
"""

import os
import re
from typing import Optional

import numpy as np
import pandas as pd

from dataio.models import Dataset, Split, TaskKind
from exceptions import DatasetFormatError
from utils.artifacts import read_hash_header
from utils.logger import get_logger

logger = get_logger(__name__)

_FEATURE_COLUMN = re.compile(r"^f(\d+)$")
_INTEGER = re.compile(r"^[+-]?\d+$")


def _read_raw_csv(path: str) -> pd.DataFrame:
    """Read a CSV file as strings, failing with a dataset diagnostic."""
    if not os.path.exists(path):
        raise DatasetFormatError(f"File not found: {path}")
    try:
        skip = 0 if read_hash_header(path) is None else 1
        return pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8", skiprows=skip)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise DatasetFormatError(f"Malformed CSV {path}: {e}")


def _check_header(columns) -> int:
    """
    Validate the `id,y,f0,...,f{d-1}` header.

    Returns:
        Number of feature columns d
    """
    columns = [c.strip() for c in columns]
    if len(columns) < 3 or columns[0] != "id" or columns[1] != "y":
        raise DatasetFormatError(
            f"Header error: expected 'id,y,f0,...', got '{','.join(columns)}'")
    for position, column in enumerate(columns[2:]):
        match = _FEATURE_COLUMN.match(column)
        if not match or int(match.group(1)) != position:
            raise DatasetFormatError(
                f"Header error: column {position + 2} should be 'f{position}', got '{column}'")
    return len(columns) - 2


def load_dataset(path: str, task: "str | TaskKind", name: Optional[str] = None) -> Dataset:
    """
    Load a pre-featurized dataset from a feature-matrix CSV file.

    Args:
        path: CSV file with header `id,y,f0,...,f{d-1}`
        task: Task kind (binary_classification or regression)
        name: Dataset name (defaults to the file stem)

    Returns:
        Validated Dataset

    Raises:
        DatasetFormatError: On header, numeric, label or duplicate-id problems
    """
    task = TaskKind.parse(task)
    name = name or os.path.splitext(os.path.basename(path))[0]
    logger.debug("Loading dataset %s from %s as %s", name, path, task.value)

    frame = _read_raw_csv(path)
    d = _check_header(frame.columns)
    if frame.empty:
        raise DatasetFormatError(f"Dataset file {path} has a header but no rows")

    ids = frame["id"].str.strip()
    duplicated = ids[ids.duplicated()]
    if not duplicated.empty:
        raise DatasetFormatError(f"Duplicate id '{duplicated.iloc[0]}' in {path}")

    feature_columns = [f"f{j}" for j in range(d)]
    features = frame[feature_columns].apply(pd.to_numeric, errors="coerce")
    bad = features.isna() | ~np.isfinite(features.to_numpy(dtype=np.float64, na_value=np.nan))
    if bad.to_numpy().any():
        row, col = np.argwhere(bad.to_numpy())[0]
        raise DatasetFormatError(
            f"Non-numeric feature value '{frame.iloc[row][feature_columns[col]]}' "
            f"at id '{ids.iloc[row]}', column {feature_columns[col]}")

    raw_y = frame["y"].str.strip()
    if task.is_classification:
        not_integer = ~raw_y.str.match(_INTEGER)
        if not_integer.any():
            row = int(np.argmax(not_integer.to_numpy()))
            raise DatasetFormatError(
                f"Label error: classification target '{raw_y.iloc[row]}' at id '{ids.iloc[row]}' is not an integer")
        targets = raw_y.astype(np.int64).to_numpy()
        out_of_range = (targets < 0) | (targets > 1)
        if out_of_range.any():
            row = int(np.argmax(out_of_range))
            raise DatasetFormatError(
                f"Label error: class {targets[row]} at id '{ids.iloc[row]}' is out of range for 2 classes")
    else:
        targets = pd.to_numeric(raw_y, errors="coerce").to_numpy(dtype=np.float64)
        if np.isnan(targets).any():
            row = int(np.argmax(np.isnan(targets)))
            raise DatasetFormatError(
                f"Non-numeric regression target '{raw_y.iloc[row]}' at id '{ids.iloc[row]}'")

    dataset = Dataset(ids=ids.tolist(), features=features.to_numpy(dtype=np.float64),
                      targets=targets, task=task, name=name)
    logger.info("Loaded dataset %s: N=%d, d=%d", name, dataset.n, dataset.d)
    return dataset


def save_dataset(dataset: Dataset, path: str) -> str:
    """
    Write a dataset in the feature-matrix CSV format.

    Args:
        dataset: Dataset to write
        path: Destination file

    Returns:
        The written path
    """
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    frame = pd.DataFrame(dataset.features, columns=[f"f{j}" for j in range(dataset.d)])
    frame.insert(0, "y", dataset.targets)
    frame.insert(0, "id", dataset.ids)
    # repr-precision floats so that a reload is bit-identical
    frame.to_csv(path, index=False, float_format="%.17g")
    logger.info("Dataset %s written to %s", dataset.name, path)
    return path


def load_split_file(path: str, dataset: Dataset) -> Split:
    """
    Read an `id,role` split file that overrides the canonical split.

    Args:
        path: CSV with header `id,role`, role in {train, test}
        dataset: Dataset whose ids the file refers to

    Returns:
        Split with canonical_seed = -1

    Raises:
        DatasetFormatError: On header, unknown id, unknown role or uncovered rows
    """
    frame = _read_raw_csv(path)
    if [c.strip() for c in frame.columns] != ["id", "role"]:
        raise DatasetFormatError(f"Split file header must be 'id,role', got '{','.join(frame.columns)}'")
    position = {identifier: row for row, identifier in enumerate(dataset.ids)}
    train, test = [], []
    for identifier, role in zip(frame["id"].str.strip(), frame["role"].str.strip().str.lower()):
        if identifier not in position:
            raise DatasetFormatError(f"Split file references unknown id '{identifier}'")
        if role == "train":
            train.append(position[identifier])
        elif role == "test":
            test.append(position[identifier])
        else:
            raise DatasetFormatError(f"Unknown split role '{role}' for id '{identifier}'")
    assigned = train + test
    if len(set(assigned)) != len(assigned):
        raise DatasetFormatError("Split file assigns some id more than once")
    if len(assigned) != dataset.n:
        raise DatasetFormatError(f"Split file covers {len(assigned)} of {dataset.n} rows")
    if not train or not test:
        raise DatasetFormatError("Split file must assign at least one train and one test row")
    logger.info("Loaded split file %s: %d train / %d test", path, len(train), len(test))
    return Split(canonical_seed=-1, train_pool=np.asarray(train, dtype=np.int64),
                 id_test=np.asarray(test, dtype=np.int64))
