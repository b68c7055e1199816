"""
Versioned parameter checkpoints (.npz).
"""

import os

import numpy as np

from exceptions import DatasetFormatError
from nn_core.mlp import MlpParams
from utils.logger import get_logger

logger = get_logger(__name__)

CHECKPOINT_VERSION = 1


def save_checkpoint(path: str, params: MlpParams) -> str:
    """
    Write parameters to an uncompressed .npz file.

    Args:
        path: Target path; ".npz" is appended by numpy when missing
        params: Parameters to store

    Returns:
        The path actually written

    Raises:
        Exception: If the file cannot be written
    """
    payload = {"format_version": np.array(CHECKPOINT_VERSION), "n_layers": np.array(params.n_layers)}
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        payload[f"W{i}"] = w
        payload[f"b{i}"] = b
    if not path.endswith(".npz"):
        path = f"{path}.npz"
    try:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        np.savez(path, **payload)
    except OSError as e:
        logger.error("Failed to save checkpoint %s: %s", path, str(e))
        raise Exception(f"Failed to save checkpoint: {e}")
    logger.debug("Saved checkpoint %s (%s)", path, params.dims)
    return path


def load_checkpoint(path: str) -> MlpParams:
    """
    Read a checkpoint written by save_checkpoint.

    Args:
        path: Checkpoint file

    Returns:
        MlpParams

    Raises:
        DatasetFormatError: If the version is missing or unknown, or the file is incomplete
    """
    with np.load(path, allow_pickle=False) as data:
        payload = {key: data[key] for key in data.files}
    if "format_version" not in payload:
        raise DatasetFormatError(f"Checkpoint {path} has no format_version")
    version = int(payload.pop("format_version"))
    if version != CHECKPOINT_VERSION:
        raise DatasetFormatError(f"Unsupported checkpoint format version {version}")
    try:
        n_layers = int(payload["n_layers"])
        weights = [payload[f"W{i}"] for i in range(n_layers)]
        biases = [payload[f"b{i}"] for i in range(n_layers)]
    except KeyError as e:
        raise DatasetFormatError(f"Checkpoint {path} is missing array {e}")
    return MlpParams(weights=weights, biases=biases)
