"""
Trained predictors and their inference rules.
"""

from dataclasses import dataclass
from typing import List

import numpy as np

from dataio.models import TaskKind
from exceptions import ShapeError
from methods.spec import MethodKind
from nn_core.mlp import MlpParams, forward, softmax

# dropout mask keys: (train_seed, phase, ...) with phase 0 = training, 1 = inference
MASK_PHASE_TRAIN = 0
MASK_PHASE_INFER = 1


@dataclass
class Predictor:
    """
    A trained method instance.

    Members are averaged at inference: softmax mean for classification, plain
    mean for regression. MC dropout has a single member evaluated over
    ``mc_passes`` mask-seeded passes.
    """

    kind: MethodKind
    members: List[MlpParams]
    task: TaskKind
    train_seed: int
    mc_passes: int = 1
    dropout_p: float = 0.0

    def __post_init__(self):
        expected = {MethodKind.TWIN: 2}.get(self.kind)
        if expected is not None and len(self.members) != expected:
            raise ShapeError(f"{self.kind.value} predictor needs {expected} members, got {len(self.members)}")
        if not self.members:
            raise ShapeError("Predictor has no members")

    @property
    def input_dim(self) -> int:
        return self.members[0].dims[0]

    @property
    def n_heads(self) -> int:
        return self.mc_passes if self.kind is MethodKind.MC_DROPOUT else len(self.members)

    def head_predictions(self, X: np.ndarray) -> np.ndarray:
        """
        Per-head outputs before averaging.

        Args:
            X: Inputs, n x d

        Returns:
            heads x n x C probabilities, or heads x n for regression
        """
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.input_dim:
            raise ShapeError(f"Input has shape {X.shape}, predictor expects {self.input_dim} columns")
        if self.kind is MethodKind.MC_DROPOUT:
            outs = [forward(self.members[0], X, dropout_p=self.dropout_p,
                            mask_key=(self.train_seed, MASK_PHASE_INFER, t))
                    for t in range(self.mc_passes)]
        else:
            outs = [forward(member, X) for member in self.members]
        if self.task.is_classification:
            return np.stack([softmax(o) for o in outs])
        return np.stack([o[:, 0] for o in outs])

    def to_dict(self) -> dict:
        return {
            'kind': self.kind.value,
            'members': len(self.members),
            'task': self.task.value,
            'train_seed': self.train_seed,
            'mc_passes': self.mc_passes,
            'dropout_p': self.dropout_p,
            'dims': self.members[0].dims,
        }

    def __repr__(self) -> str:
        return (f"Predictor(kind='{self.kind.value}', members={len(self.members)}, "
                f"seed={self.train_seed})")


def predict(pred: Predictor, X: np.ndarray) -> np.ndarray:
    """
    Apply the predictor's inference rule.

    Args:
        pred: Trained predictor
        X: Inputs, n x d

    Returns:
        n x C probabilities on the simplex, or n real predictions
    """
    return np.mean(pred.head_predictions(X), axis=0)


def head_predictions(pred: Predictor, X: np.ndarray) -> np.ndarray:
    return pred.head_predictions(X)
