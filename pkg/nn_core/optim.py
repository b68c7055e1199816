"""
Training configuration, AdamW/SGD steps, gradient clipping and SWA averaging.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Tuple

import numpy as np

from config import (ADAM_BETAS, ADAM_EPS, BATCH_SIZE, CLIP_NORM, EPOCHS, HIDDEN_DIMS,
                    LEARNING_RATE, WEIGHT_DECAY)
from dataio.models import TaskKind
from exceptions import ConfigError, ShapeError
from nn_core.mlp import MlpParams


class OptimizerKind(str, Enum):
    ADAMW = "adamw"
    SGD = "sgd"


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of one network training run."""

    hidden_dims: Tuple[int, ...] = HIDDEN_DIMS
    learning_rate: float = LEARNING_RATE
    weight_decay: float = WEIGHT_DECAY
    clip_norm: float = CLIP_NORM
    batch_size: int = BATCH_SIZE
    epochs: int = EPOCHS
    dropout_p: float = 0.0
    optimizer: OptimizerKind = OptimizerKind.ADAMW
    task: TaskKind = TaskKind.BINARY

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        object.__setattr__(self, "optimizer", OptimizerKind(self.optimizer))
        object.__setattr__(self, "task", TaskKind.parse(self.task))
        if any(h < 1 for h in self.hidden_dims):
            raise ConfigError(f"hidden_dims must be positive, got {self.hidden_dims}")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be non-negative")
        if self.clip_norm <= 0:
            raise ConfigError("clip_norm must be positive")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be at least 1")
        if self.epochs < 0:
            raise ConfigError("epochs must be non-negative")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ConfigError(f"dropout_p must lie in [0, 1), got {self.dropout_p}")

    def layer_dims(self, input_dim: int, output_dim: int) -> list:
        return [input_dim, *self.hidden_dims, output_dim]

    def to_dict(self) -> dict:
        return {
            'hidden_dims': list(self.hidden_dims),
            'learning_rate': self.learning_rate,
            'weight_decay': self.weight_decay,
            'clip_norm': self.clip_norm,
            'batch_size': self.batch_size,
            'epochs': self.epochs,
            'dropout_p': self.dropout_p,
            'optimizer': self.optimizer.value,
            'task': self.task.value,
        }


@dataclass
class OptimizerState:
    """First/second moments and step counter of one network's optimizer."""

    m: MlpParams
    v: MlpParams
    step: int = 0
    beta1: float = ADAM_BETAS[0]
    beta2: float = ADAM_BETAS[1]
    eps: float = ADAM_EPS

    @classmethod
    def for_params(cls, params: MlpParams) -> "OptimizerState":
        return cls(m=params.zeros_like(), v=params.zeros_like())


def clip_global_norm(grads: MlpParams, max_norm: float = CLIP_NORM) -> MlpParams:
    """
    Scale all gradients by max_norm / ||g|| when the global L2 norm exceeds max_norm.

    Args:
        grads: Gradients
        max_norm: Norm ceiling

    Returns:
        The clipped gradients (the input object when no clipping is needed)
    """
    norm = grads.global_norm()
    if norm > max_norm:
        scale = max_norm / norm
        return grads.map(lambda g: g * scale)
    return grads


def optimizer_step(
    state: OptimizerState,
    params: MlpParams,
    grads: MlpParams,
    cfg: TrainConfig
) -> Tuple[MlpParams, OptimizerState]:
    """
    One AdamW (decoupled weight decay) or plain SGD update.

    Args:
        state: Optimizer state for this network
        params: Current parameters
        grads: Gradients (already clipped)
        cfg: Training config selecting optimizer, lr and weight decay

    Returns:
        (new params, new state)
    """
    params.check_compatible(grads)
    lr = cfg.learning_rate
    if cfg.optimizer is OptimizerKind.SGD:
        return params.zip_map(grads, lambda p, g: p - lr * g), state

    step = state.step + 1
    b1, b2 = state.beta1, state.beta2
    m = state.m.zip_map(grads, lambda m_, g: b1 * m_ + (1.0 - b1) * g)
    v = state.v.zip_map(grads, lambda v_, g: b2 * v_ + (1.0 - b2) * g * g)
    corr1 = 1.0 - b1 ** step
    corr2 = 1.0 - b2 ** step
    decay = 1.0 - lr * cfg.weight_decay
    new_arrays = []
    for p, m_, v_ in zip(params.arrays(), m.arrays(), v.arrays()):
        update = (m_ / corr1) / (np.sqrt(v_ / corr2) + state.eps)
        new_arrays.append(p * decay - lr * update)
    new_state = OptimizerState(m=m, v=v, step=step, beta1=b1, beta2=b2, eps=state.eps)
    return MlpParams.from_arrays(new_arrays), new_state


@dataclass
class SwaAccumulator:
    """Running mean of parameter snapshots."""

    mean: MlpParams = None
    count: int = field(default=0)


def swa_update(acc: SwaAccumulator, params: MlpParams) -> SwaAccumulator:
    """
    Fold one snapshot into the running mean: mean + (p - mean) / (count + 1).

    Raises:
        ShapeError: If the snapshot shape differs from the accumulated mean
    """
    if acc.mean is None:
        return SwaAccumulator(mean=params.copy(), count=1)
    if acc.mean.dims != params.dims:
        raise ShapeError(f"SWA snapshot shape {params.dims} differs from {acc.mean.dims}")
    k = acc.count + 1
    mean = acc.mean.zip_map(params, lambda m_, p: m_ + (p - m_) / k)
    return SwaAccumulator(mean=mean, count=k)
