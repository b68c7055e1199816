"""
The training procedures: ERM, SWA, MC dropout, deep ensemble, bagging and
twin-bootstrap consistency training.

Seed keys. Member m of a bagging run with train seed s draws its bootstrap
from ("bootstrap", s, m), its init from ("init", s, m) and its epoch-e batch
order from ("shuffle", s, m, e). ERM is member 0, so bagging K=1 reproduces
ERM exactly. Twin heads A and B are members 0 and 1 and redraw their
bootstraps every epoch from ("bootstrap", s, m, e); with fixed bootstraps
(resample_each_epoch=False) twin at lambda=0 is bagging K=2. Deep-ensemble members share member 0's bootstrap and batch order
and differ only in the init key.
"""

import math
from dataclasses import replace
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from dataio.models import Dataset
from dataio.sampling import draw_bootstrap
from exceptions import ConfigError, InsufficientDataError, NumericalError
from methods.predictor import MASK_PHASE_TRAIN, Predictor
from methods.spec import MethodKind, MethodSpec, OverlapMode
from nn_core.mlp import MlpParams, init_mlp
from nn_core.objective import loss_and_grad, twin_loss_and_grads
from nn_core.optim import (OptimizerState, SwaAccumulator, TrainConfig, clip_global_norm,
                           optimizer_step, swa_update)
from utils.logger import get_logger
from utils.rng import stream

logger = get_logger(__name__)

EpochHook = Callable[[int, MlpParams], None]


def _check_pool(pool: Dataset) -> None:
    if pool.n < 1:
        raise InsufficientDataError("Training pool is empty")


def _aligned(cfg: TrainConfig, pool: Dataset) -> TrainConfig:
    return cfg if cfg.task is pool.task else replace(cfg, task=pool.task)


def epoch_batches(indices: np.ndarray, batch_size: int, train_seed: int, member: int,
                  epoch: int) -> List[np.ndarray]:
    """
    Shuffle a loader's indices for one epoch and cut them into batches.

    Args:
        indices: Loader index multiset
        batch_size: Batch size
        train_seed: Train seed
        member: Loader key (member index)
        epoch: Epoch number

    Returns:
        ceil(len / batch_size) index arrays, the last possibly short
    """
    order = stream("shuffle", train_seed, member, epoch).permutation(indices.size)
    shuffled = indices[order]
    return [shuffled[i:i + batch_size] for i in range(0, shuffled.size, batch_size)]


def _check_finite(params: MlpParams, where: str) -> None:
    if not params.is_finite():
        raise NumericalError(f"Non-finite parameters after {where}")


def fit_network(
    pool: Dataset,
    loader: np.ndarray,
    cfg: TrainConfig,
    train_seed: int,
    init_member: int = 0,
    shuffle_member: int = 0,
    on_epoch_end: Optional[EpochHook] = None
) -> MlpParams:
    """
    Train one network on a fixed loader multiset.

    Args:
        pool: Training pool
        loader: Pool row indices the network trains on (with repeats)
        cfg: Training configuration
        train_seed: Train seed
        init_member: Member key of the init stream
        shuffle_member: Member key of the shuffle stream
        on_epoch_end: Called with (epoch, params) after every epoch

    Returns:
        Trained parameters
    """
    X, y = pool.features, pool.targets
    params = init_mlp(cfg.layer_dims(pool.d, pool.output_dim), train_seed, init_member)
    state = OptimizerState.for_params(params)
    for epoch in range(cfg.epochs):
        for step, batch in enumerate(epoch_batches(loader, cfg.batch_size, train_seed, shuffle_member, epoch)):
            mask_key = (train_seed, MASK_PHASE_TRAIN, epoch, step) if cfg.dropout_p > 0 else None
            _, grads = loss_and_grad(params, X[batch], y[batch], cfg.task,
                                     dropout_p=cfg.dropout_p, mask_key=mask_key)
            params, state = optimizer_step(state, params, clip_global_norm(grads, cfg.clip_norm), cfg)
        _check_finite(params, f"epoch {epoch}")
        if on_epoch_end is not None:
            on_epoch_end(epoch, params)
    return params


def train_erm(pool: Dataset, cfg: TrainConfig, train_seed: int) -> Predictor:
    """
    Train a single network on one bootstrap of the pool.

    Args:
        pool: Training pool
        cfg: Training configuration
        train_seed: Train seed

    Returns:
        Single-member Predictor
    """
    _check_pool(pool)
    cfg = _aligned(replace(cfg, dropout_p=0.0), pool)
    boot = draw_bootstrap(np.arange(pool.n), train_seed, 0)
    params = fit_network(pool, boot.indices, cfg, train_seed)
    return Predictor(kind=MethodKind.ERM, members=[params], task=pool.task, train_seed=train_seed)


def swa_start_epoch(epochs: int) -> int:
    """First epoch (0-based) whose end-of-epoch weights enter the SWA mean."""
    return math.ceil(epochs / 2)


def train_swa(pool: Dataset, cfg: TrainConfig, train_seed: int) -> Predictor:
    """
    ERM with stochastic weight averaging over the second half of training.

    Snapshots are taken at the end of each of the last floor(epochs/2) epochs
    and their running mean replaces the final weights.

    Raises:
        ConfigError: If epochs < 2
    """
    _check_pool(pool)
    if cfg.epochs < 2:
        raise ConfigError(f"SWA needs at least 2 epochs, got {cfg.epochs}")
    cfg = _aligned(replace(cfg, dropout_p=0.0), pool)
    start = swa_start_epoch(cfg.epochs)
    acc = [SwaAccumulator()]

    def snapshot(epoch: int, params: MlpParams) -> None:
        if epoch >= start:
            acc[0] = swa_update(acc[0], params)

    boot = draw_bootstrap(np.arange(pool.n), train_seed, 0)
    fit_network(pool, boot.indices, cfg, train_seed, on_epoch_end=snapshot)
    logger.debug("SWA seed %d averaged %d snapshots", train_seed, acc[0].count)
    return Predictor(kind=MethodKind.SWA, members=[acc[0].mean], task=pool.task, train_seed=train_seed)


def train_mc_dropout(pool: Dataset, cfg: TrainConfig, train_seed: int, passes: int) -> Predictor:
    """
    Train with dropout after each hidden ReLU; predict by averaging mask-seeded passes.

    Raises:
        ConfigError: If cfg.dropout_p is 0 or passes < 1
    """
    _check_pool(pool)
    if cfg.dropout_p <= 0:
        raise ConfigError("MC dropout needs dropout_p > 0")
    if passes < 1:
        raise ConfigError(f"MC dropout needs T >= 1, got {passes}")
    cfg = _aligned(cfg, pool)
    boot = draw_bootstrap(np.arange(pool.n), train_seed, 0)
    params = fit_network(pool, boot.indices, cfg, train_seed)
    return Predictor(kind=MethodKind.MC_DROPOUT, members=[params], task=pool.task,
                     train_seed=train_seed, mc_passes=passes, dropout_p=cfg.dropout_p)


def train_deep_ensemble(pool: Dataset, cfg: TrainConfig, train_seed: int, k: int,
                        init_members: Optional[Sequence[int]] = None) -> Predictor:
    """
    K networks on one shared bootstrap, differing only in initialization.

    Args:
        pool: Training pool
        cfg: Training configuration
        train_seed: Train seed
        k: Member count, >= 2
        init_members: Init-stream member keys; defaults to 0..K-1

    Returns:
        K-member Predictor
    """
    _check_pool(pool)
    if k < 2:
        raise ConfigError(f"deep_ensemble needs K >= 2, got {k}")
    init_members = list(range(k)) if init_members is None else list(init_members)
    if len(init_members) != k:
        raise ConfigError(f"Expected {k} init keys, got {len(init_members)}")
    cfg = _aligned(replace(cfg, dropout_p=0.0), pool)
    boot = draw_bootstrap(np.arange(pool.n), train_seed, 0)
    members = [fit_network(pool, boot.indices, cfg, train_seed, init_member=m, shuffle_member=0)
               for m in init_members]
    return Predictor(kind=MethodKind.DEEP_ENSEMBLE, members=members, task=pool.task, train_seed=train_seed)


def bagging_loaders(pool_size: int, train_seed: int, k: int) -> List[np.ndarray]:
    """The K bootstrap index multisets of a bagging run."""
    pool = np.arange(pool_size)
    return [draw_bootstrap(pool, train_seed, m).indices for m in range(k)]


def train_bagging(pool: Dataset, cfg: TrainConfig, train_seed: int, k: int) -> Predictor:
    """
    K networks on K independent bootstraps, predictions averaged.
    """
    _check_pool(pool)
    if k < 1:
        raise ConfigError(f"bagging needs K >= 1, got {k}")
    cfg = _aligned(replace(cfg, dropout_p=0.0), pool)
    members = [fit_network(pool, loader, cfg, train_seed, init_member=m, shuffle_member=m)
               for m, loader in enumerate(bagging_loaders(pool.n, train_seed, k))]
    return Predictor(kind=MethodKind.BAGGING, members=members, task=pool.task, train_seed=train_seed)


def twin_loader_indices(pool_size: int, train_seed: int, epoch: int, overlap: OverlapMode,
                        resample_each_epoch: bool = True) -> Tuple[np.ndarray, np.ndarray]:
    """
    The two loaders' index multisets for one epoch.

    bootstrap: two independent bootstraps (members 0 and 1); shared: member 0's
    bootstrap twice; disjoint: a fresh 50/50 partition of the pool, the last
    element of the permutation dropped when the pool size is odd.

    Bootstraps are keyed ("bootstrap", s, m, epoch) and redrawn every epoch.
    With resample_each_epoch=False they are keyed ("bootstrap", s, m) like
    bagging members and stay fixed for the whole run.

    Raises:
        InsufficientDataError: If disjoint mode has fewer than 2 pool rows
    """
    pool = np.arange(pool_size)
    overlap = OverlapMode(overlap)
    if overlap is OverlapMode.DISJOINT:
        if pool_size < 2:
            raise InsufficientDataError("Disjoint twin loaders need at least 2 pool rows")
        perm = stream("disjoint", train_seed, epoch).permutation(pool_size)
        half = pool_size // 2
        return perm[:half], perm[half:2 * half]
    keys = (epoch,) if resample_each_epoch else ()
    a = draw_bootstrap(pool, train_seed, 0, *keys).indices
    if overlap is OverlapMode.SHARED:
        return a, a
    return a, draw_bootstrap(pool, train_seed, 1, *keys).indices


def train_twin(pool: Dataset, cfg: TrainConfig, train_seed: int, lam: float,
               overlap: OverlapMode = OverlapMode.BOOTSTRAP,
               resample_each_epoch: bool = True) -> Predictor:
    """
    Joint training of two heads with a lambda-weighted consistency penalty.

    Per step both heads see both zipped batches; the joint loss is
    sup_A(B_A) + sup_B(B_B) + lam * 1/2 [cons(B_A) + cons(B_B)] with symKL
    consistency (MSE between outputs for regression). Gradients are clipped
    and stepped per head. Inference averages the two heads.

    Args:
        pool: Training pool
        cfg: Training configuration
        train_seed: Train seed
        lam: Consistency weight, >= 0
        overlap: Loader construction
        resample_each_epoch: Redraw bootstraps every epoch (bootstrap/shared modes);
            False keeps the bagging bootstraps for all epochs

    Returns:
        Two-head Predictor
    """
    _check_pool(pool)
    if lam is None or lam < 0:
        raise ConfigError(f"twin needs a non-negative lambda, got {lam}")
    cfg = _aligned(replace(cfg, dropout_p=0.0), pool)
    X, y = pool.features, pool.targets
    dims = cfg.layer_dims(pool.d, pool.output_dim)
    params = [init_mlp(dims, train_seed, 0), init_mlp(dims, train_seed, 1)]
    states = [OptimizerState.for_params(p) for p in params]

    for epoch in range(cfg.epochs):
        loader_a, loader_b = twin_loader_indices(pool.n, train_seed, epoch, overlap, resample_each_epoch)
        batches_a = epoch_batches(loader_a, cfg.batch_size, train_seed, 0, epoch)
        batches_b = epoch_batches(loader_b, cfg.batch_size, train_seed, 1, epoch)
        assert len(batches_a) == len(batches_b), "twin loaders must zip without truncation"
        for ba, bb in zip(batches_a, batches_b):
            _, grads_a, grads_b = twin_loss_and_grads(params[0], params[1], (X[ba], y[ba]),
                                                      (X[bb], y[bb]), lam, cfg.task)
            for h, grads in enumerate((grads_a, grads_b)):
                params[h], states[h] = optimizer_step(states[h], params[h],
                                                      clip_global_norm(grads, cfg.clip_norm), cfg)
        _check_finite(params[0], f"epoch {epoch} (head A)")
        _check_finite(params[1], f"epoch {epoch} (head B)")
    return Predictor(kind=MethodKind.TWIN, members=params, task=pool.task, train_seed=train_seed)


def train_method(pool: Dataset, spec: MethodSpec, base_cfg: TrainConfig, train_seed: int) -> Predictor:
    """
    Dispatch a MethodSpec to its training procedure.

    Args:
        pool: Training pool
        spec: Method to train; twin specs must carry a concrete lambda
        base_cfg: Shared training configuration
        train_seed: Train seed

    Returns:
        Trained Predictor
    """
    cfg = spec.train_config(base_cfg)
    kind = spec.kind
    if kind is MethodKind.ERM:
        return train_erm(pool, cfg, train_seed)
    if kind is MethodKind.SWA:
        return train_swa(pool, cfg, train_seed)
    if kind is MethodKind.MC_DROPOUT:
        return train_mc_dropout(pool, cfg, train_seed, spec.passes)
    if kind is MethodKind.DEEP_ENSEMBLE:
        return train_deep_ensemble(pool, cfg, train_seed, spec.k)
    if kind is MethodKind.BAGGING:
        return train_bagging(pool, cfg, train_seed, spec.k)
    if spec.lam is None:
        raise ConfigError("twin lambda=auto must be resolved before training")
    return train_twin(pool, cfg, train_seed, spec.lam, spec.overlap, spec.resample_each_epoch)
