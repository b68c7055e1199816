"""
Supervised and twin-consistency objectives: loss plus parameter gradients.
"""

from typing import Optional, Tuple

import numpy as np

from dataio.models import TaskKind
from nn_core.losses import ce_with_grad, mse_pair_with_grads, mse_with_grad, symkl_with_grads
from nn_core.mlp import MlpParams, backward, forward


def _supervised(outputs: np.ndarray, targets: np.ndarray, task: TaskKind):
    if task.is_classification:
        return ce_with_grad(outputs, targets)
    return mse_with_grad(outputs, targets)


def loss_and_grad(
    params: MlpParams,
    X: np.ndarray,
    targets: np.ndarray,
    task: TaskKind,
    dropout_p: float = 0.0,
    mask_key: Optional[Tuple[int, ...]] = None
) -> Tuple[float, MlpParams]:
    """
    Supervised loss (CE for classification, MSE for regression) and its gradient.

    Args:
        params: Network parameters
        X: Batch inputs
        targets: Batch labels or real targets
        task: Task kind selecting the loss
        dropout_p: Training-time dropout probability
        mask_key: Dropout-mask stream keys

    Returns:
        (loss, gradients)
    """
    outputs, cache = forward(params, X, dropout_p=dropout_p, mask_key=mask_key, return_cache=True)
    loss, d_out = _supervised(outputs, targets, task)
    return loss, backward(params, cache, d_out)


def consistency_loss_and_grad(
    params: MlpParams,
    partner: MlpParams,
    X: np.ndarray,
    task: TaskKind
) -> Tuple[float, MlpParams]:
    """
    Consistency term against a frozen partner network on one batch.

    Args:
        params: Network being differentiated
        partner: Frozen partner network
        X: Batch inputs
        task: symKL for classification, MSE between outputs for regression

    Returns:
        (loss, gradients for params only)
    """
    out, cache = forward(params, X, return_cache=True)
    out_partner = forward(partner, X)
    if task.is_classification:
        loss, d_out, _ = symkl_with_grads(out, out_partner)
    else:
        loss, d_out, _ = mse_pair_with_grads(out, out_partner)
    return loss, backward(params, cache, d_out)


def twin_loss_and_grads(
    params_a: MlpParams,
    params_b: MlpParams,
    batch_a: Tuple[np.ndarray, np.ndarray],
    batch_b: Tuple[np.ndarray, np.ndarray],
    lam: float,
    task: TaskKind
) -> Tuple[float, MlpParams, MlpParams]:
    """
    Joint twin objective and gradients for both networks.

    L = sup_A(B_A) + sup_B(B_B) + lam * 1/2 [cons(B_A) + cons(B_B)], where
    cons is symKL between the heads' softmax outputs (MSE between outputs for
    regression). Each network is evaluated on both batches, four forwards in
    total, and the consistency gradient flows into both networks.

    Args:
        params_a: Head A parameters
        params_b: Head B parameters
        batch_a: (X, targets) drawn from bootstrap A
        batch_b: (X, targets) drawn from bootstrap B
        lam: Consistency weight, >= 0
        task: Task kind

    Returns:
        (joint loss, gradients for A, gradients for B)

    Raises:
        ValueError: If lam is negative
    """
    if lam < 0:
        raise ValueError(f"Consistency weight must be non-negative, got {lam}")
    xa, ya = batch_a
    xb, yb = batch_b
    out_aa, cache_aa = forward(params_a, xa, return_cache=True)
    out_bb, cache_bb = forward(params_b, xb, return_cache=True)
    loss_a, d_aa = _supervised(out_aa, ya, task)
    loss_b, d_bb = _supervised(out_bb, yb, task)

    if lam == 0:
        # plain supervised steps; identical arithmetic to independent training
        return loss_a + loss_b, backward(params_a, cache_aa, d_aa), backward(params_b, cache_bb, d_bb)

    out_ba, cache_ba = forward(params_b, xa, return_cache=True)
    out_ab, cache_ab = forward(params_a, xb, return_cache=True)
    pair = symkl_with_grads if task.is_classification else mse_pair_with_grads
    cons_on_a, g_aa, g_ba = pair(out_aa, out_ba)
    cons_on_b, g_ab, g_bb = pair(out_ab, out_bb)

    w = 0.5 * lam
    loss = loss_a + loss_b + w * (cons_on_a + cons_on_b)
    grads_a = backward(params_a, cache_aa, d_aa + w * g_aa).zip_map(
        backward(params_a, cache_ab, w * g_ab), np.add)
    grads_b = backward(params_b, cache_bb, d_bb + w * g_bb).zip_map(
        backward(params_b, cache_ba, w * g_ba), np.add)
    return loss, grads_a, grads_b
