"""
Losses and their gradients with respect to the network outputs.

Every ``*_with_grad`` function returns ``(loss, d_out)`` where ``d_out`` has
the shape of the raw network output (logits, or n x 1 for regression) and the
loss is a batch mean.
"""

from typing import Tuple

import numpy as np

from config import PROB_CLAMP
from exceptions import ShapeError
from nn_core.mlp import softmax


def _log(p: np.ndarray) -> np.ndarray:
    return np.log(np.clip(p, PROB_CLAMP, None))


def _check_labels(labels: np.ndarray, n_rows: int, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (n_rows,):
        raise ShapeError(f"Expected {n_rows} labels, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise ValueError(f"Label out of range for {n_classes} classes")
    return labels


def loss_ce(probs: np.ndarray, labels: np.ndarray) -> float:
    """
    Mean cross-entropy of probability rows against integer labels.

    Args:
        probs: n x C probabilities
        labels: n class indices

    Returns:
        Mean of -log(clamped p[label])

    Raises:
        ValueError: If a label is out of range
    """
    probs = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    labels = _check_labels(labels, probs.shape[0], probs.shape[1])
    return float(np.mean(-_log(probs[np.arange(labels.size), labels])))


def loss_mse(preds: np.ndarray, targets: np.ndarray) -> float:
    """Mean squared error."""
    preds = np.asarray(preds, dtype=np.float64).reshape(-1)
    targets = np.asarray(targets, dtype=np.float64).reshape(-1)
    if preds.shape != targets.shape:
        raise ShapeError(f"Prediction length {preds.size} does not match target length {targets.size}")
    return float(np.mean((preds - targets) ** 2))


def symkl_rows(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Per-row 1/2 [KL(p||q) + KL(q||p)] with clamped logs."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ShapeError(f"Distribution shapes differ: {p.shape} vs {q.shape}")
    return 0.5 * np.sum((p - q) * (_log(p) - _log(q)), axis=-1)


def loss_symkl(p: np.ndarray, q: np.ndarray) -> float:
    """
    Symmetric KL divergence in nats, 1/2 [KL(p||q) + KL(q||p)].

    Args:
        p: Probability vector, or batch of row vectors
        q: Probability vector(s) of the same shape

    Returns:
        The divergence, averaged over rows for batches
    """
    return float(np.mean(symkl_rows(p, q)))


def ce_with_grad(logits: np.ndarray, labels: np.ndarray) -> Tuple[float, np.ndarray]:
    """Cross-entropy on logits; gradient (softmax - onehot) / n."""
    probs = softmax(logits)
    labels = _check_labels(labels, probs.shape[0], probs.shape[1])
    n = labels.size
    loss = float(np.mean(-_log(probs[np.arange(n), labels])))
    grad = probs.copy()
    grad[np.arange(n), labels] -= 1.0
    return loss, grad / n


def mse_with_grad(outputs: np.ndarray, targets: np.ndarray) -> Tuple[float, np.ndarray]:
    """MSE on n x 1 outputs; gradient 2 (yhat - y) / n."""
    preds = outputs.reshape(-1)
    targets = np.asarray(targets, dtype=np.float64).reshape(-1)
    if preds.shape != targets.shape:
        raise ShapeError(f"Prediction length {preds.size} does not match target length {targets.size}")
    resid = preds - targets
    return float(np.mean(resid ** 2)), (2.0 * resid / resid.size).reshape(outputs.shape)


def symkl_with_grads(logits_p: np.ndarray, logits_q: np.ndarray) -> Tuple[float, np.ndarray, np.ndarray]:
    """
    Batch-mean symmetric KL between two logit matrices, with gradients for both.

    d/dz_p = 1/2 [p (log p - log q - KL(p||q)) + p - q], and symmetrically for q.
    """
    p = softmax(logits_p)
    q = softmax(logits_q)
    if p.shape != q.shape:
        raise ShapeError(f"Logit shapes differ: {p.shape} vs {q.shape}")
    n = p.shape[0]
    log_ratio = _log(p) - _log(q)
    kl_pq = np.sum(p * log_ratio, axis=1, keepdims=True)
    kl_qp = np.sum(-q * log_ratio, axis=1, keepdims=True)
    loss = float(np.mean(0.5 * (kl_pq + kl_qp)))
    grad_p = 0.5 * (p * (log_ratio - kl_pq) + p - q) / n
    grad_q = 0.5 * (q * (-log_ratio - kl_qp) + q - p) / n
    return loss, grad_p, grad_q


def mse_pair_with_grads(out_a: np.ndarray, out_b: np.ndarray) -> Tuple[float, np.ndarray, np.ndarray]:
    """Mean squared difference between two heads' outputs, with gradients for both."""
    if out_a.shape != out_b.shape:
        raise ShapeError(f"Output shapes differ: {out_a.shape} vs {out_b.shape}")
    diff = out_a - out_b
    n = diff.shape[0]
    grad = 2.0 * diff / n
    return float(np.mean(diff ** 2)), grad, -grad
