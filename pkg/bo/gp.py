"""
1-D Gaussian process with a Matern-5/2 kernel and expected improvement.

Hyperparameters are fixed; inputs and outputs are standardized before fitting.
"""

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky, solve_triangular
from scipy.stats import norm

from config import GP_LENGTHSCALE, GP_MAX_JITTER, GP_NOISE, GP_SIGNAL_VARIANCE
from exceptions import NumericalError
from utils.logger import get_logger

logger = get_logger(__name__)

_SQRT5 = np.sqrt(5.0)


def matern52(x, x_prime, ell: float = GP_LENGTHSCALE, sigma2: float = GP_SIGNAL_VARIANCE):
    """
    Matern-5/2 kernel sigma2 (1 + sqrt5 r/ell + 5 r^2 / (3 ell^2)) exp(-sqrt5 r/ell).

    Broadcasts over array arguments.
    """
    if ell <= 0 or sigma2 <= 0:
        raise ValueError(f"Kernel needs ell > 0 and sigma2 > 0, got ell={ell}, sigma2={sigma2}")
    r = np.abs(np.asarray(x, dtype=np.float64) - np.asarray(x_prime, dtype=np.float64))
    s = _SQRT5 * r / ell
    k = sigma2 * (1.0 + s + s * s / 3.0) * np.exp(-s)
    return float(k) if np.ndim(k) == 0 else k


def _scale(values: np.ndarray) -> Tuple[float, float]:
    if values.size == 0:
        return 0.0, 1.0
    std = float(np.std(values))
    return float(np.mean(values)), std if std > 0 else 1.0


@dataclass
class GpModel:
    """Fitted GP over standardized inputs/outputs."""

    x: np.ndarray
    y: np.ndarray
    x_shift: float
    x_scale: float
    y_shift: float
    y_scale: float
    ell: float
    sigma2: float
    noise: float
    chol: np.ndarray
    alpha: np.ndarray

    @property
    def n(self) -> int:
        return self.x.size


def fit_gp(x: Sequence[float], y: Sequence[float], ell: float = GP_LENGTHSCALE,
           sigma2: float = GP_SIGNAL_VARIANCE, noise: float = GP_NOISE,
           max_jitter: float = GP_MAX_JITTER) -> GpModel:
    """
    Fit the GP by Cholesky factorization, escalating diagonal jitter x10 on failure.

    Args:
        x: Training inputs (raw units, e.g. log10 lambda)
        y: Training outputs
        ell: Lengthscale in standardized input units
        sigma2: Signal variance
        noise: Noise variance
        max_jitter: Largest jitter tried before giving up

    Returns:
        GpModel

    Raises:
        NumericalError: If the kernel matrix stays non-PD at max jitter
    """
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if x.shape != y.shape:
        raise ValueError(f"GP inputs {x.shape} and outputs {y.shape} differ")
    x_shift, x_scale = _scale(x)
    y_shift, y_scale = _scale(y)
    xs = (x - x_shift) / x_scale
    ys = (y - y_shift) / y_scale
    if xs.size == 0:
        return GpModel(xs, ys, x_shift, x_scale, y_shift, y_scale, ell, sigma2, noise,
                       chol=np.zeros((0, 0)), alpha=np.zeros(0))

    K = matern52(xs[:, None], xs[None, :], ell, sigma2)
    jitter = 0.0
    while True:
        try:
            L = cholesky(K + (noise + jitter) * np.eye(xs.size), lower=True)
            break
        except LinAlgError:
            jitter = max(jitter * 10.0, 1e-10)
            if jitter > max_jitter:
                raise NumericalError(f"GP kernel matrix not positive definite at jitter {max_jitter:g}")
            logger.warning("GP Cholesky failed; retrying with jitter %g", jitter)
    alpha = cho_solve((L, True), ys)
    return GpModel(xs, ys, x_shift, x_scale, y_shift, y_scale, ell, sigma2, noise, chol=L, alpha=alpha)


def gp_posterior(model: GpModel, xstar):
    """
    Posterior mean and variance at xstar, in the original output units.

    Args:
        model: Fitted GP
        xstar: Scalar or array of query inputs

    Returns:
        (mu, var); var clamped at 0. Without training points the prior (0, sigma2).
    """
    scalar = np.ndim(xstar) == 0
    xq = (np.atleast_1d(np.asarray(xstar, dtype=np.float64)) - model.x_shift) / model.x_scale
    if model.n == 0:
        mu = np.zeros_like(xq)
        var = np.full_like(xq, model.sigma2)
    else:
        k_star = matern52(xq[:, None], model.x[None, :], model.ell, model.sigma2)
        mu_s = k_star @ model.alpha
        v = solve_triangular(model.chol, k_star.T, lower=True)
        var_s = np.maximum(model.sigma2 - np.sum(v * v, axis=0), 0.0)
        mu = model.y_shift + model.y_scale * mu_s
        var = model.y_scale ** 2 * var_s
    if scalar:
        return float(mu[0]), float(var[0])
    return mu, var


def expected_improvement(mu, sigma, best: float, xi: float = 0.0):
    """
    EI for maximization: (mu - best) Phi(z) + sigma phi(z), z = (mu - best) / sigma.

    At sigma = 0 returns max(mu - best, 0). Never negative.
    """
    mu = np.asarray(mu, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    if np.any(sigma < 0):
        raise ValueError("sigma must be non-negative")
    improve = mu - best - xi
    positive = sigma > 0
    safe = np.where(positive, sigma, 1.0)
    z = improve / safe
    ei = np.where(positive, improve * norm.cdf(z) + safe * norm.pdf(z), np.maximum(improve, 0.0))
    ei = np.maximum(ei, 0.0)
    return float(ei) if ei.ndim == 0 else ei
