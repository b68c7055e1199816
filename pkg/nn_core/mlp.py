"""
MLP parameters, initialization and the forward pass.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from exceptions import ShapeError
from utils.rng import stream


@dataclass
class MlpParams:
    """
    Layer weights (out x in) and biases (out,) of a ReLU MLP.

    The same container carries gradients, optimizer moments and SWA means.
    """

    weights: List[np.ndarray]
    biases: List[np.ndarray]

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ShapeError("MlpParams needs one bias per weight matrix and at least one layer")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ShapeError(f"Layer {i}: weight {w.shape} does not match bias {b.shape}")
            if i and w.shape[1] != self.weights[i - 1].shape[0]:
                raise ShapeError(f"Layer {i} input {w.shape[1]} does not chain with output "
                                 f"{self.weights[i - 1].shape[0]}")

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def dims(self) -> List[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    def arrays(self) -> List[np.ndarray]:
        """Weights and biases interleaved: W0, b0, W1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    @classmethod
    def from_arrays(cls, arrays: Sequence[np.ndarray]) -> "MlpParams":
        return cls(weights=list(arrays[0::2]), biases=list(arrays[1::2]))

    def map(self, fn) -> "MlpParams":
        return MlpParams.from_arrays([fn(a) for a in self.arrays()])

    def zip_map(self, other: "MlpParams", fn) -> "MlpParams":
        self.check_compatible(other)
        return MlpParams.from_arrays([fn(a, b) for a, b in zip(self.arrays(), other.arrays())])

    def zeros_like(self) -> "MlpParams":
        return self.map(np.zeros_like)

    def copy(self) -> "MlpParams":
        return self.map(np.copy)

    def check_compatible(self, other: "MlpParams") -> None:
        if self.dims != other.dims:
            raise ShapeError(f"Parameter shapes differ: {self.dims} vs {other.dims}")

    def global_norm(self) -> float:
        return float(np.sqrt(sum(float(np.sum(a * a)) for a in self.arrays())))

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())

    def __repr__(self) -> str:
        return f"MlpParams(dims={self.dims})"


@dataclass
class ForwardCache:
    """Intermediate values of one forward pass, consumed by backward()."""

    inputs: List[np.ndarray] = field(default_factory=list)
    pre_activations: List[np.ndarray] = field(default_factory=list)
    masks: List[Optional[np.ndarray]] = field(default_factory=list)


def init_mlp(dims: Sequence[int], seed: int, *subkeys: int) -> MlpParams:
    """
    Glorot-uniform weights and zero biases.

    Args:
        dims: Layer sizes, input first, output last
        seed: Init seed
        *subkeys: Further stream keys (member index)

    Returns:
        MlpParams
    """
    dims = [int(d) for d in dims]
    if len(dims) < 2 or min(dims) < 1:
        raise ShapeError(f"init_mlp needs at least two positive layer sizes, got {dims}")
    rng = stream("init", seed, *subkeys)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights=weights, biases=biases)


def softmax(logits: np.ndarray) -> np.ndarray:
    """
    Row-wise softmax with max subtraction.

    Args:
        logits: Vector or batch matrix of logits

    Returns:
        Probabilities of the same shape
    """
    z = np.asarray(logits, dtype=np.float64)
    shifted = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


def dropout_mask(shape: Tuple[int, ...], p: float, rng: np.random.Generator) -> np.ndarray:
    """Inverted-dropout mask: kept units scaled by 1/(1-p)."""
    keep = rng.random(shape) >= p
    return keep / (1.0 - p)


def forward(
    params: MlpParams,
    X: np.ndarray,
    dropout_p: float = 0.0,
    mask_key: Optional[Tuple[int, ...]] = None,
    return_cache: bool = False
):
    """
    Forward pass: ReLU hidden layers, linear output.

    Args:
        params: Network parameters
        X: Batch matrix (n x input dim)
        dropout_p: Dropout probability after each hidden ReLU (0 disables)
        mask_key: Keys of the dropout-mask stream; required when dropout_p > 0
        return_cache: Also return the ForwardCache for backward()

    Returns:
        Output matrix n x out (logits, or n x 1 for regression), plus the
        cache when requested

    Raises:
        ShapeError: If X does not match the input dimension
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != params.dims[0]:
        raise ShapeError(f"Input has shape {X.shape}, network expects {params.dims[0]} columns")
    use_dropout = dropout_p > 0.0
    if use_dropout and mask_key is None:
        raise ValueError("Dropout requires a mask key")
    rng = stream("dropout", *mask_key) if use_dropout else None

    cache = ForwardCache()
    h = X
    last = params.n_layers - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        cache.inputs.append(h)
        z = h @ w.T + b
        cache.pre_activations.append(z)
        if i == last:
            h = z
            break
        h = np.maximum(z, 0.0)
        mask = dropout_mask(h.shape, dropout_p, rng) if use_dropout else None
        cache.masks.append(mask)
        if mask is not None:
            h = h * mask
    if return_cache:
        return h, cache
    return h


def backward(params: MlpParams, cache: ForwardCache, d_out: np.ndarray) -> MlpParams:
    """
    Reverse-mode pass given the loss gradient at the network output.

    Args:
        params: Parameters used for the forward pass
        cache: Cache returned by forward(..., return_cache=True)
        d_out: dLoss/dOutput, n x out

    Returns:
        Gradients as MlpParams

    Raises:
        ShapeError: If d_out does not match the output shape
    """
    delta = np.asarray(d_out, dtype=np.float64)
    expected = cache.pre_activations[-1].shape
    if delta.shape != expected:
        raise ShapeError(f"Output gradient shape {delta.shape} does not match output {expected}")
    grad_w = [None] * params.n_layers
    grad_b = [None] * params.n_layers
    for i in range(params.n_layers - 1, -1, -1):
        grad_w[i] = delta.T @ cache.inputs[i]
        grad_b[i] = delta.sum(axis=0)
        if i == 0:
            break
        d_h = delta @ params.weights[i]
        mask = cache.masks[i - 1]
        if mask is not None:
            d_h = d_h * mask
        delta = d_h * (cache.pre_activations[i - 1] > 0.0)
    return MlpParams(weights=grad_w, biases=grad_b)
