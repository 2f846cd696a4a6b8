"""Small fully-connected decoders with hand-written forward/backward passes,
the Smooth-L1 loss, and an Adam optimizer.

Parameters live in one flat float64 vector per network; per-layer weight and
bias views alias into it so the optimizer can treat the whole net as a single
parameter array. Hidden activations are ReLU, the output is a sigmoid.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import DomainError


def sigmoid(z: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _layer_views(widths: tuple[int, ...], theta: np.ndarray):
    weights, biases = [], []
    off = 0
    for w_in, w_out in zip(widths[:-1], widths[1:]):
        weights.append(theta[off:off + w_in * w_out].reshape(w_out, w_in))
        off += w_in * w_out
        biases.append(theta[off:off + w_out])
        off += w_out
    return weights, biases


def param_count(widths: tuple[int, ...]) -> int:
    return sum(i * o + o for i, o in zip(widths[:-1], widths[1:]))


@dataclass
class Mlp:
    """ReLU MLP with sigmoid output; parameters flattened layer-major."""

    widths: tuple[int, ...]
    theta: np.ndarray = field(repr=False)
    weights: list = field(default=None, repr=False)
    biases: list = field(default=None, repr=False)

    def __post_init__(self):
        if len(self.widths) < 2:
            raise DomainError("an MLP needs at least input and output widths")
        self.theta = np.ascontiguousarray(self.theta, dtype=np.float64)
        expected = param_count(self.widths)
        if self.theta.shape != (expected,):
            raise DomainError(
                f"theta must have {expected} entries for widths {self.widths}, "
                f"got shape {self.theta.shape}"
            )
        if not np.all(np.isfinite(self.theta)):
            raise DomainError("parameters must be finite")
        self.weights, self.biases = _layer_views(self.widths, self.theta)

    @property
    def in_dim(self) -> int:
        return self.widths[0]

    @property
    def out_dim(self) -> int:
        return self.widths[-1]


def build_mlp(widths, rng: np.random.Generator) -> Mlp:
    """Kaiming-uniform weights (ReLU gain), zero biases."""
    widths = tuple(int(w) for w in widths)
    theta = np.zeros(param_count(widths))
    mlp = Mlp(widths=widths, theta=theta)
    for w in mlp.weights:
        limit = np.sqrt(6.0 / w.shape[1])
        w[...] = rng.uniform(-limit, limit, size=w.shape)
    return mlp


def _linear(h: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """h @ w.T + b with per-row reductions only.

    BLAS GEMM rounds differently for different batch sizes, which would break
    the bit-exact render contracts (a cropped render must equal the matching
    crop of a full one). Reducing each output neuron over the feature axis
    keeps every row's result independent of the batch it arrived in.
    """
    out = np.empty((h.shape[0], w.shape[0]))
    for o in range(w.shape[0]):
        out[:, o] = (h * w[o]).sum(axis=1)
    out += b
    return out


def mlp_forward(mlp: Mlp, x: np.ndarray):
    """Batched forward pass; returns (output, cache for backward).

    x has shape (B, in_dim); output is (B, out_dim) in (0, 1).
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != mlp.in_dim:
        raise DomainError(f"input width {x.shape[1]} != expected {mlp.in_dim}")
    layer_inputs = [x]
    preacts = []
    h = x
    last = len(mlp.weights) - 1
    for li, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
        z = _linear(h, w, b)
        preacts.append(z)
        h = sigmoid(z) if li == last else np.maximum(z, 0.0)
        if li != last:
            layer_inputs.append(h)
    cache = (layer_inputs, preacts, h)
    return h, cache


def mlp_backward(mlp: Mlp, cache, upstream: np.ndarray):
    """Exact reverse-mode gradients from a matching forward cache.

    Returns (grad_theta, grad_input); parameter gradients sum over the batch,
    grad_input has the input's shape for propagation into the embeddings.
    """
    if cache is None:
        raise DomainError("backward requires the cache from a forward pass")
    layer_inputs, preacts, y = cache
    upstream = np.atleast_2d(np.asarray(upstream, dtype=np.float64))
    if upstream.shape != y.shape:
        raise DomainError(f"upstream shape {upstream.shape} != output {y.shape}")
    grad_theta = np.zeros_like(mlp.theta)
    gw_views, gb_views = _layer_views(mlp.widths, grad_theta)

    dz = upstream * y * (1.0 - y)  # sigmoid'
    for li in range(len(mlp.weights) - 1, -1, -1):
        gw_views[li][...] = dz.T @ layer_inputs[li]
        gb_views[li][...] = dz.sum(axis=0)
        dh = dz @ mlp.weights[li]
        if li > 0:
            dz = dh * (preacts[li - 1] > 0)
    return grad_theta, dh


def smooth_l1(pred: np.ndarray, target: np.ndarray, beta: float) -> float:
    """Element-wise Smooth-L1, averaged over all elements.

    Quadratic r^2/(2 beta) inside |r| < beta, linear |r| - beta/2 outside.
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise DomainError(f"shape mismatch {pred.shape} vs {target.shape}")
    if not beta > 0:
        raise DomainError(f"beta must be > 0, got {beta}")
    r = pred - target
    a = np.abs(r)
    per_elem = np.where(a < beta, r * r / (2.0 * beta), a - 0.5 * beta)
    return float(per_elem.mean())


def smooth_l1_grad(pred: np.ndarray, target: np.ndarray, beta: float) -> np.ndarray:
    """Gradient of smooth_l1 w.r.t. pred (includes the mean reduction)."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise DomainError(f"shape mismatch {pred.shape} vs {target.shape}")
    if not beta > 0:
        raise DomainError(f"beta must be > 0, got {beta}")
    r = pred - target
    g = np.where(np.abs(r) < beta, r / beta, np.sign(r))
    return g / r.size


@dataclass
class AdamState:
    """Per-array optimizer state; m and v mirror the parameter shape."""

    lr: float
    m: np.ndarray = field(repr=False)
    v: np.ndarray = field(repr=False)
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-15


def adam_init(params: np.ndarray, lr: float) -> AdamState:
    return AdamState(lr=lr, m=np.zeros_like(params), v=np.zeros_like(params))


def adam_step(
    params: np.ndarray, grads: np.ndarray, state: AdamState, lr: float | None = None
) -> np.ndarray:
    """One bias-corrected Adam update, applied to params in place."""
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise DomainError(
            f"shape mismatch: params {params.shape}, grads {grads.shape}, "
            f"state {state.m.shape}"
        )
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    state.m *= b1
    state.m += (1.0 - b1) * grads
    state.v *= b2
    state.v += (1.0 - b2) * grads * grads
    m_hat = state.m / (1.0 - b1 ** state.step)
    v_hat = state.v / (1.0 - b2 ** state.step)
    effective = state.lr if lr is None else lr
    params -= effective * m_hat / (np.sqrt(v_hat) + state.eps)
    return params
