"""Dense float64 vector/matrix ops with hand-derived backward passes,
parameter storage with gradient accumulators, the SGD update with
gradient clipping, and a central-difference gradient checker.

Every forward function here has a matching *_backward that implements the
hand-derived chain rule; callers stitch them together in reverse order.
There is no computation graph.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit


class DimensionError(ValueError):
    """Operand shapes do not conform."""


class TrainingError(RuntimeError):
    """Optimization cannot proceed (non-finite gradients, divergence)."""


# Largest double strictly below 1; used to keep squashing functions
# inside their open ranges even at saturation.
_ONE_BELOW = np.nextafter(1.0, 0.0)
_TINY = np.nextafter(0.0, 1.0)


class Parameter:
    """A named value tensor with a same-shaped gradient accumulator."""

    __slots__ = ("name", "value", "grad")

    def __init__(self, name: str, value: np.ndarray):
        self.name = name
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)

    def zero_grad(self):
        self.grad[...] = 0.0

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.value.shape})"


class Rng:
    """Deterministic random stream backed by numpy's PCG64.

    The algorithm is fixed: identical (seed, key) pairs produce identical
    streams on any platform. `key` derives independent child streams from
    one base seed via SeedSequence spawn keys.
    """

    def __init__(self, seed: int, key: tuple = ()):
        self.seed = int(seed)
        self.key = tuple(int(k) for k in key)
        ss = np.random.SeedSequence(self.seed, spawn_key=self.key)
        self.gen = np.random.Generator(np.random.PCG64(ss))

    def uniform(self, low: float, high: float, size=None) -> np.ndarray:
        return self.gen.uniform(low, high, size)

    def integers(self, low: int, high: int) -> int:
        return int(self.gen.integers(low, high))

    def random(self) -> float:
        return float(self.gen.random())

    def choice(self, seq):
        return seq[int(self.gen.integers(0, len(seq)))]

    def shuffled(self, seq) -> list:
        order = self.gen.permutation(len(seq))
        return [seq[i] for i in order]


def check_finite(name: str, x: np.ndarray):
    if not np.all(np.isfinite(x)):
        raise TrainingError(f"non-finite values in {name}")


# ---------------------------------------------------------------------------
# elementwise squashing


def sigmoid(x: np.ndarray) -> np.ndarray:
    y = expit(np.asarray(x, dtype=np.float64))
    return np.clip(y, _TINY, _ONE_BELOW)


def sigmoid_backward(grad_y: np.ndarray, y: np.ndarray) -> np.ndarray:
    return grad_y * y * (1.0 - y)


def tanh(x: np.ndarray) -> np.ndarray:
    y = np.tanh(np.asarray(x, dtype=np.float64))
    return np.clip(y, -_ONE_BELOW, _ONE_BELOW)


def tanh_backward(grad_y: np.ndarray, y: np.ndarray) -> np.ndarray:
    return grad_y * (1.0 - y * y)


def softmax(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        raise DimensionError("softmax of empty input")
    z = x - np.max(x)
    e = np.exp(z)
    return e / np.sum(e)


def softmax_backward(grad_y: np.ndarray, y: np.ndarray) -> np.ndarray:
    # J^T g for the softmax Jacobian: y * (g - <g, y>)
    return y * (grad_y - float(np.dot(grad_y, y)))


def log_softmax(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    z = x - np.max(x)
    return z - np.log(np.sum(np.exp(z)))


# ---------------------------------------------------------------------------
# affine


def affine(W: np.ndarray, x: np.ndarray, b: np.ndarray | None = None) -> np.ndarray:
    W = np.asarray(W)
    x = np.asarray(x)
    if W.ndim != 2 or x.ndim != 1 or W.shape[1] != x.shape[0]:
        raise DimensionError(f"affine shapes {W.shape} x {x.shape} do not conform")
    y = W @ x
    if b is not None:
        if b.shape != (W.shape[0],):
            raise DimensionError(f"affine bias shape {b.shape} != ({W.shape[0]},)")
        y = y + b
    return y


def affine_backward(grad_y: np.ndarray, W: np.ndarray, x: np.ndarray):
    """Returns (dW, dx, db); caller adds them into the accumulators."""
    dW = np.outer(grad_y, x)
    dx = W.T @ grad_y
    return dW, dx, grad_y


# ---------------------------------------------------------------------------
# losses


def cross_entropy(target: np.ndarray, pred: np.ndarray,
                  clamp_eps: float = 1e-10, binary: bool = False) -> float:
    target = np.asarray(target, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    if target.shape != pred.shape:
        raise DimensionError(f"cross_entropy shapes {target.shape} vs {pred.shape}")
    p = np.clip(pred, clamp_eps, 1.0 - clamp_eps)
    loss = -np.sum(target * np.log(p))
    if binary:
        loss -= np.sum((1.0 - target) * np.log(1.0 - p))
    return float(loss)


def cross_entropy_backward(target: np.ndarray, pred: np.ndarray,
                           clamp_eps: float = 1e-10, binary: bool = False) -> np.ndarray:
    target = np.asarray(target, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    p = np.clip(pred, clamp_eps, 1.0 - clamp_eps)
    inside = (pred > clamp_eps) & (pred < 1.0 - clamp_eps)
    g = -target / p
    if binary:
        g = g + (1.0 - target) / (1.0 - p)
    return np.where(inside, g, 0.0)


def softmax_xent(logits: np.ndarray, target_idx: int):
    """Fused softmax + categorical cross-entropy on a one-hot target.

    Returns (loss, probs); the backward is `probs - onehot(target_idx)`.
    """
    logp = log_softmax(logits)
    return -float(logp[target_idx]), np.exp(logp)


def softmax_xent_backward(probs: np.ndarray, target_idx: int) -> np.ndarray:
    g = probs.copy()
    g[target_idx] -= 1.0
    return g


# ---------------------------------------------------------------------------
# optimizer


def clip_and_step(params: list[Parameter], lr: float, l2: float,
                  clip_norm: float | None, mode: str = "norm"):
    """One SGD update over accumulated gradients; grads zeroed afterwards.

    mode "norm": joint gradient norm over all params rescaled to clip_norm.
    mode "element": each gradient component clipped to [-clip_norm, clip_norm].
    """
    for p in params:
        if not np.all(np.isfinite(p.grad)):
            raise TrainingError(f"non-finite gradient in parameter {p.name}")
    scale = 1.0
    if clip_norm is not None and mode == "norm":
        total = 0.0
        for p in params:
            g = p.grad.ravel()
            total += float(np.dot(g, g))
        gnorm = np.sqrt(total)
        if gnorm > clip_norm:
            scale = clip_norm / gnorm
    for p in params:
        g = p.grad
        if clip_norm is not None and mode == "element":
            g = np.clip(g, -clip_norm, clip_norm)
        elif scale != 1.0:
            g = g * scale
        p.value -= lr * (g + l2 * p.value)
        p.zero_grad()


# ---------------------------------------------------------------------------
# gradient checking


def grad_check(loss_fn, params: list[Parameter], eps: float = 1e-5,
               value_fn=None) -> float:
    """Compare analytic gradients against central differences.

    `loss_fn()` must return the scalar loss and accumulate analytic
    gradients into the parameters as a side effect; it must be
    deterministic. `value_fn`, when given, is a cheaper forward-only
    evaluation used for the probe points.

    Returns the worst per-tensor relative error: the largest componentwise
    |analytic - numeric| deviation within a tensor, measured against that
    tensor's gradient max-norm with a +1e-8 denominator guard. Componentwise
    denominators are avoided deliberately: central differences of a loss of
    magnitude L carry roundoff noise near machine_eps * L / eps, so
    coordinates whose true gradient sits at that floor would fail any
    componentwise threshold even when the analytic gradient is exact.
    """
    probe = value_fn if value_fn is not None else loss_fn
    for p in params:
        p.zero_grad()
    loss_fn()
    analytic = [p.grad.copy() for p in params]
    for p in params:
        p.zero_grad()

    worst = 0.0
    for p, ga in zip(params, analytic):
        flat_v = p.value.reshape(-1)
        flat_g = ga.reshape(-1)
        numeric = np.zeros_like(flat_g)
        for k in range(flat_v.size):
            orig = flat_v[k]
            flat_v[k] = orig + eps
            f_plus = probe()
            flat_v[k] = orig - eps
            f_minus = probe()
            flat_v[k] = orig
            numeric[k] = (f_plus - f_minus) / (2.0 * eps)
        scale = max(float(np.max(np.abs(flat_g))),
                    float(np.max(np.abs(numeric)))) + 1e-8
        rel = float(np.max(np.abs(flat_g - numeric))) / scale
        worst = max(worst, rel)
    for p in params:
        p.zero_grad()
    return worst
