"""Dense layers with hand-written backward passes, losses, and Adam.

Everything operates on plain 2-D numpy arrays (rows = batch, cols = features).
``forward`` methods return ``(output, cache)``; the cache must be handed back
to ``backward``.  Caches are explicit rather than stored on the layer because
the edge-pair trainers push two feature batches (both endpoints of an edge
batch) through the same network before taking one optimizer step.

dtype discipline: every op preserves the dtype of its inputs.  Production
code runs float32; the finite-difference oracle re-runs the same code on
float64 models so the comparison is not drowned in rounding noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class DimensionError(ValueError):
    """Operand shapes do not conform."""


class DegenerateBatchError(ValueError):
    """Batch statistics requested for a batch with fewer than 2 rows."""


class TargetValidationError(ValueError):
    """Cross-entropy target rows are not probability distributions."""


class DeterminismError(RuntimeError):
    """A closure handed to grad_check disagreed with itself on two calls."""


def make_rng(seed) -> np.random.Generator:
    """Counter-based (Philox) stream.  One per run; never shared.

    ``seed`` may be an int or a tuple of ints, so independent sub-streams
    can be derived as e.g. ``make_rng((seed, 2))``.
    """
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def one_hot(labels, num_classes: int, dtype=np.float32) -> np.ndarray:
    labels = np.asarray(labels)
    out = np.zeros((labels.shape[0], num_classes), dtype=dtype)
    out[np.arange(labels.shape[0]), labels] = 1
    return out


# ---------------------------------------------------------------------------
# Parameters and the linear layer
# ---------------------------------------------------------------------------


@dataclass
class Param:
    """A trainable matrix plus its gradient accumulator and Adam state."""

    value: np.ndarray
    grad: np.ndarray
    adam_m: np.ndarray
    adam_v: np.ndarray
    step_count: int = 0

    @classmethod
    def of(cls, value: np.ndarray) -> "Param":
        return cls(
            value=value,
            grad=np.zeros_like(value),
            adam_m=np.zeros_like(value),
            adam_v=np.zeros_like(value),
        )

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self):
        self.grad[:] = 0


def glorot_uniform(fan_in: int, fan_out: int, rng: np.random.Generator, dtype=np.float32):
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(dtype)


class Linear:
    """y = x @ W + b.  Weights fan-based uniform, biases zero.

    ``rng=None`` leaves both weights and biases all-zero (handy in tests).
    """

    def __init__(self, fan_in: int, fan_out: int, rng=None, dtype=np.float32):
        if rng is None:
            w = np.zeros((fan_in, fan_out), dtype=dtype)
        else:
            w = glorot_uniform(fan_in, fan_out, rng, dtype)
        self.weight = Param.of(w)
        self.bias = Param.of(np.zeros((1, fan_out), dtype=dtype))

    def forward(self, x):
        if x.ndim != 2 or x.shape[1] != self.weight.value.shape[0]:
            raise DimensionError(
                f"linear: input shape {x.shape} does not match weight shape "
                f"{self.weight.value.shape}"
            )
        return x @ self.weight.value + self.bias.value, x

    def backward(self, cache, dout):
        x = cache
        self.weight.grad += x.T @ dout
        self.bias.grad += dout.sum(axis=0, keepdims=True)
        return dout @ self.weight.value.T

    def params(self):
        return [self.weight, self.bias]


# ---------------------------------------------------------------------------
# Inter-layer sublayers: BatchNorm -> LayerNorm -> Dropout -> LeakyReLU
# ---------------------------------------------------------------------------


@dataclass
class BatchNormState:
    """Running statistics for batch normalization (no learnable affine)."""

    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.1
    eps: float = 1e-5

    @classmethod
    def fresh(cls, width: int, dtype=np.float32, momentum: float = 0.1, eps: float = 1e-5):
        return cls(
            running_mean=np.zeros(width, dtype=dtype),
            running_var=np.ones(width, dtype=dtype),
            momentum=momentum,
            eps=eps,
        )


def batch_norm_forward(x, state: BatchNormState, training: bool):
    if training:
        if x.shape[0] < 2:
            raise DegenerateBatchError(
                f"batch norm in training mode needs >= 2 rows, got {x.shape[0]}"
            )
        mean = x.mean(axis=0)
        var = x.var(axis=0)  # biased; the unbiased estimate feeds running_var
        n = x.shape[0]
        m = state.momentum
        state.running_mean = (1 - m) * state.running_mean + m * mean
        state.running_var = (1 - m) * state.running_var + m * (var * (n / (n - 1)))
    else:
        mean = state.running_mean
        var = state.running_var
    inv = 1.0 / np.sqrt(var + state.eps)
    xhat = (x - mean) * inv
    return xhat, (xhat, inv, training)


def batch_norm_backward(cache, dout):
    xhat, inv, training = cache
    if not training:
        return dout * inv
    n = dout.shape[0]
    return (inv / n) * (
        n * dout - dout.sum(axis=0) - xhat * (dout * xhat).sum(axis=0)
    )


def layer_norm_forward(x, eps: float):
    mean = x.mean(axis=1, keepdims=True)
    var = x.var(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean) * inv
    return xhat, (xhat, inv)


def layer_norm_backward(cache, dout):
    xhat, inv = cache
    f = xhat.shape[1]
    return (inv / f) * (
        f * dout
        - dout.sum(axis=1, keepdims=True)
        - xhat * (dout * xhat).sum(axis=1, keepdims=True)
    )


def dropout_forward(x, p: float, training: bool, rng):
    """Inverted dropout: kept activations are scaled by 1/(1-p) during
    training so evaluation applies no rescaling."""
    if not training or p == 0.0:
        return x, None
    keep = rng.random(x.shape) >= p
    # build the mask in x's dtype: bool * python float would promote to f64
    mask = keep.astype(x.dtype) * np.asarray(1.0 / (1.0 - p), dtype=x.dtype)
    return x * mask, mask


def dropout_backward(cache, dout):
    if cache is None:
        return dout
    return dout * cache


def leaky_relu_forward(x, slope: float):
    nonneg = x >= 0
    return np.where(nonneg, x, slope * x), nonneg


def leaky_relu_backward(cache, slope: float, dout):
    return np.where(cache, dout, slope * dout)


class InterLayerBlock:
    """The stack applied after each hidden linear layer, in fixed order:
    BatchNorm, LayerNorm, Dropout(0.5), LeakyReLU."""

    def __init__(self, width: int, dropout_p: float = 0.5, leaky_slope: float = 0.01,
                 layer_norm_eps: float = 1e-5, bn_momentum: float = 0.1,
                 bn_eps: float = 1e-5, dtype=np.float32):
        if not (0.0 <= dropout_p < 1.0):
            raise ValueError(f"dropout_p must be in [0, 1), got {dropout_p}")
        if not (0.0 < leaky_slope < 1.0):
            raise ValueError(f"leaky_slope must be in (0, 1), got {leaky_slope}")
        self.batch_norm = BatchNormState.fresh(width, dtype, bn_momentum, bn_eps)
        self.layer_norm_eps = layer_norm_eps
        self.dropout_p = dropout_p
        self.leaky_slope = leaky_slope

    def forward(self, x, training: bool, rng=None):
        if x.shape[0] < 1:
            raise DimensionError("inter-layer block needs at least one row")
        h, c_bn = batch_norm_forward(x, self.batch_norm, training)
        h, c_ln = layer_norm_forward(h, self.layer_norm_eps)
        h, c_do = dropout_forward(h, self.dropout_p, training, rng)
        h, c_lr = leaky_relu_forward(h, self.leaky_slope)
        return h, (c_bn, c_ln, c_do, c_lr)

    def backward(self, cache, dout):
        c_bn, c_ln, c_do, c_lr = cache
        d = leaky_relu_backward(c_lr, self.leaky_slope, dout)
        d = dropout_backward(c_do, d)
        d = layer_norm_backward(c_ln, d)
        return batch_norm_backward(c_bn, d)


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------


def softmax_rows(logits):
    """Row-wise softmax, max-subtracted for stability."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def log_softmax_rows(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def weighted_cross_entropy(logits, targets, class_weights):
    """Class-weighted CE against target distributions (one-hot or soft).

    loss = mean over rows of -sum_c w_c * t_c * log softmax(logits)_c.
    Returns (loss, d loss / d logits).  Weights must be non-negative and
    strictly positive for every class carrying target mass in this batch.
    """
    if logits.shape != targets.shape:
        raise DimensionError(
            f"cross entropy: logits {logits.shape} vs targets {targets.shape}"
        )
    row_sums = targets.sum(axis=1)
    if np.any(np.abs(row_sums - 1.0) > 1e-5):
        bad = int(np.argmax(np.abs(row_sums - 1.0)))
        raise TargetValidationError(
            f"target row {bad} sums to {row_sums[bad]!r}, expected 1"
        )
    w = np.asarray(class_weights, dtype=logits.dtype)
    if w.shape != (logits.shape[1],):
        raise DimensionError(
            f"cross entropy: {w.shape[0] if w.ndim else 0} class weights for "
            f"{logits.shape[1]} classes"
        )
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("class weights must be finite and non-negative")
    used = targets.sum(axis=0) > 0
    if np.any(used & (w == 0)):
        raise ValueError("zero class weight for a class present in the targets")

    n = logits.shape[0]
    logp = log_softmax_rows(logits)
    wt = targets * w
    loss = float(-(wt * logp).sum() / n)
    # d/dlogits of -sum_c w_c t_c (logits_c - LSE) = -w*t + (sum_c w_c t_c) * p
    p = softmax_rows(logits)
    dlogits = (p * wt.sum(axis=1, keepdims=True) - wt) / n
    return loss, dlogits


def mse(a, b):
    """Mean over all entries of (a - b)^2; gradients for both operands."""
    if a.shape != b.shape:
        raise DimensionError(f"mse: shapes {a.shape} vs {b.shape}")
    diff = a - b
    n = diff.size
    loss = float((diff * diff).sum() / n)
    da = (2.0 / n) * diff
    return loss, da, -da


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


def adam_step(params, lr: float):
    """Standard Adam with bias correction; zeroes grads afterwards."""
    for p in params:
        p.step_count += 1
        t = p.step_count
        g = p.grad
        p.adam_m *= ADAM_BETA1
        p.adam_m += (1 - ADAM_BETA1) * g
        p.adam_v *= ADAM_BETA2
        p.adam_v += (1 - ADAM_BETA2) * (g * g)
        m_hat = p.adam_m / (1 - ADAM_BETA1 ** t)
        v_hat = p.adam_v / (1 - ADAM_BETA2 ** t)
        p.value -= lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
        p.zero_grad()


# ---------------------------------------------------------------------------
# Finite-difference gradient oracle
# ---------------------------------------------------------------------------


@dataclass
class GradCheckReport:
    name: str
    max_rel_err: float
    tolerance: float
    n_checked: int

    @property
    def passed(self) -> bool:
        return self.max_rel_err <= self.tolerance


def grad_check(loss_fn, param: Param, tolerance: float, fd_step: float = 1e-3,
               name: str = "") -> GradCheckReport:
    """Compare ``param.grad`` against central finite differences.

    ``loss_fn() -> float`` must read ``param.value`` afresh on every call,
    zero all gradients it touches on entry, and leave the analytic gradient
    in ``param.grad``.  It must be deterministic: dropout disabled and any
    running statistics rebuilt per call.  Run it on float64 parameters; the
    float32 path shares the same code so checking the formulas here checks
    them everywhere.
    """
    loss_a = loss_fn()
    analytic = param.grad.copy()
    loss_b = loss_fn()
    if loss_a != loss_b:
        raise DeterminismError(
            f"loss closure returned {loss_a!r} then {loss_b!r} on identical calls"
        )

    flat = param.value.reshape(-1)
    fd = np.zeros_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + fd_step
        up = loss_fn()
        flat[i] = orig - fd_step
        down = loss_fn()
        flat[i] = orig
        fd[i] = (up - down) / (2 * fd_step)
    fd = fd.reshape(param.value.shape)

    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(fd)), 1e-6)
    max_rel = float((np.abs(analytic - fd) / denom).max()) if flat.size else 0.0
    return GradCheckReport(name=name, max_rel_err=max_rel,
                           tolerance=tolerance, n_checked=flat.size)
