"""Numeric layers with hand-written backward passes.

Every layer works on *packed* sequences: a batch of variable-length
sequences is stored as one ``[N, c]`` array holding the real positions of
each sequence back to back, with ``lengths`` giving the sequence sizes.
Padding never enters the arithmetic, so batch padding cannot change any
value or gradient.

Forward functions return ``(out, cache)``; the matching backward takes the
upstream gradient and the cache, in the usual layer-by-layer style.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

TRAIN = "train"
INFER = "infer"

LEAKY_ALPHA = 0.01
BN_MOMENTUM = 0.99
BN_EPS = 1e-3


def tap_offsets(window: int, dilation: int = 1) -> list[int]:
    """Input offsets read by a filter of the given window and dilation.

    Odd ``w = 2l+1`` reads ``-l*d .. +l*d``; even ``w = 2l`` reads
    ``(-l+1)*d .. +l*d``, so ``w=2`` reads ``{0, +d}``.
    """
    if window < 1 or dilation < 1:
        raise ValueError(f"window and dilation must be >= 1, got w={window}, d={dilation}")
    half = window // 2
    lo = -half if window % 2 else -half + 1
    return [k * dilation for k in range(lo, half + 1)]


def receptive_field(layers: Iterable[tuple[int, int]]) -> set[int]:
    """Minkowski sum of the tap offsets of a stack of ``(window, dilation)`` layers."""
    field = {0}
    for window, dilation in layers:
        field = {a + b for a in field for b in tap_offsets(window, dilation)}
    return field


def _as_lengths(n: int, lengths: Sequence[int] | None) -> tuple[int, ...]:
    if lengths is None:
        return (n,)
    lengths = tuple(int(k) for k in lengths)
    if sum(lengths) != n:
        raise ValueError(f"lengths sum to {sum(lengths)} but input has {n} rows")
    return lengths


@lru_cache(maxsize=4096)
def tap_index(lengths: tuple[int, ...], offset: int) -> np.ndarray:
    """Row index read by each packed position for one tap; ``N`` marks zero padding."""
    lengths_arr = np.asarray(lengths, dtype=np.int64)
    total = int(lengths_arr.sum())
    starts = np.repeat(np.cumsum(lengths_arr) - lengths_arr, lengths_arr)
    size = np.repeat(lengths_arr, lengths_arr)
    rows = np.arange(total)
    src = rows - starts + offset
    idx = np.where((src >= 0) & (src < size), rows + offset, total)
    idx.flags.writeable = False
    return idx


# --------------------------------------------------------------------------
# Convolution


@dataclass
class ConvFilter:
    weight: np.ndarray  # [w, c_in, c_out]
    bias: np.ndarray  # [c_out]
    dilation: int = 1

    @property
    def window(self) -> int:
        return self.weight.shape[0]


def conv1d_forward(x, weight, bias, dilation=1, lengths=None):
    """Zero-padded 1-D dilated convolution with "same" output length.

    out[i, k] = sum_j sum_c weight[j, c, k] * x[i + offset_j, c] + bias[k]
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or weight.ndim != 3 or x.shape[1] != weight.shape[1] or bias.shape != (weight.shape[2],):
        raise ValueError(
            f"conv1d shape mismatch: x {x.shape}, weight {weight.shape} (w, c_in, c_out), bias {bias.shape}"
        )
    n = x.shape[0]
    lengths = _as_lengths(n, lengths)
    xpad = np.concatenate([x, np.zeros((1, x.shape[1]))])
    taps = []
    out = None
    for j, off in enumerate(tap_offsets(weight.shape[0], dilation)):
        xj = xpad[tap_index(lengths, off)]
        taps.append(xj)
        out = xj @ weight[j] if out is None else out + xj @ weight[j]
    out += bias
    cache = (taps, weight, dilation, lengths)
    return out, cache


def conv1d_backward(dout, cache):
    taps, weight, dilation, lengths = cache
    n = taps[0].shape[0]
    if dout.shape != (n, weight.shape[2]):
        raise ValueError(f"upstream gradient has shape {dout.shape}, expected {(n, weight.shape[2])}")
    dw = np.empty_like(weight)
    dxpad = np.zeros((n + 1, weight.shape[1]))
    for j, off in enumerate(tap_offsets(weight.shape[0], dilation)):
        dw[j] = taps[j].T @ dout
        # Valid indices are distinct within a tap; only the padding row repeats.
        dxpad[tap_index(lengths, off)] += dout @ weight[j].T
    return dxpad[:n], dw, dout.sum(axis=0)


def conv1d(x, f: ConvFilter, lengths=None):
    return conv1d_forward(x, f.weight, f.bias, f.dilation, lengths)[0]


def standard_conv1d(x, weight, bias):
    """Undilated convolution of one sequence by explicit zero padding and slicing.

    Accumulates taps in the same order as :func:`conv1d_forward`, so the two
    agree bit for bit when ``dilation == 1``.
    """
    n, c = x.shape
    offsets = tap_offsets(weight.shape[0], 1)
    lo, hi = -offsets[0], offsets[-1]
    xpad = np.zeros((n + lo + hi, c))
    xpad[lo : lo + n] = x
    out = None
    for j, off in enumerate(offsets):
        xj = xpad[lo + off : lo + off + n]
        out = xj @ weight[j] if out is None else out + xj @ weight[j]
    out += bias
    return out


# --------------------------------------------------------------------------
# Batch normalization


@dataclass
class BatchNormParams:
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = BN_MOMENTUM
    eps: float = BN_EPS

    @classmethod
    def identity(cls, channels: int, **kw) -> "BatchNormParams":
        return cls(np.ones(channels), np.zeros(channels), np.zeros(channels), np.ones(channels), **kw)


def batch_norm_forward(x, gamma, beta, running_mean, running_var, mode=TRAIN, momentum=BN_MOMENTUM, eps=BN_EPS):
    """Per-channel normalization over all rows of ``x``.

    In train mode the cache carries ``new_running = (mean, var)`` for the
    caller to store; the inputs are never modified.
    """
    m = x.shape[0]
    if mode == TRAIN:
        if m < 2:
            raise ValueError(f"batch norm in train mode needs at least 2 rows, got {m}")
        mean = x.mean(axis=0)
        var = x.var(axis=0)
        new_running = (
            momentum * running_mean + (1.0 - momentum) * mean,
            momentum * running_var + (1.0 - momentum) * var,
        )
    elif mode == INFER:
        mean, var = running_mean, running_var
        new_running = None
    else:
        raise ValueError(f"unknown mode {mode!r}")
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean) * inv_std
    out = gamma * xhat + beta
    cache = (xhat, gamma, inv_std, mode, new_running)
    return out, cache


def batch_norm_backward(dout, cache):
    xhat, gamma, inv_std, mode, _ = cache
    dgamma = (dout * xhat).sum(axis=0)
    dbeta = dout.sum(axis=0)
    dxhat = dout * gamma
    if mode == INFER:
        return dxhat * inv_std, dgamma, dbeta
    m = xhat.shape[0]
    dx = inv_std / m * (m * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0))
    return dx, dgamma, dbeta


def batch_norm(x, params: BatchNormParams, mode=TRAIN):
    """Normalize ``x``; in train mode also update ``params`` running statistics."""
    out, cache = batch_norm_forward(
        x, params.gamma, params.beta, params.running_mean, params.running_var, mode, params.momentum, params.eps
    )
    if mode == TRAIN:
        params.running_mean, params.running_var = cache[4]
    return out


# --------------------------------------------------------------------------
# Leaky ReLU


def leaky_relu_forward(x, alpha=LEAKY_ALPHA):
    out = np.where(x > 0, x, alpha * x)
    return out, (x, alpha)


def leaky_relu_backward(dout, cache):
    x, alpha = cache
    return dout * np.where(x > 0, 1.0, alpha)


def leaky_relu(x, alpha=LEAKY_ALPHA):
    return leaky_relu_forward(np.asarray(x, dtype=np.float64), alpha)[0]


# --------------------------------------------------------------------------
# Residual block: o = x + F(x), F = (conv -> BN -> LeakyReLU) twice

BLOCK_PARAM_NAMES = (
    "conv1.weight", "conv1.bias", "bn1.gamma", "bn1.beta",
    "conv2.weight", "conv2.bias", "bn2.gamma", "bn2.beta",
)  # fmt: skip
BLOCK_STAT_NAMES = ("bn1.running_mean", "bn1.running_var", "bn2.running_mean", "bn2.running_var")


def init_block_params(c_in, c_out, window, rng):
    p = {}
    for k, (i, o) in enumerate([(c_in, c_out), (c_out, c_out)], 1):
        p[f"conv{k}.weight"] = glorot_uniform((window, i, o), rng)
        p[f"conv{k}.bias"] = np.zeros(o)
        p[f"bn{k}.gamma"] = np.ones(o)
        p[f"bn{k}.beta"] = np.zeros(o)
        p[f"bn{k}.running_mean"] = np.zeros(o)
        p[f"bn{k}.running_var"] = np.ones(o)
    return p


def residual_block_forward(
    x, p, dilation, mode=TRAIN, lengths=None, residual=True,
    alpha=LEAKY_ALPHA, momentum=BN_MOMENTUM, eps=BN_EPS,
):  # fmt: skip
    """Apply one block. ``p`` maps the names in ``BLOCK_PARAM_NAMES``/``BLOCK_STAT_NAMES``.

    Returns ``(out, cache, stats)`` where ``stats`` holds updated running
    statistics (empty in infer mode).
    """
    if residual and p["conv2.weight"].shape[2] != x.shape[1]:
        raise ValueError(
            f"residual block maps {x.shape[1]} channels to {p['conv2.weight'].shape[2]}; the skip needs them equal"
        )
    caches = []
    stats = {}
    h = x
    for k in (1, 2):
        a, c_conv = conv1d_forward(h, p[f"conv{k}.weight"], p[f"conv{k}.bias"], dilation, lengths)
        z, c_bn = batch_norm_forward(
            a, p[f"bn{k}.gamma"], p[f"bn{k}.beta"], p[f"bn{k}.running_mean"], p[f"bn{k}.running_var"],
            mode, momentum, eps,
        )  # fmt: skip
        h, c_act = leaky_relu_forward(z, alpha)
        caches.append((c_conv, c_bn, c_act))
        if c_bn[4] is not None:
            stats[f"bn{k}.running_mean"], stats[f"bn{k}.running_var"] = c_bn[4]
    out = x + h if residual else h
    return out, (caches, residual), stats


def residual_block_backward(dout, cache):
    caches, residual = cache
    grads = {}
    dh = dout
    for k, (c_conv, c_bn, c_act) in zip((2, 1), reversed(caches)):
        dz = leaky_relu_backward(dh, c_act)
        da, grads[f"bn{k}.gamma"], grads[f"bn{k}.beta"] = batch_norm_backward(dz, c_bn)
        dh, grads[f"conv{k}.weight"], grads[f"conv{k}.bias"] = conv1d_backward(da, c_conv)
    dx = dout + dh if residual else dh
    return dx, grads


def residual_block(x, p, dilation, mode=TRAIN, lengths=None, residual=True, **kw):
    return residual_block_forward(x, p, dilation, mode, lengths, residual, **kw)[0]


# --------------------------------------------------------------------------
# Initialization and gradient checking


def glorot_uniform(shape, rng):
    """Uniform in +-sqrt(6 / (fan_in + fan_out)); conv fans include the window."""
    if len(shape) == 3:
        fan_in, fan_out = shape[0] * shape[1], shape[0] * shape[2]
    else:
        fan_in, fan_out = shape[0], shape[-1]
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def relative_error(analytic, numeric):
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)


def numeric_gradient(fn: Callable[[], float], x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central differences of ``fn()`` w.r.t. ``x``, perturbing ``x`` in place."""
    if h <= 0:
        raise ValueError("step h must be positive")
    grad = np.zeros_like(x)
    for idx in itertools.product(*map(range, x.shape)):
        old = x[idx]
        x[idx] = old + h
        fp = fn()
        x[idx] = old - h
        fm = fn()
        x[idx] = old
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise FloatingPointError(f"non-finite objective while perturbing index {idx}")
        grad[idx] = (fp - fm) / (2 * h)
    return grad


def grad_check(
    fn: Callable[[], float],
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    h: float = 1e-5,
    tol: float | None = None,
    details: dict | None = None,
) -> float:
    """Largest elementwise relative error between ``grads`` and finite differences.

    ``fn`` evaluates the scalar objective reading the arrays in ``params``,
    which are perturbed in place and restored. If ``details`` is given it
    receives the per-parameter maximum errors. With ``tol`` set, a failing
    parameter raises ``AssertionError``.
    """
    worst = 0.0
    for name, analytic in grads.items():
        if not np.all(np.isfinite(analytic)):
            raise FloatingPointError(f"non-finite analytic gradient for {name}")
        numeric = numeric_gradient(fn, params[name], h)
        err = float(relative_error(analytic, numeric).max()) if analytic.size else 0.0
        if details is not None:
            details[name] = err
        worst = max(worst, err)
        if tol is not None and err > tol:
            raise AssertionError(f"gradient check failed for {name}: relative error {err:.3g} > {tol:g}")
    return worst
