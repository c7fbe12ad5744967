"""Differentiable kernels: convolutions, batch norm, activations and losses.

All convolutions are cross-correlations on NCHW tensors. Kernels follow the
usual layouts: ``[Cout, Cin, kh, kw]`` for :func:`conv2d` and
``[Cin, Cout, kh, kw]`` for :func:`conv2d_transpose`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from ..errors import DimensionError
from .core import Tensor, as_tensor, record

BN_EPS = 1e-6
BN_DECAY = 0.9
BCE_CLAMP = 1e-7


def _windows(xp: np.ndarray, kh: int, kw: int, stride: int, ho: int, wo: int) -> np.ndarray:
    """Strided view of shape (N, C, ho, wo, kh, kw) over a padded input."""
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    return win[:, :, ::stride, ::stride][:, :, :ho, :wo]


def _col2im(cols: np.ndarray, out_shape: tuple, stride: int) -> np.ndarray:
    """Scatter-add (N, ho, wo, C, kh, kw) patch values into an (N, C, H, W) array."""
    n, ho, wo, c, kh, kw = cols.shape
    out = np.zeros(out_shape, dtype=cols.dtype)
    cols = np.ascontiguousarray(cols.transpose(4, 5, 0, 3, 1, 2))
    h_span = stride * (ho - 1) + 1
    w_span = stride * (wo - 1) + 1
    for i in range(kh):
        for j in range(kw):
            out[:, :, i:i + h_span:stride, j:j + w_span:stride] += cols[i, j]
    return out


def _wide(a: np.ndarray) -> np.ndarray:
    """Forward convolutions accumulate in float64 and round once to the input dtype."""
    return a.astype(np.float64, copy=False)


def _check_4d(name: str, t: Tensor) -> None:
    if t.ndim != 4:
        raise DimensionError(f"{name} must be 4-D, got shape {t.shape}")


def conv2d(x, kernel, stride: int = 1, padding: int = 0) -> Tensor:
    x, kernel = as_tensor(x), as_tensor(kernel)
    _check_4d("conv2d input", x)
    _check_4d("conv2d kernel", kernel)
    if stride < 1 or padding < 0:
        raise DimensionError(f"invalid stride={stride} / padding={padding}")
    n, cin, h, w = x.shape
    cout, kcin, kh, kw = kernel.shape
    if kcin != cin:
        raise DimensionError(f"conv2d: input has {cin} channels, kernel expects {kcin}")
    hp, wp = h + 2 * padding, w + 2 * padding
    if kh > hp or kw > wp:
        raise DimensionError(f"conv2d: kernel {kh}x{kw} larger than padded input {hp}x{wp}")
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1
    if ho < 1 or wo < 1:
        raise DimensionError("conv2d: zero-size output")

    xd = x.data
    xp = np.pad(xd, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else xd
    win = _windows(xp, kh, kw, stride, ho, wo)
    out = np.tensordot(_wide(win), _wide(kernel.data), axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    out = out.astype(np.result_type(xd, kernel.data))

    def backward(g):
        gk = np.tensordot(g, win, axes=([0, 2, 3], [0, 2, 3])) if kernel.requires_grad else None
        gx = None
        if x.requires_grad:
            gxp = _col2im(_gcols(g, kernel.data), xp.shape, stride)
            gx = gxp[:, :, padding:padding + h, padding:padding + w] if padding else gxp
        return gx, gk

    return record("conv2d", (x, kernel), np.ascontiguousarray(out), backward)


def _gcols(g: np.ndarray, k: np.ndarray) -> np.ndarray:
    # g: (N, Cout, ho, wo), k: (Cout, Cin, kh, kw) -> (N, ho, wo, Cin, kh, kw)
    return np.tensordot(g.transpose(0, 2, 3, 1), k, axes=([3], [0]))


def conv2d_transpose(x, kernel, stride: int = 1, padding: int = 0, output_padding: int = 0) -> Tensor:
    """Adjoint of :func:`conv2d` with the same kernel, stride and padding.

    Output size is ``(H - 1) * stride - 2 * padding + kh + output_padding``.
    ``output_padding`` (< stride) picks among the input sizes that a strided
    conv2d maps to the same output size.
    """
    x, kernel = as_tensor(x), as_tensor(kernel)
    _check_4d("conv2d_transpose input", x)
    _check_4d("conv2d_transpose kernel", kernel)
    if stride < 1 or padding < 0:
        raise DimensionError(f"invalid stride={stride} / padding={padding}")
    if not 0 <= output_padding < stride:
        raise DimensionError(f"output_padding must be in [0, stride), got {output_padding}")
    n, cin, h, w = x.shape
    kcin, cout, kh, kw = kernel.shape
    if kcin != cin:
        raise DimensionError(f"conv2d_transpose: input has {cin} channels, kernel expects {kcin}")
    ho = (h - 1) * stride - 2 * padding + kh + output_padding
    wo = (w - 1) * stride - 2 * padding + kw + output_padding
    if ho < 1 or wo < 1:
        raise DimensionError(f"conv2d_transpose: non-positive output size {ho}x{wo}")
    hf = (h - 1) * stride + kh + output_padding
    wf = (w - 1) * stride + kw + output_padding

    cols = np.tensordot(_wide(x.data.transpose(0, 2, 3, 1)), _wide(kernel.data), axes=([3], [0]))
    full = _col2im(cols, (n, cout, hf, wf), stride)
    out = full[:, :, padding:padding + ho, padding:padding + wo].astype(np.result_type(x.data, kernel.data))

    def backward(g):
        gfull = np.zeros((n, cout, hf, wf), dtype=g.dtype)
        gfull[:, :, padding:padding + ho, padding:padding + wo] = g
        win = _windows(gfull, kh, kw, stride, h, w)
        gx = None
        if x.requires_grad:
            gx = np.tensordot(win, kernel.data, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
            gx = np.ascontiguousarray(gx)
        gk = np.tensordot(x.data, win, axes=([0, 2, 3], [0, 2, 3])) if kernel.requires_grad else None
        return gx, gk

    return record("conv2d_transpose", (x, kernel), np.ascontiguousarray(out), backward)


@dataclass
class BatchNormState:
    """Per-channel running statistics of one batch-norm layer."""

    running_mean: np.ndarray
    running_var: np.ndarray
    decay: float = BN_DECAY
    eps: float = BN_EPS

    @classmethod
    def create(cls, channels: int, dtype=np.float32, decay: float = BN_DECAY, eps: float = BN_EPS):
        return cls(np.zeros(channels, dtype=dtype), np.ones(channels, dtype=dtype), decay, eps)


def batch_norm(x, gamma, beta, state: BatchNormState, training: bool = True,
               update_running: bool = True) -> Tensor:
    """Normalize each channel of an NCHW tensor.

    In training mode the batch mean and (biased) variance are used and, when
    ``update_running`` is set, folded into ``state`` as
    ``running = decay * running + (1 - decay) * batch``. In eval mode the
    running statistics are used and ``state`` is left untouched.
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    _check_4d("batch_norm input", x)
    c = x.shape[1]
    if gamma.shape != (c,) or beta.shape != (c,) or state.running_mean.shape != (c,):
        raise DimensionError(
            f"batch_norm: {c} channels but gamma {gamma.shape}, beta {beta.shape}, "
            f"running stats {state.running_mean.shape}")
    xd = x.data
    axes = (0, 2, 3)
    if training:
        m = xd.shape[0] * xd.shape[2] * xd.shape[3]
        if m < 1:
            raise DimensionError("batch_norm: empty batch in training mode")
        mean = xd.mean(axis=axes)
        var = xd.var(axis=axes)
        if update_running:
            state.running_mean = (state.decay * state.running_mean + (1 - state.decay) * mean).astype(xd.dtype)
            state.running_var = (state.decay * state.running_var + (1 - state.decay) * var).astype(xd.dtype)
    else:
        mean, var = state.running_mean, state.running_var
    inv = (1.0 / np.sqrt(var + state.eps)).astype(xd.dtype)
    xhat = (xd - mean[None, :, None, None]) * inv[None, :, None, None]
    out = xhat * gamma.data[None, :, None, None] + beta.data[None, :, None, None]

    def backward(g):
        ggamma = (g * xhat).sum(axis=axes)
        gbeta = g.sum(axis=axes)
        gx = None
        if x.requires_grad:
            gxhat = g * gamma.data[None, :, None, None]
            if training:
                m = xd.shape[0] * xd.shape[2] * xd.shape[3]
                gx = (inv[None, :, None, None] / m) * (
                    m * gxhat
                    - gxhat.sum(axis=axes)[None, :, None, None]
                    - xhat * (gxhat * xhat).sum(axis=axes)[None, :, None, None])
            else:
                gx = gxhat * inv[None, :, None, None]
        return gx, ggamma, gbeta

    return record("batch_norm", (x, gamma, beta), out, backward)


# -- activations ------------------------------------------------------------

def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    y = expit(x.data)
    return record("sigmoid", (x,), y, lambda g: (g * y * (1.0 - y),))


def tanh(x) -> Tensor:
    x = as_tensor(x)
    y = np.tanh(x.data)
    return record("tanh", (x,), y, lambda g: (g * (1.0 - y * y),))


def leaky_relu(x, alpha: float = 0.2) -> Tensor:
    x = as_tensor(x)
    pos = x.data >= 0
    y = np.where(pos, x.data, alpha * x.data).astype(x.dtype)
    return record("leaky_relu", (x,), y, lambda g: (np.where(pos, g, alpha * g).astype(g.dtype),))


def relu(x) -> Tensor:
    return leaky_relu(x, 0.0)


def activation(x, kind: str, alpha: float = 0.2) -> Tensor:
    if kind == "sigmoid":
        return sigmoid(x)
    if kind == "tanh":
        return tanh(x)
    if kind == "leaky_relu":
        return leaky_relu(x, alpha)
    if kind == "relu":
        return relu(x)
    raise ValueError(f"unknown activation {kind!r}")


# -- losses -------------------------------------------------------------------

def mse_loss(x, x_prime) -> Tensor:
    """Batch mean of the per-sample squared L2 distance ``||x - x_prime||^2``."""
    x, x_prime = as_tensor(x), as_tensor(x_prime, dtype=as_tensor(x).dtype)
    if x.shape != x_prime.shape:
        raise DimensionError(f"mse_loss: shapes {x.shape} and {x_prime.shape} differ")
    if x.ndim == 0:
        raise DimensionError("mse_loss needs a batch dimension")
    n = x.shape[0]
    diff = x.data - x_prime.data
    out = np.asarray((diff * diff).sum() / n, dtype=x.dtype)

    def backward(g):
        gd = (2.0 / n) * g * diff
        return gd, -gd

    return record("mse_loss", (x, x_prime), out, backward)


def bce_loss(score, target) -> Tensor:
    """Mean binary cross-entropy of probabilities ``score`` against 0/1 ``target``.

    Scores are clamped to ``[1e-7, 1 - 1e-7]``; clamped entries get zero gradient.
    """
    score = as_tensor(score)
    t = np.broadcast_to(np.asarray(target, dtype=score.dtype), score.shape)
    s = score.data
    lo, hi = BCE_CLAMP, 1.0 - BCE_CLAMP
    sc = np.clip(s, lo, hi)
    n = s.size
    out = np.asarray(-(t * np.log(sc) + (1 - t) * np.log1p(-sc)).mean(), dtype=score.dtype)

    def backward(g):
        gs = g * (-t / sc + (1 - t) / (1 - sc)) / n
        gs = np.where((s > lo) & (s < hi), gs, 0.0).astype(score.dtype)
        return (gs,)

    return record("bce_loss", (score,), out, backward)
