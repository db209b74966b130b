"""Dense conv/transpose-conv kernels with hand-derived backward passes.

Layout conventions: activations are ``(B, C, H, W)`` float64, conv kernels
``(F, C, kh, kw)`` mapping C -> F channels. ``transpose_conv2d`` with the
same kernel is the exact adjoint of ``conv2d`` (it maps F -> C), so
``<conv(x), y> == <x, transpose_conv(y)>`` holds to machine precision; the
backward passes reuse that identity.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DimensionError


def _windows(x_padded: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    # (B, C, Ho, Wo, kh, kw) views of every stride-aligned patch
    win = sliding_window_view(x_padded, (kh, kw), axis=(2, 3))
    return win[:, :, ::stride, ::stride]


def conv2d(x: np.ndarray, w: np.ndarray, b: np.ndarray | None = None,
           stride: int = 1, padding: int = 0) -> np.ndarray:
    """Cross-correlation; output side = floor((D + 2p - k)/s) + 1."""
    if x.ndim != 4 or w.ndim != 4:
        raise DimensionError(f"conv2d expects 4-D input/kernel, got {x.shape}, {w.shape}")
    if x.shape[1] != w.shape[1]:
        raise DimensionError(f"input channels {x.shape[1]} != kernel channels {w.shape[1]}")
    kh, kw = w.shape[2], w.shape[3]
    if x.shape[2] + 2 * padding < kh or x.shape[3] + 2 * padding < kw:
        raise DimensionError("kernel larger than padded input")
    p = padding
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
    win = _windows(xp, kh, kw, stride)
    y = np.einsum("fcuv,bcijuv->bfij", w, win, optimize=True)
    if b is not None:
        y += b[None, :, None, None]
    return y


def conv2d_backward(x: np.ndarray, w: np.ndarray, grad_y: np.ndarray,
                    stride: int = 1, padding: int = 0, with_bias: bool = True):
    """Gradients (dx, dw, db) of a scalar loss through conv2d."""
    kh, kw = w.shape[2], w.shape[3]
    p = padding
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
    win = _windows(xp, kh, kw, stride)
    dw = np.einsum("bfij,bcijuv->fcuv", grad_y, win, optimize=True)
    db = grad_y.sum(axis=(0, 2, 3)) if with_bias else None
    dx = _scatter_adjoint(grad_y, w, x.shape[2], x.shape[3], stride, padding)
    return dx, dw, db


def _scatter_adjoint(y: np.ndarray, w: np.ndarray, out_h: int, out_w: int,
                     stride: int, padding: int) -> np.ndarray:
    """Adjoint of conv2d: scatter each y pixel through the kernel."""
    batch, _, h, wth = y.shape
    c = w.shape[1]
    kh, kw = w.shape[2], w.shape[3]
    p = padding
    acc = np.zeros((batch, c, out_h + 2 * p, out_w + 2 * p), dtype=y.dtype)
    for u in range(kh):
        for v in range(kw):
            contrib = np.einsum("bfij,fc->bcij", y, w[:, :, u, v], optimize=True)
            acc[:, :, u:u + stride * h:stride, v:v + stride * wth:stride] += contrib
    return acc[:, :, p:p + out_h, p:p + out_w] if p else acc


def transpose_conv2d(x: np.ndarray, w: np.ndarray, b: np.ndarray | None = None,
                     stride: int = 2, padding: int = 0) -> np.ndarray:
    """Adjoint of conv2d with kernel ``(F, C, kh, kw)``: maps F -> C channels.

    Output side = (D - 1)*stride - 2*padding + k.
    """
    if x.ndim != 4 or w.ndim != 4:
        raise DimensionError(f"transpose_conv2d expects 4-D input/kernel, got {x.shape}, {w.shape}")
    if x.shape[1] != w.shape[0]:
        raise DimensionError(f"input channels {x.shape[1]} != kernel lead dim {w.shape[0]}")
    kh, kw = w.shape[2], w.shape[3]
    out_h = (x.shape[2] - 1) * stride - 2 * padding + kh
    out_w = (x.shape[3] - 1) * stride - 2 * padding + kw
    if out_h <= 0 or out_w <= 0:
        raise DimensionError("transpose_conv2d output would be empty")
    y = _scatter_adjoint(x, w, out_h, out_w, stride, padding)
    if b is not None:
        y += b[None, :, None, None]
    return y


def transpose_conv2d_backward(x: np.ndarray, w: np.ndarray, grad_y: np.ndarray,
                              stride: int = 2, padding: int = 0, with_bias: bool = True):
    """Gradients (dx, dw, db) of a scalar loss through transpose_conv2d."""
    kh, kw = w.shape[2], w.shape[3]
    p = padding
    dx = conv2d(grad_y, w, None, stride=stride, padding=padding)
    gp = np.pad(grad_y, ((0, 0), (0, 0), (p, p), (p, p))) if p else grad_y
    win = _windows(gp, kh, kw, stride)
    dw = np.einsum("bfij,bcijuv->fcuv", x, win, optimize=True)
    db = grad_y.sum(axis=(0, 2, 3)) if with_bias else None
    return dx, dw, db


# ---------------------------------------------------------------------------
# pointwise nonlinearities

def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def silu(x: np.ndarray) -> np.ndarray:
    """x * sigmoid(x): smooth everywhere, so finite differences stay honest."""
    return x * sigmoid(x)


def silu_grad(x: np.ndarray) -> np.ndarray:
    s = sigmoid(x)
    return s * (1.0 + x * (1.0 - s))
