"""Dense NCHW forward/backward kernels.

Tensors are plain ``numpy`` arrays of shape ``(n, c, h, w)``. Training runs
in float32; gradient checks run the same kernels in float64. Every kernel is
a pure function of its arguments.
"""
from __future__ import annotations

from typing import Callable, Optional, Sequence, Tuple

import numpy as np

TRAIN_DTYPE = np.float32
VERIFY_DTYPE = np.float64


class ShapeError(ValueError):
    """Raised when array shapes are incompatible with a kernel."""


def as_tensor4(x, dtype=None) -> np.ndarray:
    arr = np.asarray(x, dtype=dtype)
    if arr.ndim != 4:
        raise ShapeError(f"expected a 4-D (n, c, h, w) array, got shape {arr.shape}")
    return arr


def same_out_size(size: int, stride: int) -> int:
    return -(-size // stride)


def same_padding(size: int, kernel: int, stride: int) -> Tuple[int, int]:
    """Low/high zero padding so that the output has ``ceil(size/stride)`` entries.

    Odd totals put the extra row on the high side.
    """
    out = same_out_size(size, stride)
    total = max((out - 1) * stride + kernel - size, 0)
    return total // 2, total - total // 2


def _pad_spec(h: int, w: int, kh: int, kw: int, sh: int, sw: int):
    ph = same_padding(h, kh, sh)
    pw = same_padding(w, kw, sw)
    return ph, pw, same_out_size(h, sh), same_out_size(w, sw)


def _valid_range(offset: int, pad_low: int, stride: int, size: int, out: int):
    """Output indices ``r`` whose source ``r*stride + offset - pad_low`` lies in ``[0, size)``."""
    lo = max(0, -(-(pad_low - offset) // stride))
    hi = min(out - 1, (size - 1 - offset + pad_low) // stride)
    return lo, hi


def _im2col(x: np.ndarray, kh: int, kw: int, sh: int, sw: int):
    n, c, h, w = x.shape
    ph, pw, ho, wo = _pad_spec(h, w, kh, kw, sh, sw)
    cols = np.zeros((n, c, kh, kw, ho, wo), dtype=x.dtype)
    for i in range(kh):
        r0, r1 = _valid_range(i, ph[0], sh, h, ho)
        if r1 < r0:
            continue
        src_r = slice(r0 * sh + i - ph[0], r1 * sh + i - ph[0] + 1, sh)
        for j in range(kw):
            c0, c1 = _valid_range(j, pw[0], sw, w, wo)
            if c1 < c0:
                continue
            src_c = slice(c0 * sw + j - pw[0], c1 * sw + j - pw[0] + 1, sw)
            cols[:, :, i, j, r0:r1 + 1, c0:c1 + 1] = x[:, :, src_r, src_c]
    return cols.reshape(n, c * kh * kw, ho * wo), ho, wo


def _col2im(cols: np.ndarray, shape, kh: int, kw: int, sh: int, sw: int) -> np.ndarray:
    """Adjoint of ``_im2col``: scatter-add patch columns back into an image."""
    n, c, h, w = shape
    ph, pw, ho, wo = _pad_spec(h, w, kh, kw, sh, sw)
    cols = cols.reshape(n, c, kh, kw, ho, wo)
    x = np.zeros((n, c, h, w), dtype=cols.dtype)
    for i in range(kh):
        r0, r1 = _valid_range(i, ph[0], sh, h, ho)
        if r1 < r0:
            continue
        dst_r = slice(r0 * sh + i - ph[0], r1 * sh + i - ph[0] + 1, sh)
        for j in range(kw):
            c0, c1 = _valid_range(j, pw[0], sw, w, wo)
            if c1 < c0:
                continue
            dst_c = slice(c0 * sw + j - pw[0], c1 * sw + j - pw[0] + 1, sw)
            x[:, :, dst_r, dst_c] += cols[:, :, i, j, r0:r1 + 1, c0:c1 + 1]
    return x


def _check_conv(x: np.ndarray, weight: np.ndarray, in_axis: int, op: str) -> None:
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeError(f"{op}: input {x.shape} and weight {weight.shape} must both be 4-D")
    if x.shape[1] != weight.shape[in_axis]:
        raise ShapeError(
            f"{op}: input shape {x.shape} has {x.shape[1]} channels but weight shape "
            f"{weight.shape} expects {weight.shape[in_axis]}"
        )


def _pair(v) -> Tuple[int, int]:
    if isinstance(v, int):
        return v, v
    a, b = v
    return int(a), int(b)


def conv2d_forward(x: np.ndarray, weight: np.ndarray, bias: Optional[np.ndarray] = None,
                   stride=1, return_cols: bool = False):
    """Cross-correlation with zero 'same' padding.

    ``weight`` is ``(out_channels, in_channels, kh, kw)``; the output is
    ``(n, out_channels, ceil(h/sh), ceil(w/sw))``. With ``return_cols`` the
    unfolded patches are returned too, for reuse by :func:`conv2d_backward`.
    """
    _check_conv(x, weight, 1, "conv2d")
    sh, sw = _pair(stride)
    o, _, kh, kw = weight.shape
    cols, ho, wo = _im2col(x, kh, kw, sh, sw)
    out = np.matmul(weight.reshape(o, -1), cols)
    if bias is not None:
        out += bias.reshape(1, o, 1)
    out = out.reshape(x.shape[0], o, ho, wo)
    return (out, cols) if return_cols else out


def conv2d_backward(grad_out: np.ndarray, x: Optional[np.ndarray], weight: np.ndarray,
                    stride=1, cols: Optional[np.ndarray] = None):
    """Gradients of ``sum(grad_out * conv2d_forward(x, weight, bias))``.

    Returns ``(grad_input, grad_weight, grad_bias)``.
    """
    if x is None:
        raise ValueError("conv2d_backward needs the cached forward input")
    _check_conv(x, weight, 1, "conv2d_backward")
    sh, sw = _pair(stride)
    o, _, kh, kw = weight.shape
    n = x.shape[0]
    expected = (n, o, same_out_size(x.shape[2], sh), same_out_size(x.shape[3], sw))
    if grad_out.shape != expected:
        raise ShapeError(f"conv2d_backward: grad_out shape {grad_out.shape} != forward output {expected}")
    g = grad_out.reshape(n, o, -1)
    if cols is None:
        cols, _, _ = _im2col(x, kh, kw, sh, sw)
    grad_w = np.zeros((o, cols.shape[1]), dtype=x.dtype)
    for k in range(n):
        grad_w += g[k] @ cols[k].T
    del cols
    grad_cols = np.matmul(weight.reshape(o, -1).T, g)
    grad_x = _col2im(grad_cols, x.shape, kh, kw, sh, sw)
    return grad_x, grad_w.reshape(weight.shape), g.sum(axis=(0, 2))


def convtranspose2d_forward(y: np.ndarray, weight: np.ndarray, bias: Optional[np.ndarray],
                            target: Sequence[int], stride=2) -> np.ndarray:
    """Transposed convolution, the adjoint of :func:`conv2d_forward`.

    ``weight`` has the layout of the conv it inverts,
    ``(in_channels, out_channels, kh, kw)``. ``target`` is the ``(h, w)``
    output size; it must map back onto ``y`` under ceil division.
    """
    _check_conv(y, weight, 0, "convtranspose2d")
    sh, sw = _pair(stride)
    th, tw = int(target[0]), int(target[1])
    if th < 1 or tw < 1 or same_out_size(th, sh) != y.shape[2] or same_out_size(tw, sw) != y.shape[3]:
        raise ShapeError(
            f"convtranspose2d: target {(th, tw)} incompatible with input {y.shape} at stride {(sh, sw)}"
        )
    i, c, kh, kw = weight.shape
    n = y.shape[0]
    cols = np.matmul(weight.reshape(i, -1).T, y.reshape(n, i, -1))
    out = _col2im(cols, (n, c, th, tw), kh, kw, sh, sw)
    if bias is not None:
        out = out + bias.reshape(1, c, 1, 1)
    return np.ascontiguousarray(out)


def convtranspose2d_backward(grad_out: np.ndarray, y: Optional[np.ndarray], weight: np.ndarray,
                             stride=2):
    if y is None:
        raise ValueError("convtranspose2d_backward needs the cached forward input")
    _check_conv(y, weight, 0, "convtranspose2d_backward")
    sh, sw = _pair(stride)
    i, c, kh, kw = weight.shape
    n = y.shape[0]
    if grad_out.shape[:2] != (n, c) or same_out_size(grad_out.shape[2], sh) != y.shape[2] \
            or same_out_size(grad_out.shape[3], sw) != y.shape[3]:
        raise ShapeError(f"convtranspose2d_backward: grad_out {grad_out.shape} does not match input {y.shape}")
    grad_y = conv2d_forward(grad_out, weight, None, (sh, sw))
    cols, _, _ = _im2col(grad_out, kh, kw, sh, sw)
    yf = y.reshape(n, i, -1)
    grad_w = np.zeros((i, cols.shape[1]), dtype=y.dtype)
    for k in range(n):
        grad_w += yf[k] @ cols[k].T
    return grad_y, grad_w.reshape(weight.shape), grad_out.sum(axis=(0, 2, 3))


def maxpool2d_forward(x: np.ndarray):
    """2x2 max-pool, stride 2, ceil mode.

    Returns ``(out, index)``; ``index`` holds, per output cell, the flat
    ``h*w`` position of the winning input. Ties go to the lowest flat index.
    """
    n, c, h, w = x.shape
    ho, wo = same_out_size(h, 2), same_out_size(w, 2)
    xp = np.pad(x, ((0, 0), (0, 0), (0, 2 * ho - h), (0, 2 * wo - w)), constant_values=-np.inf)
    win = xp.reshape(n, c, ho, 2, wo, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, ho, wo, 4)
    arg = win.argmax(axis=-1)
    out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
    rows = 2 * np.arange(ho)[:, None] + arg // 2
    cols = 2 * np.arange(wo)[None, :] + arg % 2
    return np.ascontiguousarray(out), rows * w + cols


def maxpool2d_backward(grad_out: np.ndarray, index: np.ndarray, input_shape: Sequence[int]) -> np.ndarray:
    n, c, h, w = input_shape
    expected = (n, c, same_out_size(h, 2), same_out_size(w, 2))
    if grad_out.shape != expected or index.shape != expected:
        raise ShapeError(
            f"maxpool2d_backward: grad_out {grad_out.shape} / index {index.shape} "
            f"inconsistent with input {tuple(input_shape)}"
        )
    if index.size and (index.min() < 0 or index.max() >= h * w):
        raise ShapeError("maxpool2d_backward: index map points outside the input")
    grad = np.zeros((n, c, h * w), dtype=grad_out.dtype)
    np.put_along_axis(grad, index.reshape(n, c, -1), grad_out.reshape(n, c, -1), axis=-1)
    return grad.reshape(n, c, h, w)


def leaky_relu_forward(x: np.ndarray, slope: float = 0.2) -> np.ndarray:
    if not 0.0 < slope < 1.0:
        raise ValueError(f"leaky ReLU slope must lie in (0, 1), got {slope}")
    return np.maximum(x, x * x.dtype.type(slope))


def leaky_relu_backward(grad_out: np.ndarray, x: np.ndarray, slope: float = 0.2) -> np.ndarray:
    return np.where(x > 0, grad_out, grad_out * grad_out.dtype.type(slope))


def l1_loss(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean absolute error over every entry."""
    if pred.shape != target.shape:
        raise ShapeError(f"l1_loss: pred shape {pred.shape} != target shape {target.shape}")
    return float(np.mean(np.abs(pred - target), dtype=np.float64))


def l1_loss_backward(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    if pred.shape != target.shape:
        raise ShapeError(f"l1_loss: pred shape {pred.shape} != target shape {target.shape}")
    return (np.sign(pred - target) / pred.size).astype(pred.dtype)


def finite_difference_check(fn: Callable[[np.ndarray], Tuple[float, np.ndarray]], x: np.ndarray,
                            eps: float = 1e-6, indices=None, floor: float = 1e-7) -> float:
    """Largest relative error between analytic and central-difference gradients.

    ``fn(x)`` returns ``(scalar, grad_wrt_x)``. ``indices`` optionally limits
    the check to a subset of flat positions. The relative error denominator
    is ``max(|analytic|, |numeric|, floor * max|analytic|)`` so that entries
    with negligible gradient do not dominate.
    """
    if eps <= 0:
        raise ValueError(f"epsilon must be positive, got {eps}")
    if x.dtype != VERIFY_DTYPE:
        raise TypeError("finite differences need float64 (verification precision) input")
    x = x.copy()
    _, analytic = fn(x)
    analytic = np.asarray(analytic, dtype=np.float64).reshape(-1)
    flat = x.reshape(-1)
    if indices is None:
        indices = range(flat.size)
    scale = max(float(np.abs(analytic).max(initial=0.0)), 1e-300)
    worst = 0.0
    for k in indices:
        orig = flat[k]
        flat[k] = orig + eps
        fp, _ = fn(x)
        flat[k] = orig - eps
        fm, _ = fn(x)
        flat[k] = orig
        numeric = (fp - fm) / (2 * eps)
        a = analytic[k]
        denom = max(abs(a), abs(numeric), floor * scale)
        if denom > 0:
            worst = max(worst, abs(a - numeric) / denom)
    return worst


def receptive_field(layers: Sequence[Tuple[int, int]]) -> int:
    """Receptive field (per axis) of a stack of ``(kernel, stride)`` layers."""
    rf, jump = 1, 1
    for k, s in layers:
        rf += (k - 1) * jump
        jump *= s
    return rf


def is_finite(x: np.ndarray) -> bool:
    return bool(np.isfinite(x).all())

