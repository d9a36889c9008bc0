"""Image-shaped differentiable ops built on :mod:`irib.numerics.tensor`."""

from __future__ import annotations

import functools
import math

import numpy as np

from . import backend
from .tensor import ShapeError, Tensor, as_tensor, result


def conv2d(input: Tensor, kernel: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlate NCHW ``input`` with OIHW ``kernel`` (zero padding).

    Output spatial size is ``(H + 2*padding - KH) // stride + 1`` (same for W).
    """
    x, w = as_tensor(input), as_tensor(kernel)
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"conv2d expects NCHW input and OIHW kernel, got {x.shape} and {w.shape}")
    if stride < 1 or padding < 0:
        raise ValueError(f"conv2d needs stride >= 1 and padding >= 0, got {stride}, {padding}")
    n, c, h, wd = x.shape
    o, ci, kh, kw = w.shape
    if ci != c:
        raise ShapeError(f"conv2d channel mismatch: input {x.shape} vs kernel {w.shape}")
    if h + 2 * padding < kh or wd + 2 * padding < kw:
        raise ShapeError(
            f"conv2d kernel {w.shape} larger than padded input {x.shape} (padding={padding})")
    xd = np.ascontiguousarray(x.data)
    wdat = np.ascontiguousarray(w.data)
    kernels = backend.get()
    out = kernels.conv2d_forward(xd, wdat, stride, padding)

    def bw(g):
        return kernels.conv2d_backward(xd, wdat, np.ascontiguousarray(g), stride, padding,
                                       x.requires_grad, w.requires_grad)

    return result(out, (x, w), bw)


def separable_linear(x: Tensor, rows: np.ndarray, cols: np.ndarray) -> Tensor:
    """Apply ``rows @ X @ cols.T`` to every HxW plane of a (..., H, W) tensor."""
    x = as_tensor(x)
    if rows.shape[1] != x.shape[-2] or cols.shape[1] != x.shape[-1]:
        raise ShapeError(
            f"separable map {rows.shape} x {cols.shape} does not fit planes of {x.shape}")
    out = np.matmul(np.matmul(rows, x.data), cols.T)
    return result(out, (x,), lambda g: (np.matmul(np.matmul(rows.T, g), cols),))


@functools.lru_cache(maxsize=256)
def bilinear_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Interpolation matrix for align-corners-false bilinear resampling.

    Output sample ``i`` reads source coordinate
    ``s = (i + 0.5) * n_in / n_out - 0.5`` clamped to ``[0, n_in - 1]`` and
    blends ``floor(s)`` and ``floor(s) + 1`` with weights ``1 - frac``, ``frac``.
    """
    m = np.zeros((n_out, n_in))
    scale = n_in / n_out
    for i in range(n_out):
        s = min(max((i + 0.5) * scale - 0.5, 0.0), n_in - 1.0)
        i0 = int(math.floor(s))
        i1 = min(i0 + 1, n_in - 1)
        frac = s - i0
        m[i, i0] += 1.0 - frac
        m[i, i1] += frac
    m.flags.writeable = False
    return m


@functools.lru_cache(maxsize=256)
def nearest_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Selection matrix for nearest resampling: output ``i`` reads ``floor(i * n_in / n_out)``."""
    m = np.zeros((n_out, n_in))
    scale = n_in / n_out
    for i in range(n_out):
        m[i, min(int(math.floor(i * scale)), n_in - 1)] = 1.0
    m.flags.writeable = False
    return m


def _check_resize(x, out_h, out_w):
    if out_h < 1 or out_w < 1:
        raise ValueError(f"resize target must be at least 1x1, got {out_h}x{out_w}")
    if as_tensor(x).ndim != 4:
        raise ShapeError(f"resize expects an NCHW tensor, got {as_tensor(x).shape}")


def resize_bilinear(input: Tensor, out_h: int, out_w: int) -> Tensor:
    _check_resize(input, out_h, out_w)
    x = as_tensor(input)
    return separable_linear(x, bilinear_matrix(x.shape[2], out_h), bilinear_matrix(x.shape[3], out_w))


def resize_nearest(input: Tensor, out_h: int, out_w: int) -> Tensor:
    _check_resize(input, out_h, out_w)
    x = as_tensor(input)
    return separable_linear(x, nearest_matrix(x.shape[2], out_h), nearest_matrix(x.shape[3], out_w))


def reflect_index(i: int, n: int) -> int:
    """Mirror index ``i`` into ``[0, n)`` without repeating the edge sample."""
    if n == 1:
        return 0
    period = 2 * (n - 1)
    i = i % period
    return i if i < n else period - i


@functools.lru_cache(maxsize=256)
def reflect_matrix(n: int, before: int, after: int) -> np.ndarray:
    m = np.zeros((n + before + after, n))
    for r in range(n + before + after):
        m[r, reflect_index(r - before, n)] = 1.0
    m.flags.writeable = False
    return m


def pad_reflect(input: Tensor, top: int, bottom: int | None = None,
                left: int | None = None, right: int | None = None) -> Tensor:
    """Reflect-pad the last two axes; pads may exceed the image size."""
    bottom = top if bottom is None else bottom
    left = top if left is None else left
    right = left if right is None else right
    x = as_tensor(input)
    h, w = x.shape[-2], x.shape[-1]
    return separable_linear(x, reflect_matrix(h, top, bottom), reflect_matrix(w, left, right))


def gaussian_kernel2d(tau: float, radius: int) -> Tensor:
    """Normalized (2r+1)^2 Gaussian with std ``tau`` pixels; ``tau == 0`` gives a delta."""
    if tau < 0:
        raise ValueError(f"tau must be non-negative, got {tau}")
    if radius < 1:
        raise ValueError(f"radius must be positive, got {radius}")
    if tau > 0 and radius < math.ceil(3 * tau):
        raise ValueError(f"radius {radius} too small for tau {tau}; need >= {math.ceil(3 * tau)}")
    size = 2 * radius + 1
    if 2.0 * tau * tau == 0.0:  # tau == 0, or so small its square underflows
        k = np.zeros((size, size))
        k[radius, radius] = 1.0
        return Tensor(k)
    ax = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(ax[:, None] ** 2 + ax[None, :] ** 2) / (2.0 * tau * tau))
    return Tensor(k / k.sum())


def blur_radius(tau: float) -> int:
    return max(1, math.ceil(3 * tau))


def filter2d(input: Tensor, kernel, reflect: bool = True) -> Tensor:
    """Apply one odd-sized 2-D kernel to every channel independently (same-size output)."""
    x = as_tensor(input)
    k = kernel.data if isinstance(kernel, Tensor) else np.asarray(kernel, dtype=np.float64)
    kh, kw = k.shape
    if kh % 2 == 0 or kw % 2 == 0:
        raise ShapeError(f"filter2d needs an odd-sized kernel, got {k.shape}")
    n, c, h, w = x.shape
    planes = x.reshape(n * c, 1, h, w)
    if reflect:
        planes = pad_reflect(planes, kh // 2, kh // 2, kw // 2, kw // 2)
        out = conv2d(planes, Tensor(k[None, None]), 1, 0)
    else:
        if kh != kw:
            raise ShapeError("zero-padded filter2d needs a square kernel")
        out = conv2d(planes, Tensor(k[None, None]), 1, kh // 2)
    return out.reshape(n, c, h, w)


def gaussian_blur(input: Tensor, tau: float) -> Tensor:
    if tau == 0:
        return as_tensor(input)
    return filter2d(input, gaussian_kernel2d(tau, blur_radius(tau)))


def concat(tensors, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in ts]
    bounds = np.cumsum([0] + sizes)

    def bw(g):
        return tuple(np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis)
                     if ts[i].requires_grad else None for i in range(len(ts)))

    return result(np.concatenate([t.data for t in ts], axis=axis), tuple(ts), bw)


def stack(tensors, axis: int = 0) -> Tensor:
    return concat([as_tensor(t).reshape(_expand_shape(as_tensor(t).shape, axis)) for t in tensors],
                  axis=axis)


def _expand_shape(shape, axis):
    shape = list(shape)
    axis = axis if axis >= 0 else len(shape) + 1 + axis
    shape.insert(axis, 1)
    return tuple(shape)


def soft_round(x: Tensor, alpha: float = 5.0) -> Tensor:
    """Smooth rounding surrogate; tends to ``round`` as ``alpha`` grows.

    ``floor(x) + 1/2 + tanh(alpha*r) / (2*tanh(alpha/2))`` with
    ``r = x - floor(x) - 1/2``. Continuous with continuous derivative at the
    integer seams, which keeps finite-difference checks meaningful.
    """
    x = as_tensor(x)
    fl = np.floor(x.data)
    r = x.data - fl - 0.5
    th = np.tanh(alpha * r)
    denom = 2.0 * math.tanh(alpha / 2.0)
    y = fl + 0.5 + th / denom
    slope = alpha * (1.0 - th * th) / denom
    return result(y, (x,), lambda g: (g * slope,))


def mse(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"mse operands differ in shape: {a.shape} vs {b.shape}")
    return (a - b).square().mean()
