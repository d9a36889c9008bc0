"""Differentiable JPEG surrogate: 8x8 block DCT, scaled quantization, soft rounding."""

from __future__ import annotations

import functools
import math

import numpy as np

from ..numerics import Tensor, as_tensor, pad_reflect, separable_linear, soft_round

# Annex K tables of the JPEG standard.
LUMA_TABLE = np.array([
    [16, 11, 10, 16, 24, 40, 51, 61],
    [12, 12, 14, 19, 26, 58, 60, 55],
    [14, 13, 16, 24, 40, 57, 69, 56],
    [14, 17, 22, 29, 51, 87, 80, 62],
    [18, 22, 37, 56, 68, 109, 103, 77],
    [24, 35, 55, 64, 81, 104, 113, 92],
    [49, 64, 78, 87, 103, 121, 120, 101],
    [72, 92, 95, 98, 112, 100, 103, 99],
], dtype=np.float64)

CHROMA_TABLE = np.full((8, 8), 99.0)
CHROMA_TABLE[:4, :4] = [
    [17, 18, 24, 47],
    [18, 21, 26, 66],
    [24, 26, 56, 99],
    [47, 66, 99, 99],
]

RGB_TO_YCBCR = np.array([
    [0.299, 0.587, 0.114],
    [-0.168735892, -0.331264108, 0.5],
    [0.5, -0.418687589, -0.081312411],
])
YCBCR_TO_RGB = np.linalg.inv(RGB_TO_YCBCR)

# Quantization steps are floored here instead of at the codec's integer 1,
# so quality 100 is a near no-op.
MIN_STEP = 0.01
SOFT_ROUND_ALPHA = 5.0


def dct_matrix(n: int = 8) -> np.ndarray:
    """Orthonormal DCT-II matrix ``D`` with ``coeffs = D @ block``."""
    d = np.zeros((n, n))
    for u in range(n):
        a = math.sqrt(1.0 / n) if u == 0 else math.sqrt(2.0 / n)
        for x in range(n):
            d[u, x] = a * math.cos((2 * x + 1) * u * math.pi / (2 * n))
    return d


@functools.lru_cache(maxsize=64)
def block_dct_matrix(size: int) -> np.ndarray:
    if size % 8:
        raise ValueError(f"block DCT needs a multiple of 8, got {size}")
    m = np.kron(np.eye(size // 8), dct_matrix(8))
    m.flags.writeable = False
    return m


def block_dct(x: Tensor) -> Tensor:
    """Per-8x8-block orthonormal DCT of the last two axes."""
    x = as_tensor(x)
    return separable_linear(x, block_dct_matrix(x.shape[-2]), block_dct_matrix(x.shape[-1]))


def block_idct(c: Tensor) -> Tensor:
    c = as_tensor(c)
    return separable_linear(c, block_dct_matrix(c.shape[-2]).T, block_dct_matrix(c.shape[-1]).T)


def quality_scale(quality: int) -> float:
    """libjpeg's percentage scaling of the base tables."""
    return 5000.0 / quality if quality < 50 else 200.0 - 2.0 * quality


def quant_table(base: np.ndarray, quality: int) -> np.ndarray:
    return np.maximum(base * quality_scale(quality) / 100.0, MIN_STEP)


def _check_quality(quality):
    if isinstance(quality, bool) or not isinstance(quality, (int, np.integer)):
        raise ValueError(f"JPEG quality must be an integer in 1..100, got {quality!r}")
    if not 1 <= quality <= 100:
        raise ValueError(f"JPEG quality must be in 1..100, got {quality}")


def jpeg_proxy(img: Tensor, quality: int) -> Tensor:
    """Compress-decompress surrogate on an NCHW image in [0, 1].

    RGB inputs are coded in YCbCr with the luma/chroma tables (no chroma
    subsampling); other channel counts use the luma table per channel.
    Non-multiple-of-8 sizes are reflect-padded and cropped back.
    """
    _check_quality(int(quality) if isinstance(quality, np.integer) else quality)
    x = as_tensor(img)
    n, c, h, w = x.shape
    ph, pw = (-h) % 8, (-w) % 8
    if ph or pw:
        x = pad_reflect(x, 0, ph, 0, pw)
    hp, wp = h + ph, w + pw
    tiles = (hp // 8, wp // 8)
    luma = np.tile(quant_table(LUMA_TABLE, quality), tiles)
    if c == 3:
        chroma = np.tile(quant_table(CHROMA_TABLE, quality), tiles)
        steps = np.stack([luma, chroma, chroma])[None]
        ycc = (Tensor(RGB_TO_YCBCR) @ x.reshape(n, 3, hp * wp)).reshape(n, 3, hp, wp)
        shift = np.array([128.0, 0.0, 0.0]).reshape(1, 3, 1, 1)
    else:
        steps = luma[None, None]
        ycc = x
        shift = 128.0
    coeffs = block_dct(ycc * 255.0 - shift)
    q = soft_round(coeffs / steps, SOFT_ROUND_ALPHA) * steps
    ycc_out = (block_idct(q) + shift) * (1.0 / 255.0)
    if c == 3:
        out = (Tensor(YCBCR_TO_RGB) @ ycc_out.reshape(n, 3, hp * wp)).reshape(n, 3, hp, wp)
    else:
        out = ycc_out
    if ph or pw:
        out = out[:, :, :h, :w]
    return out
