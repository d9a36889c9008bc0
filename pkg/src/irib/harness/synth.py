"""Procedural HQ image corpus: gradients, ellipses, convex polygons and textures."""

from __future__ import annotations

import numpy as np

SUPERSAMPLE = 2


def _color(rng):
    return rng.uniform(0.0, 1.0, size=3)


def _ellipse_mask(rng, yy, xx):
    cy, cx = rng.uniform(0.1, 0.9, size=2)
    ry, rx = rng.uniform(0.06, 0.3, size=2)
    th = rng.uniform(0, np.pi)
    dy, dx = yy - cy, xx - cx
    u = np.cos(th) * dx + np.sin(th) * dy
    v = -np.sin(th) * dx + np.cos(th) * dy
    return (u / rx) ** 2 + (v / ry) ** 2 <= 1.0


def _polygon_mask(rng, yy, xx):
    k = int(rng.integers(3, 7))
    cy, cx = rng.uniform(0.15, 0.85, size=2)
    angles = np.sort(rng.uniform(0, 2 * np.pi, size=k))
    radii = rng.uniform(0.08, 0.35, size=k)
    py, px = cy + radii * np.sin(angles), cx + radii * np.cos(angles)
    mask = np.ones(yy.shape, dtype=bool)
    # Vertices sorted by angle around an interior point form a star-shaped
    # polygon; intersecting the half-planes keeps its convex core.
    for i in range(k):
        j = (i + 1) % k
        ex, ey = px[j] - px[i], py[j] - py[i]
        mask &= ex * (yy - py[i]) - ey * (xx - px[i]) >= 0
    return mask


def _texture(rng, yy, xx, max_freq):
    out = np.zeros(yy.shape)
    for _ in range(int(rng.integers(2, 5))):
        f = rng.uniform(2.0, max_freq)
        th = rng.uniform(0, np.pi)
        out += np.sin(2 * np.pi * f * (np.cos(th) * xx + np.sin(th) * yy) + rng.uniform(0, 2 * np.pi))
    return out / 4.0


def synth_image(size: int, seed, index: int, edge_density: float = 1.0) -> np.ndarray:
    """One CHW image in [0, 1], a pure function of ``(size, seed, index, edge_density)``."""
    rng = np.random.default_rng([int(seed), int(index)])
    s = size * SUPERSAMPLE
    coords = (np.arange(s) + 0.5) / s
    yy, xx = np.meshgrid(coords, coords, indexing="ij")

    th = rng.uniform(0, 2 * np.pi)
    ramp = np.clip(0.5 + (np.cos(th) * (xx - 0.5) + np.sin(th) * (yy - 0.5)), 0, 1)
    c0, c1 = _color(rng), _color(rng)
    img = c0[:, None, None] * (1 - ramp) + c1[:, None, None] * ramp

    n_shapes = max(1, int(round(rng.integers(2, 6) * edge_density)))
    for _ in range(n_shapes):
        mask = _ellipse_mask(rng, yy, xx) if rng.uniform() < 0.5 else _polygon_mask(rng, yy, xx)
        col = _color(rng)
        if rng.uniform() < 0.4:
            tex = _texture(rng, yy, xx, max_freq=size / 6.0)
            fill = np.clip(col[:, None, None] + 0.25 * tex[None], 0, 1)
        else:
            fill = np.broadcast_to(col[:, None, None], img.shape)
        img = np.where(mask[None], fill, img)

    img = img.reshape(3, size, SUPERSAMPLE, size, SUPERSAMPLE).mean(axis=(2, 4))
    return np.clip(img, 0.0, 1.0)


def synth_dataset(n: int, size: int = 64, seed=0, edge_density: float = 1.0) -> np.ndarray:
    """``n`` procedural images as an (n, 3, size, size) float64 array in [0, 1]."""
    if n < 1:
        raise ValueError(f"corpus size must be at least 1, got {n}")
    if size < 8:
        raise ValueError(f"image size must be at least 8, got {size}")
    return np.stack([synth_image(size, seed, i, edge_density) for i in range(n)])


def gradient_energy(img: np.ndarray) -> float:
    """Mean squared finite difference over both axes of a (..., H, W) array."""
    dy = np.diff(img, axis=-2)
    dx = np.diff(img, axis=-1)
    return float((dy ** 2).mean() + (dx ** 2).mean())
