"""Anisotropic generalized-Gaussian blur kernels."""

from __future__ import annotations

import math

import numpy as np

from ..numerics import Tensor


def covariance(tau_x: float, tau_y: float, angle: float) -> np.ndarray:
    """Rotated 2x2 covariance acting on (column, row) offsets."""
    c, s = math.cos(angle), math.sin(angle)
    rot = np.array([[c, -s], [s, c]])
    return rot @ np.diag([tau_x * tau_x, tau_y * tau_y]) @ rot.T


def generalized_gaussian(tau_x, tau_y, angle, beta_shape, radius) -> np.ndarray:
    """``exp(-(d / 2) ** beta)`` with ``d`` the squared Mahalanobis radius, normalized."""
    if tau_x <= 0 or tau_y <= 0:
        raise ValueError(f"blur scales must be positive, got tau_x={tau_x}, tau_y={tau_y}")
    if beta_shape <= 0:
        raise ValueError(f"beta_shape must be positive, got {beta_shape}")
    if radius < 1:
        raise ValueError(f"radius must be positive, got {radius}")
    inv = np.linalg.inv(covariance(tau_x, tau_y, angle))
    ax = np.arange(-radius, radius + 1, dtype=np.float64)
    col, row = np.meshgrid(ax, ax)
    d = inv[0, 0] * col * col + (inv[0, 1] + inv[1, 0]) * col * row + inv[1, 1] * row * row
    k = np.exp(-np.power(d / 2.0, beta_shape))
    return k / k.sum()


def build_blur_kernel(stage) -> Tensor:
    p = stage.params if hasattr(stage, "params") else stage
    return Tensor(generalized_gaussian(p["tau_x"], p["tau_y"], p["angle"], p["beta_shape"],
                                       int(p["radius"])))
