"""Central finite-difference oracle for autodiff gradients."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, backward, no_grad


class NondeterministicFunction(RuntimeError):
    pass


def _value(fn):
    with no_grad():
        out = fn()
    return float(out.data) if isinstance(out, Tensor) else float(out)


def relative_error(g_ad, g_fd):
    g_ad, g_fd = np.asarray(g_ad, float), np.asarray(g_fd, float)
    return np.abs(g_ad - g_fd) / np.maximum(1e-12, np.abs(g_ad) + np.abs(g_fd))


def finite_diff_check(fn, params, step: float = 1e-5, sample_count: int = 32,
                      seed: int = 0, return_details: bool = False):
    """Max relative error between autodiff and central differences of scalar ``fn()``.

    ``params`` are tensors with ``requires_grad``; ``sample_count`` coordinates
    are drawn uniformly (without replacement) across all of them. Error per
    coordinate is ``|g_ad - g_fd| / max(1e-12, |g_ad| + |g_fd|)``.
    """
    params = list(params)
    first, second = _value(fn), _value(fn)
    if first != second:
        raise NondeterministicFunction(
            f"fn() returned {first!r} then {second!r}; fix its seeds before checking gradients")

    for p in params:
        if not hasattr(p, "zero_grad"):
            p.grad = None
    loss = fn()
    backward(loss, params=[p for p in params if hasattr(p, "zero_grad")])
    grads = [np.array(p.grad, dtype=float) if p.grad is not None else np.zeros(p.shape)
             for p in params]
    for p in params:
        if not hasattr(p, "zero_grad"):
            p.grad = None

    sizes = np.array([p.size for p in params])
    total = int(sizes.sum())
    rng = np.random.default_rng(seed)
    picks = rng.choice(total, size=min(sample_count, total), replace=False)
    offsets = np.concatenate([[0], np.cumsum(sizes)])

    ad, fd = [], []
    for flat in np.sort(picks):
        which = int(np.searchsorted(offsets, flat, side="right") - 1)
        local = int(flat - offsets[which])
        p = params[which]
        view = p.data.reshape(-1)
        if not np.shares_memory(view, p.data):
            raise ValueError("parameter data must be contiguous for perturbation")
        orig = view[local]
        view[local] = orig + step
        up = _value(fn)
        view[local] = orig - step
        down = _value(fn)
        view[local] = orig
        fd.append((up - down) / (2.0 * step))
        ad.append(grads[which].reshape(-1)[local])
    err = relative_error(ad, fd)
    worst = float(err.max()) if err.size else 0.0
    if return_details:
        return worst, np.array(ad), np.array(fd)
    return worst
