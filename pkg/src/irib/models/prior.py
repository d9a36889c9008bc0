"""Noise schedule, forward noising and the small noise-prediction denoiser."""

from __future__ import annotations


import numpy as np

from ..numerics import ShapeError, Tensor, as_tensor
from .nets import ResidualNet


class NoiseSchedule:
    """Linear ``alphas_bar`` from ``start`` down to ``end`` over ``T`` steps."""

    def __init__(self, T=20, start=0.9999, end=0.05):
        if T < 1:
            raise ValueError(f"T must be positive, got {T}")
        self.T, self.start, self.end = int(T), float(start), float(end)
        ab = np.linspace(start, end, T) if T > 1 else np.array([start])
        if not (ab[0] <= 1.0 and ab[-1] > 0.0 and np.all(np.diff(ab) < 0)):
            raise ValueError("alphas_bar must start <= 1, end > 0 and strictly decrease")
        ab.flags.writeable = False
        self.alphas_bar = ab

    def to_dict(self):
        return {"T": self.T, "start": self.start, "end": self.end}

    def __eq__(self, other):
        return isinstance(other, NoiseSchedule) and np.array_equal(self.alphas_bar, other.alphas_bar)

    def check_t(self, t):
        t = np.asarray(t)
        if t.dtype.kind not in "iu" or np.any(t < 0) or np.any(t >= self.T):
            raise ValueError(f"timestep must be an integer in [0, {self.T}), got {t}")
        return t


def noising(z, t, eps, schedule: NoiseSchedule) -> Tensor:
    """``sqrt(ab[t]) z + sqrt(1 - ab[t]) eps``; ``t`` is an int or one int per batch item."""
    z, eps = as_tensor(z), as_tensor(eps)
    if z.shape != eps.shape:
        raise ShapeError(f"noise shape {eps.shape} differs from signal shape {z.shape}")
    t = schedule.check_t(t)
    ab = schedule.alphas_bar[t]
    if t.ndim:
        ab = ab.reshape((-1,) + (1,) * (z.ndim - 1))
    return z * np.sqrt(ab) + eps * np.sqrt(1.0 - ab)


def time_embedding(t, T, dim) -> np.ndarray:
    """Sinusoidal embedding of ``t / T``, shape (N, dim)."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64)) / T
    freqs = np.pi * 2.0 ** np.arange(dim // 2)
    ang = t[:, None] * freqs[None]
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)


class PriorScore:
    """Noise predictor ``eps_hat(z_t, t)`` over latents in [-1, 1]."""

    arch_kind = "prior_score"

    def __init__(self, schedule=None, width=16, blocks=3, time_dim=16, seed=0):
        self.schedule = schedule or NoiseSchedule()
        self.time_dim = int(time_dim)
        self.net = ResidualNet(3, 3, width=width, blocks=blocks, cond_dim=time_dim,
                               output="linear", seed=seed, film_std=0.3)

    def arch(self):
        return {"kind": self.arch_kind, "schedule": self.schedule.to_dict(),
                "time_dim": self.time_dim, "net": self.net.arch()}

    def parameters(self):
        return self.net.parameters()

    @property
    def params(self):
        return self.net.params

    def n_params(self):
        return self.net.n_params()

    def state_dict(self):
        return self.net.state_dict()

    def load_state_dict(self, state):
        self.net.load_state_dict(state)
        return self

    def freeze(self):
        self.net.freeze()
        return self

    def unfreeze(self):
        self.net.unfreeze()
        return self

    @property
    def frozen(self):
        return self.net.frozen

    def copy(self):
        other = PriorScore.__new__(PriorScore)
        other.schedule, other.time_dim = self.schedule, self.time_dim
        other.net = self.net.copy()
        return other

    def eps(self, z_t, t) -> Tensor:
        z_t = as_tensor(z_t)
        t = self.schedule.check_t(t)
        n = z_t.shape[0]
        tt = np.broadcast_to(t, (n,))
        return self.net(z_t, Tensor(time_embedding(tt, self.schedule.T, self.time_dim)))

    __call__ = eps


def to_latent(img):
    return as_tensor(img) * 2.0 - 1.0


def prior_eps(prior: PriorScore, z_t, t) -> Tensor:
    return prior.eps(z_t, t)


def denoising_loss(model: PriorScore, z, rng: np.random.Generator) -> Tensor:
    """Standard noise-prediction loss at one random timestep per item (``z`` in latent space)."""
    z = as_tensor(z)
    t = rng.integers(0, model.schedule.T, size=z.shape[0])
    eps = rng.standard_normal(z.shape)
    z_t = noising(z, t, eps, model.schedule)
    return (model.eps(z_t, t) - eps).square().mean()


__all__ = ["NoiseSchedule", "PriorScore", "denoising_loss", "noising", "prior_eps",
           "time_embedding", "to_latent"]
