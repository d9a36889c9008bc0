"""Information-bottleneck family: Gaussian KL, exact discrete bounds, VIB and beta-VAE losses."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..numerics import Tensor, as_tensor

STOCHASTIC_TOL = 1e-9


def kl_diag_gaussian(mu, sigma) -> Tensor:
    """``KL(N(mu, diag sigma^2) || N(0, I))``, summed over the last axis."""
    mu, sigma = as_tensor(mu), as_tensor(sigma)
    if mu.shape != sigma.shape:
        raise ValueError(f"mu and sigma shapes differ: {mu.shape} vs {sigma.shape}")
    if not np.all(sigma.data > 0):
        raise ValueError("sigma must be strictly positive")
    var = sigma.square()
    return (mu.square() + var - 1.0 - var.log()).sum(axis=-1) * 0.5


def _xlogy_ratio(w, num, den):
    """``sum w * log(num / den)`` with the convention ``0 * log(.) = 0``."""
    w, num, den = np.broadcast_arrays(w, num, den)
    mask = w > 0
    with np.errstate(divide="ignore"):
        return float(np.sum(w[mask] * (np.log(num[mask]) - np.log(den[mask]))))


def _check_simplex(a, axis, name):
    a = np.asarray(a, dtype=np.float64)
    if np.any(a < 0) or not np.allclose(a.sum(axis=axis), 1.0, atol=STOCHASTIC_TOL, rtol=0):
        raise ValueError(f"{name} must be non-negative and sum to 1 along axis {axis}")
    return a


@dataclass(frozen=True)
class DiscreteJoint:
    """``p[x, y]`` and encoder ``q[x, z] = q(z | x)``; ``Z`` sees ``Y`` only through ``X``."""

    p: np.ndarray
    encoder: np.ndarray

    def __post_init__(self):
        p = _check_simplex(self.p, None, "joint p(x, y)")
        enc = _check_simplex(self.encoder, 1, "encoder rows")
        if p.ndim != 2 or enc.ndim != 2 or enc.shape[0] != p.shape[0]:
            raise ValueError(f"shape mismatch: p {p.shape}, encoder {enc.shape}")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "encoder", enc)

    @property
    def px(self):
        return self.p.sum(axis=1)

    @property
    def py(self):
        return self.p.sum(axis=0)

    @property
    def pxz(self):
        return self.px[:, None] * self.encoder

    @property
    def pz(self):
        return self.pxz.sum(axis=0)

    @property
    def pyz(self):
        """``p(y, z) = sum_x p(x, y) q(z | x)``, indexed ``[y, z]``."""
        return self.p.T @ self.encoder

    def posterior_decoder(self):
        """Exact ``p(y | z)`` as a |Z| x |Y| row-stochastic matrix (uniform where ``p(z) = 0``)."""
        pzy = self.pyz.T
        pz = pzy.sum(axis=1, keepdims=True)
        uniform = np.full_like(pzy, 1.0 / pzy.shape[1])
        return np.where(pz > 0, pzy / np.where(pz > 0, pz, 1.0), uniform)

    @classmethod
    def random(cls, rng, nx, ny, nz, sparsity=0.0):
        p = rng.dirichlet(np.ones(nx * ny)).reshape(nx, ny)
        enc = rng.dirichlet(np.ones(nz), size=nx)
        if sparsity:
            enc = np.where(rng.uniform(size=enc.shape) < sparsity, 0.0, enc)
            enc[np.arange(nx), rng.integers(0, nz, size=nx)] += 1e-3
            enc /= enc.sum(axis=1, keepdims=True)
        return cls(p, enc)


def entropy(p) -> float:
    p = np.asarray(p, dtype=np.float64).ravel()
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())


def mutual_information(pab) -> float:
    pab = np.asarray(pab, dtype=np.float64)
    pa, pb = pab.sum(axis=1, keepdims=True), pab.sum(axis=0, keepdims=True)
    return _xlogy_ratio(pab, pab, pa * pb)


@dataclass(frozen=True)
class IBBounds:
    ixz: float
    ixz_upper: float
    izy: float
    izy_lower: float
    h_y: float


def ib_bound_check(joint: DiscreteJoint, r, decoder=None) -> IBBounds:
    """Exact ``I(X;Z)``, ``I(Z;Y)`` and their variational bounds by full enumeration.

    The upper bound is ``E_p(x) KL(q(z|x) || r)``; the lower bound is
    ``E_p(x,y) E_q(z|x) log decoder(y|z) + H(Y)``, with the exact posterior
    ``p(y|z)`` as the default decoder.
    """
    r = _check_simplex(r, None, "r(z)")
    dec = joint.posterior_decoder() if decoder is None else _check_simplex(decoder, 1, "decoder rows")
    nz = joint.encoder.shape[1]
    if r.shape != (nz,) or dec.shape != (nz, joint.p.shape[1]):
        raise ValueError(f"r {r.shape} / decoder {dec.shape} do not match |Z|={nz}")
    pxz, pz = joint.pxz, joint.pz
    ixz = _xlogy_ratio(pxz, joint.encoder, pz[None])
    ixz_upper = _xlogy_ratio(pxz, joint.encoder, r[None])
    pyz = joint.pyz
    izy = mutual_information(pyz)
    h_y = entropy(joint.py)
    izy_lower = -_cross_entropy(pyz, dec.T) + h_y
    return IBBounds(ixz, ixz_upper, izy, izy_lower, h_y)


def _cross_entropy(w, q) -> float:
    """``-sum w log q`` with ``0 log 0 = 0`` and ``+inf`` where ``w > 0`` meets ``q = 0``."""
    w, q = np.broadcast_arrays(np.asarray(w, float), np.asarray(q, float))
    mask = w > 0
    with np.errstate(divide="ignore"):
        return float(-np.sum(w[mask] * np.log(q[mask])))


def vib_terms(joint: DiscreteJoint, decoder, r):
    """``(E[-log q(y|z)], E_p(x) KL(q(z|x) || r))`` by enumeration."""
    dec = _check_simplex(decoder, 1, "decoder rows")
    r = _check_simplex(r, None, "r(z)")
    recon = _cross_entropy(joint.pyz, dec.T)
    kl = _xlogy_ratio(joint.pxz, joint.encoder, r[None])
    return recon, kl


def vib_loss_discrete(joint: DiscreteJoint, decoder, r, beta: float) -> float:
    if beta < 0:
        raise ValueError(f"beta must be non-negative, got {beta}")
    recon, kl = vib_terms(joint, decoder, r)
    return recon + beta * kl if beta else recon


def beta_vae_loss_gaussian(data, encoder: dict, decoder: dict, beta: float, eps=None, seed=0) -> Tensor:
    """Single-sample reparameterized beta-VAE loss with linear Gaussian encoder and decoder.

    ``encoder``: ``w_mu (D, K), b_mu (K), w_logsig (D, K), b_logsig (K)``;
    ``decoder``: ``w (K, D), b (D)`` and optional ``log_sigma`` (scalar or (D,)).
    Returns the batch mean of ``-log N(x; dec(z), s^2) + beta * KL``.
    """
    x = as_tensor(data)
    mu = x @ encoder["w_mu"] + encoder["b_mu"]
    sigma = (x @ encoder["w_logsig"] + encoder["b_logsig"]).exp()
    if eps is None:
        eps = np.random.default_rng(seed).standard_normal(mu.shape)
    z = mu + sigma * as_tensor(eps)
    mean = z @ decoder["w"] + decoder["b"]
    log_s = as_tensor(decoder.get("log_sigma", 0.0))
    d = x.shape[-1]
    resid = (x - mean) * (log_s * -1.0).exp()
    nll = (resid.square() * 0.5 + log_s).sum(axis=-1) + 0.5 * d * math.log(2 * math.pi)
    loss = nll
    if beta:
        loss = loss + kl_diag_gaussian(mu, sigma) * beta
    return loss.mean()
