"""Training terms: blur-MSE LQ reconstruction, HQ prior matching, HQ fidelity, total."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..degrade import DegradationManifest, apply_manifest
from ..models import (
    PriorScore,
    condition_dropout,
    condition_tensor,
    extract_condition,
    noising,
    to_latent,
)
from ..numerics import (
    ShapeError,
    Tensor,
    as_tensor,
    concat,
    filter2d,
    gaussian_blur,
    gaussian_kernel2d,
)
from .weights import LossWeights


def _check_same(a, b, what):
    if a.shape != b.shape:
        raise ShapeError(f"{what}: shapes differ, {a.shape} vs {b.shape}")


def blur_mse(a, b, tau: float) -> Tensor:
    """``mean |G_tau * a - G_tau * b|^2``; the blur is linear, so it is applied to the difference."""
    a, b = as_tensor(a), as_tensor(b)
    _check_same(a, b, "blur_mse")
    return gaussian_blur(a - b, tau).square().mean()


def degrade_back(z_hat, manifests) -> Tensor:
    """Apply one manifest to the whole batch, or one manifest per item."""
    z_hat = as_tensor(z_hat)
    if isinstance(manifests, DegradationManifest):
        return apply_manifest(manifests, z_hat)
    manifests = list(manifests)
    if len(manifests) != z_hat.shape[0]:
        raise ShapeError(f"{len(manifests)} manifests for a batch of {z_hat.shape[0]}")
    if len(manifests) == 1:
        return apply_manifest(manifests[0], z_hat)
    return concat([apply_manifest(m, z_hat[i:i + 1]) for i, m in enumerate(manifests)], axis=0)


def lq_recon_blur_mse(z_hat, x_lq, manifest, w: LossWeights) -> Tensor:
    """``1/(2 sigma^2) * mean |G_tau * D(z_hat) - G_tau * x_lq|^2``."""
    degraded = degrade_back(z_hat, manifest)
    x_lq = as_tensor(x_lq)
    _check_same(degraded, x_lq, "lq_recon_blur_mse")
    return blur_mse(degraded, x_lq, w.tau) * w.recon_scale


def hq_prior_loss(z_hat, prior: PriorScore, student: PriorScore, seed) -> Tensor:
    """``1/2 * mean |eps_student(z_t, t) - eps_prior(z_t, t)|^2`` on a shared seeded ``(t, eps)``.

    ``z_hat`` is mapped to the [-1, 1] latent before noising. Both predictors
    should be frozen here; the gradient reaches ``z_hat`` through their inputs.
    """
    if prior.schedule != student.schedule:
        raise ValueError("student and prior noise schedules differ")
    z = to_latent(z_hat)
    rng = np.random.default_rng(seed)
    t = rng.integers(0, prior.schedule.T, size=z.shape[0])
    eps = rng.standard_normal(z.shape)
    z_t = noising(z, t, eps, prior.schedule)
    return (student.eps(z_t, t) - prior.eps(z_t, t)).square().mean() * 0.5


def hq_fid_loss(z_hat, z, features, w: LossWeights):
    """Pixel, feature and blurred-pixel fidelity terms, each already weighted."""
    z_hat, z = as_tensor(z_hat), as_tensor(z)
    _check_same(z_hat, z, "hq_fid_loss")
    diff = z_hat - z
    zero = Tensor(0.0)
    l2 = diff.square().mean() * w.lambda_l2 if w.lambda_l2 else zero
    if w.lambda_perc:
        perc = (features.feature_map(z_hat) - features.feature_map(z.detach())).square().mean()
        perc = perc * w.lambda_perc
    else:
        perc = zero
    if w.lambda_blur:
        radius = (w.k - 1) // 2
        if radius == 0:
            blurred = diff
        else:
            blurred = filter2d(diff, gaussian_kernel2d(w.hq_blur_tau, radius))
        blur = blurred.square().mean() * w.lambda_blur
    else:
        blur = zero
    return l2, perc, blur


REPORT_FIELDS = ("lq_recon", "hq_prior", "hq_fid_l2", "hq_fid_perc", "hq_fid_blur")


@dataclass
class LossReport:
    lq_recon: float = 0.0
    hq_prior: float = 0.0
    hq_fid_l2: float = 0.0
    hq_fid_perc: float = 0.0
    hq_fid_blur: float = 0.0
    total: float = 0.0
    step: int | None = None
    loss: Tensor | None = field(default=None, repr=False, compare=False)
    z_hat: Tensor | None = field(default=None, repr=False, compare=False)

    @classmethod
    def from_parts(cls, loss=None, step=None, z_hat=None, **parts):
        vals = {k: float(parts.get(k, 0.0)) for k in REPORT_FIELDS}
        total = 0.0
        for k in REPORT_FIELDS:
            total += vals[k]
        return cls(**vals, total=total, step=step, loss=loss, z_hat=z_hat)

    def to_dict(self):
        d = {k: getattr(self, k) for k in REPORT_FIELDS + ("total",)}
        if self.step is not None:
            d = {"step": self.step, **d}
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"), allow_nan=False)

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: d[k] for k in REPORT_FIELDS + ("total",)}, step=d.get("step"))


def write_jsonl(path, reports, append=False):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("a" if append else "w", encoding="utf-8") as fh:
        for r in reports:
            fh.write(r.to_json() + "\n")


def read_jsonl(path):
    with Path(path).open(encoding="utf-8") as fh:
        return [LossReport.from_dict(json.loads(line)) for line in fh if line.strip()]


@dataclass
class PairBatch:
    """Items that share one HQ ancestor: ``x_lq`` and ``x_elq`` both degrade ``z_hq``."""

    x_elq: np.ndarray
    x_lq: np.ndarray
    z_hq: np.ndarray
    hq_index: np.ndarray | None = None

    def __post_init__(self):
        shapes = {np.shape(self.x_elq), np.shape(self.x_lq), np.shape(self.z_hq)}
        if len(shapes) != 1:
            raise ShapeError(f"unpaired batch: shapes {sorted(shapes)}")
        if len(np.shape(self.z_hq)) != 4:
            raise ShapeError(f"batch tensors must be NCHW, got {np.shape(self.z_hq)}")
        if self.hq_index is not None and len(self.hq_index) != np.shape(self.z_hq)[0]:
            raise ShapeError("hq_index length differs from batch size")

    def __len__(self):
        return np.shape(self.z_hq)[0]


@dataclass
class ModelBundle:
    projector: object
    restorer: object
    prior: PriorScore
    student: PriorScore
    features: object


def forward_chain(models: ModelBundle, x_elq, cond=None):
    """``z_hat = g(f(x_elq; c); Y(f(x_elq; c)))``; returns ``(x_hat_lq, z_hat, cond)``.

    The restorer's condition is computed on the grad path, since it depends on
    the projector's output.
    """
    if cond is None:
        cond = extract_condition(x_elq, models.features)
    x_hat = models.projector(x_elq, cond)
    c_lq = condition_tensor(x_hat, models.features)
    return x_hat, models.restorer(x_hat, c_lq), cond


def total_loss(batch: PairBatch, models: ModelBundle, manifests, w: LossWeights, seed=0,
               cond=None, dropout_p: float = 0.0, dropout_seed=None, step=None) -> LossReport:
    """Full objective for one batch; ``report.loss`` holds the differentiable total.

    ``manifests`` are the degrade-back channels applied to ``z_hat`` (one for
    the batch or one per item). ``seed`` fixes the prior term's ``(t, eps)``.
    """
    if not isinstance(batch, PairBatch):
        batch = PairBatch(*batch)
    if cond is None:
        cond = extract_condition(batch.x_elq, models.features)
        if dropout_p:
            cond = condition_dropout(cond, dropout_p, seed if dropout_seed is None else dropout_seed)
    _, z_hat, _ = forward_chain(models, Tensor(batch.x_elq), cond)
    lq = lq_recon_blur_mse(z_hat, batch.x_lq, manifests, w)
    prior = hq_prior_loss(z_hat, models.prior, models.student, seed) * w.beta
    l2, perc, blur = hq_fid_loss(z_hat, batch.z_hq, models.features, w)
    loss = lq + prior + l2 + perc + blur
    return LossReport.from_parts(loss=loss, step=step, z_hat=z_hat, lq_recon=lq.item(), hq_prior=prior.item(),
                                 hq_fid_l2=l2.item(), hq_fid_perc=perc.item(),
                                 hq_fid_blur=blur.item())


__all__ = ["LossReport", "ModelBundle", "PairBatch", "REPORT_FIELDS", "blur_mse", "degrade_back",
           "forward_chain", "hq_fid_loss", "hq_prior_loss", "lq_recon_blur_mse", "read_jsonl",
           "total_loss", "write_jsonl"]
