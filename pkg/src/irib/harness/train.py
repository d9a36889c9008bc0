"""Training stages: restorer g, HQ prior, projector f (g frozen), and the direct baseline."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ..losses import LossReport, ModelBundle, hq_fid_loss, hq_prior_loss, total_loss
from ..models import (
    FeatureExtractor,
    NoiseSchedule,
    PriorScore,
    Projector,
    Restorer,
    condition_dropout,
    denoising_loss,
    extract_condition,
    to_latent,
)
from ..numerics import Tensor, backward, make_optimizer
from .config import ExperimentConfig
from .data import degrade_back_manifests, derive_seed, sample_step_pairs

log = logging.getLogger(__name__)

# Stream tags for derived seeds (distinct from the data tags).
TAG_RESTORER, TAG_PRIOR, TAG_PROJECTOR, TAG_DIRECT = 11, 12, 13, 14
TAG_DROP, TAG_NOISE, TAG_INIT = 21, 22, 23

# Default student step size relative to the main optimizer. A student that
# moves as fast as the projector mostly tracks minibatch noise and its gap to
# the fixed prior keeps widening; a slow student follows the drift of the
# generated distribution instead.
STUDENT_LR_RATIO = 0.01


class TrainingDiverged(RuntimeError):
    """Raised when a loss turns non-finite; carries the last good parameters."""

    def __init__(self, message, last_good=None):
        super().__init__(message)
        self.last_good = last_good


@dataclass
class TrainHistory:
    losses: list = field(default_factory=list)
    reports: list = field(default_factory=list)
    steps: int = 0

    def moving_average(self, window=20):
        x = np.asarray(self.losses, dtype=np.float64)
        if len(x) < window:
            return x
        return np.convolve(x, np.ones(window) / window, mode="valid")


def _optimizer(params, cfg: ExperimentConfig, lr=None, o=None):
    o = o or cfg.optimizer
    return make_optimizer(o.kind, params, lr=o.learning_rate if lr is None else lr,
                          momentum=o.momentum, clip_norm=o.clip_norm)


def _check_finite(value, stage, step, model):
    if not math.isfinite(value):
        raise TrainingDiverged(f"{stage}: loss became {value} at step {step}",
                               last_good=model.state_dict())


def feature_extractor(cfg: ExperimentConfig) -> FeatureExtractor:
    return FeatureExtractor(cfg.feature_seed)


def _drop(cond, cfg, seed, tag, step):
    return condition_dropout(cond, cfg.prompt_dropout_p, derive_seed(seed, tag, TAG_DROP, step))


def train_restorer(hq, cfg: ExperimentConfig, seed=None, width=None, steps=None, features=None):
    """Stage 1: fit ``g`` on fresh (LQ, HQ) pairs with the pixel and blurred-pixel terms."""
    seed = cfg.run_seed if seed is None else seed
    steps = cfg.steps.restorer if steps is None else steps
    features = features or feature_extractor(cfg)
    g = Restorer(width=width or cfg.width, blocks=cfg.blocks, seed=derive_seed(seed, TAG_INIT, TAG_RESTORER) % 2**31)
    w = cfg.weights.replace(lambda_perc=0.0)
    opt = _optimizer(g.parameters(), cfg, o=cfg.stage1_optimizer)
    hist = TrainHistory()
    stream = derive_seed(seed, TAG_RESTORER)
    for step in range(steps):
        b = sample_step_pairs(hq, cfg.lq, cfg.elq, stream, step, cfg.stage1_optimizer.batch, need_elq=False)
        cond = _drop(extract_condition(b.x_lq, features), cfg, seed, TAG_RESTORER, step)
        out = g(Tensor(b.x_lq), cond)
        l2, _, blur = hq_fid_loss(out, b.z_hq, features, w)
        loss = l2 + blur
        _check_finite(loss.item(), "train_restorer", step, g)
        backward(loss, g.parameters())
        opt.step()
        hist.losses.append(loss.item())
    hist.steps = steps
    return g.freeze(), hist


def train_prior(hq, cfg: ExperimentConfig, seed=None, steps=None):
    """Fit the HQ noise predictor with the standard denoising objective."""
    seed = cfg.run_seed if seed is None else seed
    steps = cfg.steps.prior if steps is None else steps
    prior = PriorScore(NoiseSchedule(), width=cfg.prior_width, blocks=cfg.prior_blocks,
                       seed=derive_seed(seed, TAG_INIT, TAG_PRIOR) % 2**31)
    opt = _optimizer(prior.parameters(), cfg)
    hist = TrainHistory()
    for step in range(steps):
        rng = np.random.default_rng([derive_seed(seed, TAG_PRIOR), step])
        idx = np.sort(rng.choice(len(hq), size=cfg.optimizer.batch, replace=len(hq) < cfg.optimizer.batch))
        loss = denoising_loss(prior, to_latent(hq[idx]), rng)
        _check_finite(loss.item(), "train_prior", step, prior)
        backward(loss, prior.parameters())
        opt.step()
        hist.losses.append(loss.item())
    hist.steps = steps
    return prior.freeze(), hist


class _Student:
    """Tracks the distribution of generated HQ proxies with its own denoising updates."""

    def __init__(self, prior: PriorScore, cfg: ExperimentConfig, seed, tag):
        self.model = prior.copy().unfreeze()
        lr = cfg.student_lr if cfg.student_lr is not None else STUDENT_LR_RATIO * cfg.optimizer.learning_rate
        self.opt = _optimizer(self.model.parameters(), cfg, lr=lr)
        self.model.freeze()
        self.seed, self.tag = seed, tag

    def update(self, z_hat: np.ndarray, step):
        m = self.model.unfreeze()
        rng = np.random.default_rng([derive_seed(self.seed, self.tag, TAG_NOISE), step])
        loss = denoising_loss(m, to_latent(z_hat), rng)
        backward(loss, m.parameters())
        self.opt.step()
        m.freeze()


def train_projector(hq, cfg: ExperimentConfig, g: Restorer, prior: PriorScore, seed=None,
                    steps=None, weights=None, features=None, on_report=None):
    """Stage 2: fit ``f`` under the total objective with ``g`` and the prior frozen."""
    seed = cfg.run_seed if seed is None else seed
    steps = cfg.steps.projector if steps is None else steps
    w = weights or cfg.weights
    features = features or feature_extractor(cfg)
    g.freeze()
    prior.freeze()
    f = Projector(width=cfg.width, blocks=cfg.blocks, seed=derive_seed(seed, TAG_INIT, TAG_PROJECTOR) % 2**31)
    student = _Student(prior, cfg, seed, TAG_PROJECTOR)
    bundle = ModelBundle(f, g, prior, student.model, features)
    opt = _optimizer(f.parameters(), cfg)
    hist = TrainHistory()
    stream = derive_seed(seed, TAG_PROJECTOR)
    batch = cfg.optimizer.batch
    for step in range(steps):
        b = sample_step_pairs(hq, cfg.lq, cfg.elq, stream, step, batch)
        back = degrade_back_manifests(cfg.lq, stream, step, batch)
        cond = _drop(extract_condition(b.x_elq, features), cfg, seed, TAG_PROJECTOR, step)
        rep = total_loss(b, bundle, back, w, seed=derive_seed(stream, TAG_NOISE, step), cond=cond,
                         step=step)
        _check_finite(rep.total, "train_projector", step, f)
        backward(rep.loss, f.parameters())
        opt.step()
        student.update(rep.z_hat.data, step)
        rep.loss = rep.z_hat = None
        hist.losses.append(rep.total)
        hist.reports.append(rep)
        if on_report is not None:
            on_report(rep)
    hist.steps = steps
    return f.freeze(), hist


def train_direct(hq, cfg: ExperimentConfig, g: Restorer, prior: PriorScore, seed=None,
                 steps=None, features=None):
    """Baseline arm: one network of the projector's architecture mapping ELQ straight to HQ.

    Starts from ``g``'s weights and trains with the HQ prior and HQ fidelity
    terms only (no LQ proxy, no LQ reconstruction term).
    """
    seed = cfg.run_seed if seed is None else seed
    steps = cfg.steps.direct if steps is None else steps
    features = features or feature_extractor(cfg)
    w = cfg.weights
    prior.freeze()
    d = Projector(width=g.width, blocks=g.blocks, seed=derive_seed(seed, TAG_INIT, TAG_DIRECT) % 2**31)
    d.load_state_dict(g.state_dict())
    d.unfreeze()
    student = _Student(prior, cfg, seed, TAG_DIRECT)
    opt = _optimizer(d.parameters(), cfg)
    hist = TrainHistory()
    stream = derive_seed(seed, TAG_DIRECT)
    batch = cfg.optimizer.batch
    for step in range(steps):
        b = sample_step_pairs(hq, cfg.lq, cfg.elq, stream, step, batch)
        cond = _drop(extract_condition(b.x_elq, features), cfg, seed, TAG_DIRECT, step)
        z_hat = d(Tensor(b.x_elq), cond)
        pr = hq_prior_loss(z_hat, prior, student.model, derive_seed(stream, TAG_NOISE, step)) * w.beta
        l2, perc, blur = hq_fid_loss(z_hat, b.z_hq, features, w)
        loss = pr + l2 + perc + blur
        rep = LossReport.from_parts(step=step, hq_prior=pr.item(), hq_fid_l2=l2.item(),
                                    hq_fid_perc=perc.item(), hq_fid_blur=blur.item())
        _check_finite(rep.total, "train_direct", step, d)
        backward(loss, d.parameters())
        opt.step()
        student.update(z_hat.data, step)
        hist.losses.append(rep.total)
        hist.reports.append(rep)
    hist.steps = steps
    return d.freeze(), hist
