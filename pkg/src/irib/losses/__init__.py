"""Objectives: restoration training terms and the information-bottleneck family."""

from .ib import (
    DiscreteJoint,
    IBBounds,
    beta_vae_loss_gaussian,
    entropy,
    ib_bound_check,
    kl_diag_gaussian,
    mutual_information,
    vib_loss_discrete,
    vib_terms,
)
from .restoration import (
    REPORT_FIELDS,
    LossReport,
    ModelBundle,
    PairBatch,
    blur_mse,
    degrade_back,
    forward_chain,
    hq_fid_loss,
    hq_prior_loss,
    lq_recon_blur_mse,
    read_jsonl,
    total_loss,
    write_jsonl,
)
from .weights import LossWeights

__all__ = [
    "REPORT_FIELDS", "DiscreteJoint", "IBBounds", "LossReport", "LossWeights", "ModelBundle",
    "PairBatch", "beta_vae_loss_gaussian", "blur_mse", "degrade_back", "entropy",
    "forward_chain", "hq_fid_loss", "hq_prior_loss", "ib_bound_check", "kl_diag_gaussian",
    "lq_recon_blur_mse", "mutual_information", "read_jsonl", "total_loss", "vib_loss_discrete",
    "vib_terms", "write_jsonl",
]
