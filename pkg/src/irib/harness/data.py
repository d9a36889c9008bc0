"""Paired ELQ / LQ / HQ data with recorded manifests."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..degrade import DegradationManifest, apply_manifest, sample_manifest
from ..losses import PairBatch
from ..numerics import no_grad

# Stream tags keep derived seeds of different purposes apart.
TAG_LQ, TAG_ELQ, TAG_BACK = 1, 2, 3


def derive_seed(*parts) -> int:
    """A 63-bit seed that is a pure function of the integer ``parts``."""
    ss = np.random.SeedSequence([int(p) for p in parts])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def degrade_items(hq, manifests) -> np.ndarray:
    with no_grad():
        return np.concatenate([apply_manifest(m, hq[i:i + 1]).data for i, m in enumerate(manifests)])


@dataclass
class PairSet:
    x_elq: np.ndarray
    x_lq: np.ndarray
    z_hq: np.ndarray
    lq_manifests: list
    elq_manifests: list

    def __len__(self):
        return len(self.z_hq)

    def batch(self, idx) -> PairBatch:
        idx = np.asarray(idx)
        return PairBatch(self.x_elq[idx], self.x_lq[idx], self.z_hq[idx], idx)

    def replay(self) -> "PairSet":
        """Regenerate the degraded images from the recorded manifests."""
        return PairSet(degrade_items(self.z_hq, self.elq_manifests),
                       degrade_items(self.z_hq, self.lq_manifests), self.z_hq,
                       self.lq_manifests, self.elq_manifests)


def make_pairs(hq, lq_preset, elq_preset, seed) -> PairSet:
    """Degrade every HQ image once with each preset; per-item seeds derive from ``seed``."""
    hq = np.asarray(hq, dtype=np.float64)
    lq_m = [sample_manifest(lq_preset, derive_seed(seed, TAG_LQ, i)) for i in range(len(hq))]
    elq_m = [sample_manifest(elq_preset, derive_seed(seed, TAG_ELQ, i)) for i in range(len(hq))]
    return PairSet(degrade_items(hq, elq_m), degrade_items(hq, lq_m), hq, lq_m, elq_m)


def sample_step_pairs(hq, lq_preset, elq_preset, seed, step, batch, need_elq=True) -> PairBatch:
    """Fresh training pairs for one optimizer step: random HQ items, fresh manifests."""
    rng = np.random.default_rng([int(seed), int(step)])
    idx = np.sort(rng.choice(len(hq), size=batch, replace=len(hq) < batch))
    z = hq[idx]
    lq = degrade_items(z, [sample_manifest(lq_preset, derive_seed(seed, TAG_LQ, step, k))
                           for k in range(batch)])
    elq = (degrade_items(z, [sample_manifest(elq_preset, derive_seed(seed, TAG_ELQ, step, k))
                             for k in range(batch)]) if need_elq else lq)
    return PairBatch(elq, lq, z, idx)


def degrade_back_manifests(lq_preset, seed, step, batch) -> list[DegradationManifest]:
    """Fresh differentiable degrade-back channels for one step (no nearest resizing)."""
    return [sample_manifest(lq_preset, derive_seed(seed, TAG_BACK, step, k), grad_path=True)
            for k in range(batch)]
