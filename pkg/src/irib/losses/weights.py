from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields


@dataclass(frozen=True)
class LossWeights:
    """Scalar hyperparameters of the training objective.

    ``sigma`` is the LQ likelihood std (the reconstruction term is scaled by
    ``1 / (2 sigma^2)``, so the default ``sqrt(1/2)`` gives weight 1), ``tau``
    the std of the shared low-pass in that term, and ``k`` the odd kernel
    size of the HQ blur term, whose std is ``(k - 1) / 6``.
    """

    beta: float = 1.0
    sigma: float = math.sqrt(0.5)
    tau: float = 1.0
    k: int = 7
    lambda_l2: float = 1.0
    lambda_perc: float = 1.0
    lambda_blur: float = 1.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
                raise ValueError(f"{f.name} must be a finite number, got {v!r}")
            if v < 0:
                raise ValueError(f"{f.name} must be non-negative, got {v}")
        if self.sigma <= 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if int(self.k) != self.k or self.k < 1 or self.k % 2 == 0:
            raise ValueError(f"k must be a positive odd integer, got {self.k}")
        object.__setattr__(self, "k", int(self.k))

    @property
    def recon_scale(self) -> float:
        return 1.0 / (2.0 * self.sigma * self.sigma)

    @property
    def hq_blur_tau(self) -> float:
        return (self.k - 1) / 6.0

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown loss weight fields {sorted(unknown)}")
        return cls(**d)

    def replace(self, **changes):
        return LossWeights(**{**self.to_dict(), **changes})
