"""Conditioning vectors, the fixed random feature extractor, and prompt dropout."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..numerics import ShapeError, Tensor, as_tensor, conv2d, no_grad, pad_reflect

COND_DIM = 16


@dataclass(frozen=True, eq=False)
class Condition:
    """A batch of condition vectors, shape (N, D), with a per-row null flag.

    Null rows are all zeros by construction.
    """

    vector: np.ndarray
    null: np.ndarray

    def __post_init__(self):
        v = np.array(self.vector, dtype=np.float64)
        if v.ndim == 1:
            v = v[None]
        if v.ndim != 2:
            raise ShapeError(f"condition vectors must be (N, D), got {v.shape}")
        null = np.broadcast_to(np.asarray(self.null, dtype=bool), (v.shape[0],)).copy()
        v[null] = 0.0
        v.flags.writeable = False
        null.flags.writeable = False
        object.__setattr__(self, "vector", v)
        object.__setattr__(self, "null", null)

    @classmethod
    def of(cls, vector):
        return cls(vector, False)

    @classmethod
    def null_condition(cls, n=1, dim=COND_DIM):
        return cls(np.zeros((n, dim)), True)

    @property
    def is_null(self) -> bool:
        return bool(self.null.all())

    @property
    def dim(self) -> int:
        return self.vector.shape[1]

    def __len__(self):
        return self.vector.shape[0]

    def __getitem__(self, idx):
        idx = np.atleast_1d(np.arange(len(self))[idx])
        return Condition(self.vector[idx], self.null[idx])

    def tensor(self) -> Tensor:
        return Tensor(self.vector)

    def to_dict(self):
        return {"vector": self.vector.tolist(), "null": self.null.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["vector"]), np.array(d["null"]))

    def __eq__(self, other):
        return (isinstance(other, Condition) and np.array_equal(self.vector, other.vector)
                and np.array_equal(self.null, other.null))


def _zero_mean_filters(rng, shape):
    w = rng.normal(size=shape)
    w -= w.mean(axis=(1, 2, 3), keepdims=True)
    w /= np.sqrt((w * w).sum(axis=(1, 2, 3), keepdims=True))
    return w


class FeatureExtractor:
    """Fixed, seeded random conv features: 5x5 conv (8), ReLU, strided 3x3 conv (16), ReLU.

    Filters are zero-mean, so flat regions produce no response and features
    track edges and texture. Nothing here is ever trained.
    """

    arch_kind = "feature_extractor"

    def __init__(self, seed=1234, in_ch=3, mid=8, out=COND_DIM):
        self.seed, self.in_ch, self.mid, self.out = int(seed), int(in_ch), int(mid), int(out)
        rng = np.random.default_rng(self.seed)
        self.w1 = _zero_mean_filters(rng, (mid, in_ch, 5, 5))
        self.w2 = _zero_mean_filters(rng, (out, mid, 3, 3))
        for w in (self.w1, self.w2):
            w.flags.writeable = False

    def arch(self):
        return {"kind": self.arch_kind, "seed": self.seed, "in_ch": self.in_ch,
                "mid": self.mid, "out": self.out}

    @property
    def dim(self):
        return self.out

    def feature_map(self, img) -> Tensor:
        """Spatial features at half resolution; differentiable w.r.t. ``img``."""
        x = as_tensor(img)
        if x.ndim != 4 or x.shape[1] != self.in_ch:
            raise ShapeError(f"feature extractor expects N x {self.in_ch} x H x W, got {x.shape}")
        h = conv2d(pad_reflect(x, 2), Tensor(self.w1)).relu()
        return conv2d(pad_reflect(h, 1), Tensor(self.w2), stride=2).relu()

    def pooled(self, img) -> Tensor:
        return self.feature_map(img).mean(axis=(2, 3))

    def __call__(self, img):
        return extract_condition(img, self)


def extract_condition(img, extractor: FeatureExtractor) -> Condition:
    """Pooled features, centered and scaled to unit length (never on the grad path).

    An image with no feature response at all (e.g. a flat field) has no
    direction to report and maps to the null condition.
    """
    with no_grad():
        v = extractor.pooled(as_tensor(img).detach()).data
    v = v - v.mean(axis=1, keepdims=True)
    norm = np.sqrt((v * v).sum(axis=1, keepdims=True))
    empty = norm[:, 0] < 1e-12
    v = v / np.where(empty[:, None], 1.0, norm)
    return Condition(v, empty)


def condition_tensor(img, extractor: FeatureExtractor) -> Tensor:
    """Differentiable counterpart of :func:`extract_condition` (rows of the same values).

    Used where the image being described depends on trainable parameters, so
    the condition's dependence on them is part of the gradient.
    """
    v = extractor.pooled(img)
    v = v - v.mean(axis=1, keepdims=True)
    sq = v.square().sum(axis=1, keepdims=True)
    empty = np.sqrt(sq.data) < 1e-12
    # Safe denominator for empty rows, which are then zeroed.
    inv = (sq + empty.astype(np.float64)).sqrt()
    return v / inv * (~empty).astype(np.float64)


def condition_dropout(c: Condition, p: float, seed) -> Condition:
    """Replace each row by the null condition with probability ``p`` (seeded)."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"dropout probability must be in [0, 1], got {p}")
    drop = np.random.default_rng(seed).uniform(size=len(c)) < p
    if not drop.any():
        return c
    return Condition(c.vector, c.null | drop)


def cosine(a, b) -> np.ndarray:
    """Row-wise cosine similarity of two condition batches (0 for null rows)."""
    va = a.vector if isinstance(a, Condition) else np.atleast_2d(a)
    vb = b.vector if isinstance(b, Condition) else np.atleast_2d(b)
    num = (va * vb).sum(axis=1)
    den = np.sqrt((va * va).sum(axis=1) * (vb * vb).sum(axis=1))
    return np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
