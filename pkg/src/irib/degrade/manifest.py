"""Seeded compounded degradations: presets, manifests, sampling and replay.

A manifest records every sampled stage of a (up to) two-order degradation
chain. Each order runs blur -> resize -> noise -> jpeg, skipping stages whose
inclusion coin came up tails. Replaying a manifest is deterministic: the only
randomness at apply time is additive noise, drawn from
``np.random.default_rng([manifest.seed, order_index, stage_index])``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from ..numerics import (
    ShapeError,
    Tensor,
    as_tensor,
    filter2d,
    resize_bilinear,
    resize_nearest,
)
from .jpeg import jpeg_proxy
from .kernels import build_blur_kernel

STAGE_KINDS = ("blur", "resize", "noise", "jpeg_proxy")

PARAM_FIELDS = {
    "blur": ("tau_x", "tau_y", "angle", "beta_shape", "radius"),
    "resize": ("scale", "mode"),
    "noise": ("sigma", "gray"),
    "jpeg_proxy": ("quality",),
}

MIN_SIDE = 2


@dataclass(frozen=True)
class DegradationStage:
    kind: str
    params: dict

    def __post_init__(self):
        if self.kind not in PARAM_FIELDS:
            raise ValueError(f"unknown stage kind {self.kind!r}")
        missing = set(PARAM_FIELDS[self.kind]) - set(self.params)
        if missing:
            raise ValueError(f"{self.kind} stage missing params {sorted(missing)}")

    def to_dict(self):
        return {"kind": self.kind,
                "params": {k: self.params[k] for k in PARAM_FIELDS[self.kind]}}

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], dict(d["params"]))


@dataclass(frozen=True)
class DegradationManifest:
    seed: int
    preset_id: str
    orders: tuple = ()
    final_scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "orders", tuple(tuple(o) for o in self.orders))
        for o in self.orders:
            if not o:
                raise ValueError("every recorded order must contain at least one stage")

    def stages(self):
        for oi, order in enumerate(self.orders):
            for si, stage in enumerate(order):
                yield oi, si, stage

    def to_dict(self):
        return {
            "seed": int(self.seed),
            "preset_id": self.preset_id,
            "orders": [[s.to_dict() for s in order] for order in self.orders],
            "final_scale": float(self.final_scale),
        }

    def to_json(self) -> str:
        """Canonical JSON: fixed field order, shortest round-trip float repr."""
        return json.dumps(self.to_dict(), separators=(",", ":"), allow_nan=False)

    @classmethod
    def from_dict(cls, d):
        orders = [[DegradationStage.from_dict(s) for s in order] for order in d["orders"]]
        return cls(int(d["seed"]), d["preset_id"], orders, float(d["final_scale"]))

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def identity_manifest(seed: int = 0) -> DegradationManifest:
    return DegradationManifest(seed, "identity", (), 1.0)


@dataclass(frozen=True)
class DegradationPreset:
    """Parameter ranges and stage-inclusion probabilities (index = order)."""

    preset_id: str
    blur_tau: tuple = (0.2, 2.0)
    blur_beta: tuple = (0.5, 4.0)
    blur_angle: tuple = (0.0, math.pi)
    resize_scale: tuple = (0.5, 1.5)
    noise_sigma: tuple = (0.0, 0.08)
    jpeg_quality: tuple = (60, 95)
    p_blur: tuple = (1.0, 0.8)
    p_resize: tuple = (1.0, 1.0)
    p_noise: tuple = (1.0, 1.0)
    p_jpeg: tuple = (1.0, 1.0)
    p_second_order: float = 0.8
    p_gray_noise: float = 0.4
    p_nearest: float = 0.2
    resize_direction_probs: tuple = field(default=(0.2, 0.7, 0.1))  # up, down, keep

    def ranges(self):
        return {
            "tau_x": self.blur_tau,
            "tau_y": self.blur_tau,
            "beta_shape": self.blur_beta,
            "angle": self.blur_angle,
            "scale": self.resize_scale,
            "sigma": self.noise_sigma,
            "quality": self.jpeg_quality,
        }


LQ_PRESET = DegradationPreset("LQ")
ELQ_PRESET = DegradationPreset(
    "ELQ",
    blur_tau=(0.2, 4.0),
    resize_scale=(0.25, 1.5),
    noise_sigma=(0.0, 0.2),
    jpeg_quality=(20, 95),
    p_blur=(1.0, 1.0),
    p_second_order=1.0,
    resize_direction_probs=(0.1, 0.8, 0.1),
)
IDENTITY_PRESET = DegradationPreset(
    "identity", p_blur=(0.0, 0.0), p_resize=(0.0, 0.0), p_noise=(0.0, 0.0),
    p_jpeg=(0.0, 0.0), p_second_order=0.0,
)

PRESETS = {"lq": LQ_PRESET, "elq": ELQ_PRESET, "identity": IDENTITY_PRESET}


def get_preset(name: str) -> DegradationPreset:
    try:
        return PRESETS[name.lower()]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


def _sample_order(rng, preset: DegradationPreset, order: int, grad_path: bool):
    # Every draw is made unconditionally so the stream layout never depends on coins.
    lo, hi = preset.blur_tau
    tau_x, tau_y = rng.uniform(lo, hi), rng.uniform(lo, hi)
    angle = rng.uniform(*preset.blur_angle)
    blo, bhi = preset.blur_beta
    beta = rng.uniform(blo, min(1.0, bhi)) if rng.uniform() < 0.5 else rng.uniform(max(1.0, blo), bhi)
    up, down, _ = preset.resize_direction_probs
    direction = rng.uniform()
    slo, shi = preset.resize_scale
    if direction < up:
        scale = rng.uniform(max(1.0, slo), shi)
    elif direction < up + down:
        scale = rng.uniform(slo, min(1.0, shi))
    else:
        rng.uniform()
        scale = 1.0
    nearest = rng.uniform() < preset.p_nearest
    sigma = rng.uniform(*preset.noise_sigma)
    gray = bool(rng.uniform() < preset.p_gray_noise)
    qlo, qhi = preset.jpeg_quality
    quality = int(rng.integers(qlo, qhi + 1))
    coins = rng.uniform(size=4)

    stages = []
    if coins[0] < preset.p_blur[order]:
        stages.append(DegradationStage("blur", {
            "tau_x": float(tau_x), "tau_y": float(tau_y), "angle": float(angle),
            "beta_shape": float(beta), "radius": max(1, math.ceil(3 * max(tau_x, tau_y))),
        }))
    if coins[1] < preset.p_resize[order]:
        mode = "nearest" if (nearest and not grad_path) else "bilinear"
        stages.append(DegradationStage("resize", {"scale": float(scale), "mode": mode}))
    if coins[2] < preset.p_noise[order]:
        stages.append(DegradationStage("noise", {"sigma": float(sigma), "gray": gray}))
    if coins[3] < preset.p_jpeg[order]:
        stages.append(DegradationStage("jpeg_proxy", {"quality": quality}))
    return stages


def sample_manifest(preset: DegradationPreset, seed: int, grad_path: bool = False) -> DegradationManifest:
    """Draw a manifest; a pure function of ``(preset, seed, grad_path)``.

    ``grad_path=True`` forces bilinear resizing so the chain stays
    differentiable in the usual sense.
    """
    rng = np.random.default_rng(int(seed))
    first = _sample_order(rng, preset, 0, grad_path)
    second = _sample_order(rng, preset, 1, grad_path)
    orders = [first]
    if rng.uniform() < preset.p_second_order:
        orders.append(second)
    orders = [o for o in orders if o]
    final_scale = 1.0
    for order in orders:
        for stage in order:
            if stage.kind == "resize":
                final_scale *= stage.params["scale"]
    return DegradationManifest(int(seed), preset.preset_id, orders, float(final_scale))


def noise_stream(seed: int, order: int, stage: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(order), int(stage)])


def _apply_stage(x: Tensor, stage: DegradationStage, seed: int, oi: int, si: int) -> Tensor:
    p = stage.params
    if stage.kind == "blur":
        if p["tau_x"] == 0 and p["tau_y"] == 0:  # zero-width blur is the delta kernel
            return x
        return filter2d(x, build_blur_kernel(stage))
    if stage.kind == "resize":
        h, w = x.shape[2], x.shape[3]
        nh, nw = max(1, round(h * p["scale"])), max(1, round(w * p["scale"]))
        if min(nh, nw) < MIN_SIDE:
            raise ShapeError(
                f"resize by {p['scale']} takes {h}x{w} to {nh}x{nw}, below the {MIN_SIDE}px minimum")
        if (nh, nw) == (h, w):
            return x
        fn = resize_nearest if p["mode"] == "nearest" else resize_bilinear
        return fn(x, nh, nw)
    if stage.kind == "noise":
        n, c, h, w = x.shape
        rng = noise_stream(seed, oi, si)
        draw = rng.standard_normal((n, 1, h, w) if p["gray"] else (n, c, h, w))
        return (x + p["sigma"] * draw).clamp(0.0, 1.0)
    if stage.kind == "jpeg_proxy":
        return jpeg_proxy(x, int(p["quality"])).clamp(0.0, 1.0)
    raise ValueError(f"unknown stage kind {stage.kind!r}")


def apply_manifest(manifest: DegradationManifest, hq) -> Tensor:
    """Replay ``manifest`` on an NCHW image in [0, 1]; output has the input's size."""
    x = as_tensor(hq)
    if x.ndim != 4 or min(x.shape) < 1:
        raise ShapeError(f"apply_manifest expects a non-empty NCHW tensor, got {x.shape}")
    h0, w0 = x.shape[2], x.shape[3]
    if min(h0, w0) < MIN_SIDE:
        raise ShapeError(f"input {x.shape} is below the {MIN_SIDE}px minimum side")
    for oi, si, stage in manifest.stages():
        x = _apply_stage(x, stage, manifest.seed, oi, si)
    if (x.shape[2], x.shape[3]) != (h0, w0):
        x = resize_bilinear(x, h0, w0)
    return x.clamp(0.0, 1.0)
