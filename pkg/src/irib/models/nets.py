"""Residual conv networks with feature-wise affine (FiLM) conditioning."""

from __future__ import annotations

import copy

import numpy as np

from ..numerics import Parameter, ShapeError, Tensor, as_tensor, conv2d


def _he(rng, shape, gain=1.0):
    fan_in = int(np.prod(shape[1:]))
    return rng.normal(0.0, gain * np.sqrt(2.0 / fan_in), size=shape)


class ResidualNet:
    """``head -> blocks x (h + conv(relu(FiLM(conv h)))) -> tail``.

    With ``output="residual"`` the result is ``clamp(x + tail(h), 0, 1)``; the
    tail starts at zero, so a fresh network is the identity on [0, 1] images.
    With ``output="linear"`` the tail output is returned as is (used for noise
    predictors).
    """

    arch_kind = "residual_net"

    def __init__(self, in_ch=3, out_ch=3, width=16, blocks=4, cond_dim=16,
                 output="residual", seed=0, film_std=0.05):
        if output not in ("residual", "linear"):
            raise ValueError(f"unknown output mode {output!r}")
        if output == "residual" and in_ch != out_ch:
            raise ValueError("residual output needs in_ch == out_ch")
        self.in_ch, self.out_ch, self.width = int(in_ch), int(out_ch), int(width)
        self.blocks, self.cond_dim, self.output = int(blocks), int(cond_dim), output
        self.seed, self.film_std = int(seed), float(film_std)
        rng = np.random.default_rng(self.seed)
        w = self.width
        self.params = {}

        def add(name, value):
            self.params[name] = Parameter(value, name)

        add("head.w", _he(rng, (w, in_ch, 3, 3)))
        add("head.b", np.zeros(w))
        for i in range(self.blocks):
            add(f"block{i}.conv1.w", _he(rng, (w, w, 3, 3)))
            add(f"block{i}.conv1.b", np.zeros(w))
            add(f"block{i}.film.w", rng.normal(0.0, self.film_std, size=(self.cond_dim, 2 * w)))
            add(f"block{i}.film.b", np.zeros(2 * w))
            # Scaled down so the residual stream stays well conditioned at init.
            add(f"block{i}.conv2.w", _he(rng, (w, w, 3, 3), gain=0.1))
            add(f"block{i}.conv2.b", np.zeros(w))
        add("tail.w", np.zeros((out_ch, w, 3, 3)) if output == "residual"
            else _he(rng, (out_ch, w, 3, 3), gain=0.1))
        add("tail.b", np.zeros(out_ch))

    # -- bookkeeping ---------------------------------------------------
    def arch(self) -> dict:
        return {"kind": self.arch_kind, "in_ch": self.in_ch, "out_ch": self.out_ch,
                "width": self.width, "blocks": self.blocks, "cond_dim": self.cond_dim,
                "output": self.output, "seed": self.seed, "film_std": self.film_std}

    def parameters(self):
        return list(self.params.values())

    def n_params(self) -> int:
        return sum(p.size for p in self.params.values())

    def freeze(self):
        for p in self.params.values():
            p.requires_grad = False
        return self

    def unfreeze(self):
        for p in self.params.values():
            p.requires_grad = True
        return self

    @property
    def frozen(self) -> bool:
        return not any(p.requires_grad for p in self.params.values())

    def state_dict(self):
        return {k: p.data.copy() for k, p in self.params.items()}

    def load_state_dict(self, state):
        if set(state) != set(self.params):
            raise ValueError(f"state keys differ: {sorted(set(state) ^ set(self.params))}")
        for k, p in self.params.items():
            v = np.asarray(state[k], dtype=np.float64)
            if v.shape != p.shape:
                raise ShapeError(f"{k}: expected {p.shape}, got {v.shape}")
            p.data = v.copy()
            p.grad = np.zeros(v.shape)
        return self

    def copy(self):
        return copy.deepcopy(self)

    # -- forward ---------------------------------------------------------
    def __call__(self, x, cond):
        return self.forward(x, cond)

    def forward(self, x, cond) -> Tensor:
        x = as_tensor(x)
        if x.ndim != 4 or x.shape[1] != self.in_ch:
            raise ShapeError(f"expected N x {self.in_ch} x H x W input, got {x.shape}")
        if hasattr(cond, "vector") and hasattr(cond, "null"):
            cond = Tensor(cond.vector)
        cond = as_tensor(cond)
        n, w = x.shape[0], self.width
        if cond.shape != (n, self.cond_dim):
            raise ShapeError(f"condition must be ({n}, {self.cond_dim}), got {cond.shape}")
        p = self.params
        h = (conv2d(x, p["head.w"], 1, 1) + p["head.b"].reshape(1, w, 1, 1)).relu()
        for i in range(self.blocks):
            u = conv2d(h, p[f"block{i}.conv1.w"], 1, 1) + p[f"block{i}.conv1.b"].reshape(1, w, 1, 1)
            film = cond @ p[f"block{i}.film.w"] + p[f"block{i}.film.b"]
            gamma = film[:, :w].reshape(n, w, 1, 1)
            beta = film[:, w:].reshape(n, w, 1, 1)
            u = (u * (gamma + 1.0) + beta).relu()
            h = h + conv2d(u, p[f"block{i}.conv2.w"], 1, 1) + p[f"block{i}.conv2.b"].reshape(1, w, 1, 1)
        out = conv2d(h, p["tail.w"], 1, 1) + p["tail.b"].reshape(1, self.out_ch, 1, 1)
        if self.output == "residual":
            return (x + out).clamp(0.0, 1.0)
        return out


class Projector(ResidualNet):
    """Trainable ELQ -> LQ map."""

    arch_kind = "projector"


class Restorer(ResidualNet):
    """LQ -> HQ map; frozen once its own training stage is done."""

    arch_kind = "restorer"


def projector_forward(f: Projector, x_elq, c) -> Tensor:
    return f(x_elq, c)


def restorer_forward(g: Restorer, x_lq, c) -> Tensor:
    return g(x_lq, c)
