"""First-order optimizers with global-norm gradient clipping."""

import numpy as np


class SGD:
    """Heavy-ball momentum: ``v <- m v + g``, ``p <- p - lr v``."""

    def __init__(self, params, lr=1e-3, momentum=0.9, clip_norm=1.0):
        self.params = [p for p in params if p.requires_grad]
        self.lr = lr
        self.momentum = momentum
        self.clip_norm = clip_norm
        self.velocity = [np.zeros(p.shape) for p in self.params]
        self.steps = 0

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def grad_norm(self):
        return float(np.sqrt(sum(float(np.sum(p.grad * p.grad)) for p in self.params)))

    def _clip_scale(self, norm):
        if self.clip_norm is not None and norm > self.clip_norm:
            return self.clip_norm / norm
        return 1.0

    def step(self):
        norm = self.grad_norm()
        scale = self._clip_scale(norm)
        for p, v in zip(self.params, self.velocity):
            v *= self.momentum
            v += scale * p.grad
            p.data = p.data - self.lr * v
        self.steps += 1
        return norm


class Adam(SGD):
    """Adam with bias correction; ``momentum`` plays the role of beta1.

    Clipping is applied to the raw gradient before the moment updates.
    """

    def __init__(self, params, lr=1e-3, momentum=0.9, clip_norm=1.0, beta2=0.999, eps=1e-8):
        super().__init__(params, lr, momentum, clip_norm)
        self.beta2 = beta2
        self.eps = eps
        self.second = [np.zeros(p.shape) for p in self.params]

    def step(self):
        norm = self.grad_norm()
        scale = self._clip_scale(norm)
        self.steps += 1
        b1, b2 = self.momentum, self.beta2
        c1, c2 = 1.0 - b1 ** self.steps, 1.0 - b2 ** self.steps
        for p, m, s in zip(self.params, self.velocity, self.second):
            g = scale * p.grad
            m *= b1
            m += (1.0 - b1) * g
            s *= b2
            s += (1.0 - b2) * g * g
            p.data = p.data - self.lr * (m / c1) / (np.sqrt(s / c2) + self.eps)
        return norm


OPTIMIZERS = {"sgd": SGD, "adam": Adam}


def make_optimizer(kind, params, **kwargs):
    try:
        cls = OPTIMIZERS[kind]
    except KeyError:
        raise ValueError(f"unknown optimizer {kind!r}; choose from {sorted(OPTIMIZERS)}") from None
    return cls(params, **kwargs)
