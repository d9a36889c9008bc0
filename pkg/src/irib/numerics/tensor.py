"""Float64 tensors recorded on a define-by-run gradient tape.

Every op that touches a tensor with ``requires_grad`` appends one node to the
active :class:`GradTape`. :func:`backward` walks that tape in exact reverse
recording order and then clears it, so each forward pass builds a fresh graph.
"""

from __future__ import annotations

import contextlib
import threading

import numpy as np


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible; message reports all shapes."""


class _Node:
    __slots__ = ("out", "inputs", "backward")

    def __init__(self, out, inputs, backward):
        self.out = out
        self.inputs = inputs
        self.backward = backward


class GradTape:
    """Append-only record of differentiable operations."""

    def __init__(self):
        self.nodes = []

    def record(self, out, inputs, backward):
        self.nodes.append(_Node(out, inputs, backward))

    def clear(self):
        self.nodes = []

    def __len__(self):
        return len(self.nodes)


class _State(threading.local):
    def __init__(self):
        self.tape = GradTape()
        self.enabled = True


_state = _State()


def active_tape() -> GradTape:
    return _state.tape


@contextlib.contextmanager
def no_grad():
    """Disable recording inside the block."""
    prev = _state.enabled
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


def is_grad_enabled() -> bool:
    return _state.enabled


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def result(data, inputs, backward) -> Tensor:
    """Wrap ``data`` as the output of an op, recording it if any input needs grad.

    ``backward(g)`` must return one gradient (or None) per input, already
    reduced to that input's shape.
    """
    out = Tensor(data)
    if _state.enabled and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out._is_op = True
        _state.tape.record(out, inputs, backward)
    return out


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_is_op", "__weakref__")
    __array_priority__ = 1000

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._is_op = False

    # -- introspection -------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def detach(self):
        return Tensor(self.data)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def __len__(self):
        return self.data.shape[0]

    # -- arithmetic ----------------------------------------------------
    def __add__(self, other):
        other = as_tensor(other)
        a, b = self, other

        def bw(g):
            return (_unbroadcast(g, a.shape) if a.requires_grad else None,
                    _unbroadcast(g, b.shape) if b.requires_grad else None)

        return result(a.data + b.data, (a, b), bw)

    __radd__ = __add__

    def __neg__(self):
        return result(-self.data, (self,), lambda g: (-g,))

    def __sub__(self, other):
        other = as_tensor(other)
        a, b = self, other

        def bw(g):
            return (_unbroadcast(g, a.shape) if a.requires_grad else None,
                    _unbroadcast(-g, b.shape) if b.requires_grad else None)

        return result(a.data - b.data, (a, b), bw)

    def __rsub__(self, other):
        return as_tensor(other) - self

    def __mul__(self, other):
        other = as_tensor(other)
        a, b = self, other

        def bw(g):
            return (_unbroadcast(g * b.data, a.shape) if a.requires_grad else None,
                    _unbroadcast(g * a.data, b.shape) if b.requires_grad else None)

        return result(a.data * b.data, (a, b), bw)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_tensor(other)
        a, b = self, other

        def bw(g):
            ga = _unbroadcast(g / b.data, a.shape) if a.requires_grad else None
            gb = (_unbroadcast(-g * a.data / (b.data * b.data), b.shape)
                  if b.requires_grad else None)
            return ga, gb

        return result(a.data / b.data, (a, b), bw)

    def __rtruediv__(self, other):
        return as_tensor(other) / self

    def __pow__(self, p):
        if isinstance(p, Tensor):
            raise TypeError("only scalar exponents are supported")
        p = float(p)
        a = self
        return result(a.data ** p, (a,), lambda g: (g * p * a.data ** (p - 1.0),))

    def __matmul__(self, other):
        other = as_tensor(other)
        a, b = self, other
        if a.ndim < 2 or b.ndim < 2:
            raise ShapeError(f"matmul needs >=2-D operands, got {a.shape} @ {b.shape}")
        if a.shape[-1] != b.shape[-2]:
            raise ShapeError(f"matmul inner dims differ: {a.shape} @ {b.shape}")

        def bw(g):
            ga = (_unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape)
                  if a.requires_grad else None)
            gb = (_unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape)
                  if b.requires_grad else None)
            return ga, gb

        return result(np.matmul(a.data, b.data), (a, b), bw)

    def __rmatmul__(self, other):
        return as_tensor(other) @ self

    # -- reductions and shape ------------------------------------------
    def sum(self, axis=None, keepdims=False):
        a = self
        shape = a.shape

        def bw(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape).copy(),)

        return result(a.data.sum(axis=axis, keepdims=keepdims), (a,), bw)

    def mean(self, axis=None, keepdims=False):
        if axis is None:
            count = self.size
        else:
            axes = (axis,) if isinstance(axis, int) else axis
            count = int(np.prod([self.shape[i] for i in axes]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        a = self
        return result(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        if not axes:
            axes = tuple(reversed(range(self.ndim)))
        inv = tuple(np.argsort(axes))
        return result(self.data.transpose(axes), (self,), lambda g: (g.transpose(inv),))

    @property
    def T(self):
        return self.transpose()

    def __getitem__(self, idx):
        a = self

        basic = all(isinstance(i, (slice, int, type(Ellipsis)))
                    for i in (idx if isinstance(idx, tuple) else (idx,)))

        def bw(g):
            out = np.zeros(a.shape)
            if basic:
                out[idx] = g
            else:
                np.add.at(out, idx, g)
            return (out,)

        return result(a.data[idx], (a,), bw)

    # -- elementwise functions -----------------------------------------
    def exp(self):
        y = np.exp(self.data)
        return result(y, (self,), lambda g: (g * y,))

    def log(self):
        a = self
        return result(np.log(a.data), (a,), lambda g: (g / a.data,))

    def sqrt(self):
        y = np.sqrt(self.data)
        return result(y, (self,), lambda g: (g * 0.5 / y,))

    def square(self):
        a = self
        return result(a.data * a.data, (a,), lambda g: (2.0 * g * a.data,))

    def relu(self):
        mask = self.data > 0
        return result(np.where(mask, self.data, 0.0), (self,), lambda g: (g * mask,))

    def sigmoid(self):
        y = 1.0 / (1.0 + np.exp(-self.data))
        return result(y, (self,), lambda g: (g * y * (1.0 - y),))

    def tanh(self):
        y = np.tanh(self.data)
        return result(y, (self,), lambda g: (g * (1.0 - y * y),))

    def clamp(self, lo=None, hi=None):
        d = self.data
        mask = np.ones(d.shape, dtype=bool)
        if lo is not None:
            mask &= d >= lo
        if hi is not None:
            mask &= d <= hi
        return result(np.clip(d, lo, hi), (self,), lambda g: (g * mask,))


class Parameter(Tensor):
    """A named trainable leaf; ``grad`` always has the value's shape."""

    __slots__ = ("name",)

    def __init__(self, data, name="", requires_grad=True):
        super().__init__(np.array(data, dtype=np.float64), requires_grad=requires_grad)
        self.name = name
        self.grad = np.zeros(self.data.shape)

    @property
    def value(self):
        return self.data

    def zero_grad(self):
        self.grad = np.zeros(self.data.shape)

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape}, requires_grad={self.requires_grad})"


def backward(loss: Tensor, params=None):
    """Populate ``.grad`` of every leaf reachable from scalar ``loss``.

    Gradients accumulate into existing ``.grad`` arrays, as is usual for
    training loops that zero between steps. If ``params`` is given those
    grads are zeroed first, so afterwards each holds exactly d loss / d param
    (zero when unreachable). The active tape is cleared on return.
    """
    if loss.data.shape != ():
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    tape = _state.tape
    if params is not None:
        for p in params:
            p.zero_grad()
    if not loss.requires_grad:
        tape.clear()
        return
    grads = {id(loss): np.ones(())}
    leaves = {} if loss._is_op else {id(loss): loss}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node.out), None)
        if g is None:
            continue
        for t, gt in zip(node.inputs, node.backward(g)):
            if gt is None or not t.requires_grad:
                continue
            k = id(t)
            prev = grads.get(k)
            grads[k] = gt if prev is None else prev + gt
            if not t._is_op:
                leaves[k] = t
    for k, t in leaves.items():
        g = grads[k]
        t.grad = np.array(g, dtype=np.float64) if t.grad is None else t.grad + g
    tape.clear()
