"""Dense tensors with tape-based reverse-mode differentiation."""
from __future__ import annotations

import contextlib
import threading

import numpy as np

from ..errors import ContractError, DimensionError

_state = threading.local()


def _tls():
    if not hasattr(_state, "tapes"):
        _state.tapes = [Tape()]
        _state.grad_enabled = True
    return _state


def active_tape() -> "Tape":
    return _tls().tapes[-1]


def grad_enabled() -> bool:
    return _tls().grad_enabled


@contextlib.contextmanager
def no_grad():
    st = _tls()
    prev = st.grad_enabled
    st.grad_enabled = False
    try:
        yield
    finally:
        st.grad_enabled = prev


class _Node:
    __slots__ = ("out", "parents", "adjoint")

    def __init__(self, out, parents, adjoint):
        self.out = out
        self.parents = parents
        self.adjoint = adjoint


class Tape:
    """Ordered record of executed differentiable operations.

    Used as a context manager, operations executed inside the block are
    recorded on this tape instead of the thread's default tape.
    """

    def __init__(self):
        self.nodes: list[_Node] = []

    def __enter__(self):
        _tls().tapes.append(self)
        return self

    def __exit__(self, *exc):
        _tls().tapes.pop()
        return False

    def __len__(self):
        return len(self.nodes)

    def record(self, out, parents, adjoint):
        self.nodes.append(_Node(out, parents, adjoint))
        out._recorded = True

    def reset(self):
        self.nodes.clear()

    def backward(self, loss: "Tensor"):
        if loss.data.size != 1:
            raise ContractError(f"backward requires a scalar loss, got shape {loss.shape}")
        if not self.nodes:
            raise ContractError("backward called on an empty tape")
        grads = {id(loss): np.ones_like(loss.data)}
        for node in reversed(self.nodes):
            g = grads.pop(id(node.out), None)
            if g is None:
                continue
            pgrads = node.adjoint(g)
            for p, pg in zip(node.parents, pgrads):
                if pg is None or not p.requires_grad:
                    continue
                if p._recorded:
                    prev = grads.get(id(p))
                    grads[id(p)] = pg if prev is None else prev + pg
                else:
                    p.grad = pg.astype(p.data.dtype, copy=True) if p.grad is None else p.grad + pg
        self.nodes.clear()


def backward(loss: "Tensor"):
    """Propagate adjoints of ``loss`` through the active tape into leaf ``.grad``."""
    active_tape().backward(loss)


def as_tensor(x, dtype=None) -> "Tensor":
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def make_result(data, parents, adjoint) -> "Tensor":
    """Wrap ``data`` as a Tensor and record it if any parent needs gradients."""
    out = Tensor(data)
    if grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        active_tape().record(out, parents, adjoint)
    return out


class Tensor:
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.kind in "iub":
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self._recorded = False

    # -- introspection -------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data.reshape(-1)[0])

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Tensor(self.data)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    def __len__(self):
        return self.shape[0]

    def backward(self):
        backward(self)

    # -- arithmetic ----------------------------------------------------
    def __add__(self, other):
        other = as_tensor(other, self.dtype)
        a, b = self, other

        def adj(g):
            return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

        return make_result(a.data + b.data, (a, b), adj)

    __radd__ = __add__

    def __sub__(self, other):
        other = as_tensor(other, self.dtype)
        a, b = self, other

        def adj(g):
            return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

        return make_result(a.data - b.data, (a, b), adj)

    def __rsub__(self, other):
        return as_tensor(other, self.dtype) - self

    def __mul__(self, other):
        other = as_tensor(other, self.dtype)
        a, b = self, other

        def adj(g):
            return (_unbroadcast(g * b.data, a.shape) if a.requires_grad else None,
                    _unbroadcast(g * a.data, b.shape) if b.requires_grad else None)

        return make_result(a.data * b.data, (a, b), adj)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_tensor(other, self.dtype)
        a, b = self, other

        def adj(g):
            ga = _unbroadcast(g / b.data, a.shape) if a.requires_grad else None
            gb = _unbroadcast(-g * a.data / b.data ** 2, b.shape) if b.requires_grad else None
            return ga, gb

        return make_result(a.data / b.data, (a, b), adj)

    def __rtruediv__(self, other):
        return as_tensor(other, self.dtype) / self

    def __neg__(self):
        a = self
        return make_result(-a.data, (a,), lambda g: (-g,))

    def __pow__(self, exponent):
        if isinstance(exponent, Tensor):
            raise TypeError("only scalar exponents are supported")
        a = self
        p = float(exponent)

        def adj(g):
            return (g * p * a.data ** (p - 1),)

        return make_result(a.data ** p, (a,), adj)

    def __matmul__(self, other):
        from .kernels import matmul

        return matmul(self, as_tensor(other, self.dtype))

    def __getitem__(self, idx):
        a = self

        def adj(g):
            out = np.zeros_like(a.data)
            np.add.at(out, idx, g)
            return (out,)

        return make_result(a.data[idx], (a,), adj)

    # -- reductions and reshaping -------------------------------------
    def sum(self, axis=None, keepdims=False):
        a = self

        def adj(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, a.shape).copy(),)

        return make_result(a.data.sum(axis=axis, keepdims=keepdims), (a,), adj)

    def mean(self, axis=None, keepdims=False):
        n = self.data.size if axis is None else np.prod([self.shape[i] for i in np.atleast_1d(axis)])
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        a = self
        return make_result(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        axes = axes or tuple(reversed(range(self.ndim)))
        inv = np.argsort(axes)
        a = self
        return make_result(a.data.transpose(axes), (a,), lambda g: (g.transpose(inv),))

    @property
    def T(self):
        return self.transpose()

    def astype(self, dtype):
        a = self
        return make_result(a.data.astype(dtype), (a,), lambda g: (g.astype(a.dtype),))


def parameter(data, dtype=np.float64) -> Tensor:
    return Tensor(np.array(data, dtype=dtype), requires_grad=True)


def concat(tensors, axis=0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def adj(g):
        return tuple(np.split(g, splits, axis=axis))

    return make_result(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), adj)


def stack(tensors, axis=0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]

    def adj(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return make_result(np.stack([t.data for t in tensors], axis=axis), tuple(tensors), adj)


def broadcast_to(x: Tensor, shape) -> Tensor:
    return make_result(np.broadcast_to(x.data, shape).copy(), (x,),
                       lambda g: (_unbroadcast(g, x.shape),))


def pad(x: Tensor, widths, value=0.0) -> Tensor:
    slices = tuple(slice(lo, lo + n) for (lo, _), n in zip(widths, x.shape))
    return make_result(np.pad(x.data, widths, constant_values=value), (x,), lambda g: (g[slices],))


def square(x: Tensor) -> Tensor:
    return make_result(x.data * x.data, (x,), lambda g: (2.0 * g * x.data,))


def sqrt(x: Tensor) -> Tensor:
    out = np.sqrt(x.data)
    return make_result(out, (x,), lambda g: (0.5 * g / out,))


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return make_result(out, (x,), lambda g: (g * out,))


def abs_(x: Tensor) -> Tensor:
    return make_result(np.abs(x.data), (x,), lambda g: (g * np.sign(x.data),))


def check_same_shape(a, b, what="operands"):
    if tuple(a.shape) != tuple(b.shape):
        raise DimensionError(f"{what} shapes differ: {tuple(a.shape)} vs {tuple(b.shape)}")
