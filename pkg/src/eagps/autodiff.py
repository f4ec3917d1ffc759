"""Reverse-mode differentiation over float64 numpy arrays.

Every op returns a :class:`Var` that remembers its parents together with a
closure mapping the upstream gradient to the parent's gradient. ``backward``
walks the graph once in reverse topological order.
"""
from __future__ import annotations

import numpy as np

from . import numerics


class Var:
    __slots__ = ("value", "grad", "requires_grad", "parents", "sink", "name")

    def __init__(self, value, requires_grad=False, parents=(), sink=None, name=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self.parents = parents
        self.sink = sink
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        label = f" {self.name}" if self.name else ""
        return f"Var{label}(shape={self.value.shape})"

    def backward(self, grad=None):
        if grad is None:
            grad = np.ones_like(self.value)
        order = _topo(self)
        grads = {id(self): np.asarray(grad, dtype=np.float64)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if not node.parents:
                node.grad = g if node.grad is None else node.grad + g
                if node.sink is not None:
                    node.sink(g)
                continue
            for parent, fn in node.parents:
                if not parent.requires_grad:
                    continue
                contrib = fn(g)
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + contrib
                else:
                    grads[key] = contrib

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self):
        return transpose(self)


def _topo(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent, _ in node.parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def as_var(x) -> Var:
    return x if isinstance(x, Var) else Var(x)


def value_of(x) -> np.ndarray:
    return x.value if isinstance(x, Var) else np.asarray(x, dtype=np.float64)


def _make(value, *links):
    links = tuple((p, fn) for p, fn in links if p.requires_grad)
    return Var(value, requires_grad=bool(links), parents=links)


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# elementwise ---------------------------------------------------------------

def add(a, b):
    a, b = as_var(a), as_var(b)
    return _make(a.value + b.value,
                 (a, lambda g: _unbroadcast(g, a.shape)),
                 (b, lambda g: _unbroadcast(g, b.shape)))


def sub(a, b):
    a, b = as_var(a), as_var(b)
    return _make(a.value - b.value,
                 (a, lambda g: _unbroadcast(g, a.shape)),
                 (b, lambda g: -_unbroadcast(g, b.shape)))


def mul(a, b):
    a, b = as_var(a), as_var(b)
    return _make(a.value * b.value,
                 (a, lambda g: _unbroadcast(g * b.value, a.shape)),
                 (b, lambda g: _unbroadcast(g * a.value, b.shape)))


def div(a, b):
    a, b = as_var(a), as_var(b)
    out = a.value / b.value
    return _make(out,
                 (a, lambda g: _unbroadcast(g / b.value, a.shape)),
                 (b, lambda g: _unbroadcast(-g * out / b.value, b.shape)))


def exp(x):
    x = as_var(x)
    out = np.exp(x.value)
    return _make(out, (x, lambda g: g * out))


def log(x):
    x = as_var(x)
    return _make(np.log(x.value), (x, lambda g: g / x.value))


def sqrt(x):
    x = as_var(x)
    out = np.sqrt(x.value)
    return _make(out, (x, lambda g: g * 0.5 / out))


def relu(x):
    x = as_var(x)
    on = x.value > 0.0
    return _make(np.where(on, x.value, 0.0), (x, lambda g: g * on))


# linear algebra and reductions ---------------------------------------------

def matmul(a, b):
    a, b = as_var(a), as_var(b)
    return _make(a.value @ b.value,
                 (a, lambda g: g @ b.value.T),
                 (b, lambda g: a.value.T @ g))


def transpose(x):
    x = as_var(x)
    return _make(x.value.T, (x, lambda g: g.T))


def sum(x, axis=None, keepdims=False):  # noqa: A001 - mirrors numpy naming
    x = as_var(x)
    out = np.sum(x.value, axis=axis, keepdims=keepdims)

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, x.shape).copy()

    return _make(out, (x, back))


def mean(x, axis=None, keepdims=False):
    x = as_var(x)
    n = x.value.size if axis is None else x.value.shape[axis]
    return mul(sum(x, axis=axis, keepdims=keepdims), 1.0 / n)


def spmm(a, x):
    """Sparse (constant) times dense; ``a`` is a :class:`eagps.graph.SparseMatrix`."""
    from .graph import spmm as _spmm

    x = as_var(x)
    return _make(_spmm(a, x.value), (x, lambda g: _spmm(a.T, g)))


# indexing ------------------------------------------------------------------

def take_rows(x, idx):
    x = as_var(x)
    idx = np.asarray(idx, dtype=np.intp)

    def back(g):
        out = np.zeros_like(x.value)
        np.add.at(out, idx, g)
        return out

    return _make(x.value[idx], (x, back))


def scatter_rows(x, idx, n_rows):
    """Sum rows of ``x`` into an ``n_rows``-row zero matrix at positions ``idx``."""
    x = as_var(x)
    idx = np.asarray(idx, dtype=np.intp)
    out = np.zeros((n_rows,) + x.shape[1:])
    np.add.at(out, idx, x.value)
    return _make(out, (x, lambda g: g[idx]))


def pick(x, rows, cols):
    """Elementwise gather ``x[rows[i], cols[i]]`` as a column vector."""
    x = as_var(x)
    rows = np.asarray(rows, dtype=np.intp)
    cols = np.asarray(cols, dtype=np.intp)

    def back(g):
        out = np.zeros_like(x.value)
        np.add.at(out, (rows, cols), g.reshape(-1))
        return out

    return _make(x.value[rows, cols].reshape(-1, 1), (x, back))


def concat_cols(parts):
    parts = [as_var(p) for p in parts]
    bounds = np.cumsum([0] + [p.shape[1] for p in parts])
    links = [(p, (lambda g, lo=lo, hi=hi: g[:, lo:hi])) for p, lo, hi in zip(parts, bounds[:-1], bounds[1:])]
    return _make(np.concatenate([p.value for p in parts], axis=1), *links)


def concat_rows(parts):
    parts = [as_var(p) for p in parts]
    bounds = np.cumsum([0] + [p.shape[0] for p in parts])
    links = [(p, (lambda g, lo=lo, hi=hi: g[lo:hi])) for p, lo, hi in zip(parts, bounds[:-1], bounds[1:])]
    return _make(np.concatenate([p.value for p in parts], axis=0), *links)


def slice_rows(x, lo, hi):
    x = as_var(x)

    def back(g):
        out = np.zeros_like(x.value)
        out[lo:hi] = g
        return out

    return _make(x.value[lo:hi], (x, back))


def slice_cols(x, lo, hi):
    x = as_var(x)

    def back(g):
        out = np.zeros_like(x.value)
        out[:, lo:hi] = g
        return out

    return _make(x.value[:, lo:hi], (x, back))


# ragged segments: rows offsets[k]:offsets[k+1] belong to segment k, all non-empty

def segment_sum(x, offsets):
    x = as_var(x)
    offsets = np.asarray(offsets, dtype=np.intp)
    lengths = np.diff(offsets)
    out = np.add.reduceat(x.value, offsets[:-1], axis=0)
    return _make(out, (x, lambda g: np.repeat(g, lengths, axis=0)))


def segment_max(x, offsets):
    x = as_var(x)
    offsets = np.asarray(offsets, dtype=np.intp)
    out = np.maximum.reduceat(x.value, offsets[:-1], axis=0)
    seg = np.repeat(np.arange(len(offsets) - 1), np.diff(offsets))
    hit = x.value == out[seg]
    # route each column's gradient to the first maximal row of its segment
    first = np.zeros_like(hit)
    for k in range(len(offsets) - 1):
        block = hit[offsets[k]:offsets[k + 1]]
        rows = np.argmax(block, axis=0)
        first[offsets[k] + rows, np.arange(block.shape[1])] = True

    return _make(out, (x, lambda g: np.where(first, g[seg], 0.0)))


# normalisations with hand-derived backward passes --------------------------

def l2_normalize_rows(x):
    x = as_var(x)
    norms = np.sqrt(np.sum(x.value * x.value, axis=1, keepdims=True))
    y = numerics.l2_normalize_rows(x.value)
    safe = np.where(norms > 0.0, norms, 1.0)

    def back(g):
        dx = (g - y * np.sum(g * y, axis=1, keepdims=True)) / safe
        return np.where(norms > 0.0, dx, 0.0)

    return _make(y, (x, back))


def softmax_rows(x):
    x = as_var(x)
    y = numerics.softmax_rows(x.value)
    return _make(y, (x, lambda g: y * (g - np.sum(g * y, axis=1, keepdims=True))))


def layer_norm(x, gain, bias, eps=1e-6):
    x, gain, bias = as_var(x), as_var(gain), as_var(bias)
    mu = x.value.mean(axis=1, keepdims=True)
    centred = x.value - mu
    inv = 1.0 / np.sqrt((centred ** 2).mean(axis=1, keepdims=True) + eps)
    xhat = centred * inv
    gain_row = gain.value.reshape(1, -1)
    out = xhat * gain_row + bias.value.reshape(1, -1)

    def back_x(g):
        dxhat = g * gain_row
        return inv * (dxhat - dxhat.mean(axis=1, keepdims=True)
                      - xhat * (dxhat * xhat).mean(axis=1, keepdims=True))

    return _make(out,
                 (x, back_x),
                 (gain, lambda g: np.sum(g * xhat, axis=0).reshape(gain.shape)),
                 (bias, lambda g: np.sum(g, axis=0).reshape(bias.shape)))
