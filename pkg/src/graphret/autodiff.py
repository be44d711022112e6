"""Tape-based reverse-mode autodiff over 2-d float64 arrays.

Every op builds a new :class:`Tensor` holding its parents and a closure that
pushes the output gradient back to them. ``Tensor.backward`` walks the
recorded graph in reverse topological order.
"""
import contextlib

import numpy as np

from . import kernels
from .errors import DimensionError, NumericError, ParameterError

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, name=None):
        arr = np.array(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise DimensionError(f"Tensor data must be at most 2-d, got shape {arr.shape}")
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    def item(self):
        return float(self.data[0, 0])

    def numpy(self):
        return self.data

    def detach(self):
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}{self.shape}"

    def backward(self):
        if self.shape != (1, 1):
            raise DimensionError("backward() needs a scalar (1x1) tensor")
        order, seen = [], set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        grads = {id(self): np.ones((1, 1))}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg

    __add__ = lambda self, other: add(self, other)
    __radd__ = lambda self, other: add(other, self)
    __sub__ = lambda self, other: sub(self, other)
    __rsub__ = lambda self, other: sub(other, self)
    __mul__ = lambda self, other: mul(self, other)
    __rmul__ = lambda self, other: mul(other, self)
    __matmul__ = lambda self, other: matmul(self, other)
    __neg__ = lambda self: scale(self, -1.0)

    @property
    def T(self):
        return transpose(self)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _finite(arr, opname):
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"{opname} produced non-finite values")
    return arr


def _make(data, parents, backward, opname):
    out = Tensor.__new__(Tensor)
    out.data = _finite(data, opname)
    out.grad = None
    out.name = None
    out.requires_grad = _GRAD_ENABLED and any(p.requires_grad for p in parents)
    out._parents = tuple(parents) if out.requires_grad else ()
    out._backward = backward if out.requires_grad else None
    return out


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    if shape[0] == 1 and g.shape[0] != 1:
        g = g.sum(axis=0, keepdims=True)
    if shape[1] == 1 and g.shape[1] != 1:
        g = g.sum(axis=1, keepdims=True)
    return g


def _bshape(a, b, opname):
    ra, ca = a.shape
    rb, cb = b.shape
    if (ra != rb and 1 not in (ra, rb)) or (ca != cb and 1 not in (ca, cb)):
        raise DimensionError(f"{opname}: shapes {a.shape} and {b.shape} do not broadcast")


# ---------------------------------------------------------------------------
# elementwise / linear algebra
# ---------------------------------------------------------------------------


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _bshape(a, b, "add")
    return _make(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)), "add")


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _bshape(a, b, "sub")
    return _make(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)), "sub")


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _bshape(a, b, "mul")
    return _make(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
                 "mul")


def scale(a, s):
    s = float(s)
    return _make(a.data * s, (a,), lambda g: (g * s,), "scale")


def matmul(a, b):
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: {a.shape} @ {b.shape}")
    with np.errstate(over="ignore", invalid="ignore"):
        out = a.data @ b.data
    return _make(out, (a, b), lambda g: (g @ b.data.T, a.data.T @ g), "matmul")


def transpose(a):
    return _make(a.data.T.copy(), (a,), lambda g: (g.T,), "transpose")


def concat_cols(tensors):
    tensors = list(tensors)
    if len({t.shape[0] for t in tensors}) != 1:
        raise DimensionError("concat_cols: row counts differ")
    edges = np.cumsum([0] + [t.shape[1] for t in tensors])
    return _make(np.hstack([t.data for t in tensors]), tensors,
                 lambda g: tuple(g[:, edges[i]:edges[i + 1]] for i in range(len(tensors))),
                 "concat_cols")


def slice_cols(a, start, stop):
    def back(g):
        full = np.zeros_like(a.data)
        full[:, start:stop] = g
        return (full,)
    return _make(a.data[:, start:stop].copy(), (a,), back, "slice_cols")


def power(a, p):
    p = float(p)
    return _make(a.data ** p, (a,), lambda g: (g * p * a.data ** (p - 1.0),), "power")


def clamp(a, lo, hi):
    inside = (a.data >= lo) & (a.data <= hi)
    return _make(np.clip(a.data, lo, hi), (a,), lambda g: (g * inside,), "clamp")


def exp(a):
    with np.errstate(over="ignore"):
        out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,), "exp")


def log(a):
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(a.data)
    return _make(out, (a,), lambda g: (g / a.data,), "log")


def sigmoid_array(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def sigmoid(a):
    out = sigmoid_array(a.data)
    return _make(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def softplus(a):
    """``log(1 + exp(x))`` computed without overflow."""
    x = a.data
    out = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))
    return _make(out, (a,), lambda g: (g * sigmoid_array(x),), "softplus")


def leaky_relu(a, slope=0.01):
    d = np.where(a.data > 0, 1.0, slope)
    return _make(a.data * d, (a,), lambda g: (g * d,), "leaky_relu")


def relu(a):
    return leaky_relu(a, 0.0)


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------


def sum_all(a):
    return _make(np.array([[a.data.sum()]]), (a,), lambda g: (np.broadcast_to(g, a.shape).copy(),),
                 "sum")


def mean_all(a):
    size = a.data.size
    return _make(np.array([[a.data.mean()]]), (a,),
                 lambda g: (np.full(a.shape, g[0, 0] / size),), "mean")


def col_mean(a):
    r = a.shape[0]
    return _make(a.data.mean(axis=0, keepdims=True), (a,),
                 lambda g: (np.broadcast_to(g / r, a.shape).copy(),), "col_mean")


def row_sum(a):
    return _make(a.data.sum(axis=1, keepdims=True), (a,),
                 lambda g: (np.broadcast_to(g, a.shape).copy(),), "row_sum")


def row_softmax_masked(logits, mask):
    """Softmax along rows restricted to ``mask``; masked-out entries are exactly 0."""
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != logits.shape:
        raise DimensionError("row_softmax_masked: mask shape differs from logits")
    if not mask.any(axis=1).all():
        raise ParameterError("row_softmax_masked: a row has no allowed entries")
    x = np.where(mask, logits.data, -np.inf)
    x = x - x.max(axis=1, keepdims=True)
    e = np.where(mask, np.exp(x), 0.0)
    out = e / e.sum(axis=1, keepdims=True)

    def back(g):
        return (out * (g - (g * out).sum(axis=1, keepdims=True)),)
    return _make(out, (logits,), back, "row_softmax_masked")


# ---------------------------------------------------------------------------
# sparse / graph ops
# ---------------------------------------------------------------------------


def spmm(adj, x):
    """``adj @ x`` for a constant CSR matrix ``adj``."""
    if adj.n != x.shape[0]:
        raise DimensionError(f"spmm: graph has {adj.n} nodes, x has {x.shape[0]} rows")
    ro, ci, v = adj.row_offsets, adj.col_indices, adj.values
    out = kernels.spmm(ro, ci, v, np.ascontiguousarray(x.data))
    return _make(out, (x,), lambda g: (kernels.spmm_t(ro, ci, v, g, adj.n),), "spmm")


def gather_rows(x, idx):
    idx = np.asarray(idx, dtype=np.int64)

    def back(g):
        full = np.zeros_like(x.data)
        np.add.at(full, idx, g)
        return (full,)
    return _make(x.data[idx], (x,), back, "gather_rows")


def segment_softmax(adj, scores):
    """Softmax of per-edge ``scores`` (nnz x 1) within each CSR row."""
    ro = adj.row_offsets
    if np.any(np.diff(ro) == 0):
        raise ParameterError("segment_softmax: a node has an empty neighbourhood")
    s = np.ascontiguousarray(scores.data[:, 0])
    alpha = kernels.segment_softmax(ro, s)
    return _make(alpha[:, None], (scores,),
                 lambda g: (kernels.segment_softmax_grad(ro, alpha, np.ascontiguousarray(g[:, 0]))[:, None],),
                 "segment_softmax")


def edge_spmm(adj, weights, x):
    """Aggregate ``out_i = sum_e w_e x_{col(e)}`` with differentiable edge weights."""
    ro, ci = adj.row_offsets, adj.col_indices
    w = np.ascontiguousarray(weights.data[:, 0])
    xd = np.ascontiguousarray(x.data)
    out = kernels.spmm(ro, ci, w, xd)

    def back(g):
        g = np.ascontiguousarray(g)
        return (kernels.edge_dot(ro, ci, g, xd)[:, None], kernels.spmm_t(ro, ci, w, g, x.shape[0]))
    return _make(out, (weights, x), back, "edge_spmm")


# ---------------------------------------------------------------------------
# stochastic
# ---------------------------------------------------------------------------


def dropout(x, p, rng, training=True):
    if not 0.0 <= p < 1.0:
        raise ParameterError(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    keep = (rng.uniform(x.shape) >= p) / (1.0 - p)
    return _make(x.data * keep, (x,), lambda g: (g * keep,), "dropout")
