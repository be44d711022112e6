"""k-nearest-neighbour similarity graphs in CSR form."""
import io
import struct
from dataclasses import dataclass

import numpy as np

from . import kernels
from . import rng as rngmod
from .dataset import Reader, write_atomic
from .errors import DimensionError, FormatError, ParameterError

MAGIC = b"GRFG"
VERSION = 1

EXACT_MAX_N = 20_000
DEFAULT_K = {"breakhis": 25, "bach": 15}


@dataclass(frozen=True, eq=False)
class SparseGraph:
    n: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "row_offsets", np.ascontiguousarray(self.row_offsets, dtype=np.int64))
        object.__setattr__(self, "col_indices", np.ascontiguousarray(self.col_indices, dtype=np.int64))
        object.__setattr__(self, "values", np.ascontiguousarray(self.values, dtype=np.float64))
        check_structure(self)

    @property
    def nnz(self):
        return self.col_indices.shape[0]

    def rows(self):
        return np.repeat(np.arange(self.n), np.diff(self.row_offsets))

    def degrees(self):
        return np.diff(self.row_offsets)

    def neighbors(self, i):
        return self.col_indices[self.row_offsets[i]:self.row_offsets[i + 1]]

    def to_dense(self):
        A = np.zeros((self.n, self.n))
        A[self.rows(), self.col_indices] = self.values
        return A

    def __eq__(self, other):
        if not isinstance(other, SparseGraph):
            return NotImplemented
        return (self.n == other.n and np.array_equal(self.row_offsets, other.row_offsets)
                and np.array_equal(self.col_indices, other.col_indices)
                and self.values.tobytes() == other.values.tobytes())


class NormalizedAdjacency(SparseGraph):
    """``D^-1/2 (A + I) D^-1/2`` in the same CSR layout."""


def check_structure(g):
    ro, ci = g.row_offsets, g.col_indices
    if g.n < 0 or ro.shape != (g.n + 1,) or ro[0] != 0 or ro[-1] != ci.shape[0]:
        raise FormatError("row_offsets inconsistent with n / nnz")
    if np.any(np.diff(ro) < 0):
        raise FormatError("row_offsets must be non-decreasing")
    if g.values.shape != ci.shape:
        raise FormatError("values and col_indices differ in length")
    if ci.size and (ci.min() < 0 or ci.max() >= g.n):
        raise FormatError("col_indices out of range")
    if ci.size:
        key = g.rows() * g.n + ci
        if np.any(np.diff(key) <= 0):
            raise FormatError("columns must be strictly increasing within each row")


def from_edges(n, src, dst, weights=None):
    """CSR from an edge list; duplicate (i, j) pairs keep the max weight."""
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    w = np.ones(src.shape[0]) if weights is None else np.asarray(weights, dtype=np.float64)
    key = src * n + dst
    order = np.lexsort((w, key))
    key, w = key[order], w[order]
    last = np.ones(key.shape[0], dtype=bool)
    last[:-1] = key[1:] != key[:-1]
    key, w = key[last], w[last]
    rows = key // n
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n), out=offsets[1:])
    return SparseGraph(n, offsets, key % n, w)


# ---------------------------------------------------------------------------
# neighbour search
# ---------------------------------------------------------------------------


class KDForest:
    """Randomized kd-tree forest with a bounded leaf-visit budget."""

    def __init__(self, X, n_trees=4, leaf_size=8, seed=0, top_dims=5, sample=100):
        self.X = np.ascontiguousarray(X, dtype=np.float64)
        n = self.X.shape[0]
        stream = rngmod.RngStream(seed, rngmod.KDTREE)
        trees = [kernels.build_kdtree(self.X, leaf_size, stream.uniform(2 * n + 1), top_dims, sample)
                 for _ in range(n_trees)]
        width = max(t[0].shape[0] for t in trees)
        pads = (-1, 0.0, -1, -1, 0, 0)
        self.nodes = [np.stack([np.concatenate([t[f], np.full(width - t[f].shape[0], pads[f],
                                                              dtype=t[f].dtype)]) for t in trees])
                      for f in range(6)]
        self.perm = np.stack([t[6] for t in trees])

    def query(self, Q, k, max_checks, skip=None):
        Q = np.ascontiguousarray(Q, dtype=np.float64)
        if skip is None:
            skip = np.full(Q.shape[0], -1, dtype=np.int64)
        return kernels.kdforest_search(Q, self.X, k, np.asarray(skip, dtype=np.int64),
                                       *self.nodes, self.perm, int(max_checks))


def default_checks(n, k, d):
    # isotropic data in high dimension needs a near-exhaustive budget
    frac = min(0.7, max(0.25, d / 128))
    return max(32 * k, int(frac * n))


def neighbor_lists(X, k, method="exact", seed=0, n_trees=4, max_checks=None, refine=2, Q=None):
    """(idx, sqdist) of the ``k`` nearest rows of ``X`` for each row of ``Q``.

    With ``Q=None`` the queries are the rows of ``X`` themselves and each
    point is excluded from its own list. For that self-join the kd-tree
    candidates get ``refine`` neighbour-of-neighbour passes.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    n = X.shape[0]
    if Q is None:
        Q, skip = X, np.arange(n, dtype=np.int64)
        avail = n - 1
    else:
        Q = np.ascontiguousarray(np.atleast_2d(Q), dtype=np.float64)
        skip = np.full(Q.shape[0], -1, dtype=np.int64)
        avail = n
    if Q.shape[1] != X.shape[1]:
        raise DimensionError(f"query dimension {Q.shape[1]} != feature dimension {X.shape[1]}")
    if not 1 <= k <= avail:
        raise ParameterError(f"k={k} must satisfy 1 <= k <= {avail} (n={n})")
    if method == "exact":
        return kernels.knn_exact(Q, X, k, skip)
    if method == "kdtree":
        forest = KDForest(X, n_trees=n_trees, seed=seed)
        checks = default_checks(n, k, X.shape[1]) if max_checks is None else max_checks
        idx, dist = forest.query(Q, k, checks, skip)
        if Q is X:
            for _ in range(refine):
                idx, dist = kernels.refine_knn(X, idx, dist)
        return idx, dist
    raise ParameterError(f"unknown ANN method {method!r}")


def knn_graph(X, k, method="exact", seed=0, **kw):
    """Directed k-NN graph: row ``i`` lists the ``k`` nearest other nodes, weight 1."""
    X = getattr(X, "features", X)
    n = X.shape[0]
    if n < 2:
        raise ParameterError("need at least 2 nodes to build a graph")
    if k >= n:
        raise ParameterError(f"k={k} must be smaller than n={n}")
    idx, _ = neighbor_lists(X, k, method=method, seed=seed, **kw)
    return from_edges(n, np.repeat(np.arange(n), k), idx.ravel())


def symmetrize(g):
    rows = g.rows()
    return from_edges(g.n, np.concatenate([rows, g.col_indices]),
                      np.concatenate([g.col_indices, rows]),
                      np.concatenate([g.values, g.values]))


def is_symmetric(g):
    t = from_edges(g.n, g.col_indices, g.rows(), g.values)
    return t == g


def add_self_loops(g, weight=1.0):
    """Add ``(i, i)`` for every node; existing diagonal entries are summed with ``weight``."""
    rows = g.rows()
    diag = np.arange(g.n)
    src = np.concatenate([rows, diag])
    dst = np.concatenate([g.col_indices, diag])
    w = np.concatenate([g.values, np.full(g.n, weight)])
    key = src * g.n + dst
    uk, inv = np.unique(key, return_inverse=True)
    summed = np.zeros(uk.shape[0])
    np.add.at(summed, inv, w)
    offsets = np.zeros(g.n + 1, dtype=np.int64)
    np.cumsum(np.bincount(uk // g.n, minlength=g.n), out=offsets[1:])
    return SparseGraph(g.n, offsets, uk % g.n, summed)


def normalize(g):
    if not is_symmetric(g):
        raise ParameterError("normalize requires a symmetric graph")
    a = add_self_loops(g)
    deg = np.zeros(g.n)
    np.add.at(deg, a.rows(), a.values)
    inv_sqrt = 1.0 / np.sqrt(deg)
    vals = a.values * inv_sqrt[a.rows()] * inv_sqrt[a.col_indices]
    return NormalizedAdjacency(g.n, a.row_offsets, a.col_indices, vals)


def attach_query(g, X, q, k, method="exact", seed=0):
    """Return ``(g', n)``: ``g`` plus node ``n`` linked both ways to its k nearest nodes."""
    X = getattr(X, "features", X)
    q = np.asarray(q, dtype=np.float64).reshape(-1)
    if X.shape[0] != g.n:
        raise DimensionError(f"graph has {g.n} nodes but {X.shape[0]} feature rows were given")
    if q.shape[0] != X.shape[1]:
        raise DimensionError(f"query has dimension {q.shape[0]}, expected {X.shape[1]}")
    idx, _ = neighbor_lists(X, k, method=method, seed=seed, Q=q[None, :])
    nb = idx[0]
    new = g.n
    src = np.concatenate([g.rows(), nb, np.full(k, new)])
    dst = np.concatenate([g.col_indices, np.full(k, new), nb])
    w = np.concatenate([g.values, np.ones(2 * k)])
    return from_edges(g.n + 1, src, dst, w), new


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------


def graph_to_bytes(g):
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<IQQ", VERSION, g.n, g.nnz))
    buf.write(g.row_offsets.astype("<u8").tobytes())
    buf.write(g.col_indices.astype("<u8").tobytes())
    buf.write(g.values.astype("<f4").tobytes())
    return buf.getvalue()


def graph_from_bytes(data, name="<bytes>"):
    r = Reader(data, name)
    r.header(MAGIC, VERSION)
    n, nnz = r.unpack("<QQ")
    if 8 * (n + 1) + 12 * nnz > len(data):
        raise FormatError(f"{name}: truncated payload")
    ro = r.array("<u8", n + 1).astype(np.int64)
    ci = r.array("<u8", nnz).astype(np.int64)
    vals = r.array("<f4", nnz).astype(np.float64)
    r.finish()
    return SparseGraph(int(n), ro, ci, vals)


def save_graph(g, path):
    write_atomic(path, graph_to_bytes(g))


def load_graph(path):
    with open(path, "rb") as fh:
        return graph_from_bytes(fh.read(), str(path))


def export_tsv(g, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for i, j, w in zip(g.rows(), g.col_indices, g.values):
            w32 = np.format_float_positional(np.float32(w), unique=True, trim="-")
            fh.write(f"{i}\t{j}\t{w32}\n")
