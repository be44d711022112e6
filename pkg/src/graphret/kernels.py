"""Hot numeric kernels.

Every kernel has a numba version (``*_nb``) and a numpy version (``*_np``).
The public names dispatch on :data:`graphret._accel.USE_NUMBA`; both
variants stay importable so tests and the benchmark can compare them.
"""
import heapq

import numpy as np

from ._accel import USE_NUMBA, njit, njit_parallel, prange

# ---------------------------------------------------------------------------
# exact k nearest neighbours
# ---------------------------------------------------------------------------


@njit
def _insert(best_d, best_i, dd, j):
    k = best_d.shape[0]
    if dd > best_d[k - 1] or (dd == best_d[k - 1] and j >= best_i[k - 1]):
        return
    p = k - 1
    while p > 0 and (best_d[p - 1] > dd or (best_d[p - 1] == dd and best_i[p - 1] > j)):
        best_d[p] = best_d[p - 1]
        best_i[p] = best_i[p - 1]
        p -= 1
    best_d[p] = dd
    best_i[p] = j


@njit_parallel
def knn_exact_nb(Q, X, k, skip):
    m = Q.shape[0]
    n, d = X.shape
    idx = np.empty((m, k), dtype=np.int64)
    dist = np.empty((m, k), dtype=np.float64)
    for i in prange(m):
        best_d = np.full(k, np.inf)
        best_i = np.full(k, n, dtype=np.int64)
        for j in range(n):
            if j == skip[i]:
                continue
            s = 0.0
            for t in range(d):
                diff = Q[i, t] - X[j, t]
                s += diff * diff
            if s <= best_d[k - 1]:
                _insert(best_d, best_i, s, j)
        idx[i] = best_i
        dist[i] = best_d
    return idx, dist


def knn_exact_np(Q, X, k, skip):
    m, d = Q.shape
    n = X.shape[0]
    idx = np.empty((m, k), dtype=np.int64)
    dist = np.empty((m, k), dtype=np.float64)
    block = max(1, int(2e7 // max(1, n * d)))
    for s in range(0, m, block):
        e = min(m, s + block)
        diff = Q[s:e, None, :] - X[None, :, :]
        D = np.einsum("ijk,ijk->ij", diff, diff)
        rows = np.nonzero(skip[s:e] >= 0)[0]
        D[rows, skip[s:e][rows]] = np.inf
        order = np.argsort(D, axis=1, kind="stable")[:, :k]
        idx[s:e] = order
        dist[s:e] = np.take_along_axis(D, order, axis=1)
    return idx, dist


# ---------------------------------------------------------------------------
# randomized kd-tree forest
# ---------------------------------------------------------------------------


@njit
def build_kdtree_nb(X, leaf_size, rand, top_dims, sample):
    """Build one randomized kd-tree; returns flat node arrays and the point order.

    ``rand`` supplies one uniform draw per node (split-dimension choice).
    Leaves are marked with ``split_dim == -1`` and own ``perm[lo:hi]``.
    """
    n, d = X.shape
    cap = 2 * n + 1
    split_dim = np.full(cap, -1, dtype=np.int64)
    split_val = np.zeros(cap, dtype=np.float64)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    lo_arr = np.zeros(cap, dtype=np.int64)
    hi_arr = np.zeros(cap, dtype=np.int64)
    perm = np.arange(n)
    n_nodes = 1
    lo_arr[0] = 0
    hi_arr[0] = n
    stack = [0]
    mean = np.empty(d)
    var = np.empty(d)
    while len(stack) > 0:
        node = stack.pop()
        lo = lo_arr[node]
        hi = hi_arr[node]
        cnt = hi - lo
        if cnt <= leaf_size:
            continue
        ns = min(cnt, sample)
        mean[:] = 0.0
        var[:] = 0.0
        for p in range(lo, lo + ns):
            for t in range(d):
                mean[t] += X[perm[p], t]
        mean /= ns
        for p in range(lo, lo + ns):
            for t in range(d):
                diff = X[perm[p], t] - mean[t]
                var[t] += diff * diff
        order = np.argsort(-var, kind="mergesort")
        ntop = min(top_dims, d)
        dim = order[min(int(rand[node % rand.shape[0]] * ntop), ntop - 1)]
        val = mean[dim]
        i = lo
        j = hi - 1
        while i <= j:
            if X[perm[i], dim] < val:
                i += 1
            else:
                tmp = perm[i]
                perm[i] = perm[j]
                perm[j] = tmp
                j -= 1
        mid = i
        if mid == lo or mid == hi:
            # degenerate mean split: fall back to a median split
            vals = np.empty(cnt)
            for p in range(cnt):
                vals[p] = X[perm[lo + p], dim]
            o = np.argsort(vals, kind="mergesort")
            seg = perm[lo:hi].copy()
            for p in range(cnt):
                perm[lo + p] = seg[o[p]]
            mid = lo + cnt // 2
            val = X[perm[mid], dim]
        split_dim[node] = dim
        split_val[node] = val
        left[node] = n_nodes
        right[node] = n_nodes + 1
        lo_arr[n_nodes] = lo
        hi_arr[n_nodes] = mid
        lo_arr[n_nodes + 1] = mid
        hi_arr[n_nodes + 1] = hi
        stack.append(n_nodes)
        stack.append(n_nodes + 1)
        n_nodes += 2
    return (split_dim[:n_nodes], split_val[:n_nodes], left[:n_nodes],
            right[:n_nodes], lo_arr[:n_nodes], hi_arr[:n_nodes], perm)


build_kdtree_np = getattr(build_kdtree_nb, "py_func", build_kdtree_nb)


@njit
def kdforest_search_nb(Q, X, k, skip, split_dim, split_val, left, right,
                       lo_arr, hi_arr, perm, max_checks):
    """Best-bin-first search over a forest of stacked trees (FLANN style)."""
    m = Q.shape[0]
    n, d = X.shape
    n_trees = split_dim.shape[0]
    idx = np.empty((m, k), dtype=np.int64)
    dist = np.empty((m, k), dtype=np.float64)
    stamp = np.full(n, -1, dtype=np.int64)
    for qi in range(m):
        best_d = np.full(k, np.inf)
        best_i = np.full(k, n, dtype=np.int64)
        checks = 0
        heap = [(0.0, np.int64(0), np.int64(0))]
        heap.pop()
        for t in range(n_trees):
            heapq.heappush(heap, (0.0, np.int64(t), np.int64(0)))
        while len(heap) > 0:
            bound, t, node = heapq.heappop(heap)
            if checks >= max_checks and best_d[k - 1] < np.inf:
                break
            while split_dim[t, node] >= 0:
                dim = split_dim[t, node]
                diff = Q[qi, dim] - split_val[t, node]
                if diff < 0:
                    near = left[t, node]
                    far = right[t, node]
                else:
                    near = right[t, node]
                    far = left[t, node]
                nb = bound + diff * diff
                heapq.heappush(heap, (nb, t, far))
                node = near
            for p in range(lo_arr[t, node], hi_arr[t, node]):
                j = perm[t, p]
                if stamp[j] == qi or j == skip[qi]:
                    continue
                stamp[j] = qi
                s = 0.0
                for c in range(d):
                    diff = Q[qi, c] - X[j, c]
                    s += diff * diff
                checks += 1
                _insert(best_d, best_i, s, j)
        idx[qi] = best_i
        dist[qi] = best_d
    return idx, dist


def kdforest_search_np(Q, X, k, skip, split_dim, split_val, left, right,
                       lo_arr, hi_arr, perm, max_checks):
    m = Q.shape[0]
    n = X.shape[0]
    n_trees = split_dim.shape[0]
    idx = np.empty((m, k), dtype=np.int64)
    dist = np.empty((m, k), dtype=np.float64)
    for qi in range(m):
        q = Q[qi]
        seen = np.zeros(n, dtype=bool)
        if skip[qi] >= 0:
            seen[skip[qi]] = True
        cand_d = []
        cand_i = []
        worst = np.inf
        checks = 0
        heap = [(0.0, t, 0) for t in range(n_trees)]
        heapq.heapify(heap)
        while heap:
            bound, t, node = heapq.heappop(heap)
            if checks >= max_checks and np.isfinite(worst):
                break
            if bound > worst:
                continue
            while split_dim[t, node] >= 0:
                diff = q[split_dim[t, node]] - split_val[t, node]
                near, far = ((left[t, node], right[t, node]) if diff < 0
                             else (right[t, node], left[t, node]))
                nb = bound + diff * diff
                if nb <= worst:
                    heapq.heappush(heap, (nb, t, far))
                node = near
            pts = perm[t, lo_arr[t, node]:hi_arr[t, node]]
            pts = pts[~seen[pts]]
            if pts.size == 0:
                continue
            seen[pts] = True
            diff = X[pts] - q
            cand_d.append(np.einsum("ij,ij->i", diff, diff))
            cand_i.append(pts)
            checks += pts.size
            dd = np.concatenate(cand_d)
            ii = np.concatenate(cand_i)
            order = np.lexsort((ii, dd))[:k]
            cand_d, cand_i = [dd[order]], [ii[order]]
            if order.size == k:
                worst = dd[order[-1]]
        dd = np.full(k, np.inf)
        ii = np.full(k, n, dtype=np.int64)
        if cand_d:
            dd[:cand_d[0].size] = cand_d[0]
            ii[:cand_i[0].size] = cand_i[0]
        idx[qi] = ii
        dist[qi] = dd
    return idx, dist


@njit
def refine_knn_nb(X, idx, dist):
    """One neighbour-of-neighbour pass over a self k-NN list (reads old, writes new)."""
    n, k = idx.shape
    d = X.shape[1]
    new_i = idx.copy()
    new_d = dist.copy()
    for i in range(n):
        bd = new_d[i]
        bi = new_i[i]
        for a in range(k):
            u = idx[i, a]
            for b in range(k):
                j = idx[u, b]
                if j == i:
                    continue
                dup = False
                for c in range(k):
                    if bi[c] == j:
                        dup = True
                        break
                if dup:
                    continue
                s = 0.0
                for t in range(d):
                    diff = X[i, t] - X[j, t]
                    s += diff * diff
                _insert(bd, bi, s, j)
    return new_i, new_d


def refine_knn_np(X, idx, dist):
    n, k = idx.shape
    new_i = np.empty_like(idx)
    new_d = np.empty_like(dist)
    block = max(1, int(2e7 // max(1, k * (k + 1) * X.shape[1])))
    for s in range(0, n, block):
        e = min(n, s + block)
        cand = np.concatenate([idx[s:e], idx[idx[s:e]].reshape(e - s, k * k)], axis=1)
        diff = X[s:e, None, :] - X[cand]
        dd = np.einsum("ijk,ijk->ij", diff, diff)
        dd[:, :k] = dist[s:e]
        dd[cand == np.arange(s, e)[:, None]] = np.inf
        for r in range(e - s):
            _, first = np.unique(cand[r], return_index=True)
            keep = np.zeros(cand.shape[1], dtype=bool)
            keep[first] = True
            order = np.lexsort((cand[r], np.where(keep, dd[r], np.inf)))[:k]
            new_i[s + r] = cand[r][order]
            new_d[s + r] = dd[r][order]
    return new_i, new_d


# ---------------------------------------------------------------------------
# CSR message passing
# ---------------------------------------------------------------------------


def _rows_of(offsets):
    return np.repeat(np.arange(offsets.shape[0] - 1), np.diff(offsets))


def _segment_reduce(ufunc, values, offsets, fill=0.0):
    n = offsets.shape[0] - 1
    out = np.full((n,) + values.shape[1:], fill, dtype=np.float64)
    nonempty = offsets[1:] > offsets[:-1]
    if values.shape[0]:
        out[nonempty] = ufunc.reduceat(values, offsets[:-1][nonempty], axis=0)
    return out


@njit
def spmm_nb(offsets, cols, vals, X):
    n = offsets.shape[0] - 1
    f = X.shape[1]
    out = np.zeros((n, f))
    for i in range(n):
        for e in range(offsets[i], offsets[i + 1]):
            w = vals[e]
            j = cols[e]
            for c in range(f):
                out[i, c] += w * X[j, c]
    return out


def spmm_np(offsets, cols, vals, X):
    return _segment_reduce(np.add, vals[:, None] * X[cols], offsets)


@njit
def spmm_t_nb(offsets, cols, vals, G, n_out):
    n = offsets.shape[0] - 1
    f = G.shape[1]
    out = np.zeros((n_out, f))
    for i in range(n):
        for e in range(offsets[i], offsets[i + 1]):
            w = vals[e]
            j = cols[e]
            for c in range(f):
                out[j, c] += w * G[i, c]
    return out


def spmm_t_np(offsets, cols, vals, G, n_out):
    out = np.zeros((n_out, G.shape[1]))
    np.add.at(out, cols, vals[:, None] * G[_rows_of(offsets)])
    return out


@njit
def segment_softmax_nb(offsets, s):
    n = offsets.shape[0] - 1
    out = np.empty_like(s)
    for i in range(n):
        a = offsets[i]
        b = offsets[i + 1]
        if a == b:
            continue
        mx = s[a]
        for e in range(a + 1, b):
            if s[e] > mx:
                mx = s[e]
        tot = 0.0
        for e in range(a, b):
            out[e] = np.exp(s[e] - mx)
            tot += out[e]
        for e in range(a, b):
            out[e] /= tot
    return out


def segment_softmax_np(offsets, s):
    rows = _rows_of(offsets)
    mx = _segment_reduce(np.maximum, s, offsets, fill=-np.inf)
    ex = np.exp(s - mx[rows])
    return ex / _segment_reduce(np.add, ex, offsets)[rows]


@njit
def segment_softmax_grad_nb(offsets, alpha, g):
    n = offsets.shape[0] - 1
    out = np.empty_like(alpha)
    for i in range(n):
        a = offsets[i]
        b = offsets[i + 1]
        dot = 0.0
        for e in range(a, b):
            dot += alpha[e] * g[e]
        for e in range(a, b):
            out[e] = alpha[e] * (g[e] - dot)
    return out


def segment_softmax_grad_np(offsets, alpha, g):
    dot = _segment_reduce(np.add, alpha * g, offsets)
    return alpha * (g - dot[_rows_of(offsets)])


@njit
def edge_dot_nb(offsets, cols, A, B):
    n = offsets.shape[0] - 1
    f = A.shape[1]
    out = np.empty(cols.shape[0])
    for i in range(n):
        for e in range(offsets[i], offsets[i + 1]):
            j = cols[e]
            s = 0.0
            for c in range(f):
                s += A[i, c] * B[j, c]
            out[e] = s
    return out


def edge_dot_np(offsets, cols, A, B):
    return np.einsum("ij,ij->i", A[_rows_of(offsets)], B[cols])


if USE_NUMBA:
    knn_exact = knn_exact_nb
    build_kdtree = build_kdtree_nb
    kdforest_search = kdforest_search_nb
    refine_knn = refine_knn_nb
    spmm = spmm_nb
    spmm_t = spmm_t_nb
    segment_softmax = segment_softmax_nb
    segment_softmax_grad = segment_softmax_grad_nb
    edge_dot = edge_dot_nb
else:
    knn_exact = knn_exact_np
    build_kdtree = build_kdtree_np
    kdforest_search = kdforest_search_np
    refine_knn = refine_knn_np
    spmm = spmm_np
    spmm_t = spmm_t_np
    segment_softmax = segment_softmax_np
    segment_softmax_grad = segment_softmax_grad_np
    edge_dot = edge_dot_np
