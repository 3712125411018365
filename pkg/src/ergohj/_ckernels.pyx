# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled graph kernels.

Every function here has a pure-Python twin in :mod:`ergohj._pykernels` with the
same signature and the same results; :mod:`ergohj._backend` picks one at import.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY, isfinite
from libc.stdlib cimport malloc, free

cnp.import_array()

ctypedef cnp.int64_t idx_t


def bellman_ford(const idx_t[::1] indptr, const idx_t[::1] indices,
                 const double[::1] weights, const double[::1] dist0,
                 double eps=1e-13):
    """FIFO Bellman-Ford from the finite entries of ``dist0``.

    Returns ``(dist, pred, cyc)`` where ``cyc`` is -1 on convergence, else a
    node lying on a cycle of the predecessor graph (a negative cycle).
    """
    cdef Py_ssize_t n = indptr.shape[0] - 1
    dist_arr = np.array(dist0, dtype=np.float64, copy=True)
    pred_arr = np.full(n, -1, dtype=np.int64)
    cdef double[::1] dist = dist_arr
    cdef idx_t[::1] pred = pred_arr
    cdef idx_t[::1] stamp = np.full(n, -1, dtype=np.int64)
    cdef char[::1] queued = np.zeros(n, dtype=np.int8)
    cdef idx_t[::1] cur = np.empty(n, dtype=np.int64)
    cdef idx_t[::1] nxt = np.empty(n, dtype=np.int64)
    cdef Py_ssize_t ncur = 0, nnxt = 0, i, k, rnd = 0
    cdef idx_t u, v, x, walk = 0, round_base
    cdef double nd
    cdef idx_t cyc = -1

    with nogil:
        for i in range(n):
            if isfinite(dist[i]):
                cur[ncur] = i
                ncur += 1
                queued[i] = 1
        while ncur > 0:
            rnd += 1
            nnxt = 0
            for i in range(ncur):
                u = cur[i]
                queued[u] = 0
            for i in range(ncur):
                u = cur[i]
                for k in range(indptr[u], indptr[u + 1]):
                    v = indices[k]
                    nd = dist[u] + weights[k]
                    if nd < dist[v] - eps:
                        dist[v] = nd
                        pred[v] = u
                        if not queued[v]:
                            queued[v] = 1
                            nxt[nnxt] = v
                            nnxt += 1
            # predecessor-graph cycle scan over the nodes touched this round
            round_base = walk
            for i in range(nnxt):
                walk += 1
                x = nxt[i]
                while x != -1:
                    if stamp[x] == walk:
                        cyc = x
                        break
                    if stamp[x] > round_base:
                        break
                    stamp[x] = walk
                    x = pred[x]
                if cyc != -1:
                    break
            if cyc != -1:
                break
            if rnd > n and nnxt > 0:
                x = nxt[0]
                for i in range(n):
                    if x == -1:
                        break
                    x = pred[x]
                cyc = x
                break
            for i in range(nnxt):
                cur[i] = nxt[i]
            ncur = nnxt
    return dist_arr, pred_arr, int(cyc)


cdef inline void _heap_push(double* hk, idx_t* hv, Py_ssize_t* size,
                            double key, idx_t val) noexcept nogil:
    cdef Py_ssize_t i = size[0]
    cdef Py_ssize_t parent
    size[0] += 1
    while i > 0:
        parent = (i - 1) >> 1
        if hk[parent] <= key:
            break
        hk[i] = hk[parent]
        hv[i] = hv[parent]
        i = parent
    hk[i] = key
    hv[i] = val


cdef inline void _heap_pop(double* hk, idx_t* hv, Py_ssize_t* size) noexcept nogil:
    cdef Py_ssize_t n = size[0] - 1
    cdef double key = hk[n]
    cdef idx_t val = hv[n]
    cdef Py_ssize_t i = 0, c
    size[0] = n
    if n == 0:
        return
    while True:
        c = 2 * i + 1
        if c >= n:
            break
        if c + 1 < n and hk[c + 1] < hk[c]:
            c += 1
        if hk[c] >= key:
            break
        hk[i] = hk[c]
        hv[i] = hv[c]
        i = c
    hk[i] = key
    hv[i] = val


def dijkstra(const idx_t[::1] indptr, const idx_t[::1] indices,
             const double[::1] weights, const double[::1] dist0,
             double limit=INFINITY, idx_t target=-1):
    """Multi-source Dijkstra seeded with ``dist0`` (nonnegative weights).

    Exploration stops once the popped label exceeds ``limit`` or ``target``
    is settled; labels of unsettled nodes are then upper bounds.
    """
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t m = indices.shape[0]
    dist_arr = np.array(dist0, dtype=np.float64, copy=True)
    pred_arr = np.full(n, -1, dtype=np.int64)
    cdef double[::1] dist = dist_arr
    cdef idx_t[::1] pred = pred_arr
    cdef char[::1] done = np.zeros(n, dtype=np.int8)
    cdef Py_ssize_t cap = n + m + 1
    cdef double* hk = <double*> malloc(cap * sizeof(double))
    cdef idx_t* hv = <idx_t*> malloc(cap * sizeof(idx_t))
    cdef Py_ssize_t size = 0, i, k
    cdef idx_t u, v
    cdef double du, nd
    if hk == NULL or hv == NULL:
        free(hk)
        free(hv)
        raise MemoryError()
    with nogil:
        for i in range(n):
            if isfinite(dist[i]):
                _heap_push(hk, hv, &size, dist[i], i)
        while size > 0:
            du = hk[0]
            u = hv[0]
            _heap_pop(hk, hv, &size)
            if done[u] or du > dist[u]:
                continue
            if du > limit:
                break
            done[u] = 1
            if u == target:
                break
            for k in range(indptr[u], indptr[u + 1]):
                v = indices[k]
                if done[v]:
                    continue
                nd = du + weights[k]
                if nd < dist[v]:
                    dist[v] = nd
                    pred[v] = u
                    _heap_push(hk, hv, &size, nd, v)
    free(hk)
    free(hv)
    return dist_arr, pred_arr


def karp_table(const idx_t[::1] in_ptr, const idx_t[::1] in_src,
               const double[::1] in_w):
    """Walk-length table of Karp's algorithm.

    ``D[k, v]`` is the least weight of a ``k``-edge walk ending at ``v`` (any
    start), ``P[k, v]`` its last predecessor. Edges are grouped by head node.
    """
    cdef Py_ssize_t n = in_ptr.shape[0] - 1
    D_arr = np.full((n + 1, n), np.inf)
    P_arr = np.full((n + 1, n), -1, dtype=np.int64)
    cdef double[:, ::1] D = D_arr
    cdef idx_t[:, ::1] P = P_arr
    cdef Py_ssize_t k, v, e
    cdef double best, cand
    cdef idx_t arg
    with nogil:
        for v in range(n):
            D[0, v] = 0.0
        for k in range(1, n + 1):
            for v in range(n):
                best = INFINITY
                arg = -1
                for e in range(in_ptr[v], in_ptr[v + 1]):
                    cand = D[k - 1, in_src[e]] + in_w[e]
                    if cand < best:
                        best = cand
                        arg = in_src[e]
                D[k, v] = best
                P[k, v] = arg
    return D_arr, P_arr
