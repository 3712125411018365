"""Pure-Python graph kernels.

Same signatures and results as the compiled :mod:`ergohj._ckernels`; used when
the extension is unavailable or ``ERGOHJ_PURE_PYTHON=1`` is set.
"""

import heapq
import math

import numpy as np


def bellman_ford(indptr, indices, weights, dist0, eps=1e-13):
    n = len(indptr) - 1
    indptr = indptr.tolist()
    indices = indices.tolist()
    weights = weights.tolist()
    dist = [float(d) for d in dist0]
    pred = [-1] * n
    stamp = [-1] * n
    queued = [False] * n
    cur = [i for i in range(n) if math.isfinite(dist[i])]
    for i in cur:
        queued[i] = True
    walk = 0
    rnd = 0
    cyc = -1
    while cur:
        rnd += 1
        for u in cur:
            queued[u] = False
        nxt = []
        for u in cur:
            du = dist[u]
            for k in range(indptr[u], indptr[u + 1]):
                v = indices[k]
                nd = du + weights[k]
                if nd < dist[v] - eps:
                    dist[v] = nd
                    pred[v] = u
                    if not queued[v]:
                        queued[v] = True
                        nxt.append(v)
            # later nodes in this round read the updated labels, as in C
        round_base = walk
        for start in nxt:
            walk += 1
            x = start
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
        if rnd > n and nxt:
            x = nxt[0]
            for _ in range(n):
                if x == -1:
                    break
                x = pred[x]
            cyc = x
            break
        cur = nxt
    return np.array(dist), np.array(pred, dtype=np.int64), int(cyc)


def dijkstra(indptr, indices, weights, dist0, limit=math.inf, target=-1):
    n = len(indptr) - 1
    indptr = indptr.tolist()
    indices = indices.tolist()
    weights = weights.tolist()
    dist = [float(d) for d in dist0]
    pred = [-1] * n
    done = [False] * n
    heap = [(d, i) for i, d in enumerate(dist) if math.isfinite(d)]
    heapq.heapify(heap)
    while heap:
        du, u = heapq.heappop(heap)
        if done[u] or du > dist[u]:
            continue
        if du > limit:
            break
        done[u] = True
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
                heapq.heappush(heap, (nd, v))
    return np.array(dist), np.array(pred, dtype=np.int64)


def karp_table(in_ptr, in_src, in_w):
    n = len(in_ptr) - 1
    D = np.full((n + 1, n), np.inf)
    P = np.full((n + 1, n), -1, dtype=np.int64)
    D[0] = 0.0
    heads = np.repeat(np.arange(n), np.diff(in_ptr))
    if len(heads) == 0:
        return D, P
    for k in range(1, n + 1):
        cand = D[k - 1, in_src] + in_w
        # first minimum per head, ties broken by edge order like the C loop
        order = np.lexsort((np.arange(len(cand)), cand, heads))
        h_sorted = heads[order]
        first = np.ones(len(order), dtype=bool)
        first[1:] = h_sorted[1:] != h_sorted[:-1]
        sel = order[first]
        D[k, heads[sel]] = cand[sel]
        P[k, heads[sel]] = np.where(np.isfinite(cand[sel]), in_src[sel], -1)
    return D, P
