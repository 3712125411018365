"""Graph kernels of both backends against scipy.sparse.csgraph."""

import itertools

import numpy as np
import pytest
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

from ergohj import _pykernels
from ergohj._backend import BACKEND, kernels

try:
    from ergohj import _ckernels
except ImportError:  # extension not built
    _ckernels = None

BACKENDS = [_pykernels] + ([_ckernels] if _ckernels is not None else [])


def random_graph(n, p, seed, lo=0.0, hi=1.0):
    rng = np.random.default_rng(seed)
    pairs = [(u, v) for u, v in itertools.product(range(n), repeat=2) if u != v and rng.random() < p]
    src = np.array([u for u, _ in pairs], dtype=np.int64)
    dst = np.array([v for _, v in pairs], dtype=np.int64)
    w = rng.uniform(lo, hi, len(pairs))
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=n), out=indptr[1:])
    return indptr, src, dst, w


def dense(n, src, dst, w):
    return csr_matrix((w, (src, dst)), shape=(n, n))


def test_backend_flag():
    assert BACKEND in ("compiled", "python")
    assert (kernels is _pykernels) == (BACKEND == "python")


@pytest.mark.parametrize("mod", BACKENDS, ids=lambda m: m.__name__.rsplit(".", 1)[-1])
@pytest.mark.parametrize("seed", range(5))
def test_dijkstra_matches_scipy(mod, seed):
    n = 40
    indptr, src, dst, w = random_graph(n, 0.1, seed)
    d0 = np.full(n, np.inf)
    d0[0] = 0.0
    dist, pred = mod.dijkstra(indptr, dst, w, d0)
    ref = shortest_path(dense(n, src, dst, w), method="D", indices=0)
    assert np.allclose(dist, ref, rtol=0, atol=1e-12, equal_nan=False)
    # tree edges are tight
    for v in np.nonzero(pred >= 0)[0]:
        k = indptr[pred[v]] + np.searchsorted(dst[indptr[pred[v]]:indptr[pred[v] + 1]], v)
        assert dist[v] == pytest.approx(dist[pred[v]] + w[k], abs=1e-12)


@pytest.mark.parametrize("mod", BACKENDS, ids=lambda m: m.__name__.rsplit(".", 1)[-1])
@pytest.mark.parametrize("seed", range(5))
def test_bellman_ford_matches_scipy(mod, seed):
    n = 30
    # negative weights but no negative cycle: potential-shifted nonnegative weights
    indptr, src, dst, w = random_graph(n, 0.15, seed)
    phi = np.random.default_rng(seed + 100).uniform(-2, 2, n)
    w = w + phi[src] - phi[dst]
    d0 = np.full(n, np.inf)
    d0[3] = 0.0
    dist, _, cyc = mod.bellman_ford(indptr, dst, w, d0)
    assert cyc == -1
    ref = shortest_path(dense(n, src, dst, w), method="BF", indices=3)
    assert np.allclose(dist, ref, atol=1e-10)


@pytest.mark.parametrize("mod", BACKENDS, ids=lambda m: m.__name__.rsplit(".", 1)[-1])
def test_bellman_ford_finds_negative_cycle(mod):
    # ring 0 -> 1 -> 2 -> 0 of weight -0.3 plus a tail
    src = np.array([0, 1, 2, 2, 3])
    dst = np.array([1, 2, 0, 3, 4])
    w = np.array([0.1, 0.1, -0.5, 1.0, 1.0])
    indptr = np.array([0, 1, 2, 4, 5, 5])
    _, pred, cyc = mod.bellman_ford(indptr, dst, w, np.zeros(5))
    assert cyc in (0, 1, 2)
    seen, x = [], cyc
    while x not in seen:
        seen.append(x)
        x = int(pred[x])
    assert set(seen[seen.index(x):]) == {0, 1, 2}


@pytest.mark.parametrize("mod", BACKENDS, ids=lambda m: m.__name__.rsplit(".", 1)[-1])
def test_dijkstra_limit_and_target(mod):
    # path 0 - 1 - 2 - 3 with unit weights
    indptr = np.array([0, 1, 2, 3, 3])
    dst = np.array([1, 2, 3])
    w = np.ones(3)
    d0 = np.array([0.0, np.inf, np.inf, np.inf])
    dist, _ = mod.dijkstra(indptr, dst, w, d0, 1.5)
    assert dist[1] == 1.0 and dist[3] == np.inf
    dist, _ = mod.dijkstra(indptr, dst, w, d0, np.inf, 2)
    assert dist[2] == 2.0


def karp_reference(n, src, dst, w):
    """Minimum cycle mean by brute force over simple cycles (small n)."""
    adj = {(u, v): x for u, v, x in zip(src, dst, w)}
    best = np.inf
    for k in range(1, n + 1):
        for cyc in itertools.permutations(range(n), k):
            if cyc[0] != min(cyc):
                continue
            edges = [(cyc[i], cyc[(i + 1) % k]) for i in range(k)]
            if all(e in adj for e in edges):
                best = min(best, sum(adj[e] for e in edges) / k)
    return best


@pytest.mark.parametrize("mod", BACKENDS, ids=lambda m: m.__name__.rsplit(".", 1)[-1])
@pytest.mark.parametrize("seed", range(4))
def test_karp_table_min_mean(mod, seed):
    n = 6
    _, src, dst, w = random_graph(n, 0.4, seed, -1.0, 1.0)
    order = np.lexsort((src, dst))
    in_ptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(dst, minlength=n), out=in_ptr[1:])
    D, _ = mod.karp_table(in_ptr, np.ascontiguousarray(src[order]), np.ascontiguousarray(w[order]))
    ref = karp_reference(n, src, dst, w)
    fin = np.isfinite(D[n])
    if not np.isfinite(ref):
        assert not np.any(fin)
        return
    k = np.arange(n)[:, None]
    with np.errstate(invalid="ignore"):
        r = np.where(np.isfinite(D[:n]), (D[n][None, :] - D[:n]) / (n - k), -np.inf)
    assert float(np.min(np.where(fin, r.max(axis=0), np.inf))) == pytest.approx(ref, abs=1e-12)


@pytest.mark.skipif(_ckernels is None, reason="compiled extension not built")
@pytest.mark.parametrize("seed", range(3))
def test_backends_agree_exactly(seed):
    n = 60
    indptr, src, dst, w = random_graph(n, 0.08, seed)
    d0 = np.full(n, np.inf)
    d0[:3] = [0.0, 0.2, 0.5]
    a = _pykernels.dijkstra(indptr, dst, w, d0)
    b = _ckernels.dijkstra(indptr, dst, w, d0)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
    a = _pykernels.bellman_ford(indptr, dst, w - 0.05, d0)
    b = _ckernels.bellman_ford(indptr, dst, w - 0.05, d0)
    assert a[2] == b[2]
    if a[2] == -1:
        assert np.array_equal(a[0], b[0])
