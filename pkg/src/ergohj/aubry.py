"""Equilibria, the classical Aubry set, reach radii and the random Aubry set.

Loop costs are measured on a product graph ``(node, length layer)``: the
layer counts grid steps travelled, capped at ``J``, so reaching ``(y, J)``
from ``(y, 0)`` means closing a loop of length at least ``J h``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ergohj._backend import kernels
from ergohj.corrector import SubsolutionField, corrector_tol, lax_extension, lax_oleinik_step
from ergohj.env import APSeriesModel, APTerm, EnvPoint
from ergohj.hamiltonian import HamiltonianModel
from ergohj.metricgraph import (
    GraphFactory,
    GridWindow,
    WeightedGraph,
    _reduced,
    reverse_graph,
    shortest_distances,
)

__all__ = [
    "AubrySet",
    "AubryReport",
    "equilibria",
    "classical_aubry",
    "classical_aubry_on_graph",
    "loop_costs",
    "default_aubry_tol",
    "h_t_oracle",
    "reach_radius",
    "reach_radius_field",
    "superlevel_sets",
    "build_vbar",
    "subsolution_ensemble",
    "random_aubry_approx",
    "weakly_strict_check",
    "SENTINEL",
]

SENTINEL = np.inf
WEAKLY_STRICT_MAX_NODES = 400


@dataclass
class AubrySet:
    nodes: np.ndarray
    costs: np.ndarray          # per-node least loop cost (upper bound beyond ``tol``)
    delta: float
    tol: float


@dataclass
class AubryReport:
    equilibria: np.ndarray
    classical_aubry: np.ndarray
    random_aubry_approx: np.ndarray | None
    parameters: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        def lst(a):
            return None if a is None else [int(i) for i in a]
        return {"equilibria": lst(self.equilibria),
                "classical_aubry": lst(self.classical_aubry),
                "random_aubry_approx": lst(self.random_aubry_approx),
                "parameters": self.parameters}


def equilibria(window: GridWindow, model: HamiltonianModel, omega: EnvPoint, c_f: float,
               tol: float = 1e-3) -> np.ndarray:
    """Nodes where ``min_p H`` is within ``tol`` of ``c_f``."""
    m = GraphFactory(window, model, omega).pointwise_min
    return np.nonzero(np.abs(m - c_f) <= tol)[0]


def loop_costs(graph: WeightedGraph, delta: float, limit: float = np.inf,
               nodes=None) -> np.ndarray:
    """Least weight of a closed walk through each node with length ``>= delta``.

    Entries above ``limit`` are upper bounds (the search is pruned there).
    """
    h = graph.window.h
    J = max(1, math.ceil(delta / h - 1e-9))
    steps = np.maximum(1, np.floor(graph.length / h + 1e-9).astype(np.int64))
    L = J + 1
    n = graph.n
    phi, rw = _reduced(graph)
    # product edges (u, l) -> (v, min(J, l + k)), sorted by product source
    layers = np.arange(L)
    ps = (graph.src[None, :] * L + layers[:, None]).ravel()
    pd = (graph.dst[None, :] * L + np.minimum(J, layers[:, None] + steps[None, :])).ravel()
    pw = np.broadcast_to(rw, (L, graph.m)).ravel()
    order = np.argsort(ps, kind="stable")
    ps, pd, pw = ps[order], np.ascontiguousarray(pd[order]), np.ascontiguousarray(pw[order])
    indptr = np.zeros(n * L + 1, dtype=np.int64)
    np.cumsum(np.bincount(ps, minlength=n * L), out=indptr[1:])
    todo = np.arange(n) if nodes is None else np.atleast_1d(np.asarray(nodes, dtype=np.int64))
    out = np.full(n, np.inf)
    dist0 = np.full(n * L, np.inf)
    for y in todo:
        dist0[y * L] = 0.0
        d, _ = kernels.dijkstra(indptr, pd, pw, dist0, limit, int(y * L + J))
        dist0[y * L] = np.inf
        out[y] = d[y * L + J]
    return out


def default_aubry_tol(graph: WeightedGraph, delta: float) -> float:
    """``delta`` times the largest change of the per-length node cost across an edge.

    The per-length cost of a node is its cheapest out-edge weight per unit
    length. Loops around a smooth zero of the metric keep a residual cost of
    this order after discretization.
    """
    if graph.m == 0:
        return 0.0
    per = graph.weight / graph.length
    s = np.full(graph.n, np.inf)
    np.minimum.at(s, graph.src, per)
    ok = np.isfinite(s[graph.src]) & np.isfinite(s[graph.dst])
    return float(delta * np.max(np.abs(s[graph.src] - s[graph.dst])[ok], initial=0.0))


def classical_aubry_on_graph(graph: WeightedGraph, delta: float | None = None,
                             tol: float | None = None) -> AubrySet:
    """Nodes carrying loops of length ``>= delta`` and cost ``<= tol``."""
    h = graph.window.h
    delta = 3.0 * h * graph.window.stencil_radius if delta is None else delta
    tol = default_aubry_tol(graph, delta) if tol is None else tol
    if np.any(~graph.feasible):
        costs = np.full(graph.n, np.inf)
        ok = graph.feasible
        costs[ok] = loop_costs(graph, delta, tol, np.nonzero(ok)[0])[ok]
    else:
        costs = loop_costs(graph, delta, tol)
    return AubrySet(np.nonzero(costs <= tol)[0], costs, delta, tol)


def classical_aubry(window: GridWindow, model: HamiltonianModel, omega: EnvPoint, c_f: float,
                    delta: float | None = None, tol: float | None = None) -> AubrySet:
    return classical_aubry_on_graph(GraphFactory(window, model, omega).graph(c_f), delta, tol)


def h_t_oracle(window: GridWindow, model: HamiltonianModel, omega: EnvPoint, x: int, y: int,
               t_grid, dt: float, c: float, reach: int = 1) -> np.ndarray:
    """``h_t(x, y)`` along ``t_grid`` by min-plus value iteration in time steps ``dt``."""
    t_grid = np.asarray(t_grid, dtype=float)
    k = np.rint(t_grid / dt).astype(int)
    if np.any(np.abs(k * dt - t_grid) > 1e-9 * max(1.0, float(np.max(t_grid)))):
        raise ValueError("t_grid must be multiples of dt")
    h = np.full(window.n, np.inf)
    h[x] = 0.0
    out = []
    done = 0
    for kk in k:
        while done < kk:
            h = lax_oleinik_step(h, dt, model, omega, c, window, reach)
            done += 1
        out.append(h[y])
    return np.array(out)


def _path_lengths(graph: WeightedGraph) -> np.ndarray:
    return np.ascontiguousarray(graph.length)


def reach_radius(values, graph: WeightedGraph, x: int, R_max: float, tol: float = 1e-9,
                 dist_to_x=None, rho=None) -> float:
    """Largest shell radius ``r <= R_max`` with ``min_{shell} v + d(., x) <= v(x) + tol``.

    Shells are annuli of width ``h`` in the grid path length around ``x``.
    Returns ``SENTINEL`` when the identity holds on the outermost shell and 0
    when it holds on no shell.
    """
    v = np.asarray(values, dtype=float)
    h = graph.window.h
    if dist_to_x is None:
        dist_to_x = shortest_distances(reverse_graph(graph), [x]).values
    if rho is None:
        d0 = np.full(graph.n, np.inf)
        d0[x] = 0.0
        rho, _ = kernels.dijkstra(graph.indptr, graph.dst, _path_lengths(graph), d0,
                                  R_max + h, -1)
    K = int(math.floor(R_max / h + 1e-9))
    shell = np.rint(np.where(np.isfinite(rho), rho, -1.0) / h).astype(np.int64)
    sel = (shell >= 1) & (shell <= K)
    mins = np.full(K + 1, np.inf)
    np.minimum.at(mins, shell[sel], (v + dist_to_x)[sel])
    holds = mins[1:] <= v[x] + tol
    ok_r = h * float(np.nonzero(holds)[0][-1] + 1) if np.any(holds) else 0.0
    holds_last = bool(holds[-1]) if K >= 1 else False
    return SENTINEL if holds_last else ok_r


def reach_radius_field(fields, graph: WeightedGraph, nodes, R_max: float,
                       tol: float = 1e-9) -> np.ndarray:
    """Reach radii of several fields at ``nodes``; distances are shared."""
    fields = [np.asarray(f, dtype=float) for f in fields]
    rg = reverse_graph(graph)
    h = graph.window.h
    out = np.zeros((len(fields), len(nodes)))
    for j, x in enumerate(nodes):
        d_to = shortest_distances(rg, [int(x)]).values
        d0 = np.full(graph.n, np.inf)
        d0[x] = 0.0
        rho, _ = kernels.dijkstra(graph.indptr, graph.dst, _path_lengths(graph), d0,
                                  R_max + h, -1)
        for i, f in enumerate(fields):
            out[i, j] = reach_radius(f, graph, int(x), R_max, tol, d_to, rho)
    return out


def superlevel_sets(r, alphas) -> list[np.ndarray]:
    """Node sets ``{r >= alpha}`` for each ``alpha``."""
    r = np.asarray(r, dtype=float)
    return [np.nonzero(r >= a)[0] for a in alphas]


def build_vbar(fields, anchor: int, weights=None) -> np.ndarray:
    """Convex combination of fields renormalized to vanish at ``anchor``."""
    fields = [np.asarray(f, dtype=float) for f in fields]
    if not fields:
        raise ValueError("need at least one field")
    if weights is None:
        weights = 0.5 ** np.arange(1, len(fields) + 1)
    weights = np.asarray(weights, dtype=float)
    if np.any(weights <= 0):
        raise ValueError("weights must be positive")
    weights = weights / weights.sum()
    return sum(w * (f - f[anchor]) for w, f in zip(weights, fields))


def _random_ap(space, rng, terms: int = 3) -> APSeriesModel:
    idx = rng.integers(0, space.dim, size=terms)
    amp = rng.normal(size=terms)
    ph = rng.random(terms)
    return APSeriesModel(space, tuple(APTerm(float(a), int(j), float(p))
                                      for a, j, p in zip(amp, idx, ph)))


def subsolution_ensemble(graph: WeightedGraph, model: HamiltonianModel, omega: EnvPoint,
                         m: int, seed: int = 0, anchor: int = 0) -> list[np.ndarray]:
    """Lax extensions from random stationary threshold sets, then ``vbar``.

    Each member takes a random almost-periodic function ``F`` on the model's
    torus, the source set ``{F >= half its sup bound}`` and a random
    almost-periodic trace. The last entry is their ``vbar``.
    """
    space = model.potential.space if model.potential is not None else None
    if space is None:
        raise ValueError("the ensemble needs a model with a torus environment")
    rng = np.random.default_rng(seed)
    pts = graph.window.points
    out = []
    for _ in range(m):
        F = _random_ap(space, rng)
        G = _random_ap(space, rng)
        fv = F(pts, omega)
        src = np.nonzero(fv >= 0.5 * F.bound)[0]
        if len(src) == 0:
            src = np.array([int(np.argmax(fv))])
        trace = 0.1 * graph.window.h * G(pts[src], omega)
        out.append(lax_extension(src, trace, graph=graph).values)
    out.append(build_vbar(out, anchor))
    return out


def _lift_index(window: GridWindow, K: int) -> np.ndarray:
    """Index in ``window.unrolled(K)`` of each cell node's copy in the middle period."""
    big = window.unrolled(K)
    mid = window.multi_index + (K // 2) * window.shape
    return np.ravel_multi_index(tuple(mid.T), tuple(big.shape))


def random_aubry_approx(window: GridWindow, model: HamiltonianModel, omega: EnvPoint,
                        c: float, m: int = 3, R_max: float | None = None,
                        tol: float | None = None, seed: int = 0, reverse: bool = False,
                        return_fields: bool = False):
    """Approximate random Aubry set at level ``c``.

    A node ``x`` is kept when the Lax extension from ``x`` alone is stationary
    at ``x`` (a loop through ``x`` of cost ``<= tol``), or when every
    ensemble field has reach radius ``SENTINEL`` at ``x``. Periodic cells are
    lifted to three periods and ``R_max`` defaults to one period there.
    """
    factory = GraphFactory(window, model, omega)
    g = factory.graph(c)
    if reverse:
        g = reverse_graph(g)
    tol = corrector_tol(g) if tol is None else tol
    loops = loop_costs(g, window.h, tol)
    stationary_at_x = loops <= tol
    fields = subsolution_ensemble(g, model, omega, m, seed)
    if window.periodic:
        K = 3
        lift = window.lift_map(K)
        big = GraphFactory(window.unrolled(K), model, omega).graph(c)
        if reverse:
            big = reverse_graph(big)
        lf = [f[lift] for f in fields]
        x_big = _lift_index(window, K)
        R = float(np.min(np.asarray(window.upper) - np.asarray(window.lower))) \
            if R_max is None else R_max
        cand = np.nonzero(~stationary_at_x)[0]
        r = np.zeros((len(fields), window.n))
        r[:, cand] = reach_radius_field(lf, big, x_big[cand], R)
    else:
        R = 0.5 * float(np.min(np.asarray(window.upper) - np.asarray(window.lower))) \
            if R_max is None else R_max
        cand = np.nonzero(~stationary_at_x)[0]
        r = np.zeros((len(fields), window.n))
        r[:, cand] = reach_radius_field(fields, g, cand, R)
    r[:, stationary_at_x] = SENTINEL
    keep = stationary_at_x | np.all(np.isinf(r), axis=0)
    nodes = np.nonzero(keep)[0]
    if return_fields:
        return nodes, fields, r
    return nodes


@dataclass
class StrictReport:
    pairs: list[tuple[int, int]]
    margin: float

    @property
    def ok(self) -> bool:
        return not self.pairs


def weakly_strict_check(values, graph: WeightedGraph, region, margin: float) -> StrictReport:
    """Pairs ``x != y`` in ``region`` with ``v(x) - v(y) >= d(y, x) - margin``."""
    region = np.atleast_1d(np.asarray(region, dtype=np.int64))
    if len(region) > WEAKLY_STRICT_MAX_NODES:
        raise ValueError(f"region has {len(region)} nodes; limit is {WEAKLY_STRICT_MAX_NODES}")
    v = np.asarray(values, dtype=float)
    pairs = []
    for y in region:
        d = shortest_distances(graph, [int(y)]).values
        bad = (v[region] - v[y] >= d[region] - margin) & (region != y)
        pairs.extend((int(x), int(y)) for x in region[bad])
    return StrictReport(sorted(pairs), margin)
