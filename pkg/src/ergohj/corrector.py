"""Lax extensions, Bellman-residual verification and calibrated curves.

A grid field ``v`` is a discrete subsolution at level ``a`` when
``v(x) - v(u) <= w(u, x)`` on every edge, and a discrete corrector when in
addition every node is attained by some in-edge:
``min_u v(u) + w(u, x) = v(x)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from ergohj.env import EnvPoint
from ergohj.hamiltonian import HamiltonianModel, legendre
from ergohj.metricgraph import (
    GraphFactory,
    GridWindow,
    WeightedGraph,
    reverse_graph,
    shortest_distances,
)

__all__ = [
    "SubsolutionField",
    "FieldReport",
    "ChainReport",
    "CalibratedCurve",
    "DirichletResult",
    "IncompatibleData",
    "AubryDataRequired",
    "NotInAubrySet",
    "corrector_tol",
    "lax_extension",
    "verify_field",
    "dirichlet_solve",
    "calibration_chain",
    "lax_oleinik_step",
    "calibrated_curve",
]


class IncompatibleData(ValueError):
    def __init__(self, x, y, excess):
        super().__init__(f"boundary data violate w0({x}) - w0({y}) <= d({y}, {x}) by {excess:.3e}")
        self.pair = (int(x), int(y))
        self.excess = float(excess)


class AubryDataRequired(ValueError):
    """Dirichlet problem at the free critical level touching the Aubry set."""


class NotInAubrySet(ValueError):
    pass


def corrector_tol(graph: WeightedGraph) -> float:
    """Default residual tolerance ``5 * max|w| * h``."""
    wmax = float(np.max(np.abs(graph.weight))) if graph.m else 0.0
    return 5.0 * wmax * graph.window.h


@dataclass(eq=False)
class SubsolutionField:
    """Grid values ``v`` on the nodes of ``graph`` (at the graph's level)."""

    graph: WeightedGraph
    values: np.ndarray

    @property
    def level(self) -> float:
        return self.graph.level

    @cached_property
    def excess(self) -> np.ndarray:
        """Per-edge ``v(dst) - v(src) - w``; positive entries break subsolution."""
        g = self.graph
        with np.errstate(invalid="ignore"):
            exc = self.values[g.dst] - self.values[g.src] - g.weight
        return np.where(np.isnan(exc), np.inf, exc)

    @cached_property
    def residual(self) -> np.ndarray:
        """Per-node ``min_u [v(u) + w(u, x)] - v(x)`` (``inf`` without in-edges)."""
        g = self.graph
        best = np.full(g.n, np.inf)
        np.minimum.at(best, g.dst, self.values[g.src] + g.weight)
        with np.errstate(invalid="ignore"):
            res = best - self.values
        return np.where(np.isnan(res), np.inf, res)


@dataclass
class FieldReport:
    is_subsolution: bool
    is_corrector: bool
    worst_edge: tuple[int, int, float] | None
    worst_node: tuple[int, float] | None
    tol: float
    delta_level: float | None = None

    def to_dict(self) -> dict:
        return {"is_subsolution": self.is_subsolution, "is_corrector": self.is_corrector,
                "worst_edge": self.worst_edge, "worst_node": self.worst_node,
                "tol": self.tol, "delta_level": self.delta_level}


def lax_extension(sources, trace, level: float | None = None, window: GridWindow | None = None,
                  model: HamiltonianModel | None = None, omega: EnvPoint | None = None,
                  graph: WeightedGraph | None = None) -> SubsolutionField:
    """``u(x) = min_{y in C} g(y) + d_a(y, x)``.

    Pass either a prebuilt ``graph`` or ``(level, window, model, omega)``.
    """
    if graph is None:
        graph = GraphFactory(window, model, omega).graph(level)
    src = np.atleast_1d(np.asarray(sources, dtype=np.int64))
    if len(src) == 0:
        raise ValueError("empty source set")
    g = np.broadcast_to(np.asarray(trace, dtype=float), src.shape)
    mf = shortest_distances(graph, src, g)
    return SubsolutionField(graph, mf.values)


def _node_mask(window: GridWindow, interior_only: bool) -> np.ndarray:
    return ~window.boundary_mask() if interior_only else np.ones(window.n, dtype=bool)


def _worst(v: SubsolutionField, check: np.ndarray):
    g = v.graph
    exc = v.excess
    e = int(np.argmax(exc)) if g.m else None
    worst_edge = (int(g.src[e]), int(g.dst[e]), float(exc[e])) if e is not None else None
    res = np.where(check, v.residual, -np.inf)
    x = int(np.argmax(res))
    return worst_edge, (x, float(res[x]))


def verify_field(v: SubsolutionField, tol: float | None = None,
                 factory: GraphFactory | None = None, check_boundary: bool = False
                 ) -> FieldReport:
    """Subsolution and corrector tests by Bellman residuals.

    On free windows the stationarity test skips the outer face of the window
    unless ``check_boundary`` is set. With a ``factory`` the report also holds
    ``delta_level``: the least ``delta`` such that ``v`` is a subsolution at
    level ``a + delta`` and stationary at level ``a - delta``.
    """
    tol = corrector_tol(v.graph) if tol is None else tol
    check = _node_mask(v.graph.window, not check_boundary)
    worst_edge, worst_node = _worst(v, check)
    is_sub = (worst_edge is None or worst_edge[2] <= tol) and bool(np.all(v.graph.feasible))
    is_corr = is_sub and worst_node[1] <= tol
    delta = None
    if factory is not None:
        delta = _delta_level(v, tol, factory, check)
    return FieldReport(bool(is_sub), bool(is_corr), worst_edge, worst_node, tol, delta)


def _delta_level(v: SubsolutionField, tol, factory: GraphFactory, check) -> float:
    a = v.level
    P = v.graph.P

    def ok(d):
        up = SubsolutionField(factory.graph(a + d, P), v.values)
        if np.max(up.excess, initial=-np.inf) > tol:
            return False
        if d > 0 and np.any(factory.pointwise_min[check] > a - d):
            return False
        down = SubsolutionField(factory.graph(a - d, P), v.values)
        return bool(np.all(down.residual[check] <= tol))

    if ok(0.0):
        return 0.0
    # ok is monotone in d up to the point where a checked node turns infeasible
    hi = a - float(np.max(factory.pointwise_min[check], initial=-np.inf))
    if not np.isfinite(hi):
        hi = 1e6
    if hi <= 0 or not ok(hi):
        return float("inf")
    lo = 0.0
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        lo, hi = (lo, mid) if ok(mid) else (mid, hi)
    return hi


@dataclass
class DirichletResult:
    field: SubsolutionField
    domain: np.ndarray           # mask of U plus data nodes
    interior: np.ndarray         # mask of U minus data nodes
    stationary: bool
    max_interior_residual: float


def _restrict(graph: WeightedGraph, mask: np.ndarray) -> WeightedGraph:
    keep = mask[graph.src] & mask[graph.dst]
    return WeightedGraph(graph.window, graph.level, graph.src[keep], graph.dst[keep],
                         graph.weight[keep], graph.disp[keep], graph.P, graph.feasible)


def dirichlet_solve(graph: WeightedGraph, U, data_nodes, data_values, tol: float = 1e-9,
                    c_f: float | None = None, aubry=None) -> DirichletResult:
    """Solve the discrete Dirichlet problem on ``U`` with data on ``data_nodes``.

    Paths are confined to ``U`` and the data nodes. At the free critical level
    (``c_f`` given and equal to the graph level) the Aubry nodes in ``U`` must
    be among the data nodes; ``aubry`` is computed when not supplied.
    """
    n = graph.n
    U = np.asarray(U)
    umask = U if U.dtype == bool else np.isin(np.arange(n), U)
    dn = np.atleast_1d(np.asarray(data_nodes, dtype=np.int64))
    dv = np.broadcast_to(np.asarray(data_values, dtype=float), dn.shape)
    dmask = np.zeros(n, dtype=bool)
    dmask[dn] = True
    if c_f is not None and abs(graph.level - c_f) <= 1e-12 * max(1.0, abs(c_f)):
        if aubry is None:
            from ergohj.aubry import classical_aubry_on_graph
            aubry = classical_aubry_on_graph(graph).nodes
        inside = [int(y) for y in np.atleast_1d(aubry) if umask[y] and not dmask[y]]
        if inside:
            raise AubryDataRequired(
                f"level equals c_f and U meets the Aubry set at nodes {inside}; supply data there")
    domain = umask | dmask
    sub = _restrict(graph, domain)
    # compatibility of the data: w0(x) - w0(y) <= d(y, x)
    for y, wy in zip(dn, dv):
        d = shortest_distances(sub, [int(y)]).values
        exc = dv - wy - d[dn]
        k = int(np.argmax(exc))
        if exc[k] > tol:
            raise IncompatibleData(dn[k], y, exc[k])
    values = shortest_distances(sub, dn, dv).values
    values = np.where(domain, values, np.inf)
    fld = SubsolutionField(sub, values)
    interior = umask & ~dmask
    res = fld.residual[interior]
    worst = float(np.max(np.abs(res))) if res.size else 0.0
    return DirichletResult(fld, domain, interior, worst <= tol, worst)


@dataclass
class ChainReport:
    nodes: list[int]
    terminated_at_window_boundary: bool


def calibration_chain(v: SubsolutionField, y0: int, max_steps: int = 10_000,
                      tol: float | None = None, allowed: np.ndarray | None = None
                      ) -> ChainReport:
    """Follow calibrating predecessors backward from ``y0``.

    A predecessor ``u`` calibrates ``y`` when ``v(y) = v(u) + w(u, y)`` within
    ``tol``; ties go to the lowest index and visited nodes are skipped.
    """
    g = v.graph
    vals = v.values
    if tol is None:
        tol = 1e-10 * max(1.0, float(np.max(np.abs(vals[np.isfinite(vals)]), initial=0.0)))
    ptr, in_src, in_w, _ = g.in_csr
    bnd = g.window.boundary_mask()
    nodes = [int(y0)]
    seen = {int(y0)}
    y = int(y0)
    for _ in range(max_steps):
        if bnd[y]:
            break
        cand = in_src[ptr[y]:ptr[y + 1]]
        gap = np.abs(vals[y] - vals[cand] - in_w[ptr[y]:ptr[y + 1]])
        ok = (gap <= tol) & ~np.isin(cand, list(seen))
        if allowed is not None:
            ok &= allowed[cand]
        if not np.any(ok):
            break
        y = int(np.min(cand[ok]))
        nodes.append(y)
        seen.add(y)
    return ChainReport(nodes, bool(bnd[nodes[-1]]))


def lax_oleinik_step(w, dt: float, model: HamiltonianModel, omega: EnvPoint, c: float,
                     window: GridWindow, reach: int = 1) -> np.ndarray:
    """``w'(x) = min_z w(z) + dt (L(z, (x - z)/dt) + c)`` over ``z`` on stencil rays.

    ``z`` ranges over ``x`` itself and ``x - k o`` for stencil offsets ``o`` and
    ``k = 1..reach``; larger ``reach`` gives more admissible speeds.
    """
    w = np.asarray(w, dtype=float)
    pts = window.points
    mi = window.multi_index
    out = w + dt * (_lagrangian(model, pts, np.zeros_like(pts), omega) + c)
    for o in window.offsets:
        for k in range(1, reach + 1):
            src = mi - k * o
            if window.periodic:
                src = np.mod(src, window.shape)
                ok = np.ones(window.n, dtype=bool)
            else:
                ok = np.all((src >= 0) & (src < window.shape), axis=1)
            if not np.any(ok):
                continue
            zi = np.ravel_multi_index(tuple(src[ok].T), tuple(window.shape))
            q = np.broadcast_to(k * o * window.h / dt, (len(zi), window.dim))
            cand = w[zi] + dt * (_lagrangian(model, pts[zi], q, omega) + c)
            tgt = np.nonzero(ok)[0]
            out[tgt] = np.minimum(out[tgt], cand)
    return out


def _lagrangian(model: HamiltonianModel, X, Q, omega) -> np.ndarray:
    if model.is_eikonal:
        Q = np.asarray(Q, dtype=float)
        return (np.sum(Q * Q, axis=-1) / 4.0 - Q @ model.shift_vec
                - model.potential(X, omega))
    return np.array([legendre(model, x, q, omega) for x, q in zip(X, Q)])


@dataclass
class CalibratedCurve:
    nodes: list[int]
    times: np.ndarray
    actions: np.ndarray            # per segment, sum of edge weights
    distances: np.ndarray          # graph distance between segment endpoints
    points: np.ndarray = field(repr=False, default=None)

    @property
    def total_action(self) -> float:
        return float(np.sum(self.actions))

    def increments(self, values) -> np.ndarray:
        v = np.asarray(values, dtype=float)
        return v[self.nodes[1:]] - v[self.nodes[:-1]]

    def to_csv(self) -> str:
        N = self.points.shape[1]
        head = "t," + ",".join(f"x{i + 1}" for i in range(N)) + ",cumulative_action"
        cum = np.concatenate([[0.0], np.cumsum(self.actions)])
        rows = [f"{t:.10g}," + ",".join(f"{c:.10g}" for c in p) + f",{a:.17g}"
                for t, p, a in zip(self.times, self.points, cum)]
        return "\n".join([head] + rows) + "\n"


def _speed(model: HamiltonianModel, level: float, X, omega) -> np.ndarray:
    if model.is_eikonal:
        return 2.0 * np.sqrt(np.maximum(level - model.potential(X, omega), 0.0))
    return np.ones(len(X))


def calibrated_curve(x: int, u: SubsolutionField, aubry_nodes, model: HamiltonianModel,
                     omega: EnvPoint, max_span: float = 1.0,
                     tol: float | None = None) -> CalibratedCurve:
    """Calibrated curve through ``x`` inside the Aubry approximation.

    The backward branch follows calibrating predecessors of ``u``; the forward
    branch follows those of the reversed-graph Lax extension with trace ``-u``
    on the Aubry nodes. A node where neither branch moves gives the constant
    curve on ``[0, max_span]``.
    """
    g = u.graph
    aub = np.zeros(g.n, dtype=bool)
    aub[np.atleast_1d(np.asarray(aubry_nodes, dtype=np.int64))] = True
    if not aub[x]:
        raise NotInAubrySet(f"node {x} is not in the Aubry approximation")
    steps = max(1, int(round(max_span / g.window.h)))
    back = calibration_chain(u, x, steps, tol, allowed=aub).nodes
    rg = reverse_graph(g)
    src = np.nonzero(aub)[0]
    ucheck = SubsolutionField(rg, shortest_distances(rg, src, -u.values[src]).values)
    fwd = calibration_chain(ucheck, x, steps, tol, allowed=aub).nodes
    nodes = back[::-1] + fwd[1:]
    pts = g.window.points
    if len(nodes) == 1:
        nodes = [x, x]
        times = np.array([0.0, max_span])
        return CalibratedCurve(nodes, times, np.zeros(1), np.zeros(1), pts[nodes])
    acts = np.array([g.edge_weight(a, b) for a, b in zip(nodes[:-1], nodes[1:])])
    dists = np.array([shortest_distances(g, [a], target=b).values[b]
                      for a, b in zip(nodes[:-1], nodes[1:])])
    spd = _speed(model, g.level, pts[nodes], omega)
    seg_len = np.linalg.norm(np.diff(pts[nodes], axis=0), axis=1)
    avg = 0.5 * (spd[:-1] + spd[1:])
    dt = np.where(avg > 0, seg_len / np.where(avg > 0, avg, 1.0), seg_len)
    times = np.concatenate([[0.0], np.cumsum(dt)]) - float(np.sum(dt[:len(back) - 1]))
    return CalibratedCurve(nodes, times, acts, dists, pts[nodes])


def value_iteration(graph: WeightedGraph, data_nodes, data_values, domain=None,
                    max_iter: int = 100_000) -> np.ndarray:
    """Bellman fixed point by plain Jacobi sweeps (reference solver for tests)."""
    n = graph.n
    dom = np.ones(n, dtype=bool) if domain is None else np.asarray(domain, dtype=bool)
    keep = dom[graph.src] & dom[graph.dst]
    s, d, w = graph.src[keep], graph.dst[keep], graph.weight[keep]
    u = np.full(n, np.inf)
    dn = np.asarray(data_nodes, dtype=np.int64)
    fixed = np.zeros(n, dtype=bool)
    fixed[dn] = True
    u[dn] = data_values
    for _ in range(max_iter):
        cand = np.full(n, np.inf)
        np.minimum.at(cand, d, u[s] + w)
        new = np.where(fixed, u, np.minimum(u, cand))
        if np.array_equal(new, u):
            break
        u = new
    return u
