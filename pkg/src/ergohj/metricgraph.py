"""Grid-graph discretization of the intrinsic semidistance.

A window of R^N (free box or periodic cell) becomes a directed graph on its
grid nodes. The edge ``u -> v`` carries the trapezoid approximation
``(sigma_a(u, v - u) + sigma_a(v, v - u)) / 2`` of the support-function line
integral, so shortest paths approximate ``S_a``. Edges touching a node whose
sublevel is empty are dropped.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from ergohj._backend import kernels
from ergohj.env import EnvPoint
from ergohj.hamiltonian import HamiltonianModel, sublevel_support

__all__ = [
    "GridWindow",
    "WeightedGraph",
    "MetricField",
    "GraphFactory",
    "NegativeCycle",
    "NoCycle",
    "build_graph",
    "shortest_distances",
    "detect_negative_cycle",
    "min_cycle_mean",
    "reverse_graph",
]

STENCILS = ("axis", "axis+diagonal", "16")
_CYCLE_TOL = 1e-12
_KARP_MAX_NODES = 3000


class NegativeCycle(RuntimeError):
    """Raised when a graph has a cycle of negative total weight."""

    def __init__(self, cycle, weight):
        super().__init__(f"negative cycle of weight {weight:.3e} through {len(cycle)} nodes")
        self.cycle = list(cycle)
        self.weight = float(weight)


class NoCycle(ValueError):
    """Raised when a graph has no directed cycle."""


def _offsets(dim: int, stencil: str) -> np.ndarray:
    if stencil not in STENCILS:
        raise ValueError(f"unknown stencil {stencil!r}")
    if dim == 1:
        return np.array([[1], [-1]])
    offs = [(1, 0), (-1, 0), (0, 1), (0, -1)]
    if stencil in ("axis+diagonal", "16"):
        offs += [(1, 1), (1, -1), (-1, 1), (-1, -1)]
    if stencil == "16":
        offs += [(1, 2), (2, 1), (-1, 2), (-2, 1), (1, -2), (2, -1), (-1, -2), (-2, -1)]
    return np.array(offs)


@dataclass(frozen=True)
class GridWindow:
    """Uniform grid on a box ``[lower, upper]`` (free) or a periodic cell.

    Periodic windows have ``(upper - lower) / h`` nodes per axis and wrap
    around; free windows include both end points and have no wraparound.
    """

    dim: int
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    h: float
    periodic: bool = False
    stencil: str = "axis+diagonal"

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError("only N = 1, 2 are supported")
        if not self.h > 0:
            raise ValueError("spacing h must be positive")
        if len(self.lower) != self.dim or len(self.upper) != self.dim:
            raise ValueError("window bounds must have N entries")
        _offsets(self.dim, self.stencil)
        for lo, hi in zip(self.lower, self.upper):
            cells = (hi - lo) / self.h
            if abs(cells - round(cells)) > 1e-9 * max(1.0, cells):
                raise ValueError("window extent must be an integer multiple of h")
        if np.any(self.shape < 2):
            raise ValueError("window needs at least 2 nodes per axis")

    @classmethod
    def free(cls, R: float, h: float, dim: int = 1, stencil: str = "axis+diagonal",
             center=None) -> "GridWindow":
        c = np.zeros(dim) if center is None else np.atleast_1d(np.asarray(center, float))
        return cls(dim, tuple(c - R), tuple(c + R), h, False, stencil)

    @classmethod
    def cell(cls, h: float, dim: int = 1, stencil: str = "axis+diagonal",
             period: float = 1.0) -> "GridWindow":
        return cls(dim, tuple([0.0] * dim), tuple([period] * dim), h, True, stencil)

    @cached_property
    def shape(self) -> np.ndarray:
        cells = np.rint((np.asarray(self.upper) - np.asarray(self.lower)) / self.h).astype(int)
        return cells if self.periodic else cells + 1

    @property
    def n(self) -> int:
        return int(np.prod(self.shape))

    @property
    def stencil_radius(self) -> int:
        return 2 if (self.stencil == "16" and self.dim == 2) else 1

    @cached_property
    def offsets(self) -> np.ndarray:
        return _offsets(self.dim, self.stencil)

    @cached_property
    def multi_index(self) -> np.ndarray:
        """``(n, N)`` integer grid coordinates in row-major order."""
        grids = np.meshgrid(*[np.arange(s) for s in self.shape], indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    @cached_property
    def points(self) -> np.ndarray:
        return np.asarray(self.lower) + self.h * self.multi_index

    def index_of(self, x) -> int:
        """Row-major index of the node nearest to ``x``."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        idx = np.rint((x - np.asarray(self.lower)) / self.h).astype(int)
        if self.periodic:
            idx = np.mod(idx, self.shape)
        elif np.any(idx < 0) or np.any(idx >= self.shape):
            raise ValueError(f"point {x.tolist()} lies outside the window")
        return int(np.ravel_multi_index(tuple(idx), tuple(self.shape)))

    def boundary_mask(self) -> np.ndarray:
        """Nodes on the outer face of a free window (none for periodic cells)."""
        if self.periodic:
            return np.zeros(self.n, dtype=bool)
        mi = self.multi_index
        return np.any((mi == 0) | (mi == self.shape - 1), axis=1)

    @cached_property
    def topology(self):
        """Edge arrays ``(src, dst, offset)`` sorted by source then target."""
        mi = self.multi_index
        src, dst, off = [], [], []
        for k, o in enumerate(self.offsets):
            tgt = mi + o
            if self.periodic:
                tgt = np.mod(tgt, self.shape)
                ok = np.ones(self.n, dtype=bool)
            else:
                ok = np.all((tgt >= 0) & (tgt < self.shape), axis=1)
            s = np.nonzero(ok)[0]
            src.append(s)
            dst.append(np.ravel_multi_index(tuple(tgt[ok].T), tuple(self.shape)))
            off.append(np.full(len(s), k))
        src = np.concatenate(src)
        dst = np.concatenate(dst)
        off = np.concatenate(off)
        order = np.lexsort((dst, src))
        return src[order], dst[order], off[order]

    def shifted(self, z) -> "GridWindow":
        z = np.atleast_1d(np.asarray(z, dtype=float))
        return GridWindow(self.dim, tuple(np.asarray(self.lower) + z),
                          tuple(np.asarray(self.upper) + z), self.h, self.periodic, self.stencil)

    def unrolled(self, K: int = 3) -> "GridWindow":
        """Free window covering ``K`` periods of a periodic cell per axis."""
        if not self.periodic:
            raise ValueError("only periodic windows can be unrolled")
        lo = np.asarray(self.lower)
        L = np.asarray(self.upper) - lo
        return GridWindow(self.dim, tuple(lo), tuple(lo + K * L - self.h), self.h, False,
                          self.stencil)

    def lift_map(self, K: int = 3) -> np.ndarray:
        """Cell node index of every node of ``unrolled(K)``."""
        big = self.unrolled(K)
        mi = np.mod(big.multi_index, self.shape)
        return np.ravel_multi_index(tuple(mi.T), tuple(self.shape))

    def to_dict(self) -> dict:
        return {"dim": self.dim, "lower": list(self.lower), "upper": list(self.upper),
                "h": self.h, "periodic": self.periodic, "stencil": self.stencil}

    @classmethod
    def from_dict(cls, d: dict) -> "GridWindow":
        return cls(int(d["dim"]), tuple(d["lower"]), tuple(d["upper"]), float(d["h"]),
                   bool(d.get("periodic", False)), d.get("stencil", "axis+diagonal"))


@dataclass(eq=False)
class WeightedGraph:
    """Directed grid graph at level ``a`` with CSR adjacency.

    ``disp`` holds the displacement ``v - u`` of each edge (unwrapped on
    periodic cells) and ``P`` the momentum shift the weights include.
    """

    window: GridWindow
    level: float
    src: np.ndarray
    dst: np.ndarray
    weight: np.ndarray
    disp: np.ndarray
    P: np.ndarray
    feasible: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        order = np.lexsort((self.dst, self.src))
        if np.any(order != np.arange(len(order))):
            for name in ("src", "dst", "weight", "disp"):
                setattr(self, name, getattr(self, name)[order])
        self.src = np.ascontiguousarray(self.src, dtype=np.int64)
        self.dst = np.ascontiguousarray(self.dst, dtype=np.int64)
        self.weight = np.ascontiguousarray(self.weight, dtype=np.float64)
        self.indptr = np.zeros(self.n + 1, dtype=np.int64)
        np.cumsum(np.bincount(self.src, minlength=self.n), out=self.indptr[1:])

    @property
    def n(self) -> int:
        return self.window.n

    @property
    def m(self) -> int:
        return len(self.src)

    @property
    def length(self) -> np.ndarray:
        return np.linalg.norm(self.disp, axis=1)

    def edge_index(self, u: int, v: int) -> int:
        lo, hi = self.indptr[u], self.indptr[u + 1]
        k = lo + int(np.searchsorted(self.dst[lo:hi], v))
        if k >= hi or self.dst[k] != v:
            raise KeyError(f"no edge {u} -> {v}")
        return k

    def edge_weight(self, u: int, v: int) -> float:
        return float(self.weight[self.edge_index(u, v)])

    @cached_property
    def in_csr(self):
        """Edges grouped by target: ``(in_ptr, in_src, in_w, edge_ids)``."""
        order = np.lexsort((self.src, self.dst))
        ptr = np.zeros(self.n + 1, dtype=np.int64)
        np.cumsum(np.bincount(self.dst, minlength=self.n), out=ptr[1:])
        return (ptr, np.ascontiguousarray(self.src[order]),
                np.ascontiguousarray(self.weight[order]), order)

    def to_edge_list(self) -> str:
        buf = io.StringIO()
        for u, v, w in zip(self.src, self.dst, self.weight):
            buf.write(f"{u} {v} {w:.17g}\n")
        return buf.getvalue()


@dataclass
class MetricField:
    """Distances from a weighted source set, with the shortest-path tree."""

    graph: WeightedGraph
    values: np.ndarray
    pred: np.ndarray
    sources: np.ndarray
    offsets: np.ndarray

    def path_to(self, x: int) -> list[int]:
        """Node sequence from the optimal source to ``x``."""
        path = [int(x)]
        seen = {int(x)}
        while self.pred[path[-1]] != -1:
            nxt = int(self.pred[path[-1]])
            if nxt in seen:
                break
            seen.add(nxt)
            path.append(nxt)
        return path[::-1]

    def to_csv(self) -> str:
        pts = self.graph.window.points
        cols = ",".join(f"x{i + 1}" for i in range(pts.shape[1]))
        lines = [f"node,{cols},value"]
        for i, (p, v) in enumerate(zip(pts, self.values)):
            lines.append(f"{i}," + ",".join(f"{c:.10g}" for c in p) + f",{v:.17g}")
        return "\n".join(lines) + "\n"


class GraphFactory:
    """Builds graphs of one ``(window, model, omega)`` at any level and shift.

    Node data that does not depend on the level is computed once.
    """

    def __init__(self, window: GridWindow, model: HamiltonianModel, omega: EnvPoint):
        if model.dim != window.dim:
            raise ValueError("model and window dimensions differ")
        self.window = window
        self.model = model
        self.omega = omega
        src, dst, off = window.topology
        self._src, self._dst = src, dst
        self._disp = window.h * window.offsets[off].astype(float)
        self._len = np.linalg.norm(self._disp, axis=1)
        self._V = model.potential(window.points, omega) if model.is_eikonal else None

    @cached_property
    def pointwise_min(self) -> np.ndarray:
        """``min_p H(x, p, omega)`` at every node."""
        if self._V is not None:
            return self._V
        from ergohj.hamiltonian import min_over_p_batch
        return min_over_p_batch(self.model, self.window.points, self.omega)[1]

    def graph(self, a: float, P=None) -> WeightedGraph:
        N = self.window.dim
        P = np.zeros(N) if P is None else np.atleast_1d(np.asarray(P, dtype=float))
        if self.model.is_eikonal and self.model.analytic_sigma:
            feasible = self._V <= a
            rad = np.sqrt(np.where(feasible, a - self._V, 0.0))
            keep = feasible[self._src] & feasible[self._dst]
            s, d = self._src[keep], self._dst[keep]
            disp = self._disp[keep]
            w = 0.5 * (rad[s] + rad[d]) * self._len[keep] - disp @ (self.model.shift_vec + P)
        else:
            feasible, fn = sublevel_support(self.model, self.window.points, self.omega, a)
            keep = feasible[self._src] & feasible[self._dst]
            s, d = self._src[keep], self._dst[keep]
            disp = self._disp[keep]
            w = 0.5 * (fn(s, disp) + fn(d, disp)) - disp @ P
        return WeightedGraph(self.window, float(a), s, d, w, disp, P, feasible)


def build_graph(window: GridWindow, model: HamiltonianModel, omega: EnvPoint, a: float,
                P=None) -> WeightedGraph:
    """Graph of ``window`` at level ``a``; ``P`` subtracts ``<P, v - u>`` per edge."""
    return GraphFactory(window, model, omega).graph(a, P)


def _cycle_from(pred: np.ndarray, start: int) -> list[int]:
    cyc = [start]
    x = int(pred[start])
    while x != start:
        cyc.append(x)
        x = int(pred[x])
    return cyc[::-1]


def _cycle_weight(g: WeightedGraph, cyc: list[int]) -> float:
    return float(sum(g.edge_weight(cyc[i], cyc[(i + 1) % len(cyc)]) for i in range(len(cyc))))


def _potential(g: WeightedGraph):
    """Feasible potential from a virtual zero source, or the negative cycle found."""
    if "potential" not in g._cache:
        dist, pred, cyc = kernels.bellman_ford(g.indptr, g.dst, g.weight, np.zeros(g.n))
        if cyc != -1:
            cycle = _cycle_from(pred, cyc)
            g._cache["potential"] = (None, cycle, _cycle_weight(g, cycle))
        else:
            g._cache["potential"] = (dist, None, 0.0)
    return g._cache["potential"]


def detect_negative_cycle(g: WeightedGraph):
    """A cycle (node list) of total weight below ``-1e-12``, or ``None``."""
    _, cycle, w = _potential(g)
    if cycle is None or w >= -_CYCLE_TOL:
        return None
    return cycle


def _reduced(g: WeightedGraph):
    if "reduced" not in g._cache:
        phi, cycle, w = _potential(g)
        if phi is None:
            raise NegativeCycle(cycle, w)
        rw = g.weight + phi[g.src] - phi[g.dst]
        g._cache["reduced"] = (phi, np.maximum(rw, 0.0))
    return g._cache["reduced"]


def shortest_distances(g: WeightedGraph, sources, offsets=None, limit: float = np.inf,
                       target: int = -1) -> MetricField:
    """Multi-source distances ``min_s offset_s + d(s, x)``.

    ``sources`` is a node array (offsets default to 0) or a list of
    ``(node, offset)`` pairs. Weights are reweighted with a Bellman-Ford
    potential computed once per graph, then Dijkstra runs on the result.
    """
    if offsets is None:
        items = list(sources)
        if items and isinstance(items[0], (tuple, list)):
            src = np.array([int(s) for s, _ in items], dtype=np.int64)
            off = np.array([float(o) for _, o in items])
        else:
            src = np.asarray(items, dtype=np.int64)
            off = np.zeros(len(src))
    else:
        src = np.asarray(sources, dtype=np.int64)
        off = np.broadcast_to(np.asarray(offsets, dtype=float), src.shape).copy()
    if len(src) == 0:
        raise ValueError("empty source set")
    phi, rw = _reduced(g)
    dist0 = np.full(g.n, np.inf)
    np.minimum.at(dist0, src, off - phi[src])
    dist, pred = kernels.dijkstra(g.indptr, g.dst, rw, dist0, limit, target)
    return MetricField(g, dist + phi, pred, src, off)


def min_cycle_mean(g: WeightedGraph):
    """Minimum mean edge weight over directed cycles (Karp) and a witness."""
    n = g.n
    if n > _KARP_MAX_NODES:
        raise MemoryError(f"Karp table for {n} nodes exceeds the memory guard")
    ptr, in_src, in_w, _ = g.in_csr
    D, Pm = kernels.karp_table(ptr, in_src, in_w)
    fin = np.isfinite(D[n])
    if not np.any(fin):
        raise NoCycle("graph has no directed cycle")
    k = np.arange(n)[:, None]
    with np.errstate(invalid="ignore"):
        ratios = (D[n][None, :] - D[:n]) / (n - k)
    ratios = np.where(np.isfinite(D[:n]), ratios, -np.inf)
    per_node = np.where(fin, ratios.max(axis=0), np.inf)
    v = int(np.argmin(per_node))
    best = float(per_node[v])
    walk = [v]
    for layer in range(n, 0, -1):
        walk.append(int(Pm[layer, walk[-1]]))
    walk = walk[::-1]
    # the n-edge walk splits into cycles; keep the one with the smallest mean
    witness, wmean = None, np.inf
    last = {}
    for i, x in enumerate(walk):
        if x in last:
            cyc = walk[last[x]:i]
            cm = _cycle_weight(g, cyc) / len(cyc)
            if cm < wmean - 1e-15:
                witness, wmean = cyc, cm
        last[x] = i
    return best, witness


def reverse_graph(g: WeightedGraph) -> WeightedGraph:
    """Edge ``(u, v, w)`` becomes ``(v, u, w)``: distances of the reversed Hamiltonian."""
    return WeightedGraph(g.window, g.level, g.dst.copy(), g.src.copy(), g.weight.copy(),
                         -g.disp, -g.P, g.feasible)
