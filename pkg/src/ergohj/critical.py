"""Critical values and the effective Hamiltonian.

A level ``a`` is *feasible* on a graph when every node has a nonempty sublevel
and no cycle has negative weight; feasibility is monotone in ``a`` and the
critical value is its threshold, found by bisection.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from ergohj.env import EnvPoint
from ergohj.hamiltonian import HamiltonianModel
from ergohj.metricgraph import GraphFactory, GridWindow, detect_negative_cycle

__all__ = [
    "BracketError",
    "LevelSearch",
    "CriticalValues",
    "EffectiveTable",
    "FlatRegion",
    "critical_search",
    "free_critical_value",
    "effective_hamiltonian",
    "stationary_critical_value",
    "effective_table",
    "flat_region",
    "p_grid",
]

LIFT_PERIODS = 3


class BracketError(RuntimeError):
    def __init__(self, lo, hi):
        super().__init__(f"no feasible level found in bracket [{lo}, {hi}]")
        self.lo, self.hi = lo, hi


@dataclass
class LevelSearch:
    """Outcome of a feasibility bisection.

    ``value`` is the smallest level certified feasible; ``lo`` is infeasible
    (with ``cycle`` as witness) unless the bracket's lower end was feasible,
    in which case ``lo == value``.
    """

    value: float
    lo: float
    hi: float
    trace: list[tuple[float, bool]] = field(default_factory=list)
    cycle: list[int] | None = None


def _feasible(factory: GraphFactory, a: float, P):
    if np.any(factory.pointwise_min > a):
        return False, None
    cyc = detect_negative_cycle(factory.graph(a, P))
    return cyc is None, cyc


def critical_search(factory: GraphFactory, tol: float = 1e-3, P=None) -> LevelSearch:
    """Bisection for the smallest feasible level of ``factory``'s graphs."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    N = factory.window.dim
    P = np.zeros(N) if P is None else np.atleast_1d(np.asarray(P, dtype=float))
    lo = float(np.max(factory.pointwise_min))
    trace = []
    ok, cyc = _feasible(factory, lo, P)
    trace.append((lo, ok))
    if ok:
        return LevelSearch(lo, lo, lo, trace)
    hi = float(factory.model.beta(np.array(2.0 * np.linalg.norm(P) + 1.0)))
    hi = max(hi, lo + tol)
    for _ in range(60):
        ok_hi, cyc_hi = _feasible(factory, hi, P)
        trace.append((hi, ok_hi))
        if ok_hi:
            break
        lo, cyc = hi, cyc_hi
        hi = hi + 2.0 * (hi - trace[0][0]) + 1.0
    else:
        raise BracketError(trace[0][0], hi)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        ok, c = _feasible(factory, mid, P)
        trace.append((mid, ok))
        if ok:
            hi = mid
        else:
            lo, cyc = mid, c
    feas = [a for a, f in trace if f]
    infeas = [a for a, f in trace if not f]
    if infeas and feas and max(infeas) >= min(feas):
        raise RuntimeError("feasibility is not monotone in the level")
    return LevelSearch(hi, lo, hi, trace, cyc)


def free_critical_value(window: GridWindow, model: HamiltonianModel, omega: EnvPoint,
                        tol: float = 1e-3, P=None) -> float:
    """Discrete free critical value.

    Periodic cells are unrolled into a free window of several periods, so only
    cycles that close in R^N count; on a cell this equals ``min_P Hbar(P)``.
    """
    w = window.unrolled(LIFT_PERIODS) if window.periodic else window
    return critical_search(GraphFactory(w, model, omega), tol, P).value


def effective_hamiltonian(window: GridWindow, model: HamiltonianModel, omega: EnvPoint,
                          P, tol: float = 1e-3, factory: GraphFactory | None = None) -> float:
    """``Hbar(P)``: critical level of the cell graph with weights ``w - <P, v - u>``."""
    if not window.periodic:
        raise ValueError("the effective Hamiltonian needs a periodic window")
    factory = factory or GraphFactory(window, model, omega)
    return critical_search(factory, tol, P).value


@dataclass(frozen=True)
class CriticalValues:
    c_f: float
    c: float
    tol: float
    window: dict
    omega: tuple[float, ...]

    def to_dict(self) -> dict:
        return {"c_f": self.c_f, "c": self.c, "tol": self.tol, "window": self.window,
                "omega": list(self.omega)}


def stationary_critical_value(window: GridWindow, model: HamiltonianModel, omega: EnvPoint,
                              tol: float = 1e-3) -> CriticalValues:
    """``c = Hbar(0)`` together with the free value ``c_f``."""
    c = effective_hamiltonian(window, model, omega, np.zeros(window.dim), tol)
    c_f = free_critical_value(window, model, omega, tol)
    if c < c_f - tol:
        raise RuntimeError(f"c = {c} below c_f = {c_f} beyond tolerance")
    return CriticalValues(c_f, c, tol, window.to_dict(), omega.coords)


@dataclass
class EffectiveTable:
    P: np.ndarray          # (m, N)
    values: np.ndarray     # (m,)
    tol: float

    def to_csv(self) -> str:
        N = self.P.shape[1]
        head = ",".join(f"P{i + 1}" for i in range(N)) + ",Hbar,tol"
        rows = [",".join(f"{c:.10g}" for c in p) + f",{v:.12g},{self.tol:.3g}"
                for p, v in zip(self.P, self.values)]
        return "\n".join([head] + rows) + "\n"


def p_grid(step: float, extent: float, dim: int = 1) -> np.ndarray:
    """Symmetric grid ``{-extent, ..., extent}^N`` with the given step."""
    k = int(round(extent / step))
    axis = step * np.arange(-k, k + 1)
    return np.array(list(itertools.product(axis, repeat=dim)))


def effective_table(window: GridWindow, model: HamiltonianModel, omega: EnvPoint, P_points,
                    tol: float = 1e-3) -> EffectiveTable:
    P_points = np.atleast_2d(np.asarray(P_points, dtype=float))
    if P_points.shape[1] != window.dim:
        P_points = P_points.reshape(-1, window.dim)
    factory = GraphFactory(window, model, omega)
    vals = np.array([effective_hamiltonian(window, model, omega, P, tol, factory)
                     for P in P_points])
    return EffectiveTable(P_points, vals, tol)


@dataclass
class FlatRegion:
    points: np.ndarray
    zero_in_interior: bool
    radius: float
    minimum: float


def flat_region(table: EffectiveTable, tol: float) -> FlatRegion:
    """Sampled ``{P : Hbar(P) <= min + tol}`` and whether it contains a grid
    neighborhood of ``P = 0``."""
    P, vals = table.P, table.values
    N = P.shape[1]
    axes = [np.unique(np.round(P[:, i], 12)) for i in range(N)]
    if any(len(a) < 3 for a in axes):
        raise ValueError("table too sparse: need at least 3 samples per axis")
    vmin = float(np.min(vals))
    inside = vals <= vmin + tol
    step = min(float(np.min(np.diff(a))) for a in axes)
    members = {tuple(np.round(p / step).astype(int)) for p in P[inside]}
    nbhd = itertools.product((-1, 0, 1), repeat=N)
    zero_int = all(tuple(o) in members for o in nbhd)
    norms = np.linalg.norm(P, axis=1)
    r_in = float(np.max(norms[inside]))
    outside = norms[~inside]
    r_out = float(np.min(outside[outside > r_in])) if np.any(outside > r_in) else r_in
    radius = 0.5 * (r_in + r_out) if r_in > 0 else 0.0
    return FlatRegion(P[inside], zero_int, radius, vmin)
