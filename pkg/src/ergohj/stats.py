"""Ergodic diagnostics: volume fractions, spread, Ky Fan distance, sublinearity
and stationarity shift checks."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import ndimage

from ergohj.env import EnvPoint, TorusSpace, translate
from ergohj.metricgraph import GridWindow

__all__ = [
    "RandomSetSampler",
    "Estimate",
    "volume_fraction",
    "agree_within",
    "SpreadResult",
    "spread_check",
    "ky_fan_from_sample",
    "ky_fan_distance",
    "SublinearityProfile",
    "sublinearity_check",
    "ShiftReport",
    "stationarity_shift_check",
]


@dataclass(frozen=True)
class RandomSetSampler:
    """Threshold set ``X(omega) = {x : lower <= F(x, omega) <= upper}``.

    ``F`` is vectorized over points ``(..., N)``; stationarity of ``X`` comes
    from stationarity of ``F``.
    """

    F: Callable[[np.ndarray, EnvPoint], np.ndarray]
    space: TorusSpace
    lower: float = -np.inf
    upper: float = np.inf

    def contains(self, X, omega: EnvPoint) -> np.ndarray:
        v = np.asarray(self.F(np.asarray(X, dtype=float), omega))
        return (v >= self.lower) & (v <= self.upper)


@dataclass
class Estimate:
    value: float
    stderr: float
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"estimate": self.value, "stderr": self.stderr, **self.params}


def _ball_grid(dim: int, radius: float, h: float, center=None) -> np.ndarray:
    k = int(np.floor(radius / h))
    axis = h * np.arange(-k, k + 1)
    pts = np.stack(np.meshgrid(*[axis] * dim, indexing="ij"), axis=-1).reshape(-1, dim)
    pts = pts[np.linalg.norm(pts, axis=1) <= radius + 1e-12]
    return pts if center is None else pts + np.asarray(center, dtype=float)


def volume_fraction(sampler: RandomSetSampler, mode: str, *, omega: EnvPoint | None = None,
                    radius: float | None = None, h: float = 0.01, x=None,
                    m: int | None = None, seed: int = 0, blocks: int = 32) -> Estimate:
    """Volume fraction of ``X`` by spatial averaging or by sampling ``omega``.

    ``spatial`` counts grid points of ``B_radius`` in ``X(omega)``; its stderr
    comes from ``blocks`` contiguous slabs along the first axis.
    ``probabilistic`` draws ``m`` environments and tests the point ``x``; its
    stderr is binomial.
    """
    dim = sampler.space.spatial_dim
    if mode == "spatial":
        if radius is None or not radius > 0:
            raise ValueError("spatial mode needs radius > 0")
        pts = _ball_grid(dim, radius, h)
        inside = sampler.contains(pts, omega).astype(float)
        p = float(inside.mean())
        slab = np.minimum(((pts[:, 0] + radius) / (2 * radius) * blocks).astype(int), blocks - 1)
        counts = np.bincount(slab, minlength=blocks)
        sums = np.bincount(slab, weights=inside, minlength=blocks)
        means = sums[counts > 0] / counts[counts > 0]
        se = float(np.std(means, ddof=1) / np.sqrt(len(means))) if len(means) > 1 else 0.0
        return Estimate(p, se, {"mode": mode, "radius": radius, "h": h})
    if mode == "probabilistic":
        if m is None or m < 2:
            raise ValueError("probabilistic mode needs m >= 2")
        x = np.zeros(dim) if x is None else np.atleast_1d(np.asarray(x, dtype=float))
        rng = np.random.default_rng(seed)
        coords = rng.random((m, sampler.space.dim))
        hits = np.array([bool(sampler.contains(x, EnvPoint.from_array(c))) for c in coords])
        p = float(hits.mean())
        return Estimate(p, float(np.sqrt(p * (1 - p) / m)), {"mode": mode, "m": m, "seed": seed})
    raise ValueError(f"unknown mode {mode!r}")


def agree_within(a: Estimate, b: Estimate, k: float = 3.0) -> bool:
    """``|a - b| <= k`` joint standard errors (exact agreement when both are 0)."""
    return abs(a.value - b.value) <= k * float(np.hypot(a.stderr, b.stderr))


@dataclass
class SpreadResult:
    R_eps: float | None
    coverage: np.ndarray        # (len(R_grid), len(r_grid))
    R_grid: np.ndarray
    r_grid: np.ndarray
    flagged: bool


def spread_check(sampler: RandomSetSampler, omega: EnvPoint, eps: float, R_grid, r_grid,
                 h: float = 0.01) -> SpreadResult:
    """Coverage of ``B_r`` by the ``R``-neighborhood of ``X(omega)``.

    Returns the smallest ``R`` whose coverage at the largest ``r`` reaches
    ``1 - eps``; ``flagged`` is set when no grid value does.
    """
    R_grid = np.sort(np.asarray(R_grid, dtype=float))
    r_grid = np.sort(np.asarray(r_grid, dtype=float))
    dim = sampler.space.spatial_dim
    ext = float(r_grid[-1] + R_grid[-1])
    k = int(np.ceil(ext / h))
    axis = h * np.arange(-k, k + 1)
    grids = np.meshgrid(*[axis] * dim, indexing="ij")
    pts = np.stack(grids, axis=-1)
    mask = sampler.contains(pts.reshape(-1, dim), omega).reshape(pts.shape[:-1])
    if not np.any(mask):
        raise ValueError("X(omega) is empty on the window")
    dist = ndimage.distance_transform_edt(~mask, sampling=h)
    norm = np.linalg.norm(pts, axis=-1)
    cov = np.zeros((len(R_grid), len(r_grid)))
    for j, r in enumerate(r_grid):
        ball = norm <= r + 1e-12
        for i, R in enumerate(R_grid):
            cov[i, j] = float(np.mean(dist[ball] <= R + 1e-12))
    ok = np.nonzero(cov[:, -1] >= 1 - eps)[0]
    R_eps = float(R_grid[ok[0]]) if len(ok) else None
    return SpreadResult(R_eps, cov, R_grid, r_grid, R_eps is None)


def ky_fan_from_sample(d) -> float:
    """Smallest ``eps`` with ``#{d_i > eps} / m <= eps``, exact for the sample."""
    d = np.sort(np.asarray(d, dtype=float).ravel())
    m = len(d)
    if m == 0:
        raise ValueError("empty sample")
    # on [d_(k), d_(k+1)) exactly m - k samples exceed eps
    lows = np.concatenate([[0.0], d])
    tails = (m - np.arange(m + 1)) / m
    return float(min(1.0, np.min(np.maximum(lows, tails))))


def ky_fan_distance(f, g, space: TorusSpace, points, m: int = 100, seed: int = 0) -> float:
    """Ky Fan distance between random fields ``f, g`` with the sup over ``points``."""
    if m < 10:
        raise ValueError("need m >= 10 samples")
    rng = np.random.default_rng(seed)
    pts = np.asarray(points, dtype=float)
    d = []
    for c in rng.random((m, space.dim)):
        w = EnvPoint.from_array(c)
        d.append(float(np.max(np.abs(np.asarray(f(pts, w)) - np.asarray(g(pts, w))))))
    return ky_fan_from_sample(d)


@dataclass
class SublinearityProfile:
    R: np.ndarray
    ratio: np.ndarray

    @property
    def nonincreasing(self) -> bool:
        return bool(np.all(np.diff(self.ratio) <= 1e-12))

    @property
    def passes(self) -> bool:
        return self.nonincreasing and self.ratio[-1] <= 0.5 * self.ratio[0]

    @property
    def flagged(self) -> bool:
        return not self.passes


def sublinearity_check(fields: Sequence[tuple[GridWindow, np.ndarray]]) -> SublinearityProfile:
    """``max_{boundary} |v(x) - v(0)| / |x|`` for fields on nested free windows."""
    R, ratio = [], []
    for win, vals in fields:
        vals = np.asarray(vals, dtype=float)
        bnd = win.boundary_mask()
        pts = win.points[bnd]
        v0 = vals[win.index_of(np.zeros(win.dim))]
        r = np.abs(vals[bnd] - v0) / np.linalg.norm(pts, axis=1)
        R.append(float(np.max(np.asarray(win.upper) - np.zeros(win.dim))))
        ratio.append(float(np.max(r)))
    return SublinearityProfile(np.array(R), np.array(ratio))


@dataclass
class ShiftReport:
    max_discrepancy: float
    per_shift: list[float]
    threshold: float

    @property
    def flagged(self) -> bool:
        return self.max_discrepancy > self.threshold


def stationarity_shift_check(obj: Callable[[GridWindow, EnvPoint], np.ndarray], window: GridWindow,
                             omega: EnvPoint, space: TorusSpace, z_list, kind: str = "field",
                             threshold: float = 1e-9) -> ShiftReport:
    """Compare ``obj(window, tau_z omega)`` with ``obj(window + z, omega)``.

    Fields are compared through their increments from the first node (sup
    norm); node sets (boolean masks) through the symmetric-difference count.
    """
    if kind not in ("field", "set"):
        raise ValueError("kind must be 'field' or 'set'")
    out = []
    for z in z_list:
        z = np.atleast_1d(np.asarray(z, dtype=float))
        cells = z / window.h
        if np.any(np.abs(cells - np.rint(cells)) > 1e-9):
            raise ValueError(f"shift {z.tolist()} is not a multiple of h")
        a = np.asarray(obj(window, translate(omega, z, space)))
        b = np.asarray(obj(window.shifted(z), omega))
        if kind == "set":
            out.append(float(np.count_nonzero(a.astype(bool) ^ b.astype(bool))))
        else:
            fin = np.isfinite(a) & np.isfinite(b)
            da = a - a[0]
            db = b - b[0]
            out.append(float(np.max(np.abs(da[fin] - db[fin]), initial=0.0)))
    return ShiftReport(max(out), out, threshold)
