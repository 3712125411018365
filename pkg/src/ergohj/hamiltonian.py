"""Convex coercive Hamiltonians ``H(x, p, omega)`` and their sublevel geometry.

Two kinds are supported. ``eikonal_quadratic`` models ``|p + s|^2 + V(x, omega)``
have closed forms for the minimizer, the Lagrangian and the support function of
the sublevels. ``generic_convex`` models wrap a vectorized evaluator and use
derivative-free numerics: coordinate-wise golden section for the minimizer and
ray bisection from the minimizer for the sublevel boundary.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
from scipy import optimize

from ergohj.env import APSeriesModel, APTerm, EnvPoint, TorusSpace

__all__ = [
    "EmptySublevel",
    "Potential",
    "HamiltonianModel",
    "MomentumBall",
    "eikonal",
    "generic",
    "pendulum_potential",
    "separable_pendulum_potential",
    "zero_potential",
    "eval_H",
    "kappa_bound",
    "legendre",
    "min_over_p",
    "support_sigma",
    "min_over_p_batch",
    "sublevel_support",
    "model_from_dict",
]

_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


class EmptySublevel(ValueError):
    """The sublevel ``{p : H(x, p, omega) <= a}`` is empty."""


@dataclass(frozen=True)
class Potential:
    """A stationary potential ``V(x, omega)`` with known bounds.

    ``fn`` is vectorized over points of shape ``(..., N)``. ``spec`` is the
    serializable description; ``space`` is set when ``V`` is an almost-periodic
    series over that torus (and is then stationary by construction).
    """

    fn: Callable[[np.ndarray, EnvPoint], np.ndarray]
    vmin: float
    vmax: float
    spec: dict
    space: TorusSpace | None = None

    def __call__(self, x, omega: EnvPoint) -> np.ndarray:
        return np.asarray(self.fn(np.asarray(x, dtype=float), omega), dtype=float)

    @classmethod
    def from_series(cls, series: APSeriesModel, name: str = "ap_series") -> "Potential":
        return cls(series, series.offset - series.bound, series.offset + series.bound,
                   {"type": name, "series": series.to_dict()}, series.space)

    def negated(self) -> "Potential":
        spec = {"type": "negated", "of": self.spec}
        return Potential(lambda x, w: -self.fn(x, w), -self.vmax, -self.vmin, spec, self.space)


def zero_potential(dim: int = 1) -> Potential:
    series = APSeriesModel(TorusSpace.lattice(dim), (), 0.0)
    return Potential(series, 0.0, 0.0, {"type": "zero", "dim": dim}, series.space)


def pendulum_potential(amplitude: float = 1.0, dim: int = 1, axis: int = 0) -> Potential:
    """``V(x) = amplitude * (1 - cos(2 pi x_axis)) / 2``, shifted by ``omega``."""
    series = APSeriesModel(TorusSpace.lattice(dim), (APTerm(-0.5 * amplitude, axis, 0.0),),
                           0.5 * amplitude)
    p = Potential.from_series(series)
    return replace(p, spec={"type": "pendulum", "amplitude": amplitude, "dim": dim,
                            "axis": axis})


def separable_pendulum_potential(amplitudes=(1.0, 1.0)) -> Potential:
    """Sum of one pendulum potential per coordinate axis."""
    dim = len(amplitudes)
    terms = tuple(APTerm(-0.5 * a, j, 0.0) for j, a in enumerate(amplitudes))
    series = APSeriesModel(TorusSpace.lattice(dim), terms, 0.5 * float(sum(amplitudes)))
    p = Potential.from_series(series)
    return replace(p, spec={"type": "separable_pendulum", "amplitudes": list(amplitudes)})


@dataclass(frozen=True)
class HamiltonianModel:
    """Evaluator for ``H(x, p, omega)`` plus the metadata the metric layer needs.

    Attributes
    ----------
    kind : {"eikonal_quadratic", "generic_convex"}
    dim : int
        Spatial dimension N.
    potential : Potential, optional
        ``V`` for the eikonal kind (also used for brackets by generic models).
    evaluator : callable, optional
        Vectorized ``H(x, p, omega)`` for the generic kind.
    alpha, beta : callable
        Superlinear envelopes with ``alpha(|p|) <= H <= beta(|p|)``.
    shift : tuple of float
        Momentum shift ``s`` of the eikonal kind, ``H = |p + s|^2 + V``.
    directions : int
        Ray count for generic sublevel support (2 in 1D by default).
    analytic_sigma : bool
        Use the closed-form support ``sqrt(a - V)|q| - <s, q>``.
    """

    kind: str
    dim: int
    alpha: Callable[[np.ndarray], np.ndarray]
    beta: Callable[[np.ndarray], np.ndarray]
    potential: Potential | None = None
    evaluator: Callable | None = None
    shift: tuple[float, ...] | None = None
    directions: int | None = None
    analytic_sigma: bool = False
    spec: dict | None = None

    def __post_init__(self):
        if self.kind not in ("eikonal_quadratic", "generic_convex"):
            raise ValueError(f"unknown Hamiltonian kind {self.kind!r}")
        if self.kind == "eikonal_quadratic" and self.potential is None:
            raise ValueError("eikonal models need a potential")
        if self.kind == "generic_convex" and self.evaluator is None:
            raise ValueError("generic models need an evaluator")
        if self.shift is None:
            object.__setattr__(self, "shift", tuple([0.0] * self.dim))
        if self.directions is None:
            object.__setattr__(self, "directions", 2 if self.dim == 1 else 64)

    @property
    def shift_vec(self) -> np.ndarray:
        return np.asarray(self.shift, dtype=float)

    @property
    def is_eikonal(self) -> bool:
        return self.kind == "eikonal_quadratic"

    def __call__(self, x, p, omega: EnvPoint) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        p = np.asarray(p, dtype=float)
        if self.is_eikonal:
            q = p + self.shift_vec
            return np.sum(q * q, axis=-1) + self.potential(x, omega)
        return np.asarray(self.evaluator(x, p, omega), dtype=float)

    def shifted(self, P) -> "HamiltonianModel":
        """The model ``H(x, p + P, omega)``."""
        P = np.atleast_1d(np.asarray(P, dtype=float))
        if self.is_eikonal:
            return _eikonal_envelopes(replace(self, shift=tuple(self.shift_vec + P)))
        ev = self.evaluator
        nP = float(np.linalg.norm(P))
        a, b = self.alpha, self.beta
        return replace(
            self,
            evaluator=lambda x, p, w: ev(x, np.asarray(p) + P, w),
            alpha=lambda r: a(np.maximum(np.asarray(r) - nP, 0.0)),
            beta=lambda r: b(np.asarray(r) + nP),
            spec=None,
        )

    def reversed(self) -> "HamiltonianModel":
        """The model ``H(x, -p, omega)``."""
        if self.is_eikonal:
            return replace(self, shift=tuple(-self.shift_vec))
        ev = self.evaluator
        return replace(self, evaluator=lambda x, p, w: ev(x, -np.asarray(p), w), spec=None)

    def as_generic(self) -> "HamiltonianModel":
        """Same Hamiltonian routed through the generic numerical path."""
        if not self.is_eikonal:
            return self
        V, s = self.potential, self.shift_vec

        def ev(x, p, w):
            q = np.asarray(p) + s
            return np.sum(q * q, axis=-1) + V(x, w)

        return replace(self, kind="generic_convex", evaluator=ev, analytic_sigma=False,
                       spec=None)

    def to_dict(self) -> dict:
        if self.spec is None:
            raise ValueError("model has no serializable description")
        return dict(self.spec)


def _eikonal_envelopes(model: HamiltonianModel) -> HamiltonianModel:
    s = float(np.linalg.norm(model.shift_vec))
    vmin, vmax = model.potential.vmin, model.potential.vmax
    return replace(
        model,
        alpha=lambda r: np.maximum(np.asarray(r, dtype=float) - s, 0.0) ** 2 + vmin,
        beta=lambda r: (np.asarray(r, dtype=float) + s) ** 2 + vmax,
    )


def eikonal(potential: Potential, shift=None, dim: int | None = None) -> HamiltonianModel:
    """``H = |p + shift|^2 + V(x, omega)`` with closed-form sublevel support."""
    if dim is None:
        dim = potential.space.spatial_dim if potential.space is not None else 1
    shift = tuple([0.0] * dim) if shift is None else tuple(float(c) for c in np.atleast_1d(shift))
    m = HamiltonianModel("eikonal_quadratic", dim, alpha=lambda r: r, beta=lambda r: r,
                         potential=potential, shift=shift, analytic_sigma=True,
                         spec={"kind": "eikonal_quadratic", "potential": potential.spec,
                               "shift": list(shift)})
    return _eikonal_envelopes(m)


def generic(evaluator, dim: int, alpha, beta, potential: Potential | None = None,
            directions: int | None = None) -> HamiltonianModel:
    return HamiltonianModel("generic_convex", dim, alpha=alpha, beta=beta,
                            potential=potential, evaluator=evaluator, directions=directions)


def _anisotropic(matrix, shift, potential: Potential) -> HamiltonianModel:
    A = np.atleast_2d(np.asarray(matrix, dtype=float))
    s = np.atleast_1d(np.asarray(shift, dtype=float))
    eig = np.linalg.eigvalsh(0.5 * (A + A.T))
    if eig[0] <= 0:
        raise ValueError("anisotropic matrix must be positive definite")
    lo, hi, ns = eig[0], eig[-1], float(np.linalg.norm(s))

    def ev(x, p, w):
        q = np.asarray(p) + s
        return np.einsum("...i,ij,...j->...", q, A, q) + potential(x, w)

    m = generic(ev, A.shape[0],
                alpha=lambda r: lo * np.maximum(np.asarray(r) - ns, 0.0) ** 2 + potential.vmin,
                beta=lambda r: hi * (np.asarray(r) + ns) ** 2 + potential.vmax,
                potential=potential)
    return replace(m, spec={"kind": "generic_convex", "form": "anisotropic_quadratic",
                            "matrix": A.tolist(), "shift": s.tolist(),
                            "potential": potential.spec})


def potential_from_dict(d: dict) -> Potential:
    t = d.get("type")
    if t == "zero":
        return zero_potential(int(d.get("dim", 1)))
    if t == "pendulum":
        return pendulum_potential(float(d.get("amplitude", 1.0)), int(d.get("dim", 1)),
                                  int(d.get("axis", 0)))
    if t == "separable_pendulum":
        return separable_pendulum_potential(tuple(d["amplitudes"]))
    if t == "ap_series":
        return Potential.from_series(APSeriesModel.from_dict(d["series"]))
    if t == "negated":
        return potential_from_dict(d["of"]).negated()
    raise ValueError(f"unknown potential type {t!r}")


def model_from_dict(d: dict) -> HamiltonianModel:
    """Rebuild a model from its description (see ``HamiltonianModel.to_dict``)."""
    kind = d.get("kind")
    pot = potential_from_dict(d["potential"])
    if kind == "eikonal_quadratic":
        return eikonal(pot, d.get("shift"))
    if kind == "generic_convex" and d.get("form") == "anisotropic_quadratic":
        return _anisotropic(d["matrix"], d.get("shift", [0.0] * len(d["matrix"])), pot)
    raise ValueError(f"unsupported model description kind={kind!r}")


# -- pointwise operations ---------------------------------------------------

def eval_H(model: HamiltonianModel, x, p, omega: EnvPoint) -> float:
    return float(model(np.atleast_1d(x), np.atleast_1d(p), omega))


def _radius_bound(model: HamiltonianModel, level: float) -> float:
    """Some ``R`` with ``alpha(r) > level`` for all ``r >= R``."""
    r = 1.0
    for _ in range(200):
        if float(model.alpha(np.array(r))) > level:
            return r
        r *= 2.0
    raise ValueError("coercivity envelope alpha is not superlinear")


def min_over_p_batch(model: HamiltonianModel, X, omega: EnvPoint,
                     tol: float = 1e-12, sweeps: int = 60):
    """Minimizers and minima of ``p -> H(x, p, omega)`` at each row of ``X``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n, N = X.shape
    if model.is_eikonal:
        p0 = np.broadcast_to(-model.shift_vec, (n, N)).copy()
        return p0, model.potential(X, omega)
    h0 = model(X, np.zeros((n, N)), omega)
    R = _radius_bound(model, float(np.max(h0)) + 1.0)
    p = np.zeros((n, N))
    val = h0.copy()
    for _ in range(sweeps):
        prev = val.copy()
        for i in range(N):
            lo = np.full(n, -R)
            hi = np.full(n, R)
            for _ in range(90):
                c = hi - _GOLDEN * (hi - lo)
                d = lo + _GOLDEN * (hi - lo)
                pc = p.copy()
                pc[:, i] = c
                pd = p.copy()
                pd[:, i] = d
                left = model(X, pc, omega) <= model(X, pd, omega)
                hi = np.where(left, d, hi)
                lo = np.where(left, lo, c)
            cand = p.copy()
            cand[:, i] = 0.5 * (lo + hi)
            cv = model(X, cand, omega)
            better = cv < val
            p[better] = cand[better]
            val = np.where(better, cv, val)
        if np.max(np.abs(prev - val)) <= tol:
            break
    return p, val


def min_over_p(model: HamiltonianModel, x, omega: EnvPoint):
    """Return ``(p0, min_p H(x, p, omega))``."""
    p0, v = min_over_p_batch(model, np.atleast_1d(np.asarray(x, dtype=float))[None, :], omega)
    return p0[0], float(v[0])


def _directions(model: HamiltonianModel) -> np.ndarray:
    if model.dim == 1:
        return np.array([[1.0], [-1.0]])
    th = 2.0 * np.pi * np.arange(model.directions) / model.directions
    return np.stack([np.cos(th), np.sin(th)], axis=1)


def _ray_bisect(model, X, omega, a, p0, E, iters: int = 60):
    """Bracket ``t`` with ``H(x, p0 + t e) = a`` for every node/direction pair.

    Returns ``(t_lo, t_hi)`` of shape ``(n, M)``; ``t_lo`` is inside the sublevel.
    """
    n, N = X.shape
    M = E.shape[0]
    R = _radius_bound(model, a)
    t_lo = np.zeros((n, M))
    t_hi = np.full((n, M), R + float(np.max(np.linalg.norm(p0, axis=1), initial=0.0)))
    Xr = np.repeat(X, M, axis=0)
    base = np.repeat(p0, M, axis=0)
    Er = np.tile(E, (n, 1))
    for _ in range(iters):
        mid = 0.5 * (t_lo + t_hi)
        inside = model(Xr, base + mid.reshape(-1, 1) * Er, omega).reshape(n, M) <= a
        t_lo = np.where(inside, mid, t_lo)
        t_hi = np.where(inside, t_hi, mid)
    return t_lo, t_hi


@dataclass(frozen=True)
class MomentumBall:
    level: float
    radius: float


def kappa_bound(model: HamiltonianModel, a: float, X, omega: EnvPoint) -> MomentumBall:
    """Largest momentum norm in the ``a``-sublevels over a window's grid points.

    ``X`` is a window (anything with a ``points`` array) or an ``(n, N)`` array.
    """
    X = getattr(X, "points", X)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    p0, m = min_over_p_batch(model, X, omega)
    ok = m <= a
    if not np.any(ok):
        raise EmptySublevel(f"level {a} lies below min_p H on every grid point")
    E = _directions(model)
    _, t_hi = _ray_bisect(model, X[ok], omega, a, p0[ok], E)
    pts = p0[ok][:, None, :] + t_hi[:, :, None] * E[None, :, :]
    return MomentumBall(float(a), float(np.max(np.linalg.norm(pts, axis=2))))


def legendre(model: HamiltonianModel, x, q, omega: EnvPoint) -> float:
    """``L(x, q) = max_p <p, q> - H(x, p)``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    q = np.atleast_1d(np.asarray(q, dtype=float))
    if model.is_eikonal:
        s = model.shift_vec
        return float(q @ q / 4.0 - s @ q - model.potential(x, omega))
    p0, h0 = min_over_p(model, x, omega)
    nq = float(np.linalg.norm(q))
    if nq == 0.0:
        return -h0

    def neg(p):
        return -(float(p @ q) - float(model(x, p, omega)))

    # the maximizer has H <= <p - p0, q> + h0, so alpha bounds its norm
    R = _radius_bound(model, h0 + nq * (_radius_bound(model, h0 + 1.0) + 1.0) + 1.0)
    R = max(R, 2.0 * nq + 1.0)
    for _ in range(60):
        if float(model.alpha(np.array(R))) > nq * R + abs(h0) + nq * float(np.linalg.norm(p0)):
            break
        R *= 2.0
    qhat = q / nq
    line = optimize.minimize_scalar(lambda t: neg(p0 + t * qhat), bounds=(-R, R),
                                    method="bounded", options={"xatol": 1e-12})
    start = p0 + line.x * qhat
    if model.dim == 1:
        return -float(line.fun)
    res = optimize.minimize(neg, start, method="Nelder-Mead",
                            options={"xatol": 1e-11, "fatol": 1e-13, "maxiter": 20000})
    return -float(min(res.fun, line.fun))


def sublevel_support(model: HamiltonianModel, X, omega: EnvPoint, a: float):
    """Per-node data for ``sigma_a``.

    Returns ``(feasible, fn)`` where ``feasible`` flags nonempty sublevels and
    ``fn(rows, Q)`` evaluates ``sigma_a(X[rows], Q)`` for those rows.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if model.is_eikonal and model.analytic_sigma:
        V = model.potential(X, omega)
        feasible = V <= a
        rad = np.sqrt(np.where(feasible, a - V, 0.0))
        s = model.shift_vec

        def fn(rows, Q):
            Q = np.asarray(Q, dtype=float)
            return rad[rows] * np.linalg.norm(Q, axis=-1) - Q @ s

        return feasible, fn
    p0, m = min_over_p_batch(model, X, omega)
    feasible = m <= a
    E = _directions(model)
    pts = np.full((X.shape[0], E.shape[0], model.dim), np.nan)
    if np.any(feasible):
        t_lo, _ = _ray_bisect(model, X[feasible], omega, a, p0[feasible], E)
        pts[feasible] = p0[feasible][:, None, :] + t_lo[:, :, None] * E[None, :, :]

    def fn(rows, Q):
        Q = np.asarray(Q, dtype=float)
        return np.max(np.einsum("rmn,rn->rm", pts[rows], Q), axis=1)

    return feasible, fn


def support_sigma(model: HamiltonianModel, x, q, omega: EnvPoint, a: float) -> float:
    """``sigma_a(x, q) = sup{<q, p> : H(x, p, omega) <= a}``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    q = np.atleast_1d(np.asarray(q, dtype=float))
    feasible, fn = sublevel_support(model, x[None, :], omega, a)
    if not feasible[0]:
        raise EmptySublevel(f"sublevel {a} is empty at x={x.tolist()}")
    if not np.any(q):
        return 0.0
    return float(fn(np.array([0]), q[None, :])[0])
