"""Stationary ergodic environments on a truncated infinite torus.

The environment space is ``T^k`` (the first ``k`` factors of ``T^infinity``)
with the translation group ``tau_x(omega)_j = omega_j + <lambda_j, x> mod 1``.
Realizations of almost-periodic potentials are trigonometric polynomials over
that basis, evaluated along the orbit of a base point.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "FrequencyBasis",
    "TorusSpace",
    "EnvPoint",
    "APTerm",
    "APSeriesModel",
    "generate_frequencies",
    "translate",
    "torus_distance",
    "sample_env",
    "evaluate_ap",
    "equidistribution_test",
    "EquidistributionReport",
]


def _first_primes(count: int) -> list[int]:
    primes: list[int] = []
    cand = 2
    while len(primes) < count:
        if all(cand % p for p in primes if p * p <= cand):
            primes.append(cand)
        cand += 1
    return primes


def _wrap(x):
    """Reduce to [0, 1); guards the ``-1e-17 % 1 == 1.0`` rounding case."""
    r = np.mod(x, 1.0)
    return np.where(r >= 1.0, 0.0, r)


@dataclass(frozen=True)
class FrequencyBasis:
    """Frequency vectors ``lambda_1..lambda_k`` in R^N (cycles per unit length)."""

    vectors: tuple[tuple[float, ...], ...]
    family_tag: str = "user_list"

    def __post_init__(self):
        if len(self.vectors) == 0:
            raise ValueError("frequency basis needs k >= 1 vectors")
        dims = {len(v) for v in self.vectors}
        if len(dims) != 1:
            raise ValueError("frequency vectors must share one dimension")
        arr = np.asarray(self.vectors, dtype=float)
        if not np.all(np.isfinite(arr)):
            raise ValueError("frequency vectors must be finite")
        if np.any(np.all(arr == 0.0, axis=1)):
            raise ValueError("frequency vectors must be nonzero")
        if len({tuple(v) for v in self.vectors}) != len(self.vectors):
            raise ValueError("duplicate frequency vectors")

    @property
    def k(self) -> int:
        return len(self.vectors)

    @property
    def dim(self) -> int:
        return len(self.vectors[0])

    @property
    def matrix(self) -> np.ndarray:
        """``(k, N)`` array of the frequency vectors."""
        return np.asarray(self.vectors, dtype=float)


@dataclass(frozen=True)
class TorusSpace:
    """Truncated torus ``T^k`` acted on by ``R^N`` through ``basis``."""

    basis: FrequencyBasis

    @property
    def dim(self) -> int:
        return self.basis.k

    @property
    def spatial_dim(self) -> int:
        return self.basis.dim

    def origin(self) -> "EnvPoint":
        return EnvPoint(tuple([0.0] * self.dim))

    def to_dict(self) -> dict:
        return {"family": self.basis.family_tag, "k": self.dim,
                "vectors": [list(v) for v in self.basis.vectors]}

    @classmethod
    def from_dict(cls, d: dict) -> "TorusSpace":
        if d.get("family", "user_list") == "sqrt_primes" and "vectors" not in d:
            return cls(generate_frequencies(int(d["k"]), "sqrt_primes",
                                            dim=int(d.get("dim", 1))))
        vecs = tuple(tuple(float(c) for c in v) for v in d["vectors"])
        return cls(FrequencyBasis(vecs, d.get("family", "user_list")))

    @classmethod
    def lattice(cls, dim: int = 1) -> "TorusSpace":
        """Periodic environment: unit frequencies along each axis."""
        vecs = tuple(tuple(1.0 if i == j else 0.0 for i in range(dim)) for j in range(dim))
        return cls(FrequencyBasis(vecs, "lattice"))


@dataclass(frozen=True)
class EnvPoint:
    """A point ``omega`` of ``T^k``; coordinates live in [0, 1)."""

    coords: tuple[float, ...]

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=float)
        if np.any(c < 0.0) or np.any(c >= 1.0):
            raise ValueError("torus coordinates must lie in [0, 1)")

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.coords, dtype=float)

    @classmethod
    def from_array(cls, arr) -> "EnvPoint":
        return cls(tuple(float(c) for c in _wrap(np.asarray(arr, dtype=float))))


def generate_frequencies(k: int, family: str = "sqrt_primes",
                         user_list: Sequence[Sequence[float]] | None = None,
                         dim: int = 1) -> FrequencyBasis:
    """Build a frequency basis.

    ``sqrt_primes`` takes square roots of consecutive primes, ``dim`` of them
    per vector, so the family is rationally independent by construction.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if family == "sqrt_primes":
        roots = np.sqrt(_first_primes(k * dim))
        vecs = tuple(tuple(float(r) for r in roots[j * dim:(j + 1) * dim]) for j in range(k))
        return FrequencyBasis(vecs, "sqrt_primes")
    if family == "user_list":
        if user_list is None or len(user_list) != k:
            raise ValueError("user_list must supply exactly k vectors")
        vecs = tuple(tuple(float(c) for c in np.atleast_1d(v)) for v in user_list)
        return FrequencyBasis(vecs, "user_list")
    raise ValueError(f"unknown frequency family {family!r}")


def translate(omega: EnvPoint, x, space: TorusSpace) -> EnvPoint:
    """Return ``tau_x omega``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (space.spatial_dim,) or len(omega.coords) != space.dim:
        raise ValueError("dimension mismatch")
    return EnvPoint.from_array(omega.array + space.basis.matrix @ x)


def torus_distance(omega: EnvPoint, other: EnvPoint) -> float:
    """Weighted product distance ``sum_n 2^-n |omega_n - other_n|_T1``."""
    a, b = omega.array, other.array
    if a.shape != b.shape:
        raise ValueError("dimension mismatch")
    diff = np.abs(a - b)
    flat = np.minimum(diff, 1.0 - diff)
    weights = 0.5 ** np.arange(1, len(a) + 1)
    return float(np.sum(weights * flat))


def sample_env(space: TorusSpace, rng_seed: int) -> EnvPoint:
    """Draw ``omega`` from the product Lebesgue measure."""
    rng = np.random.default_rng(rng_seed)
    return EnvPoint.from_array(rng.random(space.dim))


@dataclass(frozen=True)
class APTerm:
    amplitude: float
    index: int
    phase: float = 0.0


@dataclass(frozen=True)
class APSeriesModel:
    """Trigonometric polynomial ``offset + sum a cos(2 pi(<lambda_j,x> + omega_j + phase))``."""

    space: TorusSpace
    terms: tuple[APTerm, ...]
    offset: float = 0.0

    def __post_init__(self):
        for t in self.terms:
            if not 0 <= t.index < self.space.dim:
                raise IndexError(f"frequency index {t.index} out of range for k={self.space.dim}")
            if not 0.0 <= t.phase < 1.0:
                raise ValueError("phases must lie in [0, 1)")
        object.__setattr__(self, "_idx", np.array([t.index for t in self.terms], dtype=int))
        object.__setattr__(self, "_amp", np.array([t.amplitude for t in self.terms], dtype=float))
        object.__setattr__(self, "_phase", np.array([t.phase for t in self.terms], dtype=float))

    @property
    def bound(self) -> float:
        """Sup-norm bound of the oscillating part."""
        return float(np.sum(np.abs(self._amp)))

    def __call__(self, x, omega: EnvPoint) -> np.ndarray:
        """Vectorized evaluation at points ``x`` of shape ``(..., N)``."""
        x = np.asarray(x, dtype=float)
        lam = self.space.basis.matrix[self._idx]            # (T, N)
        proj = x @ lam.T                                     # (..., T)
        arg = proj + omega.array[self._idx] + self._phase
        return self.offset + np.cos(2.0 * np.pi * arg) @ self._amp

    def to_dict(self) -> dict:
        return {
            "space": self.space.to_dict(),
            "offset": self.offset,
            "terms": [{"amplitude": t.amplitude, "frequency_index": t.index, "phase": t.phase}
                      for t in self.terms],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "APSeriesModel":
        space = TorusSpace.from_dict(d["space"])
        terms = tuple(APTerm(float(t["amplitude"]), int(t["frequency_index"]),
                             float(t.get("phase", 0.0))) for t in d["terms"])
        return cls(space, terms, float(d.get("offset", 0.0)))

    @classmethod
    def loads(cls, text: str) -> "APSeriesModel":
        return cls.from_dict(json.loads(text))


def evaluate_ap(model: APSeriesModel, x, omega: EnvPoint) -> float:
    """Scalar evaluation of ``model`` at a single point ``x``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return float(model(x, omega))


@dataclass
class EquidistributionReport:
    n_steps: int
    birkhoff_avg: np.ndarray
    space_avg: np.ndarray
    gap: np.ndarray = field(init=False)

    def __post_init__(self):
        self.gap = np.abs(self.birkhoff_avg - self.space_avg)

    @property
    def max_gap(self) -> float:
        return float(np.max(self.gap))


def equidistribution_test(space: TorusSpace, x_hat, n_steps: int,
                          probes: Sequence[Sequence[int]]) -> EquidistributionReport:
    """Compare Birkhoff averages along ``tau_{x_hat}^m 0`` with space averages.

    Each probe is an integer vector ``k`` standing for ``cos(2 pi <k, omega>)``;
    the zero vector is the constant function 1.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    x_hat = np.atleast_1d(np.asarray(x_hat, dtype=float))
    if not np.any(x_hat):
        raise ValueError("x_hat must be nonzero")
    K = np.atleast_2d(np.asarray(probes, dtype=np.int64))
    if K.shape[1] != space.dim:
        raise ValueError("probe vectors must have k entries")
    rot = _wrap(space.basis.matrix @ x_hat)                  # one step on T^k
    m = np.arange(n_steps, dtype=float)
    # integer probes make <k, m*rot mod 1> ≡ m <k, rot> mod 1, reduced per term
    phases = _wrap(np.outer(m, rot))                         # (n, k)
    vals = np.cos(2.0 * np.pi * (phases @ K.T))              # (n, P)
    space_avg = np.where(np.all(K == 0, axis=1), 1.0, 0.0)
    return EquidistributionReport(n_steps, vals.mean(axis=0), space_avg)
