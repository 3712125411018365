import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ergohj.env import APSeriesModel, APTerm, EnvPoint, TorusSpace, generate_frequencies
from ergohj.hamiltonian import (
    EmptySublevel,
    Potential,
    _anisotropic,
    eikonal,
    eval_H,
    kappa_bound,
    legendre,
    min_over_p,
    model_from_dict,
    pendulum_potential,
    separable_pendulum_potential,
    support_sigma,
    zero_potential,
)

W0 = EnvPoint((0.0,))
W00 = EnvPoint((0.0, 0.0))
xs = st.floats(-3, 3, allow_nan=False)
qs = st.floats(-4, 4, allow_nan=False)


def pendulum(shift=0.0):
    return eikonal(pendulum_potential(), shift)


def test_pendulum_values():
    m = pendulum()
    assert eval_H(m, 0.5, 0.0, W0) == pytest.approx(1.0)
    assert eval_H(m, 0.0, 2.0, W0) == pytest.approx(4.0)
    assert eval_H(m, 0.0, 0.0, EnvPoint((0.5,))) == pytest.approx(1.0)


def test_pendulum_bounds():
    p = pendulum_potential()
    assert (p.vmin, p.vmax) == (0.0, 1.0)
    x = np.linspace(-2, 2, 4001)[:, None]
    v = p(x, W0)
    assert v.min() >= -1e-15 and v.max() <= 1 + 1e-15


def test_min_over_p_eikonal_and_generic():
    m = pendulum(0.3)
    p0, v = min_over_p(m, [0.25], W0)
    assert p0[0] == pytest.approx(-0.3) and v == pytest.approx(0.5)
    p0, v = min_over_p(m.as_generic(), [0.25], W0)
    assert p0[0] == pytest.approx(-0.3, abs=1e-6) and v == pytest.approx(0.5, abs=1e-12)


def test_support_sigma_closed_form_and_generic_agree():
    m = pendulum(0.2)
    g = m.as_generic()
    for x, q, a in [(0.1, 1.0, 1.5), (0.4, -0.7, 2.0), (0.5, 0.3, 1.0)]:
        exact = np.sqrt(a - float(m.potential(np.array([x]), W0))) * abs(q) - 0.2 * q
        assert support_sigma(m, x, q, W0, a) == pytest.approx(exact, abs=1e-12)
        # a = V at x = 0.5 collapses the sublevel to a point found to ~sqrt(eps)
        assert support_sigma(g, x, q, W0, a) == pytest.approx(exact, abs=1e-7)


def test_support_sigma_empty_sublevel():
    with pytest.raises(EmptySublevel):
        support_sigma(pendulum(), 0.5, 1.0, W0, 0.5)


def test_kappa_bound_values():
    ball = kappa_bound(pendulum(), 2.0, np.array([[0.0], [0.5]]), W0)
    assert ball.radius == pytest.approx(np.sqrt(2.0), abs=1e-9)
    with pytest.raises(EmptySublevel):
        kappa_bound(pendulum(), -0.1, np.array([[0.0]]), W0)


def test_legendre_closed_form_and_numeric():
    m = pendulum(0.3)
    for x, q in [(0.0, 1.0), (0.3, -2.0), (0.7, 0.0)]:
        V = float(m.potential(np.array([x]), W0))
        exact = q * q / 4 - 0.3 * q - V
        assert legendre(m, x, q, W0) == pytest.approx(exact, abs=1e-12)
        assert legendre(m.as_generic(), x, q, W0) == pytest.approx(exact, abs=1e-8)


@settings(max_examples=60, deadline=None)
@given(xs, qs, qs, st.floats(0, 1))
def test_sigma_convex_in_q(x, q1, q2, t):
    m = pendulum(0.4)
    a = 1.7
    lhs = support_sigma(m, x, t * q1 + (1 - t) * q2, W0, a)
    rhs = t * support_sigma(m, x, q1, W0, a) + (1 - t) * support_sigma(m, x, q2, W0, a)
    assert lhs <= rhs + 1e-12


@settings(max_examples=60, deadline=None)
@given(xs, qs, st.floats(0, 10))
def test_sigma_positively_homogeneous(x, q, lam):
    m = pendulum(-0.25)
    assert support_sigma(m, x, lam * q, W0, 1.3) == pytest.approx(
        lam * support_sigma(m, x, q, W0, 1.3), abs=1e-10)


@settings(max_examples=60, deadline=None)
@given(xs, qs, st.floats(-3, 3))
def test_fenchel_young(x, q, p):
    m = pendulum(0.1)
    # L(x, q) + H(x, p) >= <p, q> with equality at p = q / 2 - s
    assert legendre(m, x, q, W0) + eval_H(m, x, p, W0) >= p * q - 1e-12
    p_star = q / 2 - 0.1
    assert legendre(m, x, q, W0) + eval_H(m, x, p_star, W0) == pytest.approx(p_star * q, abs=1e-10)


@settings(max_examples=40, deadline=None)
@given(xs, qs, st.floats(1.0, 3.0), st.floats(0.0, 2.0))
def test_sigma_monotone_in_level(x, q, a, da):
    m = pendulum()
    assert support_sigma(m, x, q, W0, a) <= support_sigma(m, x, q, W0, a + da) + 1e-12


def test_sigma_dominates_action():
    # sigma_a(q) = min over t > 0 of t (L(q/t) + a), checked on a grid of t
    m = pendulum(0.2)
    x, q, a = 0.3, 0.8, 1.4
    t = np.linspace(0.05, 5, 4000)
    act = t * np.array([legendre(m, x, q / s, W0) for s in t]) + a * t
    assert support_sigma(m, x, q, W0, a) == pytest.approx(act.min(), abs=1e-4)
    assert support_sigma(m, x, q, W0, a) <= act.min() + 1e-12


def test_anisotropic_generic_model_2d():
    A = [[2.0, 0.5], [0.5, 1.0]]
    m = _anisotropic(A, [0.1, -0.2], separable_pendulum_potential((1.0, 0.5)))
    # support of an ellipse {q^T A q <= r^2} shifted by -s: r |q|_{A^-1} - <s, q>
    x, q, a = np.array([0.2, 0.7]), np.array([0.6, -0.4]), 2.5
    V = float(m.potential(x, W00))
    Ainv = np.linalg.inv(np.array(A))
    exact = np.sqrt(a - V) * np.sqrt(q @ Ainv @ q) - np.array([0.1, -0.2]) @ q
    # 64 rays inscribe a polygon in the ellipse
    assert support_sigma(m, x, q, W00, a) == pytest.approx(exact, rel=5e-3)
    assert support_sigma(m, x, q, W00, a) <= exact + 1e-12
    with pytest.raises(ValueError):
        _anisotropic([[1.0, 0.0], [0.0, -1.0]], [0, 0], zero_potential(2))


def test_envelopes_bracket_H():
    m = eikonal(pendulum_potential(), 0.5)
    p = np.linspace(-5, 5, 201)
    H = m(np.zeros((201, 1)), p[:, None], W0)
    assert np.all(m.alpha(np.abs(p)) <= H + 1e-12)
    assert np.all(H <= m.beta(np.abs(p)) + 1e-12)


def test_shifted_and_reversed():
    m = pendulum(0.1)
    x, p = np.array([0.2]), np.array([0.7])
    assert eval_H(m.shifted([0.4]), x, p, W0) == pytest.approx(eval_H(m, x, p + 0.4, W0))
    assert eval_H(m.reversed(), x, p, W0) == pytest.approx(eval_H(m, x, -p, W0))
    g = m.as_generic()
    assert eval_H(g.shifted([0.4]), x, p, W0) == pytest.approx(eval_H(m, x, p + 0.4, W0))
    assert eval_H(g.reversed(), x, p, W0) == pytest.approx(eval_H(m, x, -p, W0))


def test_model_roundtrip():
    sp = TorusSpace(generate_frequencies(2))
    series = APSeriesModel(sp, (APTerm(0.5, 0, 0.0), APTerm(0.25, 1, 0.3)), 1.0)
    for m in (pendulum(0.3), eikonal(Potential.from_series(series)),
              eikonal(zero_potential(2)),
              _anisotropic([[1.0, 0.0], [0.0, 2.0]], [0.0, 0.1], separable_pendulum_potential()),
              eikonal(pendulum_potential().negated())):
        again = model_from_dict(m.to_dict())
        assert again.to_dict() == m.to_dict()
        x = np.full(m.dim, 0.37)
        p = np.full(m.dim, -0.4)
        w = EnvPoint(tuple([0.1] * (m.potential.space.dim if m.potential.space else m.dim)))
        assert eval_H(again, x, p, w) == eval_H(m, x, p, w)


def test_generic_has_no_description():
    with pytest.raises(ValueError):
        pendulum().as_generic().to_dict()
