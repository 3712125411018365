import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ergohj.corrector import lax_extension
from ergohj.env import APSeriesModel, APTerm, TorusSpace, generate_frequencies
from ergohj.hamiltonian import Potential, eikonal, pendulum_potential
from ergohj.metricgraph import GridWindow, build_graph
from ergohj.stats import (
    Estimate,
    RandomSetSampler,
    agree_within,
    ky_fan_distance,
    ky_fan_from_sample,
    spread_check,
    stationarity_shift_check,
    sublinearity_check,
    volume_fraction,
)

SP = TorusSpace(generate_frequencies(2))
F1 = APSeriesModel(SP, (APTerm(1.0, 0, 0.0),))
F2 = APSeriesModel(SP, (APTerm(1.0, 0, 0.0), APTerm(1.0, 1, 0.0)))
W = SP.origin()


@pytest.mark.parametrize("lower,exact", [(0.0, 0.5), (0.5, 1 / 3)])
def test_volume_fraction_closed_forms(lower, exact):
    s = RandomSetSampler(F1, SP, lower)
    a = volume_fraction(s, "spatial", omega=W, radius=200, h=0.01)
    b = volume_fraction(s, "probabilistic", m=2000, seed=2)
    assert abs(a.value - exact) < 5 * a.stderr + 1e-3
    assert abs(b.value - exact) < 4 * b.stderr
    assert agree_within(a, b)
    assert a.to_dict()["mode"] == "spatial"


def test_volume_fraction_errors():
    s = RandomSetSampler(F1, SP, 0.0)
    with pytest.raises(ValueError):
        volume_fraction(s, "spatial", omega=W)
    with pytest.raises(ValueError):
        volume_fraction(s, "probabilistic", m=1)
    with pytest.raises(ValueError):
        volume_fraction(s, "magic")


def test_agree_within():
    assert agree_within(Estimate(0.5, 0.0), Estimate(0.5, 0.0))
    assert not agree_within(Estimate(0.5, 0.01), Estimate(0.6, 0.01))
    assert agree_within(Estimate(0.5, 0.01), Estimate(0.53, 0.01))


def test_spread_check_periodic_set():
    # {cos 2 pi sqrt2 x >= 0}: gaps have length 1 / (2 sqrt 2)
    res = spread_check(RandomSetSampler(F1, SP, 0.0), W, 0.0,
                       R_grid=[0.05, 0.1, 0.2, 0.3], r_grid=[5.0, 20.0], h=0.002)
    assert res.R_eps == 0.2 and not res.flagged
    assert np.all(np.diff(res.coverage[:, -1]) >= 0)


def test_spread_check_flags_and_empty():
    res = spread_check(RandomSetSampler(F1, SP, 0.0), W, 0.0, [0.01], [5.0], h=0.002)
    assert res.flagged and res.R_eps is None
    with pytest.raises(ValueError):
        spread_check(RandomSetSampler(F1, SP, 2.0), W, 0.0, [0.1], [1.0])


def test_ky_fan_closed_forms():
    rng = np.random.default_rng(0)
    assert ky_fan_from_sample(np.zeros(50)) == 0.0
    assert ky_fan_from_sample(np.full(50, 0.3)) == pytest.approx(0.3)
    assert ky_fan_from_sample(np.full(50, 7.0)) == 1.0
    d = (rng.random(4000) < 0.5).astype(float)
    assert ky_fan_from_sample(d) == pytest.approx(0.5, abs=0.05)
    with pytest.raises(ValueError):
        ky_fan_from_sample([])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 2, allow_nan=False), min_size=1, max_size=60))
def test_ky_fan_is_the_smallest_valid_eps(d):
    d = np.asarray(d)
    eps = ky_fan_from_sample(d)
    assert np.mean(d > eps) <= eps + 1e-12
    for e in np.linspace(0, eps, 20)[:-1] if eps > 0 else []:
        assert np.mean(d > e) > e


def test_ky_fan_distance_on_fields():
    pts = np.linspace(-5, 5, 101)[:, None]
    f = lambda x, w: F1(x, w)
    assert ky_fan_distance(f, f, SP, pts, m=50) == 0.0
    g = lambda x, w: F1(x, w) + 0.3
    assert ky_fan_distance(f, g, SP, pts, m=50) == pytest.approx(0.3)
    # differ by 1 exactly when the first torus coordinate is below 1/2
    h = lambda x, w: F1(x, w) + float(w.coords[0] < 0.5)
    assert ky_fan_distance(f, h, SP, pts, m=2000, seed=3) == pytest.approx(0.5, abs=0.05)
    with pytest.raises(ValueError):
        ky_fan_distance(f, g, SP, pts, m=5)


def test_sublinearity_bounded_vs_linear():
    m = eikonal(pendulum_potential())
    w0 = pendulum_potential().space.origin()
    bounded, linear = [], []
    for R in (1.0, 4.0, 16.0):
        win = GridWindow.free(R, 1 / 16)
        tops = np.nonzero(np.isclose(np.mod(win.points[:, 0], 1.0), 0.5))[0]
        v = lax_extension(tops, 0.0, 1.0, win, m, w0).values
        bounded.append((win, v))
        linear.append((win, 0.3 * win.points[:, 0]))
    prof = sublinearity_check(bounded)
    assert prof.passes and not prof.flagged
    assert prof.R.tolist() == [1.0, 4.0, 16.0]
    lin = sublinearity_check(linear)
    assert lin.flagged and np.allclose(lin.ratio, 0.3)


def test_stationarity_shift_check_fields_and_sets():
    series = APSeriesModel(SP, (APTerm(0.5, 0, 0.1), APTerm(0.3, 1, 0.7)), 1.0)
    m = eikonal(Potential.from_series(series))
    win = GridWindow.free(1.0, 1 / 32)

    def field(window, omega):
        g = build_graph(window, m, omega, 2.0)
        return lax_extension([0], 0.0, graph=g).values

    def aset(window, omega):
        return series(window.points, omega) >= 1.0

    rep = stationarity_shift_check(field, win, W, SP, [[1.0], [-3.0], [2.5]])
    assert not rep.flagged and rep.max_discrepancy <= 1e-9
    rep = stationarity_shift_check(aset, win, W, SP, [[1.0], [7.25]], kind="set")
    assert rep.max_discrepancy == 0.0
    with pytest.raises(ValueError):
        stationarity_shift_check(field, win, W, SP, [[0.01]])
    with pytest.raises(ValueError):
        stationarity_shift_check(field, win, W, SP, [[1.0]], kind="other")
