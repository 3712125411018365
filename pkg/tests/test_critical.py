import numpy as np
import pytest

from ergohj.env import EnvPoint
from ergohj.hamiltonian import eikonal, pendulum_potential, zero_potential
from ergohj.metricgraph import GraphFactory, GridWindow, detect_negative_cycle
from ergohj.critical import (
    EffectiveTable,
    critical_search,
    effective_hamiltonian,
    effective_table,
    flat_region,
    free_critical_value,
    p_grid,
    stationary_critical_value,
)

W0 = EnvPoint((0.0,))
CELL = GridWindow.cell(1 / 256, stencil="axis")

# energy E with |P| = integral over a period of sqrt(E - V), by quad + brentq
BRANCH = {0.8: 1.191558047682756, 1.0: 1.5318977114311039, 1.2: 1.961911562664953}


def pendulum(shift=0.0):
    return eikonal(pendulum_potential(), shift)


def test_pendulum_critical_values():
    cv = stationary_critical_value(CELL, pendulum(), W0, tol=1e-4)
    assert cv.c == pytest.approx(1.0, abs=1e-4)
    assert cv.c_f == pytest.approx(1.0, abs=1e-4)
    assert cv.to_dict()["window"]["h"] == 1 / 256


def test_shifted_pendulum_separates_c_and_cf():
    # H = |p + 1|^2 + V: c = Hbar(1) on the rising branch, c_f = min Hbar = 1
    cv = stationary_critical_value(CELL, pendulum(1.0), W0, tol=1e-5)
    assert cv.c == pytest.approx(BRANCH[1.0], rel=1e-3)
    assert cv.c_f == pytest.approx(1.0, abs=1e-5)


@pytest.mark.parametrize("P", sorted(BRANCH))
def test_effective_hamiltonian_branch(P):
    assert effective_hamiltonian(CELL, pendulum(), W0, [P], 1e-5) == pytest.approx(
        BRANCH[P], rel=1e-3)
    assert effective_hamiltonian(CELL, pendulum(), W0, [-P], 1e-5) == pytest.approx(
        BRANCH[P], rel=1e-3)


@pytest.mark.parametrize("s,P", [(0.0, 0.5), (0.3, -1.1), (-0.7, 0.2)])
def test_free_particle_exact(s, P):
    win = GridWindow.cell(1 / 16)
    val = effective_hamiltonian(win, eikonal(zero_potential(), s), W0, [P], 1e-6)
    assert val == pytest.approx((s + P) ** 2, abs=1e-6)


def test_shift_identity_through_generic_path():
    win = GridWindow.cell(1 / 64)
    m = pendulum(0.2)
    for P in (0.0, 0.9):
        a = effective_hamiltonian(win, m, W0, [P], 1e-5)
        b = effective_hamiltonian(win, m.shifted([P]).as_generic(), W0, [0.0], 1e-5)
        assert a == pytest.approx(b, abs=2e-5)


def test_search_trace_and_witness():
    fac = GraphFactory(CELL, pendulum(1.0), W0)
    res = critical_search(fac, 1e-4)
    assert res.hi - res.lo <= 1e-4 and res.value == res.hi
    assert res.cycle is not None
    g = fac.graph(res.lo)
    assert detect_negative_cycle(g) is not None
    assert detect_negative_cycle(fac.graph(res.value)) is None
    feas = [a for a, ok in res.trace if ok]
    infeas = [a for a, ok in res.trace if not ok]
    assert max(infeas) < min(feas)


def test_feasible_lower_end_returned_exactly():
    fac = GraphFactory(CELL, pendulum(), W0)
    res = critical_search(fac, 1e-3)
    assert res.value == res.lo == 1.0 and res.cycle is None


def test_search_rejects_bad_tol():
    with pytest.raises(ValueError):
        critical_search(GraphFactory(CELL, pendulum(), W0), 0.0)


def test_effective_needs_periodic():
    with pytest.raises(ValueError):
        effective_hamiltonian(GridWindow.free(1.0, 0.1), pendulum(), W0, [0.0])


def test_free_window_critical_value():
    win = GridWindow.free(1.0, 1 / 64)
    assert free_critical_value(win, pendulum(), W0, 1e-4) == pytest.approx(1.0, abs=1e-4)
    # a window avoiding the maxima at half-integers sees only its own max of V
    win = GridWindow(1, (-0.25,), (0.25,), 1 / 64)
    assert free_critical_value(win, pendulum(), W0, 1e-6) == pytest.approx(0.5, abs=1e-6)


def test_table_convex_even_and_flat():
    P = p_grid(0.1, 1.2)
    tab = effective_table(GridWindow.cell(1 / 128, stencil="axis"), pendulum(), W0, P, 1e-4)
    v = tab.values
    assert np.allclose(v, v[::-1], atol=2e-4)
    assert np.all(np.diff(v, 2) >= -4e-4)
    fr = flat_region(tab, 1e-3)
    assert fr.zero_in_interior
    assert fr.minimum == pytest.approx(1.0, abs=1e-4)
    assert 0.55 < fr.radius < 0.7
    csv = tab.to_csv().splitlines()
    assert csv[0] == "P1,Hbar,tol" and len(csv) == len(P) + 1


def test_flat_region_sparse_table():
    with pytest.raises(ValueError):
        flat_region(EffectiveTable(np.array([[0.0], [0.1]]), np.array([1.0, 1.0]), 1e-3), 1e-3)


def test_flat_region_without_plateau():
    P = p_grid(0.1, 0.5)
    tab = EffectiveTable(P, P[:, 0] ** 2, 1e-6)
    fr = flat_region(tab, 1e-6)
    assert not fr.zero_in_interior and fr.radius == 0.0


def test_p_grid_2d():
    g = p_grid(0.5, 1.0, 2)
    assert g.shape == (25, 2)
    assert [0.0, 0.0] in g.tolist()
