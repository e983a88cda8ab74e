import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from alugrid.adapt import adapt_callback
from alugrid.fv.driver import RunConfig, _uniform_refine, mass_drift, run
from alugrid.fv.flux import InvalidState, euler_flux, hllc_flux, pressure, primitive_to_conservative, upwind_flux
from alugrid.fv.marking import ball_center, ball_indicator, ball_indicator_array, jump_indicator, jump_mark
from alugrid.fv.problems import PROBLEMS, get_problem, registry_table
from alugrid.fv.scheme import EulerModel, FVScheme, TimestepCollapse, TransportModel
from alugrid.io.factory import structured_grid
from alugrid.partition import LBConfig

import riemann_exact

state = st.tuples(st.floats(0.1, 10), st.floats(-3, 3), st.floats(-3, 3), st.floats(0.1, 10))
angle = st.floats(0, 2 * math.pi)


def _cons(s):
    rho, u, v, p = s
    return primitive_to_conservative(np.array([rho]), np.array([[u, v]]), np.array([p]))


def _n(a):
    return np.array([[math.cos(a), math.sin(a)]])


@settings(max_examples=200, deadline=None)
@given(state, angle, st.floats(0.1, 3))
def test_hllc_consistency(s, a, area):
    U = _cons(s)
    F = hllc_flux(U, U, _n(a), area)
    assert np.allclose(F, area * euler_flux(U, _n(a)), rtol=1e-12, atol=1e-12)


@settings(max_examples=200, deadline=None)
@given(state, state, angle)
def test_hllc_antisymmetric(a, b, ang):
    UL, UR = _cons(a), _cons(b)
    n = _n(ang)
    assert np.allclose(hllc_flux(UL, UR, n), -hllc_flux(UR, UL, -n), rtol=1e-11, atol=1e-11)


def test_hllc_supersonic_upwinds():
    UL = _cons((1.0, 5.0, 0.0, 1.0))
    UR = _cons((0.5, 5.0, 0.0, 0.8))
    n = np.array([[1.0, 0.0]])
    assert np.allclose(hllc_flux(UL, UR, n), euler_flux(UL, n))


def test_hllc_rejects_invalid():
    U = _cons((1.0, 0.0, 0.0, 1.0))
    bad = U.copy()
    bad[0, 0] = -1.0
    with pytest.raises(InvalidState):
        hllc_flux(U, bad, np.array([[1.0, 0.0]]))


def test_pressure_roundtrip():
    U = _cons((1.4, 0.3, -0.2, 2.5))
    assert math.isclose(float(pressure(U)[0]), 2.5)


def test_upwind_examples():
    uL, uR = np.array([[2.0]]), np.array([[5.0]])
    vel = (1.25, 1.25)
    # a.n = 1.25 > 0: the left value is transported
    assert upwind_flux(uL, uR, np.array([[1.0, 0.0]]), np.array([0.5]), vel)[0, 0] == 1.25
    # a.n = -1.25: the right value comes in
    assert upwind_flux(uL, uR, np.array([[-1.0, 0.0]]), np.array([0.5]), vel)[0, 0] == -3.125


def test_ball_examples():
    assert ball_center(0.0) == pytest.approx((0.5 + 1 / 3, 0.5, 0.5))
    assert ball_center(0.25) == pytest.approx((0.5, 0.5 + 1 / 3, 0.5))
    c = ball_center(0.0)
    assert ball_indicator((c[0] + 0.2, c[1]), 0.0) == 1
    assert ball_indicator((c[0], c[1]), 0.0) == 0
    assert ball_indicator((c[0] + 0.3, c[1]), 0.0) == 0
    assert ball_indicator((c[0], c[1], 0.5 + 0.2), 0.0) == 1
    pts = np.array([[c[0] + 0.2, c[1]], [c[0], c[1]], [0.0, 0.0]])
    assert ball_indicator_array(pts, 0.0).tolist() == [1, 0, 0]


def test_jump_mark_example():
    g = structured_grid([0, 0], [2, 1], [2, 1], max_level=2)
    u = np.array([[0.0], [1.0]])
    assert jump_indicator(g, u).tolist() == [1.0, 1.0]
    assert jump_mark(g, u, 0.5, 0.1) == (2, 0)
    assert [e.mark for e in g.leaves] == [1, 1]
    with pytest.raises(ValueError):
        jump_mark(g, u, 0.1, 0.5)


def test_relative_jump():
    g = structured_grid([0, 0], [2, 1], [2, 1])
    u = np.array([[1.0], [1.25]])
    assert jump_indicator(g, u, relative=True).tolist() == [0.2, 0.2]


def _step_constant(model, value, steps=5, cells=(4, 4)):
    g = structured_grid([0, 0], [1, 1], cells, max_level=2)
    for e in g.leaves[:5]:
        g.mark(e, 1)
    adapt_callback(g)
    s = FVScheme(g, model)
    s.project(lambda x: np.tile(value, (len(x), 1)))
    for _ in range(steps):
        s.step()
    return s.dense()


def test_transport_preserves_constant():
    u = _step_constant(TransportModel(2, inflow=3.0), np.array([3.0]))
    assert np.allclose(u, 3.0, rtol=0, atol=1e-13)


def test_euler_preserves_constant():
    U = _cons((1.2, 0.4, -0.3, 0.9))[0]
    u = _step_constant(EulerModel(2), U)
    assert np.allclose(u, U, rtol=0, atol=1e-12)


def test_closed_box_conserves_mass():
    def walls(cell, face):
        return 2

    g = structured_grid([0, 0], [1, 1], [6, 6], boundary_id=walls)
    s = FVScheme(g, EulerModel(2))
    s.project(lambda x: primitive_to_conservative(1 + (x[:, 0] < 0.5), np.zeros_like(x), 1 + (x[:, 1] < 0.4)))
    m0 = s.total_mass()
    for _ in range(20):
        s.step()
    m = s.total_mass()
    assert abs(m[0] - m0[0]) < 1e-13 and abs(m[3] - m0[3]) < 1e-12


def test_timestep_collapse():
    g = structured_grid([0, 0], [1, 1], [2, 2])
    s = FVScheme(g, TransportModel(2, velocity=(0.0, 0.0)))
    with pytest.raises(TimestepCollapse, match="timestep collapse"):
        s.step()


def test_registry():
    assert set(PROBLEMS) == {"transport", "euler", "ball"}
    for kind, probs in PROBLEMS.items():
        for nr, p in probs.items():
            assert p.macro_count <= 4096
            assert p.name in registry_table(kind)
    with pytest.raises(KeyError, match="unknown problem"):
        get_problem("euler", 42)


def _sod_error(level):
    cfg = RunConfig("euler", 0, level, level, adapt=False, lb_config=LBConfig(), final_time=0.2)
    res = run(cfg)
    g = get_problem("euler", 0).make_grid(max_level=level)
    _uniform_refine(g, level)
    err = 0.0
    for e in g.leaves:
        u = res.fields[e.global_id]
        err += abs(u[0] - riemann_exact.sod_density(e.center[0], 0.2)) * e.volume
    return err / 0.125


def test_sod_converges_coarse():
    e1, e2 = _sod_error(1), _sod_error(2)
    assert e2 < e1 < 0.06


def test_exact_riemann_star_state():
    p, u = riemann_exact.star_state(*riemann_exact.SOD)
    assert p == pytest.approx(0.30313, abs=1e-5)
    assert u == pytest.approx(0.92745, abs=1e-5)


def test_overlap_matches_step():
    base = dict(steps=8, lb_every=2, lb_config=LBConfig())
    a = run(RunConfig("transport", 1, 1, 3, ranks=3, **base))
    b = run(RunConfig("transport", 1, 1, 3, ranks=3, overlap=True, **base))
    assert a.digest() == b.digest()


def test_transport_rank_invariant_small():
    base = dict(steps=10, lb_every=2, lb_config=LBConfig())
    ref = run(RunConfig("transport", 1, 1, 3, ranks=1, **base))
    for p in (2, 5):
        assert run(RunConfig("transport", 1, 1, 3, ranks=p, **base)).digest() == ref.digest()
    assert mass_drift(ref) == 0.0
