import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from junctionflow import netfv
from junctionflow.errors import DomainError, InvalidParameterError
from junctionflow.germ import GermParams, gamma_point
from junctionflow.harness import (Hat, StudySetup, Window, convergence_study, entropy_check,
                                  entropy_residual, germ_trace_check, hat_lattice, l1_distance,
                                  l1_spacetime, period_average, tv_bound_check)
from junctionflow.micro import LightSchedule
from junctionflow.pwc import PiecewiseConstant

E = PiecewiseConstant.empty()


def pw(edges, values):
    return PiecewiseConstant(np.array(edges, float), np.array(values, float))


def test_l1_examples():
    a = (pw([0, 1], [0.5]), E, E)
    assert l1_distance(a, a) == 0.0
    assert l1_distance(a, (E, E, E)) == 0.5
    b = (E, pw([-1, 0], [0.5]), pw([-2, -1], [0.25]))
    assert l1_distance(b, (E, E, E)) == 0.75
    # the excluded band near the junction is skipped on every branch
    assert l1_distance(b, (E, E, E), exclude=0.5) == pytest.approx(0.5)
    assert l1_distance(b, (E, E, E), exclude=0.5, reach=1.5) == pytest.approx(0.375)
    with pytest.raises(DomainError):
        l1_distance(a, a[:2])


def test_l1_spacetime_unit_cell():
    # 0.5 on a unit cell for unit time
    a = [(pw([0, 1], [0.5]), E, E)] * 2
    z = [(E, E, E)] * 2
    assert l1_spacetime([0, 1], a, z, Window(1.0, 0.0)) == 0.5
    assert l1_spacetime([0, 1], a, a, Window(1.0, 0.0)) == 0.0
    with pytest.raises(DomainError):
        l1_spacetime([0, 1], a, z, times_b=[0, 0.5])
    with pytest.raises(DomainError):
        l1_spacetime([0, 0.5, 1], a, z)


def test_window_validation():
    assert Window(2.0, 0.1, snapshots=5).times()[-1] == 2.0
    for kw in ({"t_end": 0}, {"exclude": 1.0, "reach": 0.5}, {"snapshots": 1}):
        with pytest.raises(InvalidParameterError):
            Window(**kw)


@st.composite
def networks(draw):
    vals = draw(st.lists(st.integers(0, 4), min_size=3, max_size=3))
    lo = draw(st.lists(st.integers(1, 8), min_size=3, max_size=3))
    return (pw([0, lo[0] / 4], [vals[0] / 4]), pw([-lo[1] / 4, 0], [vals[1] / 4]),
            pw([-lo[2] / 4, 0], [vals[2] / 4]))


@settings(max_examples=100, deadline=None)
@given(networks(), networks(), networks())
def test_network_l1_is_a_metric(a, b, c):
    assert l1_distance(a, b) == l1_distance(b, a)
    assert l1_distance(a, c) <= l1_distance(a, b) + l1_distance(b, c) + 1e-12
    assert l1_distance(a, a) == 0.0


def test_hat_lattice():
    hats = hat_lattice((0, 1), (0.25, 2.75), 3, 4)
    assert len(hats) == 12
    assert hats[0].tc - hats[0].tw == 0.0 and hats[-1].xc + hats[-1].xw == pytest.approx(2.75)
    with pytest.raises(InvalidParameterError):
        hat_lattice((1, 0), (0, 1))
    with pytest.raises(InvalidParameterError):
        Hat(0.5, 0.0, 1.0, 0.5)


def _residual_by_quadrature(times, rho, m, k, h, n=400):
    # independent route: midpoint quadrature with the analytic hat derivatives
    total = 0.0
    for j in range(len(times) - 1):
        kinks = [c for c in (h.tc - h.tw, h.tc, h.tc + h.tw) if times[j] < c < times[j + 1]]
        t = np.unique(np.concatenate([np.linspace(times[j], times[j + 1], 41), kinks]))
        tm = 0.5 * (t[1:] + t[:-1])
        dt = np.diff(t)
        lo, hi = h.xc - h.xw, h.xc + h.xw
        jumps = [e for e in rho[j].edges if lo < e < hi]
        x = np.unique(np.concatenate([np.linspace(lo, hi, n + 1), jumps]))
        xm = 0.5 * (x[1:] + x[:-1])
        dx = np.diff(x)
        r = rho[j](xm)
        eta = np.abs(r - k)
        q = np.sign(r - k) * (m.f(r) - m.f(k))
        ht = np.maximum(1 - np.abs(tm - h.tc) / h.tw, 0)
        dht = np.where(np.abs(tm - h.tc) < h.tw, -np.sign(tm - h.tc) / h.tw, 0)
        hx = np.maximum(1 - np.abs(xm - h.xc) / h.xw, 0)
        dhx = -np.sign(xm - h.xc) / h.xw
        total += np.dot(dht, dt) * np.dot(eta * hx, dx) + np.dot(ht, dt) * np.dot(q * dhx, dx)
    return h.weight * total


def test_entropy_residual_matches_quadrature(m):
    times = np.array([0.0, 0.3, 0.6, 1.0])
    rho = [pw([0.2, 0.9, 1.7], [0.3, 0.8]), pw([0.4, 1.1], [0.6]),
           pw([0.1, 1.0, 1.4], [0.9, 0.2]), pw([0.5, 1.5], [0.4])]
    h = Hat(0.5, 0.45, 1.0, 0.7, 2.0)
    for k in (0.1, 0.5, 0.75):
        R, bound = entropy_residual(times, rho, m, k, h, 0.01, 3.0)
        assert R == pytest.approx(_residual_by_quadrature(times, rho, m, k, h), abs=1e-12)
        assert bound == pytest.approx(-0.01 * 3.0 * 2.0 * 0.45 / 0.7)


def test_entropy_residual_is_linear_in_the_test_function(m):
    times = np.linspace(0, 1, 11)
    rho = [pw([0.3 + 0.05 * j, 1.2], [0.7]) for j in range(11)]
    hats = hat_lattice((0, 1), (0.25, 1.75), 2, 3)
    parts = [entropy_residual(times, rho, m, 0.4, h, 0.0, 0.0)[0] for h in hats]
    total, _ = entropy_residual(times, rho, m, 0.4, hats, 0.0, 0.0)
    assert total == pytest.approx(sum(parts), abs=1e-14)
    R2, _ = entropy_residual(times, rho, m, 0.4, hats[0].scaled(3.0), 0.0, 0.0)
    assert R2 == pytest.approx(3 * parts[0], abs=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1))
def test_constant_state_has_zero_residual(c, k):
    from junctionflow.flux import make_quadratic
    m = make_quadratic(1, 1)
    times = np.linspace(0, 1, 5)
    rho = [pw([-5, 5], [c])] * 5
    R, _ = entropy_residual(times, rho, m, k, Hat(0.5, 0.5, 1.0, 0.5), 0.0, 0.0)
    assert R == pytest.approx(0.0, abs=1e-14)


def test_entropy_residual_refusals(m):
    times = [0.0, 1.0]
    rho = [E, E]
    with pytest.raises(DomainError, match="junction"):
        entropy_residual(times, rho, m, 0.5, Hat(0.5, 0.5, 0.2, 0.3), 0.0, 0.0)
    with pytest.raises(DomainError, match="time span"):
        entropy_residual(times, rho, m, 0.5, Hat(0.8, 0.5, 1.0, 0.3), 0.0, 0.0)
    with pytest.raises(InvalidParameterError):
        entropy_residual(times, rho, m, 0.5, [], 0.0, 0.0)


def test_godunov_solution_is_nearly_entropic(m, half):
    # a Riemann fan on road 0 computed by the scheme
    grid = netfv.make_grid(m, [[(0, 1, 0.9), (1, 3, 0.1)], [], []], 0.005, 3.0)
    times = np.linspace(0, 1, 101)
    sol = netfv.solve(m, grid, netfv.Homogenized(half), 1.0, times)
    rho = [d[0] for d in sol.densities()]
    rep = entropy_check(times, rho, m, 0.0, 0.0, hat_lattice((0, 1), (0.25, 2.75), 4, 4), slack=0.0)
    assert rep.worst_margin >= -2e-3


def test_entropy_check_flags_a_rarefaction_shock(m):
    # a standing downward jump with equal fluxes on both sides is not entropic
    times = np.linspace(0, 1, 201)
    rho = [pw([0.25, 1.0, 2.75], [0.9, 0.1]) for _ in times]
    rep = entropy_check(times, rho, m, 0.0, 0.0, [Hat(0.5, 0.4, 1.0, 0.5)], ks=(0.5,), slack=0.0)
    assert not rep.all_pass and rep.worst_margin < -1e-3


def test_tv_checks(m):
    t = [0, 0.5, 1]
    assert tv_bound_check(t, [2.0, 1.5, 1.0], "free-line", m).passed
    rep = tv_bound_check(t, [2.0, 1.5, 1.6], "free-line", m)
    assert not rep.passed and rep.worst_excess == pytest.approx(0.1)
    assert tv_bound_check(t, [1.0, 4.9, 5.0], "stopped-line", m).passed
    assert not tv_bound_check(t, [1.0, 5.2, 5.0], "stopped-line", m).passed
    rep = tv_bound_check(t, [1.0, 2.0, 3.0], "whole-system", m, epsilon=0.01, light=LightSchedule(10, 5))
    assert rep.scale == pytest.approx(21.0) and rep.ratio == pytest.approx(3 / 21)
    with pytest.raises(InvalidParameterError):
        tv_bound_check(t, [1, 1, 1], "whole-system", m)
    with pytest.raises(InvalidParameterError):
        tv_bound_check(t, [1, 1, 1], "bogus", m)
    with pytest.raises(DomainError):
        tv_bound_check(t, [1, 1], "free-line", m)


def _trace(points, t):
    p = np.asarray(points, float)
    z = np.zeros(len(t))
    return netfv.JunctionTrace(np.asarray(t, float), p[:, 0], p[:, 1], p[:, 2], z, z, z)


def test_germ_trace_check(m, half):
    t = np.linspace(0, 1, 11)
    P = gamma_point(m, half, 0.1)
    good = germ_trace_check(_trace([P] * 11, t), m, half)
    assert good.pass_fraction == 1.0 and good.samples == 9
    # flux balance violated at every sample
    bad = germ_trace_check(_trace([(0.5, 0.5, 0.5)] * 11, t), m, half)
    assert bad.pass_fraction == 0.0
    assert bad.constraint_failures["rankine_hugoniot"] == 9
    with pytest.raises(DomainError):
        germ_trace_check(_trace([P] * 11, t), m, half, burn_in=2.0)


def test_period_average():
    t = np.array([0, 0.5, 1.0, 1.5])
    tr = _trace([(0, 0, 0), (1, 1, 1), (0.2, 0, 0), (0.4, 0, 0)], t)
    avg = period_average(tr, 1.0, 2.0)
    np.testing.assert_allclose(avg, [[0.5, 0.5, 0.5], [0.3, 0, 0]])


def _setup(**kw):
    base = dict(flux={"kind": "quadratic", "A": 1.0, "B": 1.0},
                profiles=([], [(-1, 0, 0.6)], [(-1, 0, 0.3)]), theta=0.5,
                window=Window(0.3, 0.05, 2.0, 7), dx=0.02, L=2.0, period=0.1)
    base.update(kw)
    return StudySetup(**base)


def test_identical_models_agree():
    rep = convergence_study(_setup(), ("homog", "homog"), "period", [0.2, 0.1])
    assert np.all(rep.errors == 0.0)
    assert rep.to_dict()["rows"][0].keys() >= {"epsilon", "period", "N", "l1_error"}
    assert "runtime" not in rep.to_dict()["rows"][0]


def test_meso_approaches_homog():
    rep = convergence_study(_setup(dx=0.005), ("meso", "homog"), "period", [0.2, 0.1, 0.05])
    assert rep.decreasing() and rep.ratio < 1


def test_study_validation():
    s = _setup()
    with pytest.raises(InvalidParameterError, match="strictly decreasing"):
        convergence_study(s, ("meso", "homog"), "period", [0.1, 0.2])
    with pytest.raises(InvalidParameterError):
        convergence_study(s, ("meso", "homog"), "bogus", [0.1])
    with pytest.raises(InvalidParameterError):
        convergence_study(s, ("meso", "nope"), "period", [0.1])
    with pytest.raises(InvalidParameterError):
        convergence_study(s, ("micro", "homog"), "period", [0.1])


def test_light_period_law():
    assert _setup(alpha=0.75).light_period(0.0001) == pytest.approx(0.1)
    with pytest.raises(InvalidParameterError):
        _setup(period=None).light_period(0.1)
    assert math.isclose(_setup().light_period(None), 0.1)
