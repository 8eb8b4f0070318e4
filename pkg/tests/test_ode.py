import math

import mpmath
import numpy as np
import pytest
from hypothesis import assume, given, strategies as st
from scipy.integrate._ivp import rk as scipy_rk

from blowup_lab import nonlinearity as nl
from blowup_lab import ode
from oracles import exact_blowup_time


def test_tableau_matches_scipy():
    assert np.array_equal(ode.C, scipy_rk.RK45.C)
    assert np.array_equal(ode.A, scipy_rk.RK45.A)
    assert np.array_equal(ode.B, scipy_rk.RK45.B)
    assert np.array_equal(ode.E, scipy_rk.RK45.E)
    assert np.array_equal(ode.P, scipy_rk.RK45.P)


def test_single_step_matches_scipy_rk_step():
    f = lambda t, y: np.array([y[0] ** 2 - 0.5 * y[0] / t])
    K = np.empty((7, 1))
    y_ref, _ = scipy_rk.rk_step(f, 1.0, np.array([1.0]), f(1.0, np.array([1.0])), 0.01,
                                scipy_rk.RK45.A, scipy_rk.RK45.B, scipy_rk.RK45.C, K)
    y_new, stages, err = ode.dp45_step(lambda t, y: y * y - 0.5 * y / t, 1.0, 1.0, 0.01, 0.5)
    assert y_new == pytest.approx(y_ref[0], rel=1e-15)
    assert err == pytest.approx(0.01 * (K.T @ scipy_rk.RK45.E)[0], rel=1e-10, abs=1e-20)


@pytest.mark.parametrize("p,alpha,n,t0,x0", [
    (2.0, 2.0, 1, 1.0, 1.0),
    (2.0, 1.0, 1, 10.0, 0.5),
    (2.5, 2.0, 1, 1.0, 3.0),
    (1.5, 0.5, 1, 100.0, 0.1),
    (3.0, 2.0, 2, 1.0, 5.0),
])
def test_blowup_time_against_exact_solution(p, alpha, n, t0, x0):
    want = exact_blowup_time(p, alpha, n, t0, x0)
    tr = ode.integrate(ode.OdeProblem(nl.PowerLaw(p), alpha, n, t0, x0))
    assert tr.verdict.is_blowup
    assert tr.verdict.t_star == pytest.approx(want, rel=1e-8)


def test_u_squared_reference_case():
    tr = ode.integrate(ode.OdeProblem(nl.PowerLaw(2.0), 2.0, 1, 1.0, 1.0))
    assert tr.verdict.t_star == pytest.approx(2.25, rel=1e-9)
    assert exact_blowup_time(2.0, 2.0, 1, 1.0, 1.0) == pytest.approx(2.25, rel=1e-15)


def test_small_data_supercritical_is_global():
    assert exact_blowup_time(4.0, 2.0, 1, 1.0, 0.1) == math.inf
    tr = ode.integrate(ode.OdeProblem(nl.PowerLaw(4.0), 2.0, 1, 1.0, 0.1))
    assert tr.verdict.is_global
    assert tr.verdict.decay_exponent == pytest.approx(0.5, abs=0.01)


def test_certificate_refuses_premature_global():
    # decays until t ~ 1e12 but blows up near 2.2e16
    t_star = exact_blowup_time(3.25, 2.0, 1, 10.0, 0.1)
    assert 1e16 < t_star < 1e17
    tr = ode.integrate(ode.OdeProblem(nl.PowerLaw(3.25), 2.0, 1, 10.0, 0.1))
    assert not tr.verdict.is_global


def test_dense_output_matches_exact_solution():
    # p = 2, alpha = 2, n = 1: x = 1 / (C t^(1/2) - 2 t) with C = 3
    tr = ode.integrate(ode.OdeProblem(nl.PowerLaw(2.0), 2.0, 1, 1.0, 1.0))
    t = np.linspace(1.0, 2.0, 57)
    exact = 1.0 / (3.0 * np.sqrt(t) - 2.0 * t)
    assert np.allclose(tr.dense(t), exact, rtol=1e-8)


@pytest.mark.parametrize("p,x0", [(4.0, 0.1), (3.5, 0.2), (5.0, 0.3)])
def test_volterra_residual_global(p, x0):
    assert exact_blowup_time(p, 2.0, 1, 1.0, x0) == math.inf
    tr = ode.integrate(ode.OdeProblem(nl.PowerLaw(p), 2.0, 1, 1.0, x0))
    assert tr.verdict.is_global
    assert ode.volterra_residual(tr)["max_residual"] <= 1e-6


def test_volterra_residual_blowup_run():
    tr = ode.integrate(ode.OdeProblem(nl.PowerLaw(2.0), 2.0, 1, 1.0, 1.0))
    res = ode.volterra_residual(tr)
    assert res["max_residual"] <= 1e-6 and res["excluded"] > 0


def test_y_coordinate_monotone_and_bounded_when_global():
    tr = ode.integrate_y(ode.OdeProblem(nl.PowerLaw(4.0), 2.0, 1, 1.0, 0.1))
    assert tr.verdict.is_global
    y = tr.values
    assert np.all(np.diff(y) >= 0)
    # the increments die out: y converges to a finite limit
    assert y[-1] - y[len(y) // 2] <= 1e-3 * y[-1]
    assert np.allclose(tr.x_values(), tr.values * tr.times ** -0.5)


def test_y_coordinate_agrees_on_blowup_time():
    a = ode.integrate(ode.OdeProblem(nl.PowerLaw(2.0), 2.0, 1, 1.0, 1.0))
    b = ode.integrate_y(ode.OdeProblem(nl.PowerLaw(2.0), 2.0, 1, 1.0, 1.0))
    assert a.verdict.t_star == pytest.approx(b.verdict.t_star, rel=1e-8)


@given(st.floats(min_value=3.2, max_value=6.0), st.floats(min_value=0.01, max_value=0.3))
def test_no_return_after_decrease_on_global_trajectories(p, x0):
    assume(exact_blowup_time(p, 2.0, 1, 1.0, x0) == math.inf)
    tr = ode.integrate(ode.OdeProblem(nl.PowerLaw(p), 2.0, 1, 1.0, x0), ode.OdeBudget(t_max=1e6))
    assert ode.no_return_ok(tr)


def test_decrease_can_turn_into_blowup():
    # every critical point of x is a minimum, so a dip does not rule out blow-up
    tr = ode.integrate(ode.OdeProblem(nl.PowerLaw(2.0), 2.0, 1, 1.0, 0.25))
    x = tr.x_values()
    assert x[1] < x[0]
    assert tr.verdict.is_blowup
    assert tr.verdict.t_star == pytest.approx(exact_blowup_time(2.0, 2.0, 1, 1.0, 0.25), rel=1e-3)
    assert not ode.no_return_ok(tr)


@given(st.floats(min_value=1.5, max_value=5.0), st.floats(min_value=0.05, max_value=20.0))
def test_rise_is_permanent(p, x0):
    tr = ode.integrate(ode.OdeProblem(nl.PowerLaw(p), 2.0, 1, 1.0, x0), ode.OdeBudget(t_max=1e6))
    d = np.diff(tr.x_values())
    up = np.flatnonzero(d > 0)
    if up.size:
        assert np.all(d[up[0]:] > 0)


def test_sample_validation():
    with pytest.raises(ValueError):
        ode.Sample(x0=(1.0, 10.0), t0=(1.0, 100.0)).validate()
    with pytest.raises(ValueError):
        ode.Sample(t0=(1.0, 10.0)).validate()
    ode.Sample().validate()


def test_problem_validation():
    with pytest.raises(ValueError):
        ode.OdeProblem(nl.PowerLaw(2.0), 2.0, 1, 0.0, 1.0)
    with pytest.raises(ValueError):
        ode.OdeProblem(nl.PowerLaw(2.0), 2.0, 1, 1.0, -1.0)


def test_blowup_property_subcritical_and_supercritical():
    v, cells = ode.ode_blowup_property(nl.PowerLaw(2.5), 2.0, 1, jobs=1)
    assert v.is_blowup and len(cells) == 15
    v, cells = ode.ode_blowup_property(nl.PowerLaw(3.25), 2.0, 1, jobs=2)
    assert v.is_global
    assert any(c.is_global for _, _, c in cells)


def test_blowup_fit_recovers_exponent():
    t_star = 3.0
    t = 3.0 - np.geomspace(1e-1, 1e-7, 40)
    x = 2.0 * (t_star - t) ** -1.5
    fit = ode.fit_blowup(t[0], t - t[0], x)
    assert fit.t_star == pytest.approx(t_star, rel=1e-9)
    assert fit.gamma == pytest.approx(1.5, rel=1e-6)


def test_trace_csv(tmp_path):
    tr = ode.integrate(ode.OdeProblem(nl.PowerLaw(2.0), 2.0, 1, 1.0, 1.0))
    path = tmp_path / "trace.csv"
    tr.write_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,x,step,order"
    assert len(lines) == len(tr.times) + 1
