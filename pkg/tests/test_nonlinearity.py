import json
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from blowup_lab import errors
from blowup_lab import nonlinearity as nl

CELLS = [(2.0, 1), (1.0, 1), (1.0, 2), (0.5, 1)]


def test_critical_exponent():
    assert nl.CriticalExponent(2.0, 1).p_alpha == 3.0
    assert nl.p_alpha(0.5, 2) == 1.25
    with pytest.raises(ValueError):
        nl.CriticalExponent(2.5, 1)
    with pytest.raises(ValueError):
        nl.CriticalExponent(1.0, 0)


@given(st.floats(min_value=1.01, max_value=6.0), st.floats(min_value=-700.0, max_value=6.0))
def test_power_law_log_eval(p, log_u):
    f = nl.PowerLaw(p)
    assert f.eval_log(log_u) == pytest.approx(p * log_u, rel=1e-15, abs=1e-300)
    assert f.eval_log_scaled(log_u, 3.0) == pytest.approx((p - 3.0) * log_u, rel=1e-12, abs=1e-12)


def test_evaluate_rejects_negative():
    with pytest.raises(errors.NegativeInput):
        nl.evaluate(nl.PowerLaw(2.0), -1e-3)


def test_eval_log_survives_extreme_underflow():
    f = nl.PowerLaw(2.0)
    assert nl.eval_log(f, -1e300) == -2e300


@given(st.floats(min_value=1e-3, max_value=3.0), st.floats(min_value=0.0, max_value=0.3))
def test_power_flow_solves_the_ode(u0, t):
    f = nl.PowerLaw(3.0)
    with mpmath.workdps(40):
        sol = mpmath.odefun(lambda s, v: v ** 3, 0, mpmath.mpf(u0))
        blow = 1 / (2 * mpmath.mpf(u0) ** 2)
        got = float(f.flow(np.array([u0]), t)[0])
        if t < 0.999 * blow:
            assert got == pytest.approx(float(sol(t)), rel=1e-12)
        elif t > blow:
            assert got == np.inf


def test_linear_flow():
    f = nl.Linear(0.7)
    assert f.flow(np.array([2.0]), 1.5)[0] == pytest.approx(2.0 * math.exp(1.05), rel=1e-15)


def test_log_corrected_definition(mp200):
    f = nl.LogCorrected(2.0, 1, 1.0)
    u = mpmath.mpf("1e-5")
    want = 3 * mpmath.log(u) - mpmath.log(mpmath.log(1 / u))
    assert f.eval_log(math.log(1e-5)) == pytest.approx(float(want), rel=1e-13)


def test_log_corrected_extension_is_c1():
    f = nl.LogCorrected(1.0, 1, 0.5, c0=0.01)
    h = 1e-7
    lo = f.evaluate(np.array([0.01 - h, 0.01]))
    hi = f.evaluate(np.array([0.01, 0.01 + h]))
    assert (lo[1] - lo[0]) / h == pytest.approx((hi[1] - hi[0]) / h, rel=1e-4)


def test_custom_interpolates_in_log_space():
    f = nl.Custom((-2.0, 0.0, 1.0), (-6.0, 0.0, 2.0))
    assert f.eval_log(-1.0) == pytest.approx(-3.0)
    assert f.eval_log(-10.0) == pytest.approx(-30.0)
    with pytest.raises(ValueError):
        nl.Custom((0.0, -1.0), (0.0, 1.0))


@pytest.mark.parametrize("f", [nl.PowerLaw(2.5), nl.Linear(1.0), nl.LogCorrected(2.0, 1, 1.5),
                               nl.Custom((-3.0, 0.0), (-9.0, 0.0))])
def test_json_round_trip(f):
    g = nl.from_json(json.loads(f.dumps()))
    u = np.array([1e-4, 0.3, 2.0])
    assert np.allclose(g.evaluate(u), f.evaluate(u), rtol=1e-15)


def test_ell_power_law():
    assert nl.ell(nl.PowerLaw(3.0), 2.0) == pytest.approx(4.0, rel=1e-14)
    # brute-force supremum without the convexity shortcut
    assert nl.ell(nl.PowerLaw(3.0), 2.0, convex=False) == pytest.approx(4.0, rel=1e-12)


def test_lower_integral_closed_form():
    # f = u^4, alpha = 2, n = 1: integrand u^4 / u^4 = 1
    assert nl.lower_integral(nl.PowerLaw(4.0), 2.0, 1, 0.3) == pytest.approx(0.3, rel=1e-12)
    assert nl.lower_integral(nl.PowerLaw(3.0), 2.0, 1, 0.3) == math.inf


@pytest.mark.parametrize("p", [3.5, 4.0, 5.0])
def test_criterion_integral_value(p, mp200):
    res = nl.criterion_integral(nl.PowerLaw(p), 2.0, 1)
    e = mpmath.mpf(p) - 4
    want = (mpmath.mpf("0.1") ** (e + 1) - mpmath.mpf("1e-8") ** (e + 1)) / (e + 1)
    assert res.value == pytest.approx(float(want), rel=1e-10)
    assert res.converges


def test_criterion_integral_log_corrected_value(mp200):
    f = nl.LogCorrected(2.0, 1, 1.5)
    res = nl.criterion_integral(f, 2.0, 1, lower_cut=1e-8, upper=0.01)
    want = mpmath.quad(lambda u: 1 / (u * mpmath.log(1 / u) ** mpmath.mpf(1.5)), [mpmath.mpf("1e-8"), mpmath.mpf("1e-4"), mpmath.mpf("0.01")])
    assert res.value == pytest.approx(float(want), rel=1e-10)


def test_criterion_rejects_bad_range():
    with pytest.raises(errors.InvalidRange):
        nl.criterion_integral(nl.PowerLaw(2.0), 2.0, 1, lower_cut=0.2, upper=0.1)


@pytest.mark.parametrize("alpha,n", CELLS)
def test_power_boundary(alpha, n):
    P = nl.p_alpha(alpha, n)
    assert nl.classify(nl.PowerLaw(P), alpha, n).is_blowup
    assert nl.classify(nl.PowerLaw(P + 0.01), alpha, n).is_global
    assert nl.classify(nl.PowerLaw(P - 0.25), alpha, n).is_blowup


@pytest.mark.parametrize("beta,blows", [(0.5, True), (1.0, True), (1.1, False)])
def test_log_corrected_boundary(beta, blows):
    v = nl.classify(nl.LogCorrected(1.0, 1, beta), 1.0, 1)
    assert v.is_blowup == blows and v.is_global == (not blows)


def test_hypotheses_for_power_law():
    rep = nl.check_hypotheses(nl.PowerLaw(2.0))
    assert rep.all_hold
    assert rep.failing() == []


def test_linear_fails_B_and_S():
    rep = nl.check_hypotheses(nl.Linear(1.0))
    assert "B" in rep.failing()
    v = nl.classify(nl.Linear(1.0), 2.0, 1)
    assert not v.is_determined
    with pytest.raises(errors.HypothesesUnmet):
        nl.classify(nl.Linear(1.0), 2.0, 1, strict=True)


def test_non_convex_custom_fails_C():
    # slope in log space changes 3 -> 1 -> 3: not convex on the middle segment
    f = nl.Custom((-5.0, -1.0, 0.0, 4.0), (-15.0, -3.0, -2.0, 10.0))
    assert not nl.check_hypotheses(f).convex_C


@pytest.mark.parametrize("p,want", [(2.0, math.inf), (3.0, 1.0), (4.0, 0.0)])
def test_sugitani_liminf_power(p, want):
    assert nl.sugitani_liminf(nl.PowerLaw(p), 2.0, 1) == want


def test_ode_blowup_integral_power():
    res = nl.ode_blowup_integral(nl.PowerLaw(2.0))
    assert res.converges
    assert math.exp(res.log_total) == pytest.approx(1.0, rel=1e-10)
