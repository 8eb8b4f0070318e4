import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from blowup_lab import errors
from blowup_lab import example4 as e4
from blowup_lab import nonlinearity as nl
from oracles import Example4Oracle as Oracle

DEFAULT = e4.ExampleParams()
ALPHA1 = e4.ExampleParams(alpha=1.0, n=1, p=1.5, theta=2.5)
ALPHA05 = e4.ExampleParams(alpha=0.5, n=2, p=1.1, theta=6.0)
ADMISSIBLE = [DEFAULT, ALPHA1, ALPHA05]


@pytest.mark.parametrize("params", ADMISSIBLE)
def test_interval_data_against_oracle(params, mp200):
    d = e4.LogIntervalData.compute(params)
    o = Oracle(params)
    for k, i in enumerate(d.i[:4]):
        i = int(i)
        assert d.log_u[k] == pytest.approx(float(mpmath.log(o.u(i))), rel=1e-14)
        assert d.log_u_next[k] == pytest.approx(float(mpmath.log(o.u(i + 1))), rel=1e-14)
        assert d.log_v[k] == pytest.approx(float(mpmath.log(o.v(i))), rel=1e-14)
        assert d.log_b[k] == pytest.approx(float(mpmath.log(o.slope_b(i))), rel=1e-10)
        assert d.log_a[k] == pytest.approx(float(mpmath.log(o.intercept_a(i))), rel=1e-10)
        lun = mpmath.log(o.u(i + 1))
        assert d.red_b[k] == pytest.approx(float(mpmath.log(o.slope_b(i)) - (o.P - 1) * lun), abs=1e-12)
        assert d.red_a[k] == pytest.approx(float(mpmath.log(o.intercept_a(i)) - o.P * lun), abs=1e-12)


@pytest.mark.parametrize("params", ADMISSIBLE)
@pytest.mark.parametrize("frac", [0.1, 0.5, 0.9])
def test_eval_log_against_oracle(params, frac, mp200):
    f = e4.build(params)
    o = Oracle(params)
    for i in range(params.i_min, params.i_min + 4):
        lu_next, lv, lu = (float(mpmath.log(o.u(i + 1))), float(mpmath.log(o.v(i))), float(mpmath.log(o.u(i))))
        for block, x in (("J", lu_next + frac * (lv - lu_next)), ("M", lv + frac * (lu - lv))):
            want = mpmath.log(o.f(mpmath.exp(mpmath.mpf(x)), i, block))
            assert f.eval_log(x) == pytest.approx(float(want), rel=1e-10)


@pytest.mark.parametrize("params", ADMISSIBLE)
def test_reduced_value_on_blocks_is_exact(params):
    f = e4.build(params)
    d = f.data
    for k in range(len(d.i) - 1):
        i = int(d.i[k])
        if not np.isfinite(d.log_v[k]):
            break
        mid = 0.5 * (d.log_v[k] + d.log_u[k])
        assert f.eval_log_scaled(mid, params.P) == -float(i * i)


@pytest.mark.parametrize("params", ADMISSIBLE)
def test_step3_terms_against_oracle(params, mp200):
    o = Oracle(params)
    for i in range(params.i_min, params.i_min + 4):
        want = o.sigma(i) * mpmath.log(o.u(i) / o.v(i))
        assert e4.step3_term(params, i) == pytest.approx(float(want), rel=1e-13)


def test_step3_direct_matches_closed_form():
    d = e4.LogIntervalData.compute(DEFAULT)
    direct = e4.step3_direct(d)
    for k in range(4):
        assert direct[k] == pytest.approx(e4.step3_term(DEFAULT, int(d.i[k])), rel=1e-12)


def test_step3_partial_sum_diverges():
    assert e4.step3_divergence(DEFAULT, 8) > 1e6
    sums = [e4.step3_divergence(DEFAULT, I) for I in range(2, 12)]
    assert np.all(np.diff(sums) > 0)


@pytest.mark.parametrize("params", ADMISSIBLE)
def test_step4_against_oracle(params, mp200):
    o = Oracle(params)
    f = e4.build(params)
    for i in range(params.i_min, params.i_min + 3):
        lam = o.v(i) ** params.q
        assert o.v(i) <= lam < o.u(i)
        assert o.v(i + 1) <= lam ** 2 < o.u(i + 1)
        want = mpmath.log(o.f(lam ** 2, i + 1, "M") / (lam ** o.P * o.f(lam, i, "M")))
        got = e4.step4_diagonal_ratio(f, i)
        assert got == float(want) == -(2 * i + 1)
        assert all(e4.step4_memberships(params, i).values())


@pytest.mark.parametrize("params", ADMISSIBLE)
def test_step4_exact_for_all_indices(params):
    f = e4.build(params)
    assert e4.step4_threshold(params) == params.i_min
    for i in range(params.i_min, params.i_max):
        assert e4.step4_diagonal_ratio(f, i) == -(2 * i + 1)


def test_step4_membership_violation():
    # q just above 1/2 puts lambda_1^2 above u_2
    pr = e4.ExampleParams(q=0.5001, i_min=1)
    f = e4.build(pr)
    assert not e4.step4_memberships(pr, 1)["lambda2_lt_u_next"]
    with pytest.raises(errors.MembershipViolation):
        e4.step4_diagonal_ratio(f, 1)
    assert e4.step4_diagonal_ratio(f, 2) == -5


@pytest.mark.parametrize("params", ADMISSIBLE)
def test_convexity_at_joints_by_brute_force(params, mp200):
    # one-sided slopes at u_{i+1} and v_i, ascending in u, must not decrease
    o = Oracle(params)
    for i in range(params.i_min, params.i_min + 3):
        s_m_next = o.P * o.sigma(i + 1) * o.u(i + 1) ** (o.P - 1)
        s_j = o.slope_b(i)
        s_m = o.P * o.sigma(i) * o.v(i) ** (o.P - 1)
        assert s_m_next <= s_j <= s_m


@pytest.mark.parametrize("params", ADMISSIBLE)
def test_structural_checks(params):
    d = e4.LogIntervalData.compute(params)
    assert d.ordering_ok(params.theta)
    assert np.max(e4.joint_continuity(params)) <= 1e-10
    assert e4.joint_slopes_ok(params, d)
    assert e4.check_convexity_window(params)["holds_from"] == params.i_min
    fm = e4.check_F_monotone(params)
    assert fm["limit_ratio"] == pytest.approx(params.p / (params.theta * (params.p - 1)))
    assert fm["limit_ratio"] > 1 and fm["holds_from"] == params.i_min


def test_ratio_limit_matches_brute_force(mp200):
    pr = DEFAULT
    o = Oracle(pr)
    r = e4.f_monotone_ratio(pr, np.arange(1, 6))
    for k, i in enumerate(range(1, 6)):
        want = pr.p * o.intercept_a(i) / ((pr.p - 1) * o.slope_b(i) * o.v(i))
        assert r[k] == pytest.approx(float(want), rel=1e-12)


def test_theta_outside_window():
    with pytest.raises(errors.WindowViolation):
        e4.build(e4.ExampleParams(theta=2.5))
    with pytest.raises(errors.WindowViolation):
        e4.ExampleParams(p=3.5).validate()


def test_log_domain_below_range():
    f = e4.build(e4.ExampleParams(i_max=5))
    with pytest.raises(errors.LogDomainError):
        f.eval_log(-1e30)


@given(st.floats(min_value=-1e12, max_value=5.0))
def test_eval_log_is_monotone(x):
    f = e4.build(DEFAULT)
    y = x * (1 - 1e-9) if x < 0 else x + 1e-9
    assert f.eval_log(y) >= f.eval_log(x)


@pytest.mark.parametrize("params", ADMISSIBLE)
def test_distinguishing_verdicts(params):
    f = e4.build(params)
    rep = nl.check_hypotheses(f)
    assert rep.all_hold
    crit = nl.criterion_integral(f, params.alpha, params.n)
    assert crit.diverges
    assert nl.classify(f, params.alpha, params.n, report=rep).is_blowup
    assert nl.sugitani_liminf(f, params.alpha, params.n) == 0.0


def test_json_round_trip(tmp_path):
    f = e4.build(ALPHA1)
    g = nl.from_json(f.dumps())
    assert g.params == f.params
    x = np.array([-3.0, -50.0, -1e5])
    assert np.array_equal(g.eval_log(x), f.eval_log(x))


def test_report_rows(tmp_path):
    f = e4.build(DEFAULT)
    rows = e4.report_rows(f)
    assert rows[0]["i"] == 1 and all(r["window_ok"] for r in rows)
    path = tmp_path / "rows.csv"
    e4.write_report_csv(rows, path)
    assert path.read_text().splitlines()[0].startswith("i,window_ok")
