import math
import warnings

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from blowup_lab import errors
from blowup_lab import kernel as K


def fourier_oracle(alpha, n, r, t, dps=30):
    """``K_alpha(r, t)`` from the radial Fourier integral at ``dps`` digits."""
    with mpmath.workdps(dps):
        a, r, t = mpmath.mpf(alpha), mpmath.mpf(r), mpmath.mpf(t)
        if n == 1:
            g = lambda x: mpmath.cos(r * x) * mpmath.exp(-t * x ** a) / mpmath.pi
        else:
            g = lambda x: x * mpmath.besselj(0, r * x) * mpmath.exp(-t * x ** a) / (2 * mpmath.pi)
        xmax = (mpmath.mpf(60) / t) ** (1 / a)
        pts = [0] + [xmax * k / 40 for k in range(1, 41)]
        return float(mpmath.quad(g, pts))


@pytest.mark.parametrize("alpha", [0.5, 0.8, 1.2, 1.5])
@pytest.mark.parametrize("n", [1, 2])
@pytest.mark.parametrize("r", [0.0, 0.4, 1.7, 6.0])
def test_kernel_against_fourier_oracle(alpha, n, r):
    want = fourier_oracle(alpha, n, r, 1.0)
    got = K.kernel_radial(K.KernelSpec(alpha, n), r, 1.0)
    assert got == pytest.approx(want, rel=1e-9, abs=1e-14)


@pytest.mark.parametrize("n", [1, 2])
def test_gaussian_and_cauchy_closed_forms(n):
    r = np.linspace(0.0, 8.0, 17)
    for t in (0.3, 2.0):
        gauss = (4 * math.pi * t) ** (-n / 2) * np.exp(-r * r / (4 * t))
        assert np.allclose(K.kernel_radial(K.KernelSpec(2.0, n), r, t), gauss, rtol=1e-15)
        num = K.kernel_radial(K.KernelSpec(1.0, n), r, t, "fourier")
        with mpmath.workdps(30):
            cn = mpmath.gamma(mpmath.mpf(n + 1) / 2) / mpmath.pi ** (mpmath.mpf(n + 1) / 2)
            cauchy = np.array([float(cn * t / (t * t + mpmath.mpf(x) ** 2) ** (mpmath.mpf(n + 1) / 2)) for x in r])
        assert np.allclose(num, cauchy, rtol=1e-8, atol=0)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5, 2.0])
@pytest.mark.parametrize("n", [1, 2])
def test_kernel_at_origin(alpha, n):
    spec = K.KernelSpec(alpha, n)
    assert K.kernel_at_origin(spec, 1.0) == pytest.approx(fourier_oracle(alpha, n, 0.0, 1.0), rel=1e-10)
    assert K.kernel_at_origin(spec, 3.0) == pytest.approx(3.0 ** (-n / alpha) * K.kernel_at_origin(spec, 1.0))


@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5])
def test_tail_constant(alpha):
    spec = K.KernelSpec(alpha, 1)
    r = 1e6
    assert r ** (1 + alpha) * K.kernel_radial(spec, r, 1.0) == pytest.approx(K.tail_constant(spec), rel=5e-3)


@pytest.mark.parametrize("alpha", [0.5, 0.8, 1.0, 1.5, 2.0])
@pytest.mark.parametrize("n", [1, 2])
def test_mass_is_one(alpha, n):
    spec = K.KernelSpec(alpha, n)
    assert K.kernel_mass(spec, 1.0) == pytest.approx(1.0, abs=1e-9)
    assert K.kernel_mass(spec, 0.2) == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5, 2.0])
def test_scaling_identity_direct_vs_rescaled(alpha):
    spec = K.KernelSpec(alpha, 1)
    r = np.array([0.0, 0.5, 2.0, 7.0])
    t = 3.7
    direct = K.kernel_radial(spec, r, t, "direct")
    scaled = t ** (-1 / alpha) * K.kernel_radial(spec, r * t ** (-1 / alpha), 1.0, "fourier")
    assert np.allclose(direct, scaled, rtol=1e-8, atol=0)


@pytest.mark.parametrize("alpha", [0.5, 0.8, 1.2, 1.5])
def test_profile_monotone(alpha):
    assert K.radial_monotone_check(K.KernelSpec(alpha, 1), 1.0)
    assert K.radial_monotone_check(K.KernelSpec(alpha, 2), 1.0, num=401)


def test_kernel_eval_points():
    spec = K.KernelSpec(1.0, 2)
    pts = np.array([[3.0, 4.0], [0.0, 0.0]])
    assert np.allclose(K.kernel_eval(spec, pts, 1.0), K.kernel_radial(spec, np.array([5.0, 0.0]), 1.0))


def test_kernel_rejects_bad_time():
    with pytest.raises(ValueError):
        K.kernel_radial(K.KernelSpec(1.0, 1), 1.0, 0.0)


def test_grid_validation():
    with pytest.raises(ValueError):
        K.GridSpec(10.0, 100)
    with pytest.raises(ValueError):
        K.GridSpec(10.0, 32)
    g = K.GridSpec(8.0, 64)
    assert g.h == pytest.approx(0.25)
    assert g.x()[0] == -8.0 and 0.0 in g.x()


def test_field_round_trip(tmp_path):
    g = K.GridSpec(4.0, 64)
    fld = K.field_from_function(g, 2, lambda x, y: np.exp(-x * x - 2 * y * y), t=0.5)
    path = tmp_path / "snap"
    fld.save(path, K.KernelSpec(1.5, 2))
    back = K.Field.load(path)
    assert back.grid == g and back.t == 0.5
    assert np.array_equal(back.values, fld.values)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("n", [1, 2])
def test_kernel_field_mass_and_semigroup(alpha, n):
    spec = K.KernelSpec(alpha, n)
    g = K.GridSpec(32.0, 128)
    k = K.kernel_field(spec, g, 0.7)
    assert K.mass(k) == pytest.approx(1.0, abs=1e-12)
    phi = K.field_from_function(g, n, lambda *x: np.exp(-sum(c * c for c in x)))
    a = K.semigroup_apply(spec, g, K.semigroup_apply(spec, g, phi, 0.3), 0.4).values
    b = K.semigroup_apply(spec, g, phi, 0.7).values
    assert np.max(np.abs(a - b)) <= 1e-10


def test_semigroup_matches_gaussian_convolution():
    g = K.GridSpec(40.0, 512)
    phi = K.field_from_function(g, 1, lambda x: np.exp(-x * x / 2))
    out = K.semigroup_apply(K.KernelSpec(2.0, 1), g, phi, 0.8).values
    s2 = 1 + 2 * 0.8
    want = np.exp(-g.x() ** 2 / (2 * s2)) / math.sqrt(s2)
    assert np.max(np.abs(out - want)) <= 1e-12


@given(st.floats(min_value=0.3, max_value=2.0), st.floats(min_value=1.0, max_value=3.0),
       st.floats(min_value=0.01, max_value=5.0))
def test_semigroup_preserves_mass(alpha, width, t):
    g = K.GridSpec(64.0, 256)
    phi = K.field_from_function(g, 1, lambda x: np.exp(-x * x / (2 * width * width)))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        out = K.semigroup_apply(K.KernelSpec(alpha, 1), g, phi, t)
    assert K.mass(out) == pytest.approx(K.mass(phi), rel=1e-6)
    assert np.min(out.values) >= -1e-12 * np.max(out.values)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("s,t", [(0.5, 0.5), (0.5, 1.0), (0.5, 2.0), (1.0, 1.0), (1.0, 2.0), (2.0, 2.0)])
def test_kernel_ratio_bound(alpha, s, t):
    out = K.kernel_ratio_bound_check(K.KernelSpec(alpha, 1), K.GridSpec(32.0, 256), s, t)
    assert out["min_ratio"] >= 1 - 1e-6


def test_ratio_bound_at_equal_times_is_sharp_for_heat():
    out = K.kernel_ratio_bound_check(K.KernelSpec(2.0, 1), K.GridSpec(32.0, 256), 1.0, 1.0)
    assert out["min_ratio"] == pytest.approx(math.sqrt(2.0), rel=1e-12)


def test_ratio_bound_violation_raises():
    # tolerance above the true slack turns the check into a failure
    with pytest.raises(errors.BoundViolated):
        K.kernel_ratio_bound_check(K.KernelSpec(2.0, 1), K.GridSpec(32.0, 256), 1.0, 1.0, tol=-0.5)


def test_smoothing_constants_bounded_by_origin_value():
    spec = K.KernelSpec(1.5, 1)
    g = K.GridSpec(64.0, 512)
    phi = K.field_from_function(g, 1, lambda x: np.exp(-x * x))
    c = K.smoothing_constants(spec, g, phi, [0.5, 1.0, 4.0])
    assert np.all(c <= K.kernel_at_origin(spec, 1.0) * (1 + 1e-10))


def test_doubling_diagnostic_small_for_contained_data():
    g = K.GridSpec(32.0, 256)
    d = K.doubling_diagnostic(K.KernelSpec(2.0, 1), g, lambda x: np.exp(-x * x), 1.0)
    assert d < 1e-12
