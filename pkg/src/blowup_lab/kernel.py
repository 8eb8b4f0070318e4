"""Fractional heat kernel ``K_alpha`` and the semigroup ``exp(t Delta_alpha)`` on periodic boxes.

Pointwise values of the kernel on ``R^n`` use closed forms for ``alpha = 2``
(Gaussian) and ``alpha = 1`` (Poisson).  Other ``alpha`` combine a radial
Fourier inversion at small radius with the power series

    K(r, t) = pi^-(n/2+1) sum_k (-1)^(k+1)/k! 2^(alpha k) Gamma(alpha k/2 + 1)
              Gamma((alpha k + n)/2) sin(pi alpha k/2) t^k r^-(alpha k + n),

which converges for ``alpha < 1`` and is asymptotic for ``alpha > 1``.  The
series is used only where its own error estimate is below the target.

The semigroup acts on gridded fields by the exact Fourier multiplier
``exp(-t |xi|^alpha)`` on the modes of the box ``[-L, L)^n``.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import special

from .errors import BoundViolated, QuadratureNoConvergence

log = logging.getLogger(__name__)

# e^-37 ~ 1e-16: Fourier integrands are truncated where e^{-t xi^alpha} drops below this
_XI_CUT = 37.0
_ABS_TOL = 1e-10
_MAX_PANELS = 400_000


@dataclass(frozen=True)
class KernelSpec:
    alpha: float
    n: int = 1

    def __post_init__(self):
        if not 0 < self.alpha <= 2:
            raise ValueError("alpha must lie in (0, 2]")
        if int(self.n) != self.n or self.n < 1:
            raise ValueError("n must be a positive integer")

    def require_grid_dim(self):
        if self.n not in (1, 2):
            raise ValueError("gridded operations support n = 1 and n = 2 only")


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid on the periodic box ``[-L, L)^n`` with ``N`` points per dimension."""

    L: float
    N: int

    def __post_init__(self):
        if not self.L > 0:
            raise ValueError("L must be positive")
        if self.N < 64 or self.N & (self.N - 1):
            raise ValueError("N must be a power of two, at least 64")

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.N

    def x(self) -> np.ndarray:
        return -self.L + self.h * np.arange(self.N)

    def coords(self, n: int):
        x = self.x()
        if n == 1:
            return (x,)
        return tuple(np.meshgrid(x, x, indexing="ij"))

    def radius(self, n: int) -> np.ndarray:
        return np.sqrt(sum(c * c for c in self.coords(n)))

    def wavenumbers(self) -> np.ndarray:
        return 2.0 * np.pi * np.fft.fftfreq(self.N, d=self.h)

    def abs_xi(self, n: int) -> np.ndarray:
        k = self.wavenumbers()
        if n == 1:
            return np.abs(k)
        kx, ky = np.meshgrid(k, k, indexing="ij")
        return np.sqrt(kx * kx + ky * ky)

    def to_json(self):
        return {"L": self.L, "N": self.N}


@dataclass(frozen=True, eq=False)
class Field:
    """Samples of a function on the grid; ``values.shape == (N,) * n``."""

    grid: GridSpec
    values: np.ndarray
    t: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim not in (1, 2) or any(s != self.grid.N for s in v.shape):
            raise ValueError("values must have shape (N,) or (N, N)")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.ndim

    def with_values(self, values, t=None) -> "Field":
        return Field(self.grid, values, self.t if t is None else t, dict(self.meta))

    def save(self, path, spec: KernelSpec | None = None):
        """Little-endian float64 row-major ``<path>.bin`` plus a JSON sidecar ``<path>.json``."""
        path = Path(path)
        path.with_suffix(".bin").write_bytes(self.values.astype("<f8").tobytes(order="C"))
        side = {"n": self.n, "L": self.grid.L, "N": self.grid.N, "t": self.t}
        if spec is not None:
            side["alpha"] = spec.alpha
        path.with_suffix(".json").write_text(json.dumps(side, indent=2))

    @classmethod
    def load(cls, path) -> "Field":
        path = Path(path)
        side = json.loads(path.with_suffix(".json").read_text())
        g = GridSpec(side["L"], side["N"])
        raw = np.frombuffer(path.with_suffix(".bin").read_bytes(), dtype="<f8")
        vals = raw.reshape((g.N,) * side["n"]).astype(float)
        return cls(g, vals, side["t"], {k: v for k, v in side.items() if k == "alpha"})


def field_from_function(grid: GridSpec, n: int, func, t: float = 0.0) -> Field:
    return Field(grid, func(*grid.coords(n)), t)


# -- norms ----------------------------------------------------------------------

def mass(f: Field) -> float:
    return float(np.sum(f.values) * f.grid.h ** f.n)


def l1_norm(f: Field) -> float:
    return float(np.sum(np.abs(f.values)) * f.grid.h ** f.n)


def sup_norm(f: Field) -> float:
    return float(np.max(np.abs(f.values)))


# -- semigroup --------------------------------------------------------------------

def multiplier(spec: KernelSpec, grid: GridSpec, t: float) -> np.ndarray:
    spec.require_grid_dim()
    return np.exp(-t * grid.abs_xi(spec.n) ** spec.alpha)


def semigroup_apply(spec: KernelSpec, grid: GridSpec, phi: Field, t: float, clamp_tol: float = 1e-12) -> Field:
    """``S_alpha(t) phi`` by spectral multiplication; ``t = 0`` returns ``phi`` unchanged.

    For non-negative input, values below ``-clamp_tol`` (Gibbs undershoot of
    rough data) are clamped to zero with a warning.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    if phi.n != spec.n:
        raise ValueError("field dimension does not match the kernel spec")
    if t == 0:
        return phi.with_values(phi.values.copy(), t=phi.t)
    out = np.fft.ifftn(np.fft.fftn(phi.values) * multiplier(spec, grid, t)).real
    if np.min(phi.values) >= 0 and np.min(out) < -clamp_tol:
        log.warning("semigroup output undershoots to %.3e; clamping to zero", float(np.min(out)))
        out = np.maximum(out, 0.0)
    return phi.with_values(out, t=phi.t + t)


def kernel_field(spec: KernelSpec, grid: GridSpec, t: float) -> Field:
    """Periodised kernel ``K_alpha(., t)`` sampled on the grid (unit discrete mass)."""
    if not t > 0:
        raise ValueError("t must be positive")
    spec.require_grid_dim()
    k = np.fft.fftfreq(grid.N, d=1.0 / grid.N).astype(int)
    # grid starts at -L, so shifting to the origin multiplies mode k by (-1)^k
    sign1 = np.where(k % 2 == 0, 1.0, -1.0)
    sign = sign1 if spec.n == 1 else np.multiply.outer(sign1, sign1)
    vals = np.fft.ifftn(multiplier(spec, grid, t) * sign).real / grid.h ** spec.n
    return Field(grid, vals, t)


# -- pointwise kernel -----------------------------------------------------------------

def _series_log_coeffs(alpha, n, kmax=240):
    k = np.arange(1, kmax + 1, dtype=float)
    s = np.sin(np.pi * alpha * k / 2.0)
    # alpha k / 2 integral: the coefficient vanishes exactly
    s = np.where(np.abs(s) < 1e-12, 0.0, s)
    with np.errstate(divide="ignore"):
        logc = (-special.gammaln(k + 1) + alpha * k * math.log(2.0) + special.gammaln(alpha * k / 2 + 1)
                + special.gammaln((alpha * k + n) / 2) + np.log(np.abs(s)) - (n / 2 + 1) * math.log(math.pi))
    sign = np.where(k % 2 == 1, 1.0, -1.0) * np.sign(s)
    return k, logc, sign


def _series(alpha, n, r, t):
    """Series value and error estimate for each radius (``nan`` where not usable)."""
    r = np.asarray(r, dtype=float)
    k, logc, sign = _series_log_coeffs(alpha, n)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        logT = logc[None, :] + k[None, :] * math.log(t) - (alpha * k[None, :] + n) * np.log(r[:, None])
        T = sign[None, :] * np.exp(logT)
    absT = np.abs(T)
    absT = np.where(sign[None, :] == 0, np.nan, absT)
    # truncate just before the smallest term (optimal for asymptotic, harmless if convergent)
    kstar = np.nanargmin(np.where(np.isfinite(absT), absT, np.inf), axis=1)
    mask = np.arange(len(k))[None, :] < kstar[:, None]
    T0 = np.where(mask, np.nan_to_num(T), 0.0)
    val = T0.sum(axis=1)
    err = np.take_along_axis(np.nan_to_num(absT, nan=0.0, posinf=np.inf), kstar[:, None], axis=1)[:, 0]
    biggest = np.max(np.where(mask, np.nan_to_num(absT), 0.0), axis=1)
    rel_err = 1e-16 * biggest + err
    ok = (val > 0) & (rel_err <= 1e-13 * np.abs(val)) & (biggest <= 1e3 * np.abs(val))
    return np.where(ok, val, np.nan)


@lru_cache(maxsize=64)
def _fourier_rule(alpha, n, t, rmax_bucket, order):
    """Nodes ``xi`` and weights including ``e^{-t xi^alpha}`` (and ``xi`` for ``n = 2``)."""
    rmax = 2.0 ** rmax_bucket
    xi_max = (_XI_CUT / t) ** (1.0 / alpha)
    width = min(1.0, math.pi / max(rmax, 1e-300)) * min(1.0, xi_max)
    xi0 = min(width, xi_max)
    panels = [(xi0 * 2.0 ** -(j + 1), xi0 * 2.0 ** -j) for j in range(60)]
    m = int(math.ceil((xi_max - xi0) / width))
    if m > _MAX_PANELS:
        raise QuadratureNoConvergence(
            f"Fourier inversion needs {m} panels (alpha = {alpha:g}); achieved error bound unavailable")
    edges = np.linspace(xi0, xi_max, m + 1) if m > 0 else np.array([xi0])
    lo = np.concatenate([[a for a, _ in panels], edges[:-1]])
    hi = np.concatenate([[b for _, b in panels], edges[1:]])
    x, w = np.polynomial.legendre.leggauss(order)
    half = 0.5 * (hi - lo)
    nodes = (0.5 * (hi + lo))[:, None] + half[:, None] * x[None, :]
    weights = half[:, None] * w[None, :]
    nodes, weights = nodes.ravel(), weights.ravel()
    weights = weights * np.exp(-t * nodes ** alpha)
    if n == 1:
        weights = weights / math.pi
    else:
        weights = weights * nodes / (2.0 * math.pi)
    return nodes, weights


def _fourier(alpha, n, r, t):
    r = np.asarray(r, dtype=float)
    if r.size == 0:
        return r.copy()
    if n not in (1, 2):
        raise ValueError("Fourier inversion implemented for n = 1, 2")
    bucket = int(math.ceil(math.log2(max(float(np.max(r)), 1.0))))
    out = np.empty_like(r)
    est = np.empty_like(r)
    for order, dest in ((20, out), (12, est)):
        nodes, weights = _fourier_rule(alpha, n, t, bucket, order)
        for s in range(0, r.size, 256):
            rr = r[s:s + 256]
            arg = np.outer(rr, nodes)
            basis = np.cos(arg) if n == 1 else special.j0(arg)
            dest[s:s + 256] = basis @ weights
    err = float(np.max(np.abs(out - est)))
    if err > _ABS_TOL:
        raise QuadratureNoConvergence(f"Fourier inversion error estimate {err:.3e} exceeds {_ABS_TOL:g}")
    return out


def kernel_at_origin(spec: KernelSpec, t: float = 1.0) -> float:
    """``K_alpha(0, t) = (2 pi)^-n |S^{n-1}| Gamma(n/alpha) / alpha * t^{-n/alpha}``; also ``sup K(., t)``."""
    a, n = spec.alpha, spec.n
    surf = 2.0 * math.pi ** (n / 2) / math.gamma(n / 2)
    return (2 * math.pi) ** -n * surf * math.gamma(n / a) / a * t ** (-n / a)


def tail_constant(spec: KernelSpec) -> float:
    """``A`` in ``K_alpha(x, 1) ~ A |x|^-(n+alpha)`` as ``|x| -> inf`` (``alpha < 2``)."""
    a, n = spec.alpha, spec.n
    return (a * 2 ** (a - 1) * math.pi ** (-n / 2 - 1) * math.sin(math.pi * a / 2)
            * math.gamma((n + a) / 2) * math.gamma(a / 2))


def _radial_numeric(alpha, n, r, t):
    r = np.asarray(r, dtype=float)
    out = np.full(r.shape, np.nan)
    pos = r > 0
    if alpha < 2 and np.any(pos):
        out[pos] = _series(alpha, n, r[pos], t)
    need = np.isnan(out)
    if np.any(need):
        out[need] = _fourier(alpha, n, r[need], t)
    return out


def kernel_radial(spec: KernelSpec, r, t: float, method: str = "auto"):
    """``K_alpha`` at radius ``r`` and time ``t``.

    ``method``: ``"auto"`` (closed forms where they exist, otherwise the
    numerical profile at ``t = 1`` rescaled), ``"fourier"`` (numerical profile
    at ``t = 1`` rescaled even where a closed form exists) or ``"direct"``
    (numerical evaluation at ``t`` itself, no rescaling).
    """
    if not t > 0:
        raise ValueError("t must be positive")
    a, n = spec.alpha, spec.n
    r = np.abs(np.asarray(r, dtype=float))
    if method == "auto" and a == 2:
        out = (4 * math.pi * t) ** (-n / 2) * np.exp(-r * r / (4 * t))
    elif method == "auto" and a == 1:
        cn = math.gamma((n + 1) / 2) / math.pi ** ((n + 1) / 2)
        out = cn * t / (t * t + r * r) ** ((n + 1) / 2)
    elif method in ("auto", "fourier"):
        flat = r.ravel() * t ** (-1.0 / a)
        uniq, inv = np.unique(flat, return_inverse=True)
        prof = _radial_numeric(a, n, uniq, 1.0)
        out = (t ** (-n / a) * prof[inv]).reshape(r.shape)
    elif method == "direct":
        flat = r.ravel()
        uniq, inv = np.unique(flat, return_inverse=True)
        out = _radial_numeric(a, n, uniq, t)[inv].reshape(r.shape)
    else:
        raise ValueError(f"unknown method {method!r}")
    return out if np.ndim(out) else float(out)


def kernel_eval(spec: KernelSpec, x, t: float, method: str = "auto"):
    """``K_alpha(x, t)``; ``x`` is a position (``n = 1``), an array of points with last axis ``n``, or a radius."""
    x = np.asarray(x, dtype=float)
    if spec.n > 1 and x.ndim >= 1 and x.shape[-1] == spec.n:
        r = np.sqrt(np.sum(x * x, axis=-1))
    else:
        r = np.abs(x)
    return kernel_radial(spec, r, t, method)


# -- identity checks ------------------------------------------------------------------

def kernel_ratio_bound_check(spec: KernelSpec, grid: GridSpec, s: float, t: float, tol: float = 1e-6) -> dict:
    """Min over grid points of ``K(y, 2t - s) / (2^{-n/alpha} (t/s)^{-n/alpha} K(y, s))``."""
    if not 0 < s <= t:
        raise ValueError("need 0 < s <= t")
    spec.require_grid_dim()
    r = grid.radius(spec.n)
    uniq, inv = np.unique(r.ravel(), return_inverse=True)
    a, n = spec.alpha, spec.n
    num = kernel_radial(spec, uniq, 2 * t - s)
    den = 2.0 ** (-n / a) * (t / s) ** (-n / a) * kernel_radial(spec, uniq, s)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = num / den
    valid = den > 0
    k = int(np.argmin(np.where(valid, ratio, np.inf)))
    out = {"min_ratio": float(ratio[k]), "argmin_radius": float(uniq[k])}
    if out["min_ratio"] < 1 - tol:
        raise BoundViolated(f"kernel ratio {out['min_ratio']:.9g} < 1 at |y| = {uniq[k]:.6g}",
                            float(uniq[k]), out["min_ratio"])
    return out


def radial_profile(spec: KernelSpec, t: float, r_max: float | None = None, num: int = 2001, method="auto"):
    if r_max is None:
        r_max = 20.0 * t ** (1.0 / spec.alpha)
    r = np.linspace(0.0, r_max, num)
    return r, np.asarray(kernel_radial(spec, r, t, method))


def radial_monotone_check(spec: KernelSpec, t: float, r_max: float | None = None, num: int = 2001) -> bool:
    """True iff the kernel profile is non-increasing in ``|x|`` on the evaluation grid."""
    _, k = radial_profile(spec, t, r_max, num)
    return bool(np.all(np.diff(k) <= 1e-14 * k[0]))


def write_profile_csv(spec: KernelSpec, t: float, path, r_max=None, num=2001):
    r, k = radial_profile(spec, t, r_max, num)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["r", "K"])
        w.writerows(zip(r.tolist(), k.tolist()))


def smoothing_constants(spec: KernelSpec, grid: GridSpec, phi: Field, times) -> np.ndarray:
    """``sup S(t)phi * t^{n/alpha} / ||phi||_1`` at each time; bounded by ``K_alpha(0, 1)``."""
    l1 = l1_norm(phi)
    return np.array([sup_norm(semigroup_apply(spec, grid, phi, t)) * t ** (spec.n / spec.alpha) / l1
                     for t in times])


def doubling_diagnostic(spec: KernelSpec, grid: GridSpec, func, t: float) -> float:
    """Sup difference of ``S(t)phi`` on the inner half-box when ``L`` (and ``N``) double."""
    n = spec.n
    small = field_from_function(grid, n, func)
    big_grid = GridSpec(2 * grid.L, 2 * grid.N)
    big = field_from_function(big_grid, n, func)
    a = semigroup_apply(spec, grid, small, t).values
    b = semigroup_apply(spec, big_grid, big, t).values
    N = grid.N
    sl = slice(N // 2, N // 2 + N)
    b_on_small = b[sl] if n == 1 else b[sl, sl]
    inner = slice(N // 4, 3 * N // 4)
    if n == 1:
        return float(np.max(np.abs(a[inner] - b_on_small[inner])))
    return float(np.max(np.abs(a[inner, inner] - b_on_small[inner, inner])))


def kernel_mass(spec: KernelSpec, t: float = 1.0, R: float | None = None, panels_per_octave: int = 8) -> float:
    """``int_{R^n} K_alpha(x, t) dx`` from the pointwise kernel (independent of the FFT multiplier).

    The radial integral over ``[0, R]`` uses composite Gauss-Legendre panels;
    the tail beyond ``R`` is integrated term by term from the large-``|x|``
    series, truncated at its smallest term.
    """
    a, n = spec.alpha, spec.n
    R = 30.0 * t ** (1.0 / a) if R is None else R
    surf = 2.0 if n == 1 else 2.0 * math.pi
    edges = [0.0]
    e = R * 2.0 ** -12
    while e < R:
        edges.append(e)
        e *= 2.0
    edges.append(R)
    fine = np.concatenate([np.linspace(lo, hi, panels_per_octave + 1)[:-1] for lo, hi in zip(edges[:-1], edges[1:])]
                          + [[R]])
    x, w = np.polynomial.legendre.leggauss(20)
    lo, hi = fine[:-1], fine[1:]
    nodes = (0.5 * (hi + lo))[:, None] + 0.5 * (hi - lo)[:, None] * x[None, :]
    weights = 0.5 * (hi - lo)[:, None] * w[None, :]
    vals = np.asarray(kernel_radial(spec, nodes.ravel(), t)).reshape(nodes.shape)
    inner = float(np.sum(weights * vals * surf * nodes ** (n - 1)))
    k, logc, sign = _series_log_coeffs(a, n)
    with np.errstate(divide="ignore"):
        terms = sign * np.exp(logc + k * math.log(t) - a * k * math.log(R)) * surf / (a * k)
    mag = np.where(sign == 0, np.inf, np.abs(terms))
    kstar = int(np.argmin(mag)) if np.any(np.isfinite(mag)) else 0
    tail = float(np.sum(terms[:kstar])) if a < 2 else 0.0
    return inner + tail
