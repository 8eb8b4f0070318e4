"""``u_t = Delta_alpha u + f(u)`` on periodic boxes (``n = 1, 2``).

Time stepping is Strang splitting: half a step of the pointwise flow
``u' = f(u)`` (exact for power laws), a full step of the exact linear
semigroup, and another half nonlinear step.  The step size is controlled by
step doubling.  The module also provides the integral-form residual, the
kernel moment ``z(t) = int K(x, t) u(x, t) dx``, the Jensen inequality check
and the monotone iteration of the Duhamel map started from ``w = 2 S(t) phi``.

Global certificate
------------------
For data ``phi1 = u(t1)`` the function ``2 S(t) phi1`` is an integral
supersolution whenever ``2 int_0^inf l(2 ||S(s) phi1||_inf) ds <= 1``.
With ``||S(s) phi1||_inf <= min(||phi1||_inf, C2 s^-(n/alpha) ||phi1||_1)``
and ``C2 = K_alpha(0, 1)`` the integral has the closed form evaluated by
:func:`global_certificate`.  It uses the whole-space smoothing bound, so it is
meaningful only while the box contains essentially all of the mass (which
:func:`evolve` checks).  With ``PdeBudget.early_global`` the certificate is
tried at doubling checkpoints ``t = 1, 2, 4, ...`` and a certified run stops
there instead of running on until the mass reaches the box edge.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from . import kernel as K
from . import nonlinearity as nl
from .errors import ConvexityViolation, DomainTooSmall, NonlinearSubstepOverflow, SupersolutionViolation
from .ode import fit_blowup
from .verdict import Verdict, aggregate, blowup, global_, undetermined


@dataclass(frozen=True, eq=False)
class PdeProblem:
    f: nl.Nonlinearity
    spec: K.KernelSpec
    grid: K.GridSpec
    phi: K.Field

    def __post_init__(self):
        self.spec.require_grid_dim()
        if self.phi.n != self.spec.n or self.phi.grid != self.grid:
            raise ValueError("phi must live on the problem grid with matching dimension")
        if np.min(self.phi.values) < 0:
            raise ValueError("phi must be non-negative")
        if not K.sup_norm(self.phi) > 0:
            raise ValueError("phi must not vanish identically")


@dataclass(frozen=True)
class PdeBudget:
    t_max: float = 100.0
    sup_blowup: float = 1e6
    dt_init: float = 1e-3
    dt_min: float = 1e-5
    dt_max: float = math.inf
    rtol: float = 1e-8
    max_steps: int = 200_000
    check_domain: bool = True
    certify_global: bool = True
    early_global: bool = False

    def refined(self) -> "PdeBudget":
        """Halved step limits and a 4x tighter tolerance (second-order splitting)."""
        return PdeBudget(self.t_max, self.sup_blowup, self.dt_init / 2, self.dt_min / 2, self.dt_max / 2,
                         self.rtol / 4, self.max_steps, self.check_domain, self.certify_global, self.early_global)

    def to_json(self):
        return dict(self.__dict__)


@dataclass(eq=False)
class PdeTrace:
    times: np.ndarray
    sup_norms: np.ndarray
    l1_norms: np.ndarray
    z_values: np.ndarray
    dts: np.ndarray
    verdict: Verdict
    snapshots: dict = field(default_factory=dict, repr=False)
    diagnostics: dict = field(default_factory=dict)

    def snapshot_times(self):
        return sorted(self.snapshots)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "sup", "l1", "z", "dt"])
            dts = np.concatenate([[np.nan], self.dts])
            for row in zip(self.times, self.sup_norms, self.l1_norms, self.z_values, dts):
                w.writerow([repr(float(v)) for v in row])


# -- nonlinear sub-flow --------------------------------------------------------------

def pointwise_flow(f: nl.Nonlinearity, u: np.ndarray, t: float, rtol: float = 1e-12,
                   closed_form: bool = True) -> np.ndarray:
    """Solve ``v' = f(v)`` for time ``t`` from ``v(0) = u`` at every grid point.

    Uses the closed form when the nonlinearity provides one, otherwise
    adaptive RK4 sub-steps with step doubling on the whole array.
    Raises :class:`NonlinearSubstepOverflow` if any point blows up within ``t``.
    """
    u = np.maximum(np.asarray(u, dtype=float), 0.0)
    if t == 0:
        return u.copy()
    flow = getattr(f, "flow", None) if closed_form else None
    if flow is not None:
        out = flow(u, t)
        if not np.all(np.isfinite(out)):
            raise NonlinearSubstepOverflow(f"pointwise flow blew up within a sub-step of length {t:.3e}")
        return out

    def rk4(v, h):
        k1 = f.evaluate(v)
        k2 = f.evaluate(np.maximum(v + 0.5 * h * k1, 0.0))
        k3 = f.evaluate(np.maximum(v + 0.5 * h * k2, 0.0))
        k4 = f.evaluate(np.maximum(v + h * k3, 0.0))
        return v + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)

    v = u.copy()
    s = 0.0
    rate = float(np.max(f.evaluate(v) / np.maximum(v, 1e-300)))
    h = t if rate == 0 else min(t, 0.1 / rate)
    for _ in range(100_000):
        if t - s <= 1e-14 * t:
            return v
        h = min(h, t - s)
        if h < 1e-14 * t:
            raise NonlinearSubstepOverflow("pointwise flow step collapsed inside a sub-step")
        with np.errstate(over="ignore", invalid="ignore"):
            one = rk4(v, h)
            two = rk4(rk4(v, h / 2), h / 2)
        if not np.all(np.isfinite(two)) or np.max(two) > 1e100:
            # far beyond any blow-up threshold: treat as a singularity inside the step
            h /= 4
            continue
        err = float(np.max(np.abs(two - one) / (rtol * np.maximum(np.abs(two), 1e-300))))
        if err <= 1.0:
            v = two + (two - one) / 15.0
            s += h
            h *= min(4.0, max(0.25, 0.9 * max(err, 1e-12) ** -0.2))
        else:
            h *= max(0.1, 0.9 * err ** -0.2)
    raise NonlinearSubstepOverflow("pointwise flow did not finish within the sub-step budget")


class _Linear:
    """Cached spectral data for the linear step."""

    def __init__(self, spec: K.KernelSpec, grid: K.GridSpec):
        self.spec = spec
        self.grid = grid
        self.xi_a = grid.abs_xi(spec.n) ** spec.alpha
        k = np.fft.fftfreq(grid.N, d=1.0 / grid.N).astype(int)
        s1 = np.where(k % 2 == 0, 1.0, -1.0)
        self.sign = s1 if spec.n == 1 else np.multiply.outer(s1, s1)

    def apply(self, u, t):
        if t == 0:
            return u.copy()
        return np.fft.ifftn(np.fft.fftn(u) * np.exp(-t * self.xi_a)).real

    def value_at_origin(self, u, t):
        """``(S(t) u)(0)``, i.e. the kernel moment ``int K(x, t) u(x) dx``."""
        uh = np.fft.fftn(u)
        return float(np.real(np.sum(uh * np.exp(-t * self.xi_a) * self.sign)) / u.size)


def _strang(f, lin, u, dt):
    v = pointwise_flow(f, u, dt / 2)
    v = lin.apply(v, dt)
    return pointwise_flow(f, v, dt / 2)


def _inner_mass_fraction(grid: K.GridSpec, n: int, u: np.ndarray) -> float:
    r = grid.radius(n) if n == 2 else np.abs(grid.x())
    total = float(np.sum(u))
    if total <= 0:
        return 1.0
    return float(np.sum(u[r < grid.L / 2])) / total


# -- global certificate ----------------------------------------------------------------

def global_certificate(f: nl.Nonlinearity, spec: K.KernelSpec, sup: float, l1: float) -> float:
    """``2 int_0^inf l(2 min(sup, C2 s^-(n/alpha) l1)) ds``; ``<= 1`` certifies global existence.

    Requires ``f`` convex so that ``l(v) = f(v)/v``; returns ``inf`` when the
    integral near zero diverges.
    """
    a, n = spec.alpha, spec.n
    C2 = K.kernel_at_origin(spec, 1.0)
    s_c = (C2 * l1 / sup) ** (a / n)
    ell2 = nl.ell(f, 2.0 * sup, convex=True)
    I = nl.lower_integral(f, a, n, 2.0 * sup)
    if not math.isfinite(I):
        return math.inf
    return 2.0 * (s_c * ell2 + (a / n) * (2.0 * C2 * l1) ** (a / n) * I)


def proof_constants(f: nl.Nonlinearity, spec: K.KernelSpec) -> dict:
    """``tau``, ``rho`` and the smoothing constants of the small-data recipe.

    ``C1 = 1`` (unit kernel mass), ``C2 = K_alpha(0, 1)``, ``tau = 1/(4 l(2))`` and
    ``rho`` the largest value in ``(0, 1]`` with
    ``(alpha/n) 2^P (C2 rho)^(alpha/n) int_0^(2 C2 rho tau^-(n/alpha)) x^-P l(x) dx <= 1/2``.
    """
    a, n = spec.alpha, spec.n
    P = 1.0 + a / n
    C1 = 1.0
    C2 = K.kernel_at_origin(spec, 1.0)
    ell2 = nl.ell(f, 2.0, convex=True)
    tau = 1.0 / (4.0 * ell2) if ell2 > 0 else 1.0

    def lhs(rho):
        I = nl.lower_integral(f, a, n, 2.0 * C2 * rho * tau ** (-n / a))
        return (a / n) * 2.0 ** P * (C2 * rho) ** (a / n) * I

    if lhs(1.0) <= 0.5:
        rho = 1.0
    elif not lhs(math.exp(-40.0)) <= 0.5:
        rho = 0.0
    else:
        z = brentq(lambda z: lhs(math.exp(z)) - 0.5, -40.0, 0.0, xtol=1e-10)
        rho = math.exp(z) * (1 - 1e-9)
    return {"C1": C1, "C2": C2, "tau": tau, "rho": min(rho, 1.0 / C1), "two_ell2_tau": 2 * ell2 * tau}


# -- evolution ---------------------------------------------------------------------

def evolve(prob: PdeProblem, budget: PdeBudget | None = None, snapshot_times=()) -> PdeTrace:
    """Integrate the PDE with blow-up / decay detection; stores snapshots at the requested times."""
    budget = budget or PdeBudget()
    f, spec, grid = prob.f, prob.spec, prob.grid
    lin = _Linear(spec, grid)
    hn = grid.h ** spec.n
    u = prob.phi.values.copy()
    t = 0.0
    dt = budget.dt_init
    targets = sorted({float(s) for s in snapshot_times if 0 < s <= budget.t_max} | {budget.t_max})
    snaps = {0.0: prob.phi.with_values(u.copy(), t=0.0)}
    times, sups, l1s, zs, dts = [0.0], [float(np.max(u))], [float(np.sum(np.abs(u)) * hn)], \
        [lin.value_at_origin(u, 0.0)], []
    diag = {"rejected": 0, "overflow_rejections": 0, "min_inner_mass": 1.0}
    verdict = None
    ti = 0
    checkpoint = 1.0
    for _ in range(budget.max_steps):
        target = targets[ti]
        h = min(dt, target - t, budget.dt_max)
        hit = h == target - t
        try:
            big = _strang(f, lin, u, h)
            half = _strang(f, lin, _strang(f, lin, u, h / 2), h / 2)
        except NonlinearSubstepOverflow:
            diag["overflow_rejections"] += 1
            dt = h / 4
            if t > 0 and dt <= 4 * np.finfo(float).eps * t:
                verdict = blowup(t)
                diag["blowup_reason"] = "nonlinear sub-step overflow at the time resolution limit"
                break
            continue
        scale = budget.rtol * max(float(np.max(np.abs(half))), 1e-300)
        err = float(np.max(np.abs(half - big))) / scale
        if err > 1.0:
            diag["rejected"] += 1
            dt = h * max(0.2, 0.9 * err ** (-1.0 / 3.0))
            continue
        u = half
        t = target if hit else t + h
        dts.append(h)
        times.append(t)
        sup = float(np.max(u))
        sups.append(sup)
        l1s.append(float(np.sum(np.abs(u)) * hn))
        zs.append(lin.value_at_origin(u, t))
        if budget.check_domain:
            frac = _inner_mass_fraction(grid, spec.n, u)
            diag["min_inner_mass"] = min(diag["min_inner_mass"], frac)
            if frac < 1 - 1e-4:
                raise DomainTooSmall(f"mass fraction inside |x| < L/2 fell to {frac:.6f} at t = {t:.4g}")
        dt_next = h * min(2.0, max(0.2, 0.9 * max(err, 1e-12) ** (-1.0 / 3.0)))
        if not hit:
            dt = dt_next
        else:
            dt = max(dt, dt_next)
            snaps[t] = prob.phi.with_values(u.copy(), t=t)
            ti += 1
            if ti == len(targets):
                break
        if sup > budget.sup_blowup and dt < budget.dt_min:
            verdict = _blowup_verdict(times, sups, dts, diag)
            break
        if budget.early_global and budget.certify_global and t >= checkpoint:
            checkpoint *= 2.0
            early = _end_verdict(prob, budget, np.array(times), np.array(sups), l1s[-1], diag)
            if early.is_global:
                verdict = early
                diag["certified_at"] = t
                break
    else:
        verdict = undetermined(f"step budget {budget.max_steps} exhausted at t = {t:.6g}")
    if verdict is None:
        verdict = _end_verdict(prob, budget, np.array(times), np.array(sups), l1s[-1], diag)
    return PdeTrace(np.array(times), np.array(sups), np.array(l1s), np.array(zs), np.array(dts), verdict,
                    snaps, diag)


def _blowup_verdict(times, sups, dts, diag):
    sups = np.asarray(sups)
    end = sups[-1]
    start = len(sups) - 1
    while start > 0 and sups[start - 1] >= end / 100.0:
        start -= 1
    start = min(start, max(len(sups) - 8, 0))
    offsets = np.concatenate([[0.0], np.cumsum(dts[start:])])
    fit = fit_blowup(times[start], offsets, sups[start:])
    diag["fit"] = fit.__dict__
    if fit.gamma > 0 and fit.rms < 0.1:
        return blowup(fit.t_star)
    return undetermined(f"sup-norm exceeded threshold but growth fit failed (gamma={fit.gamma:.3g}, rms={fit.rms:.3g})")


def decay_slopes(times, sups):
    """Local log-log slopes of the sup-norm on 10 log-spaced panels over the last decade."""
    times = np.asarray(times)
    t_end = times[-1]
    if len(times) < 3 or times[1] > t_end / 10.0:
        return None
    pos = times > 0
    grid = np.linspace(math.log(t_end / 10.0), math.log(t_end), 11)
    ls_g = np.interp(grid, np.log(times[pos]), np.log(np.asarray(sups)[pos]))
    return np.diff(ls_g) / np.diff(grid)


def _end_verdict(prob, budget, times, sups, l1, diag):
    slopes = decay_slopes(times, sups)
    if slopes is None or slopes[-1] >= 0:
        return undetermined(f"horizon t_max = {budget.t_max:g} reached without decay")
    stable = np.ptp(slopes) <= 0.1
    exponent = float(-np.mean(slopes))
    diag["decay_slopes"] = slopes.tolist()
    if not budget.certify_global:
        return global_(exponent) if stable else undetermined("decay slope not stable over the last decade")
    cert = global_certificate(prob.f, prob.spec, float(sups[-1]), float(l1))
    diag["certificate"] = cert
    if stable and cert <= 1.0:
        return global_(exponent)
    return undetermined(f"decaying at t_max (slope {-exponent:.3f}) but certificate {cert:.3g} > 1")


def blowup_time(trace: PdeTrace) -> Optional[float]:
    return trace.verdict.t_star if trace.verdict.is_blowup else None


# -- analysis of snapshots -------------------------------------------------------------

def duhamel_residual(trace: PdeTrace, prob: PdeProblem, t_check=None, stride: int = 1) -> float:
    """Max over ``t_check`` of ``||u - S(t) phi - D(t)||_inf / ||u||_inf``.

    ``D`` is the Duhamel integral by the trapezoid recurrence over the stored
    snapshot times (every ``stride``-th): ``D_j = S(d) D_{j-1} + d/2 (S(d) f_{j-1} + f_j)``.
    """
    lin = _Linear(prob.spec, prob.grid)
    ts = trace.snapshot_times()[::stride]
    if ts[0] != 0.0:
        raise ValueError("snapshots must include t = 0")
    if t_check is None:
        t_check = ts[1:]
    t_check = set(float(t) for t in t_check)
    phi = prob.phi.values
    D = np.zeros_like(phi)
    f_prev = prob.f.evaluate(np.maximum(phi, 0.0))
    worst = 0.0
    for j in range(1, len(ts)):
        d = ts[j] - ts[j - 1]
        u = trace.snapshots[ts[j]].values
        f_now = prob.f.evaluate(np.maximum(u, 0.0))
        D = lin.apply(D + 0.5 * d * f_prev, d) + 0.5 * d * f_now
        f_prev = f_now
        if ts[j] in t_check:
            res = u - lin.apply(phi, ts[j]) - D
            worst = max(worst, float(np.max(np.abs(res))) / float(np.max(np.abs(u))))
    return worst


def moment_functional(trace: PdeTrace, prob: PdeProblem) -> dict:
    """``z(t) = int K_alpha(x, t) u(x, t) dx`` at every snapshot (and along the trace)."""
    lin = _Linear(prob.spec, prob.grid)
    ts = trace.snapshot_times()
    z = [lin.value_at_origin(trace.snapshots[t].values, t) if t > 0 else math.nan for t in ts]
    return {"snapshot_times": np.array(ts), "z": np.array(z), "trace_times": trace.times, "trace_z": trace.z_values}


def normalised_kernel(spec: K.KernelSpec, grid: K.GridSpec, t: float) -> np.ndarray:
    """Kernel field clamped at zero and rescaled to unit discrete mass."""
    k = np.maximum(K.kernel_field(spec, grid, t).values, 0.0)
    return k / (np.sum(k) * grid.h ** spec.n)


def jensen_check(snapshot: K.Field, prob: PdeProblem, t: float, tol: float = 1e-10) -> dict:
    """``int K f(v) >= f(int K v)`` under the unit-mass kernel measure at time ``t``."""
    v = np.maximum(snapshot.values, 0.0)
    w = normalised_kernel(prob.spec, prob.grid, t) * prob.grid.h ** prob.spec.n
    lhs = float(np.sum(w * prob.f.evaluate(v)))
    rhs = float(prob.f.evaluate(float(np.sum(w * v))))
    if lhs < rhs - tol * (1 + abs(lhs)):
        raise ConvexityViolation(f"Jensen inequality fails at t = {t:g}: {lhs:.12g} < {rhs:.12g}")
    return {"lhs": lhs, "rhs": rhs}


# -- monotone iteration --------------------------------------------------------------

def default_nodes(T: float, early: float = 1.0, n_early: int = 40, n_late: int = 120) -> np.ndarray:
    """Uniform nodes on ``[0, early]`` followed by geometric nodes up to ``T``."""
    a = np.linspace(0.0, min(early, T), n_early + 1)
    if T <= early:
        return a
    return np.concatenate([a, np.geomspace(early, T, n_late + 1)[1:]])


def duhamel_map(prob: PdeProblem, nodes: np.ndarray, w: np.ndarray, free: np.ndarray | None = None) -> np.ndarray:
    """``F(w; phi)`` at the nodes, with the time integral by the trapezoid recurrence.

    ``free`` optionally holds the precomputed ``S(t_j) phi``.
    """
    lin = _Linear(prob.spec, prob.grid)
    phi = prob.phi.values
    if free is None:
        free = np.stack([lin.apply(phi, t) for t in nodes])
    out = np.empty_like(w)
    out[0] = phi
    D = np.zeros_like(phi)
    f_prev = prob.f.evaluate(np.maximum(w[0], 0.0))
    for j in range(1, len(nodes)):
        d = nodes[j] - nodes[j - 1]
        f_now = prob.f.evaluate(np.maximum(w[j], 0.0))
        D = lin.apply(D + 0.5 * d * f_prev, d) + 0.5 * d * f_now
        f_prev = f_now
        out[j] = free[j] + D
    return out


def supersolution_iterate(prob: PdeProblem, iterations: int = 6, T: float = 100.0, nodes=None,
                          tol: float = 1e-12, evolve_budget: PdeBudget | None = None,
                          compare_with_evolve: bool = True) -> dict:
    """Monotone iteration ``u_{k+1} = F(u_k; phi)`` from ``u_0 = w = 2 S(t) phi``.

    Raises :class:`SupersolutionViolation` if ``F(w) <= w`` fails beyond ``tol``
    (relative to ``sup w``).
    """
    const = proof_constants(prob.f, prob.spec)
    size = K.l1_norm(prob.phi) + K.sup_norm(prob.phi)
    nodes = default_nodes(T) if nodes is None else np.asarray(nodes, dtype=float)
    lin = _Linear(prob.spec, prob.grid)
    free = np.stack([lin.apply(prob.phi.values, t) for t in nodes])
    w = 2.0 * free
    scale = float(np.max(np.abs(w)))
    u = duhamel_map(prob, nodes, w, free)
    excess = float(np.max(u - w))
    if excess > tol * scale:
        raise SupersolutionViolation(f"F(w) exceeds w by {excess:.3e} (data size {size:.3g}, rho {const['rho']:.3g})")
    iterates = [u]
    monotone = True
    worst_increase = 0.0
    for _ in range(iterations - 1):
        nxt = duhamel_map(prob, nodes, iterates[-1], free)
        inc = float(np.max(nxt - iterates[-1]))
        worst_increase = max(worst_increase, inc)
        if inc > tol * scale:
            monotone = False
        iterates.append(nxt)
    res = {
        "constants": const,
        "data_size": size,
        "within_rho": size <= const["rho"],
        "nodes": nodes,
        "sup_norms": [np.max(it, axis=tuple(range(1, it.ndim))) for it in iterates],
        "monotone": monotone,
        "supersolution_excess": excess,
        "worst_increase": worst_increase,
        "last": iterates[-1],
        "successive_gap": float(np.max(np.abs(iterates[-1] - iterates[-2]))) if len(iterates) > 1 else math.nan,
    }
    if compare_with_evolve:
        tr = evolve(prob, evolve_budget or PdeBudget(t_max=float(nodes[-1]), rtol=1e-10), snapshot_times=nodes[1:])
        ev = np.stack([tr.snapshots[float(t)].values for t in [0.0] + list(map(float, nodes[1:]))])
        res["limit_gap"] = float(np.max(np.abs(iterates[-1] - ev)))
        res["evolve_trace"] = tr
    return res


# -- sampled property ---------------------------------------------------------------

def gaussian_bump(grid: K.GridSpec, n: int, amplitude: float, width: float = 1.0) -> K.Field:
    """``amplitude * exp(-|x|^2 / (2 width^2))``."""
    r2 = sum(c * c for c in grid.coords(n))
    return K.Field(grid, amplitude * np.exp(-r2 / (2 * width * width)))


def mollified_indicator(grid: K.GridSpec, n: int, amplitude: float, radius: float = 1.0,
                        softness: float = 0.2) -> K.Field:
    """Smoothed indicator of the ball of radius ``radius`` (tanh edge of width ``softness``)."""
    r = np.sqrt(sum(c * c for c in grid.coords(n)))
    return K.Field(grid, amplitude * 0.5 * (1.0 + np.tanh((radius - r) / softness)))


@dataclass(frozen=True)
class PhiFamily:
    amplitudes: tuple = (0.05, 0.5, 5.0, 50.0, 500.0)
    shapes: tuple = ("gaussian", "indicator")
    width: float = 1.0

    def validate(self):
        if max(self.amplitudes) / min(self.amplitudes) < 1e4 * (1 - 1e-12) or len(set(self.shapes)) < 2:
            raise ValueError("family must span >= 4 decades of amplitude and two shapes")
        return self

    def fields(self, grid, n):
        for shape in self.shapes:
            for a in self.amplitudes:
                if shape == "gaussian":
                    yield shape, a, gaussian_bump(grid, n, a, self.width)
                else:
                    yield shape, a, mollified_indicator(grid, n, a, self.width)


def _run_pde_cell(args):
    f_json, alpha, n, L, N, values, budget = args
    f = nl.from_json(f_json)
    spec = K.KernelSpec(alpha, n)
    grid = K.GridSpec(L, N)
    try:
        tr = evolve(PdeProblem(f, spec, grid, K.Field(grid, values)), budget)
        return tr.verdict
    except DomainTooSmall as exc:
        return undetermined(f"domain too small: {exc}")


def pde_blowup_property(f: nl.Nonlinearity, spec: K.KernelSpec, grid: K.GridSpec, family: PhiFamily | None = None,
                        budget: PdeBudget | None = None, jobs: int = 1):
    """Aggregate PDE verdicts over a family of initial data; returns ``(verdict, cells)``."""
    family = (family or PhiFamily()).validate()
    budget = budget or PdeBudget()
    items = list(family.fields(grid, spec.n))
    args = [(f.to_json(), spec.alpha, spec.n, grid.L, grid.N, fld.values, budget) for _, _, fld in items]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as ex:
            verdicts = list(ex.map(_run_pde_cell, args))
    else:
        verdicts = [_run_pde_cell(a) for a in args]
    cells = [(shape, a, v) for (shape, a, _), v in zip(items, verdicts)]
    return aggregate(verdicts), cells


def make_phi(grid: K.GridSpec, n: int, shape: str = "gaussian", amplitude: float = 0.05,
             width: float = 1.0) -> K.Field:
    if shape == "gaussian":
        return gaussian_bump(grid, n, amplitude, width)
    if shape == "indicator":
        return mollified_indicator(grid, n, amplitude, width)
    if shape == "constant":
        return K.Field(grid, np.full((grid.N,) * n, float(amplitude)))
    raise ValueError(f"unknown data shape {shape!r}")


def loglog_slope(times, sups, t_lo: float, t_hi: float, num: int = 41) -> float:
    """Least-squares slope of ``log sup`` against ``log t`` on a log-uniform grid over ``[t_lo, t_hi]``."""
    times = np.asarray(times)
    pos = times > 0
    lt = np.linspace(math.log(t_lo), math.log(t_hi), num)
    ls = np.interp(lt, np.log(times[pos]), np.log(np.asarray(sups)[pos]))
    return float(np.polyfit(lt, ls, 1)[0])


def small_data_bound_check(prob: PdeProblem, T: float = 100.0, nodes=None, budget: PdeBudget | None = None,
                           slope_window=(1.0, None)) -> dict:
    """Compare ``u(t)`` with ``2 S(t) phi`` at the nodes and fit the sup-norm decay slope."""
    nodes = default_nodes(T) if nodes is None else np.asarray(nodes, dtype=float)
    tr = evolve(prob, budget or PdeBudget(t_max=T, rtol=1e-10), snapshot_times=nodes[1:])
    lin = _Linear(prob.spec, prob.grid)
    excess = max(float(np.max(tr.snapshots[t].values - 2.0 * lin.apply(prob.phi.values, t)))
                 for t in tr.snapshot_times())
    lo, hi = slope_window[0], slope_window[1] or T
    return {
        "trace": tr,
        "max_excess": excess,
        "slope": loglog_slope(tr.times, tr.sup_norms, lo, hi),
        "target_slope": -prob.spec.n / prob.spec.alpha,
        "verdict": tr.verdict,
    }


def refinement_check(f: nl.Nonlinearity, spec: K.KernelSpec, grid: K.GridSpec, phi: dict,
                     budget: PdeBudget | None = None) -> dict:
    """Run at ``(N, budget)`` and ``(2N, budget.refined())``; report both verdicts and the ``t*`` spread."""
    budget = budget or PdeBudget()
    out = {}
    for tag, g, b in (("base", grid, budget), ("refined", K.GridSpec(grid.L, 2 * grid.N), budget.refined())):
        tr = evolve(PdeProblem(f, spec, g, make_phi(g, spec.n, **phi)), b)
        out[tag] = tr
    tb, tf = blowup_time(out["base"]), blowup_time(out["refined"])
    rel = abs(tb - tf) / tf if tb is not None and tf is not None else math.nan
    out["t_star"] = (tb, tf)
    out["relative_change"] = rel
    out["same_verdict"] = out["base"].verdict.outcome == out["refined"].verdict.outcome
    return out
