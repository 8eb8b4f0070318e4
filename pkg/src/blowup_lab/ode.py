"""The auxiliary ODE ``x' = f(x) - (n / (alpha t)) x``, ``x(t0) = x0``.

Integration uses an embedded Dormand-Prince 5(4) pair with PI step control
and the standard quartic dense output.  Step sizes are kept individually, so
distances to a blow-up time can be accumulated exactly even once ``t + h``
rounds to ``t``.

Verdicts
--------
BlowUp
    ``x`` exceeds ``x_blowup``, the relative step ``h/t`` has dropped below
    ``min_step`` and ``x ~ C (t* - t)^-gamma`` fits the last decade of growth.
Global
    ``x`` decays with a stable log-log slope over the final factor of ten in
    ``t``, and the bound ``y <= 2 y(t1)`` on ``y = t^(n/alpha) x`` is
    certified: it holds for all later times as soon as
    ``(alpha/n) t1 (2 x1)^(alpha/n) int_0^(2 x1) f(u) u^-(2+alpha/n) du <= log 2``.
Undetermined
    Budget exhausted otherwise.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import minimize_scalar

from . import nonlinearity as nl
from .errors import NegativeInput, StepUnderflow
from .verdict import Verdict, aggregate, blowup, global_, undetermined

# Dormand-Prince 5(4) tableau
C = np.array([0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1])
A = np.array([
    [0, 0, 0, 0, 0],
    [1 / 5, 0, 0, 0, 0],
    [3 / 40, 9 / 40, 0, 0, 0],
    [44 / 45, -56 / 15, 32 / 9, 0, 0],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729, 0],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
])
B = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
# difference between the 5th- and 4th-order weights (includes the FSAL stage)
E = np.array([-71 / 57600, 0, 71 / 16695, -71 / 1920, 17253 / 339200, -22 / 525, 1 / 40])
# quartic dense output: y(t + s h) = y + h K^T P [s, s^2, s^3, s^4]
P = np.array([
    [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0, 0, 0, 0],
    [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 10.0
# PI exponents (Hairer & Wanner, beta = 0.04)
PI_BETA = 0.04
PI_ALPHA = 0.2 - 0.75 * PI_BETA


@dataclass(frozen=True)
class OdeProblem:
    f: nl.Nonlinearity
    alpha: float
    n: int
    t0: float
    x0: float

    def __post_init__(self):
        nl.CriticalExponent(self.alpha, self.n)
        if not self.t0 > 0:
            raise ValueError("t0 must be positive")
        if not self.x0 > 0:
            raise ValueError("x0 must be positive")

    @property
    def k(self) -> float:
        """``n / alpha``."""
        return self.n / self.alpha

    def rhs(self, t, x):
        return self.f.evaluate(x) - self.k / t * x


@dataclass(frozen=True)
class OdeBudget:
    """Run limits.  ``min_step`` is relative: collapse means ``h < min_step * max(t, 1)``."""

    t_max: float = 1e12
    x_blowup: float = 1e12
    min_step: float = 1e-3
    rtol: float = 1e-10
    max_steps: int = 200_000
    certify_global: bool = True

    def halved(self) -> "OdeBudget":
        return OdeBudget(self.t_max, self.x_blowup, self.min_step, self.rtol / 2, self.max_steps,
                         self.certify_global)

    def to_json(self):
        return dict(self.__dict__)


@dataclass(eq=False)
class OdeTrace:
    times: np.ndarray
    values: np.ndarray
    steps: np.ndarray
    steps_accepted: int
    steps_rejected: int
    verdict: Verdict
    coordinate: str = "x"
    problem: Optional[OdeProblem] = None
    stages: np.ndarray = field(default=None, repr=False)
    info: dict = field(default_factory=dict)

    def dense(self, t):
        """Dense-output value at ``t`` (inside the integrated range)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        j = np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, len(self.steps) - 1)
        return self.dense_in_step(j, (t - self.times[j]) / self.steps[j])

    def dense_in_step(self, j, s):
        """Dense output inside step ``j`` at fraction ``s`` in [0, 1] (robust when times repeat)."""
        j = np.asarray(j)
        s = np.asarray(s, dtype=float)
        powers = np.stack([s, s * s, s ** 3, s ** 4], axis=-1)
        Q = self.stages[j] @ P
        return self.values[j] + self.steps[j] * np.sum(Q * powers, axis=-1)

    def x_values(self):
        if self.coordinate == "x":
            return self.values
        return self.values * self.times ** (-self.problem.k)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", self.coordinate, "step", "order"])
            steps = np.append(self.steps, np.nan)
            for t, x, h in zip(self.times, self.values, steps):
                w.writerow([repr(float(t)), repr(float(x)), repr(float(h)), 5])


def dp45_step(rhs, t, y, h, k0):
    """One Dormand-Prince step; returns ``(y_new, stages (7,), error estimate)``."""
    K = np.empty(7)
    K[0] = k0
    for s in range(1, 6):
        ys = y + h * np.dot(A[s, :s], K[:s])
        if not ys > 0:
            raise NegativeInput("stage left the positive axis")
        K[s] = rhs(t + C[s] * h, ys)
    y_new = y + h * np.dot(B, K[:6])
    if not y_new > 0:
        raise NegativeInput("step left the positive axis")
    K[6] = rhs(t + h, y_new)
    err = h * np.dot(E, K)
    return y_new, K, err


def _initial_step(rhs, t0, y0, rtol):
    d1 = abs(rhs(t0, y0))
    if d1 == 0 or not math.isfinite(d1):
        return 1e-6 * t0
    return min(0.01 * (rtol ** 0.2) * y0 / d1 * 10.0, t0)


# -- blow-up fit ----------------------------------------------------------------

@dataclass
class BlowupFit:
    t_star: float
    gamma: float
    log_C: float
    rms: float
    points: int


def fit_blowup(t_ref, offsets, x) -> BlowupFit:
    """Fit ``log x = log C - gamma log(T - offset)`` with a 1-d search over ``T``.

    ``offsets`` are exact times since ``t_ref`` (sums of accepted steps); the
    returned ``t_star`` is ``t_ref + T``.
    """
    offsets = np.asarray(offsets, dtype=float)
    lx = np.log(np.asarray(x, dtype=float))
    last = offsets[-1]
    span = max(last - offsets[0], 1e-300)

    def solve(z):
        d = math.exp(z)
        lg = np.log(last - offsets + d)
        M = np.stack([np.ones_like(lg), -lg], axis=1)
        coef, *_ = np.linalg.lstsq(M, lx, rcond=None)
        r = lx - M @ coef
        return coef, float(np.sqrt(np.mean(r * r)))

    lo = math.log(span) - 60.0
    hi = math.log(span) + 5.0
    grid = np.linspace(lo, hi, 131)
    vals = [solve(z)[1] for z in grid]
    k = int(np.argmin(vals))
    a, b = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
    res = minimize_scalar(lambda z: solve(z)[1], bounds=(a, b), method="bounded", options={"xatol": 1e-10})
    z = float(res.x) if res.fun <= vals[k] else float(grid[k])
    coef, rms = solve(z)
    return BlowupFit(t_star=t_ref + last + math.exp(z), gamma=float(coef[1]), log_C=float(coef[0]), rms=rms,
                     points=len(lx))


def global_certificate(f: nl.Nonlinearity, alpha, n, t1, x1) -> float:
    """``(alpha/n) t1 (2 x1)^(alpha/n) int_0^(2 x1) f/u^(2+alpha/n)``; ``<= log 2`` certifies decay."""
    I = nl.lower_integral(f, alpha, n, 2.0 * x1)
    if not math.isfinite(I):
        return math.inf
    return (alpha / n) * t1 * (2.0 * x1) ** (alpha / n) * I


def _slope_window(times, x):
    """Local log-log slopes over the final factor of ten in ``t``."""
    t_end = times[-1]
    sel = times >= t_end / 10.0
    lt, lx = np.log(times[sel]), np.log(x[sel])
    if len(lt) < 4 or lt[-1] - lt[0] < math.log(10.0) * 0.99:
        return None
    return np.diff(lx) / np.diff(lt)


# -- integration core ---------------------------------------------------------------

def _integrate(prob: OdeProblem, budget: OdeBudget, coordinate: str) -> OdeTrace:
    k = prob.k
    f = prob.f
    if coordinate == "x":
        rhs = prob.rhs
        y0 = prob.x0

        def to_x(t, y):
            return y
    else:
        def rhs(t, y):
            x = y * t ** (-k)
            return t ** k * f.evaluate(x)

        y0 = prob.t0 ** k * prob.x0

        def to_x(t, y):
            return y * t ** (-k)

    t, y = float(prob.t0), float(y0)
    times, vals, steps, stages = [t], [y], [], []
    k0 = rhs(t, y)
    h = _initial_step(rhs, t, y, budget.rtol)
    err_prev = 1.0
    acc = rej = 0
    verdict = None
    info = {"certificate": None}
    next_cert = t * 10.0
    while verdict is None:
        if acc >= budget.max_steps:
            verdict = undetermined(f"step budget {budget.max_steps} exhausted at t = {t:.6g}")
            break
        if t >= budget.t_max:
            verdict = _horizon_verdict(prob, times, vals, to_x, budget, info)
            break
        h = min(h, max(budget.t_max - t, 1e-300 * t))
        try:
            y_new, K, err = dp45_step(rhs, t, y, h, k0)
            sc = budget.rtol * max(abs(y), abs(y_new))
            e = abs(err) / sc
            if not math.isfinite(e):
                raise FloatingPointError
        except (NegativeInput, FloatingPointError, OverflowError):
            rej += 1
            h *= MIN_FACTOR
            if h < 1e-15 * max(t, 1.0):
                raise StepUnderflow(f"step underflow at t = {t:.6g}, x = {to_x(t, y):.6g} without growth")
            continue
        if e <= 1.0:
            steps.append(h)
            stages.append(K)
            t_next = t + h
            t, y, k0 = t_next, y_new, K[6]
            times.append(t)
            vals.append(y)
            acc += 1
            fac = SAFETY * (max(e, 1e-10) ** -PI_ALPHA) * (err_prev ** PI_BETA)
            err_prev = max(e, 1e-4)
            h_next = h * min(MAX_FACTOR, max(MIN_FACTOR, fac))
            x = to_x(t, y)
            if x > budget.x_blowup and h_next < budget.min_step * max(t, 1.0):
                verdict = _blowup_verdict(times, vals, steps, to_x, info)
                break
            if budget.certify_global and t >= next_cert:
                next_cert = t * 10.0
                verdict = _try_global(prob, times, vals, to_x, info)
            h = h_next
        else:
            rej += 1
            h *= max(MIN_FACTOR, SAFETY * e ** -0.2)
            if h < 1e-15 * max(t, 1.0):
                x = to_x(t, y)
                if x > 1e6 and to_x(times[-1], vals[-1]) > to_x(times[max(len(times) - 6, 0)], vals[max(len(vals) - 6, 0)]):
                    verdict = _blowup_verdict(times, vals, steps, to_x, info)
                    break
                raise StepUnderflow(f"step underflow at t = {t:.6g}, x = {x:.6g} without growth")
    return OdeTrace(
        times=np.array(times), values=np.array(vals), steps=np.array(steps), steps_accepted=acc,
        steps_rejected=rej, verdict=verdict, coordinate=coordinate, problem=prob,
        stages=np.array(stages).reshape(-1, 7), info=info,
    )


def _xs(times, vals, to_x):
    return np.array([to_x(t, v) for t, v in zip(times, vals)])


def _blowup_verdict(times, vals, steps, to_x, info):
    xs = _xs(times, vals, to_x)
    x_end = xs[-1]
    start = len(xs) - 1
    while start > 0 and xs[start - 1] >= x_end / 10.0:
        start -= 1
    start = min(start, max(len(xs) - 8, 0))
    offsets = np.concatenate([[0.0], np.cumsum(steps[start:])])
    fit = fit_blowup(times[start], offsets, xs[start:])
    info["fit"] = fit.__dict__
    if fit.gamma > 0 and fit.rms < 0.05:
        return blowup(fit.t_star)
    return undetermined(f"x exceeded threshold but (t*-t)^-gamma fit failed (gamma={fit.gamma:.3g}, rms={fit.rms:.3g})")


def _try_global(prob, times, vals, to_x, info):
    t1 = times[-1]
    xs = _xs(times, vals, to_x)
    slopes = _slope_window(np.array(times), xs)
    if slopes is None or slopes[-1] >= 0:
        return None
    cert = global_certificate(prob.f, prob.alpha, prob.n, t1, xs[-1])
    info["certificate"] = {"t1": t1, "x1": float(xs[-1]), "value": cert, "bound": math.log(2.0)}
    if cert <= math.log(2.0) and np.ptp(slopes) <= 0.1:
        return global_(float(-np.mean(slopes)))
    return None


def _horizon_verdict(prob, times, vals, to_x, budget, info):
    v = _try_global(prob, times, vals, to_x, info) if budget.certify_global else None
    if v is not None:
        return v
    xs = _xs(times, vals, to_x)
    slopes = _slope_window(np.array(times), xs)
    if not budget.certify_global and slopes is not None and slopes[-1] < 0 and np.ptp(slopes) <= 0.1:
        return global_(float(-np.mean(slopes)))
    desc = "decaying" if slopes is not None and slopes[-1] < 0 else "not decaying"
    return undetermined(f"horizon t_max = {budget.t_max:g} reached, x = {xs[-1]:.3g} {desc}; no global certificate")


def integrate(prob: OdeProblem, budget: OdeBudget | None = None) -> OdeTrace:
    """Integrate the ODE in ``x`` with blow-up / decay detection."""
    return _integrate(prob, budget or OdeBudget(), "x")


def integrate_y(prob: OdeProblem, budget: OdeBudget | None = None) -> OdeTrace:
    """Integrate ``y = t^(n/alpha) x``, which solves ``y' = t^(n/alpha) f(y t^(-n/alpha))``."""
    return _integrate(prob, budget or OdeBudget(), "y")


# -- integral form ----------------------------------------------------------------

def volterra_residual(trace: OdeTrace, prob: OdeProblem | None = None, x_limit: float = 1e6, nodes: int = 8):
    """Max relative deviation of ``x`` from its integral form along the trace.

    ``x(t) = (t/t0)^-k x0 + t^-k int_t0^t s^k f(x(s)) ds`` with ``k = n/alpha``;
    the integral is accumulated per step by Gauss-Legendre on the dense output.
    Points with ``x > x_limit`` (approach to blow-up) are excluded and counted.
    """
    prob = prob or trace.problem
    k = prob.k
    xg, wg = np.polynomial.legendre.leggauss(nodes)
    t = trace.times
    h = trace.steps
    m = len(h)
    frac = 0.5 * (xg + 1.0)
    s = t[:-1, None] + h[:, None] * frac[None, :]
    xs = trace.dense_in_step(np.repeat(np.arange(m), nodes), np.tile(frac, m)).reshape(m, nodes)
    if trace.coordinate == "y":
        xs = xs * s ** (-k)
    with np.errstate(over="ignore"):
        g = s ** k * prob.f.evaluate(np.maximum(xs, 0.0))
    pieces = 0.5 * h * (g @ wg)
    cum = np.concatenate([[0.0], np.cumsum(pieces)])
    x = trace.x_values()
    rhs = (t / prob.t0) ** (-k) * prob.x0 + t ** (-k) * cum
    keep = x <= x_limit
    if trace.verdict.is_blowup:
        # drop the final decade before the singularity
        keep &= x <= min(x_limit, x[-1] / 10.0)
    rel = np.abs(rhs[keep] - x[keep]) / x[keep]
    return {"max_residual": float(np.max(rel)) if rel.size else math.nan,
            "excluded": int(np.count_nonzero(~keep))}


# -- sampled property -------------------------------------------------------------

@dataclass(frozen=True)
class Sample:
    x0: tuple = (0.1, 1.0, 10.0, 100.0, 1000.0)
    t0: tuple = (1.0, 10.0, 100.0)

    def validate(self):
        if max(self.x0) / min(self.x0) < 1e4 * (1 - 1e-12) or max(self.t0) / min(self.t0) < 1e2 * (1 - 1e-12):
            raise ValueError("sample must span >= 4 decades of x0 and >= 2 decades of t0")
        return self


def _run_cell(args):
    f_json, alpha, n, t0, x0, budget = args
    f = nl.from_json(f_json)
    try:
        tr = integrate(OdeProblem(f, alpha, n, t0, x0), budget)
        return tr.verdict
    except StepUnderflow as exc:
        return undetermined(f"step underflow: {exc}")


def ode_blowup_property(f: nl.Nonlinearity, alpha, n, sample: Sample | None = None,
                        budget: OdeBudget | None = None, jobs: int = 1):
    """Aggregate verdicts over a sample of ``(x0, t0)``.

    Returns ``(verdict, cells)`` with ``cells`` a list of ``(x0, t0, Verdict)``.
    """
    sample = (sample or Sample()).validate()
    budget = budget or OdeBudget()
    args = [(f.to_json(), alpha, n, t0, x0, budget) for t0 in sample.t0 for x0 in sample.x0]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as ex:
            verdicts = list(ex.map(_run_cell, args))
    else:
        verdicts = [_run_cell(a) for a in args]
    cells = [(a[4], a[3], v) for a, v in zip(args, verdicts)]
    return aggregate(verdicts), cells


def no_return_ok(trace: OdeTrace, slack: float = 1e-12) -> bool:
    """Once ``x`` stops increasing it never increases again.

    Every critical point of ``x`` is a minimum, so this holds on trajectories
    that exist globally; data that dips first and then blows up violates it.
    """
    x = trace.x_values()
    d = np.diff(x)
    down = np.flatnonzero(d <= 0)
    if down.size == 0:
        return True
    tail = d[down[0]:]
    return bool(np.all(tail <= slack * np.abs(x[down[0] + 1:])))
