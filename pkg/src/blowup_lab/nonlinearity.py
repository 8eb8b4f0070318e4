"""Source terms ``f`` and the numerical checks of their structural hypotheses.

Every nonlinearity can be evaluated directly, ``f(u)``, and in log space,
``log f`` as a function of ``log u``.  The log-space route is what makes
the doubly-exponential scales of the stepwise construction (see
:mod:`blowup_lab.example4`) tractable.

The hypotheses checked are

* (M) ``f`` non-decreasing with ``f(0) = 0``;
* (C) ``f`` convex;
* (B) ``int_1^inf du / f(u) < inf``;
* (S) through the sufficient condition that ``f(u)/u^p`` is non-decreasing on
  ``(0, c0)`` for some ``p > 1``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import quadrature as q
from .errors import HypothesesUnmet, InvalidRange, LogDomainError, NegativeInput, QuadratureNoConvergence
from .verdict import Verdict, blowup, global_, undetermined

# below this, exp(log_u) underflows to zero in double precision
LOG_TINY = math.log(np.finfo(float).tiny) - 36.0


@dataclass(frozen=True)
class CriticalExponent:
    alpha: float
    n: int

    def __post_init__(self):
        if not 0 < self.alpha <= 2:
            raise ValueError("alpha must lie in (0, 2]")
        if int(self.n) != self.n or self.n < 1:
            raise ValueError("n must be a positive integer")

    @property
    def p_alpha(self) -> float:
        return 1.0 + self.alpha / self.n


def p_alpha(alpha, n):
    return CriticalExponent(alpha, n).p_alpha


class Nonlinearity:
    """Base class.  Subclasses implement :meth:`eval_log` and :meth:`to_json`."""

    kind = "abstract"
    #: convexity known analytically (``None``: must be tested)
    known_convex: Optional[bool] = None

    def eval_log(self, log_u):
        raise NotImplementedError

    def eval_log_scaled(self, log_u, p):
        """``log(f(u) / u^p)``; subclasses override to avoid cancellation at huge ``|log u|``."""
        log_u = np.asarray(log_u, dtype=float)
        return self.eval_log(log_u) - p * log_u

    def evaluate(self, u):
        u = np.asarray(u, dtype=float)
        if np.any(u < 0):
            raise NegativeInput("f is only defined on u >= 0")
        if not np.all(np.isfinite(u)):
            raise ValueError("u must be finite")
        out = np.zeros_like(u)
        pos = u > 0
        with np.errstate(divide="ignore"):
            out[pos] = np.exp(self.eval_log(np.log(u[pos])))
        return out if out.ndim else float(out)

    __call__ = evaluate

    def to_json(self) -> dict:
        raise NotImplementedError

    def dumps(self) -> str:
        return json.dumps(self.to_json())

    # hooks used by the hypothesis and criterion machinery
    def s_breakpoints(self):
        """Kinks of ``f`` in the variable ``s = -log u``."""
        return ()

    def criterion_cuts(self, alpha, n):
        """Custom cut schedule in ``s`` for the divergence test, or ``None``."""
        return None

    def scaling_hint(self):
        """``(p, c0)`` for which ``f/u^p`` is expected non-decreasing on ``(0, c0)``."""
        return None

    def structural_points(self):
        """Extra ``log u`` samples placed on kinks and structure."""
        return np.array([])

    def structural_certificates(self) -> dict:
        """Closed-form checks covering scales the sampled grid cannot reach."""
        return {}


@dataclass(frozen=True)
class PowerLaw(Nonlinearity):
    p: float
    kind = "power"
    known_convex = True

    def __post_init__(self):
        if not self.p > 1:
            raise ValueError("power-law exponent must exceed 1")

    def eval_log(self, log_u):
        return self.p * np.asarray(log_u, dtype=float)

    def eval_log_scaled(self, log_u, p):
        return (self.p - p) * np.asarray(log_u, dtype=float)

    def evaluate(self, u):
        u = np.asarray(u, dtype=float)
        if np.any(u < 0):
            raise NegativeInput("f is only defined on u >= 0")
        out = u ** self.p
        return out if out.ndim else float(out)

    __call__ = evaluate

    def flow(self, u, t):
        """Exact solution of ``v' = v^p`` at time ``t`` from ``v(0) = u``.

        Entries that blow up before ``t`` come back as ``inf``.
        """
        u = np.asarray(u, dtype=float)
        k = self.p - 1.0
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            base = u ** (-k) - k * t
            out = np.where(base > 0, base ** (-1.0 / k), np.inf)
        return np.where(u > 0, out, 0.0)

    def scaling_hint(self):
        return (self.p, 1.0)

    def to_json(self):
        return {"kind": self.kind, "p": self.p}


@dataclass(frozen=True)
class Linear(Nonlinearity):
    """``f(u) = c u``; the boundary case of convexity (and ``f = 0`` for ``c = 0``)."""

    c: float = 0.0
    kind = "linear"
    known_convex = True

    def __post_init__(self):
        if self.c < 0:
            raise ValueError("c must be non-negative")

    def eval_log(self, log_u):
        log_u = np.asarray(log_u, dtype=float)
        with np.errstate(divide="ignore"):
            return math.log(self.c) + log_u if self.c > 0 else np.full_like(log_u, -np.inf)

    def evaluate(self, u):
        u = np.asarray(u, dtype=float)
        if np.any(u < 0):
            raise NegativeInput("f is only defined on u >= 0")
        out = self.c * u
        return out if out.ndim else float(out)

    __call__ = evaluate

    def flow(self, u, t):
        return np.asarray(u, dtype=float) * math.exp(self.c * t)

    def to_json(self):
        return {"kind": self.kind, "c": self.c}


def _log_extension(log_u, log_c0, log_f0, log_f1):
    """``log(f0 + f1 (u - c0) + (u - c0)^2)`` for ``u >= c0``, overflow-free."""
    log_u = np.asarray(log_u, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_w = log_u + q.log1mexp(np.minimum(log_c0 - log_u, 0.0))
    terms = np.stack(np.broadcast_arrays(np.full_like(log_w, log_f0), log_f1 + log_w, 2 * log_w))
    return np.logaddexp.reduce(terms, axis=0)


@dataclass(frozen=True)
class LogCorrected(Nonlinearity):
    """Critical power with a logarithmic correction near zero.

    ``f(u) = u^P (log 1/u)^-beta`` on ``(0, c0)`` with ``P = 1 + alpha/n``,
    continued for ``u >= c0`` by ``f(c0) + f'(c0)(u - c0) + (u - c0)^2``,
    which keeps ``f`` C^1, convex and superlinear at infinity.
    """

    alpha: float
    n: int
    beta: float
    c0: float = 0.01
    kind = "logcorrected"
    known_convex = True

    def __post_init__(self):
        CriticalExponent(self.alpha, self.n)
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if not 0 < self.c0 < 1:
            raise ValueError("c0 must lie in (0, 1)")

    @property
    def P(self):
        return 1.0 + self.alpha / self.n

    def _edge(self):
        L0 = -math.log(self.c0)
        log_f0 = self.P * math.log(self.c0) - self.beta * math.log(L0)
        log_f1 = log_f0 + math.log(self.P + self.beta / L0) - math.log(self.c0)
        return log_f0, log_f1

    def eval_log(self, log_u):
        log_u = np.asarray(log_u, dtype=float)
        log_c0 = math.log(self.c0)
        low = log_u < log_c0
        with np.errstate(invalid="ignore", divide="ignore"):
            inner = self.P * log_u - self.beta * np.log(-np.where(low, log_u, -1.0))
        log_f0, log_f1 = self._edge()
        outer = _log_extension(np.where(low, log_c0, log_u), log_c0, log_f0, log_f1)
        out = np.where(low, inner, outer)
        return out if out.ndim else float(out)

    def eval_log_scaled(self, log_u, p):
        log_u = np.asarray(log_u, dtype=float)
        low = log_u < math.log(self.c0)
        with np.errstate(invalid="ignore", divide="ignore"):
            inner = (self.P - p) * log_u - self.beta * np.log(-np.where(low, log_u, -1.0))
        out = np.where(low, inner, self.eval_log(log_u) - p * log_u)
        return out if out.ndim else float(out)

    def evaluate(self, u):
        u = np.asarray(u, dtype=float)
        if np.any(u < 0):
            raise NegativeInput("f is only defined on u >= 0")
        out = np.zeros_like(u)
        low = (u > 0) & (u < self.c0)
        out[low] = u[low] ** self.P * (-np.log(u[low])) ** (-self.beta)
        high = u >= self.c0
        if np.any(high):
            log_f0, log_f1 = self._edge()
            w = u[high] - self.c0
            out[high] = math.exp(log_f0) + math.exp(log_f1) * w + w * w
        return out if out.ndim else float(out)

    __call__ = evaluate

    def s_breakpoints(self):
        return (-math.log(self.c0),)

    def scaling_hint(self):
        return (self.P, self.c0)

    def structural_points(self):
        return np.array([math.log(self.c0)])

    def to_json(self):
        return {"kind": self.kind, "alpha": self.alpha, "n": self.n, "beta": self.beta, "c0": self.c0}


@dataclass(frozen=True)
class Custom(Nonlinearity):
    """Tabulated ``log f`` against ``log u``, linear in between and beyond the ends."""

    log_u: tuple
    log_f: tuple
    kind = "custom"

    def __post_init__(self):
        lu = np.asarray(self.log_u, dtype=float)
        lf = np.asarray(self.log_f, dtype=float)
        if lu.shape != lf.shape or lu.ndim != 1 or len(lu) < 2:
            raise ValueError("log_u and log_f must be 1-d of equal length >= 2")
        if np.any(np.diff(lu) <= 0):
            raise ValueError("log_u samples must be strictly increasing")
        if not np.all(np.isfinite(lf)):
            raise ValueError("log_f samples must be finite")
        if (lf[1] - lf[0]) <= 0:
            raise ValueError("first segment must increase so that f(0+) = 0")
        object.__setattr__(self, "log_u", tuple(float(x) for x in lu))
        object.__setattr__(self, "log_f", tuple(float(x) for x in lf))

    @classmethod
    def from_function(cls, func, log_u):
        log_u = np.asarray(log_u, dtype=float)
        return cls(tuple(log_u), tuple(np.log(func(np.exp(log_u)))))

    def eval_log(self, log_u):
        log_u = np.asarray(log_u, dtype=float)
        lu = np.asarray(self.log_u)
        lf = np.asarray(self.log_f)
        out = np.interp(log_u, lu, lf)
        lo_slope = (lf[1] - lf[0]) / (lu[1] - lu[0])
        hi_slope = (lf[-1] - lf[-2]) / (lu[-1] - lu[-2])
        out = np.where(log_u < lu[0], lf[0] + lo_slope * (log_u - lu[0]), out)
        out = np.where(log_u > lu[-1], lf[-1] + hi_slope * (log_u - lu[-1]), out)
        return out if out.ndim else float(out)

    def eval_log_scaled(self, log_u, p):
        log_u = np.asarray(log_u, dtype=float)
        lu = np.asarray(self.log_u)
        lf = np.asarray(self.log_f)
        lo_slope = (lf[1] - lf[0]) / (lu[1] - lu[0])
        hi_slope = (lf[-1] - lf[-2]) / (lu[-1] - lu[-2])
        out = np.interp(log_u, lu, lf) - p * log_u
        # extrapolated branches regrouped so the huge log u terms combine first
        out = np.where(log_u < lu[0], (lf[0] - lo_slope * lu[0]) + (lo_slope - p) * log_u, out)
        out = np.where(log_u > lu[-1], (lf[-1] - hi_slope * lu[-1]) + (hi_slope - p) * log_u, out)
        return out if out.ndim else float(out)

    def s_breakpoints(self):
        return tuple(-x for x in self.log_u)

    def structural_points(self):
        return np.asarray(self.log_u)

    def to_json(self):
        return {"kind": self.kind, "log_u": list(self.log_u), "log_f": list(self.log_f)}


def from_json(d) -> Nonlinearity:
    """Build a nonlinearity from its JSON description (dict or string)."""
    if isinstance(d, str):
        d = json.loads(d)
    kind = d.get("kind")
    if kind == "power":
        return PowerLaw(float(d["p"]))
    if kind == "linear":
        return Linear(float(d.get("c", 0.0)))
    if kind == "logcorrected":
        return LogCorrected(float(d["alpha"]), int(d["n"]), float(d["beta"]), float(d.get("c0", 0.01)))
    if kind == "custom":
        return Custom(tuple(d["log_u"]), tuple(d["log_f"]))
    if kind == "stepwise":
        from .example4 import ExampleParams, build

        params = d.get("params", d)
        return build(ExampleParams.from_json(params))
    raise ValueError(f"unknown nonlinearity kind {kind!r}")


# -- module-level operations -------------------------------------------------

def evaluate(f: Nonlinearity, u):
    """``f(u)`` for ``u >= 0``; raises :class:`NegativeInput` for ``u < 0``."""
    return f.evaluate(u)


def eval_log(f: Nonlinearity, log_u):
    """``log f(u)`` as a function of ``log u``."""
    log_u = np.asarray(log_u, dtype=float)
    if not np.all(np.isfinite(log_u)):
        raise ValueError("log_u must be finite")
    out = f.eval_log(log_u)
    if np.any(np.isnan(out)):
        raise LogDomainError("log-space evaluation produced NaN")
    return out


def ell(f: Nonlinearity, u, convex: Optional[bool] = None, num=4000):
    """``sup_{0 < s <= u} f(s)/s``.

    For convex ``f`` with ``f(0) = 0`` the ratio ``f(s)/s`` is non-decreasing,
    so the supremum is attained at ``s = u``.  Otherwise a log-spaced grid over
    ``(0, u]`` is scanned and the best cell refined with a bounded search.
    """
    u = float(u)
    if u < 0:
        raise NegativeInput("ell is only defined for u > 0")
    if u == 0:
        raise NegativeInput("ell is only defined for u > 0")
    log_u = math.log(u)
    at_u = float(f.eval_log(log_u)) - log_u
    if convex is None:
        convex = f.known_convex
    if convex:
        return math.exp(at_u)
    return math.exp(_grid_sup_log_ratio(f, log_u, num))


def _grid_sup_log_ratio(f, log_u, num):
    from scipy.optimize import minimize_scalar

    grid = np.linspace(log_u - 700.0, log_u, num)
    vals = f.eval_log(grid) - grid
    k = int(np.argmax(vals))
    best = float(vals[k])
    lo = grid[max(k - 1, 0)]
    hi = grid[min(k + 1, num - 1)]
    if hi > lo:
        res = minimize_scalar(lambda x: -(float(f.eval_log(x)) - x), bounds=(lo, hi),
                              method="bounded", options={"xatol": 1e-12})
        best = max(best, -float(res.fun))
    return max(best, float(f.eval_log(log_u)) - log_u)


# -- hypotheses ----------------------------------------------------------------

@dataclass(frozen=True)
class LogGrid:
    """Log-spaced sample specification on ``(0, inf)``."""

    log_min: float = math.log(1e-300)
    log_max: float = math.log(1e3)
    num: int = 10_000

    def points(self):
        return np.linspace(self.log_min, self.log_max, self.num)

    def refined(self, factor=2):
        return LogGrid(self.log_min, self.log_max, self.num * factor)

    def to_json(self):
        return {"log_min": self.log_min, "log_max": self.log_max, "num": self.num}


@dataclass
class HypothesisReport:
    monotone_M: bool
    convex_C: bool
    ode_blowup_B: Optional[bool]
    scaling_S: dict
    samples_used: int
    tolerance: float
    grid: dict
    counterexamples: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    @property
    def all_hold(self) -> bool:
        return bool(self.monotone_M and self.convex_C and self.ode_blowup_B and self.scaling_S["holds"])

    def failing(self):
        out = []
        if not self.monotone_M:
            out.append("M")
        if not self.convex_C:
            out.append("C")
        if not self.ode_blowup_B:
            out.append("B" if self.ode_blowup_B is False else "B (undetermined)")
        if not self.scaling_S["holds"]:
            out.append("S")
        return out

    def to_json(self):
        return {
            "monotone_M": self.monotone_M,
            "convex_C": self.convex_C,
            "ode_blowup_B": self.ode_blowup_B,
            "scaling_S": self.scaling_S,
            "samples_used": self.samples_used,
            "tolerance": self.tolerance,
            "grid": self.grid,
            "counterexamples": {k: [list(map(float, p)) for p in v] for k, v in self.counterexamples.items()},
            "notes": list(self.notes),
        }


def _convexity_pairs(n_points, n_pairs, rng):
    """Index pairs at dyadic offsets, thinned to ``n_pairs`` with a seeded RNG."""
    idx = np.arange(n_points)
    left, right = [], []
    off = 1
    while off < n_points:
        left.append(idx[:-off])
        right.append(idx[off:])
        off *= 2
    a = np.concatenate(left)
    b = np.concatenate(right)
    if len(a) > n_pairs:
        keep = np.sort(rng.choice(len(a), size=n_pairs, replace=False))
        a, b = a[keep], b[keep]
    return a, b


def _midpoint_violations(f, la, lb, tol):
    lfa = f.eval_log(la)
    lfb = f.eval_log(lb)
    lm = np.logaddexp(la, lb) - math.log(2.0)
    lhs = f.eval_log(lm)
    rhs = np.logaddexp(lfa, lfb) - math.log(2.0)
    with np.errstate(invalid="ignore"):
        bad = lhs > rhs + math.log1p(tol)
    return bad


def ode_blowup_integral(f: Nonlinearity):
    """Assess ``int_1^inf du / f(u)``; raises :class:`QuadratureNoConvergence` if undecided.

    With ``t = log u`` the integrand is ``exp(t - log f(e^t))``.  Partial
    integrals are taken to ``t = 1e300`` and tested for convergence.
    """
    def log_g(t):
        return t - f.eval_log(t)

    cuts = np.concatenate([[1.0, 2.0, 4.0], q.geometric_schedule(4.0)])
    res = q.improper_from(log_g, 0.0, cuts, breaks=[-b for b in f.s_breakpoints()])
    if res.status == "undetermined":
        raise QuadratureNoConvergence(res.certificate)
    return res


def check_hypotheses(f: Nonlinearity, grid: LogGrid | None = None, p_for_S: float | None = None,
                     c0: float | None = None, tol: float = 1e-10, n_pairs: int = 100_000,
                     seed: int = 0, prior: HypothesisReport | None = None) -> HypothesisReport:
    """Sample-based check of (M), (C), (B) and the (S) sufficient condition.

    Monotonicity is tested on consecutive samples of ``log f``; convexity by
    the midpoint inequality (in log space) on dyadic-offset pairs of samples
    where ``u`` is representable; (B) by the partial-integral growth test of
    ``int_1^inf 1/f``; (S) by monotonicity of ``log f - p log u`` on
    ``(0, c0)``.  Counterexample pairs from ``prior`` are always re-tested, so
    a flag that failed once keeps failing under refinement.
    """
    grid = grid or LogGrid()
    if grid.log_min > math.log(1e-300) + 1e-9 or grid.log_max < math.log(1e3) - 1e-9 or grid.num < 10_000:
        raise InvalidRange("grid must cover [1e-300, 1e3] with at least 1e4 points")
    hint = f.scaling_hint()
    if p_for_S is None:
        p_for_S = hint[0] if hint else None
    if c0 is None:
        c0 = hint[1] if hint else 1.0
    rng = np.random.default_rng(seed)

    pts = np.unique(np.concatenate([grid.points(), np.asarray(f.structural_points(), dtype=float)]))
    lf = f.eval_log(pts)
    counter = {"M": [], "C": [], "S": []}
    notes = []
    slack = tol * np.maximum(1.0, np.abs(lf))

    # (M)
    drop = np.diff(lf) < -np.maximum(slack[:-1], slack[1:])
    counter["M"] = [(pts[k], pts[k + 1]) for k in np.flatnonzero(drop)[:20]]
    if prior is not None:
        for a, b in prior.counterexamples.get("M", []):
            fa, fb = f.eval_log(np.array([a, b]))
            if fb < fa - tol * max(1.0, abs(fa)):
                counter["M"].append((a, b))
    monotone = not counter["M"]

    # (C): only where u itself is representable, so that midpoints resolve
    rep = pts[pts >= LOG_TINY]
    a, b = _convexity_pairs(len(rep), n_pairs, rng)
    la, lb = rep[a], rep[b]
    if prior is not None and prior.counterexamples.get("C"):
        extra = np.asarray(prior.counterexamples["C"], dtype=float)
        la = np.concatenate([la, extra[:, 0]])
        lb = np.concatenate([lb, extra[:, 1]])
    bad = _midpoint_violations(f, la, lb, tol)
    counter["C"] = [(x, y) for x, y in zip(la[bad][:20], lb[bad][:20])]
    convex = not counter["C"]
    certs = f.structural_certificates()
    if "C" in certs:
        ok, text = certs["C"]
        notes.append(f"C (beyond representable range): {text}")
        convex = convex and ok

    # (B)
    try:
        res = ode_blowup_integral(f)
        B = res.converges
        notes.append(f"B: {res.status}; {res.certificate}")
    except QuadratureNoConvergence as exc:
        B = None
        notes.append(f"B undetermined: {exc}")

    # (S) via f/u^p non-decreasing on (0, c0)
    s_info = {"holds": False, "p_used": p_for_S, "c0_used": c0}
    if p_for_S is None or p_for_S <= 1:
        p_for_S = _auto_scaling_exponent(f, pts, lf, c0)
        s_info["p_used"] = p_for_S
    if p_for_S is not None and p_for_S > 1:
        sel = pts < math.log(c0)
        ps = pts[sel]
        logF = f.eval_log_scaled(ps, p_for_S)
        sl = tol * np.maximum(1.0, np.abs(logF))
        dropS = np.diff(logF) < -np.maximum(sl[:-1], sl[1:])
        counter["S"] = [(ps[k], ps[k + 1]) for k in np.flatnonzero(dropS)[:20]]
        if prior is not None:
            for x, y in prior.counterexamples.get("S", []):
                fx, fy = f.eval_log_scaled(np.array([x, y]), p_for_S)
                if fy < fx - tol * max(1.0, abs(fx)):
                    counter["S"].append((x, y))
        s_ok = not counter["S"]
        if "S" in certs:
            ok, text = certs["S"]
            notes.append(f"S (beyond sampled range): {text}")
            s_ok = s_ok and ok
        s_info["holds"] = bool(s_ok)

    return HypothesisReport(
        monotone_M=bool(monotone),
        convex_C=bool(convex),
        ode_blowup_B=B,
        scaling_S=s_info,
        samples_used=int(len(pts)),
        tolerance=tol,
        grid=grid.to_json() | {"n_pairs": int(len(la)), "seed": seed},
        counterexamples={k: v for k, v in counter.items() if v},
        notes=notes,
    )


def _auto_scaling_exponent(f, pts, lf, c0):
    sel = pts < math.log(c0)
    x, y = pts[sel], lf[sel]
    if len(x) < 2:
        return None
    slopes = np.diff(y) / np.diff(x)
    kmin = float(np.min(slopes))
    if not kmin > 1:
        return None
    return 1.0 + 0.99 * (kmin - 1.0)


# -- the dichotomy integral ----------------------------------------------------

@dataclass
class CriterionResult:
    """Value of the dichotomy integral on ``[lower_cut, upper]`` and the divergence test."""

    value: float
    log_value: float
    status: str
    certificate: str
    cuts: np.ndarray
    log_partial: np.ndarray
    lower_cut: float
    upper: float

    @property
    def diverges(self):
        return self.status == "diverges"

    @property
    def converges(self):
        return self.status == "converges"

    def partial_values(self):
        with np.errstate(over="ignore"):
            return np.exp(self.log_partial)


def _criterion_log_integrand(f, alpha, n):
    P = 1.0 + alpha / n

    def log_g(s):
        return f.eval_log_scaled(-s, P)

    return log_g


def criterion_integral(f: Nonlinearity, alpha: float, n: int, lower_cut: float = 1e-8,
                       upper: float = 0.1, rtol: float = 1e-11) -> CriterionResult:
    """``int f(u) / u^(2 + alpha/n) du`` over ``[lower_cut, upper]`` plus a divergence verdict.

    With ``u = exp(-s)`` the integrand becomes ``f(e^-s) e^((1 + alpha/n) s)``.
    The divergence test integrates from ``upper`` down to a schedule of cuts
    (``u = 10^-k`` for ``k = 4..300``, then ``log(1/u)`` geometric up to
    ``1e300``, or the nonlinearity's own structural cuts) and fits growth
    laws to the partial integrals.
    """
    CriticalExponent(alpha, n)
    if not 0 < lower_cut < upper:
        raise InvalidRange("need 0 < lower_cut < upper")
    log_g = _criterion_log_integrand(f, alpha, n)
    s_lo = -math.log(upper)
    s_hi = -math.log(lower_cut)
    breaks = f.s_breakpoints()
    log_value, _ = q.log_integrate(log_g, s_lo, s_hi, breaks=breaks, rtol=rtol)

    custom = f.criterion_cuts(alpha, n)
    if custom is not None:
        cuts = np.asarray(custom, dtype=float)
        cuts = cuts[cuts > s_lo]
        schedule = "structural"
    else:
        cuts = q.default_cut_schedule(s_lo)
        schedule = "geometric"
    res = q.improper_from(log_g, s_lo, cuts, breaks=breaks, rtol=rtol, schedule=schedule)
    return CriterionResult(
        value=math.exp(log_value) if log_value < 709 else math.inf,
        log_value=log_value,
        status=res.status,
        certificate=res.certificate,
        cuts=res.cuts,
        log_partial=res.log_partial,
        lower_cut=lower_cut,
        upper=upper,
    )


def lower_integral(f: Nonlinearity, alpha: float, n: int, x: float):
    """``int_0^x f(u)/u^(2+alpha/n) du``; ``inf`` when the integral diverges or is undecided."""
    log_g = _criterion_log_integrand(f, alpha, n)
    s0 = -math.log(x)
    custom = f.criterion_cuts(alpha, n)
    if custom is not None:
        cuts = np.asarray(custom, dtype=float)
        cuts = cuts[cuts > s0]
        schedule = "structural"
    else:
        cuts = q.geometric_schedule(s0)
        schedule = "geometric"
    if len(cuts) < 8:
        cuts = q.geometric_schedule(s0)
        schedule = "geometric"
    res = q.improper_from(log_g, s0, cuts, breaks=f.s_breakpoints(), schedule=schedule)
    if not res.converges:
        return math.inf
    return math.exp(res.log_total) if res.log_total < 709 else math.inf


def classify(f: Nonlinearity, alpha: float, n: int, report: HypothesisReport | None = None,
             strict: bool = False, upper: float = 0.1) -> Verdict:
    """Criterion-level verdict: ``BlowUp`` iff the dichotomy integral diverges.

    Requires (M), (C), (B), (S); otherwise the verdict is ``Undetermined`` (or
    :class:`HypothesesUnmet` is raised when ``strict``).
    """
    report = report or check_hypotheses(f)
    if not report.all_hold:
        failing = report.failing()
        if strict:
            raise HypothesesUnmet(failing, report)
        return undetermined("hypotheses unmet: " + ", ".join(failing))
    crit = criterion_integral(f, alpha, n, lower_cut=1e-8, upper=upper)
    if crit.diverges:
        return blowup()
    if crit.converges:
        return global_()
    return undetermined("criterion integral: " + crit.certificate)


def sugitani_liminf(f: Nonlinearity, alpha: float, n: int) -> float:
    """Estimate ``liminf_{u -> 0} f(u)/u^P`` with ``P = 1 + alpha/n``.

    The ratio is evaluated in log space along ``log u = -10^x`` for ``x`` up to
    300 (or along the nonlinearity's own sequence, if it has one) and the
    minimum over the last quarter is returned.
    """
    P = CriticalExponent(alpha, n).p_alpha
    seq = getattr(f, "liminf_log_ratios", None)
    if seq is not None:
        log_ratio = np.asarray(seq(alpha, n), dtype=float)
    else:
        log_u = -(10.0 ** np.arange(0.0, 300.0, 0.25))
        log_ratio = f.eval_log_scaled(log_u, P)
    tail = log_ratio[-max(len(log_ratio) // 4, 1):]
    with np.errstate(over="ignore"):
        return float(np.exp(np.min(tail)))
