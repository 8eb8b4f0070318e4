"""A convex nonlinearity with ``liminf f(u)/u^P = 0`` whose dichotomy integral diverges.

Near zero ``f`` follows ``sigma_i u^P`` (``sigma_i = exp(-i^2)``, ``P = 1 + alpha/n``)
on the blocks ``M_i = [v_i, u_i)`` and is affine on the connectors
``J_i = [u_{i+1}, v_i)``, where ``u_i = exp(-exp(i^2))`` and ``v_i = theta u_{i+1}``.
The scales are doubly exponential, so everything is stored in log space.
``log u_i`` itself overflows once ``i^2 > 709``; the per-index checks are
therefore written in a reduced form where only ``i`` and ``theta`` appear.

Writing ``u = u_{i+1} e^r`` on ``J_i`` and ``rho_i = sigma_{i+1}/sigma_i = exp(-(2i+1))``,

    f(u) = u_{i+1}^P sigma_i (theta^P expm1(r) + rho_i (theta - e^r)) / (theta - 1),

which is what :meth:`Stepwise.eval_log` evaluates.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import nonlinearity as nl
from .errors import (LimitNotAboveOne, LogDomainError, MembershipViolation, NeverHolds, OrderingViolation,
                     WindowViolation)

# relative slack for interval membership; ties go to the interval below
TIE_SLACK = 1e-13


@dataclass(frozen=True)
class ExampleParams:
    """Parameters of the construction.

    ``delta_log`` is ``log u_{i_min}``; blocks tile ``(0, delta)`` and a quadratic
    C^1 extension takes over above ``delta``.
    """

    alpha: float = 2.0
    n: int = 1
    p: float = 2.0
    theta: float = 1.75
    q: float = 0.75
    i_min: int = 1
    i_max: int = 64
    delta_log: Optional[float] = None

    def __post_init__(self):
        nl.CriticalExponent(self.alpha, self.n)
        if not (isinstance(self.i_min, int) and isinstance(self.i_max, int)) or not 0 <= self.i_min < self.i_max:
            raise ValueError("need integers 0 <= i_min < i_max")
        if not 0.5 < self.q < 1:
            raise ValueError("q must lie in (1/2, 1)")
        dl = -math.exp(self.i_min ** 2)
        if self.delta_log is None:
            object.__setattr__(self, "delta_log", dl)
        elif not math.isclose(self.delta_log, dl, rel_tol=1e-12):
            raise ValueError("delta_log must equal log u_{i_min} = -exp(i_min^2)")

    @property
    def P(self) -> float:
        return 1.0 + self.alpha / self.n

    def theta_window(self):
        """Open interval of admissible ``theta`` for the given ``p``."""
        P = self.P
        return (P / (P - 1.0), self.p / (self.p - 1.0) if self.p > 1 else math.inf)

    def validate(self):
        P = self.P
        if not 1 < self.p < P:
            raise WindowViolation(f"need 1 < p < P = {P:g}, got p = {self.p:g}")
        lo, hi = self.theta_window()
        if not lo < self.theta < hi:
            raise WindowViolation(f"theta = {self.theta:g} outside the admissible window ({lo:g}, {hi:g})")
        lt = math.log(self.theta)
        for i in range(self.i_min, self.i_max + 1):
            # log theta - e^{(i+1)^2} < -e^{i^2}, divided by e^{i^2}
            if not lt * math.exp(-i * i) - math.exp(2 * i + 1) < -1.0:
                raise OrderingViolation(f"theta u_(i+1) < u_i fails at i = {i}; increase i_min")
        return self

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, d) -> "ExampleParams":
        if isinstance(d, str):
            d = json.loads(d)
        keys = {"alpha", "n", "p", "theta", "q", "i_min", "i_max", "delta_log"}
        kw = {k: v for k, v in d.items() if k in keys}
        for k in ("n", "i_min", "i_max"):
            if k in kw:
                kw[k] = int(kw[k])
        return cls(**kw)


def _exp_or_inf(x):
    return math.exp(x) if x < 709.0 else math.inf


@dataclass(frozen=True, eq=False)
class LogIntervalData:
    """Per-index log-space data, ``i = i_min .. i_max``.

    ``loglog_u[k] = i^2`` is the exact stand-in for ``log u_i = -exp(i^2)``,
    which is ``-inf`` in double precision for ``i >= 27``.  ``red_a`` and
    ``red_b`` are ``log a_i - P log u_{i+1}`` and ``log b_i - (P-1) log u_{i+1}``.
    """

    i: np.ndarray
    log_sigma: np.ndarray
    loglog_u: np.ndarray
    log_u: np.ndarray
    log_u_next: np.ndarray
    log_v: np.ndarray
    red_a: np.ndarray
    red_b: np.ndarray
    log_a: np.ndarray
    log_b: np.ndarray

    @classmethod
    def compute(cls, params: ExampleParams) -> "LogIntervalData":
        P, th = params.P, params.theta
        lt = math.log(th)
        idx = np.arange(params.i_min, params.i_max + 1)
        rows = []
        for i in idx:
            i = int(i)
            rho = math.exp(-(2 * i + 1))
            lu = -_exp_or_inf(i * i)
            lun = -_exp_or_inf((i + 1) ** 2)
            lv = lt + lun
            ra = -i * i + math.log(th ** P - th * rho) - math.log(th - 1.0)
            rb = -i * i + math.log(th ** P - rho) - math.log(th - 1.0)
            with np.errstate(invalid="ignore"):
                la = P * lun + ra
                lb = (P - 1.0) * lun + rb
            rows.append((i, -float(i * i), float(i * i), lu, lun, lv, ra, rb, la, lb))
        cols = [np.array(c, dtype=float) for c in zip(*rows)]
        cols[0] = idx
        return cls(*cols)

    def ordering_gaps(self, theta):
        """``log v_i - log u_{i+1}`` and ``(log u_i - log v_i) e^{-i^2}``, both exact in reduced form."""
        lt = math.log(theta)
        i = self.i.astype(float)
        return np.full_like(i, lt), np.exp(2.0 * i + 1.0) - 1.0 - lt * np.exp(-i * i)

    def ordering_ok(self, theta) -> bool:
        """``log u_{i+1} < log v_i < log u_i`` for every stored ``i``."""
        g1, g2 = self.ordering_gaps(theta)
        return bool(np.all(g1 > 0) and np.all(g2 > 0))


@dataclass(frozen=True, eq=False)
class Stepwise(nl.Nonlinearity):
    """The piecewise nonlinearity built by :func:`build`."""

    params: ExampleParams
    data: LogIntervalData = field(repr=False)
    kind = "stepwise"

    # -- structure -----------------------------------------------------------
    @property
    def P(self):
        return self.params.P

    def _edges(self):
        """Ascending left edges and their labels ``(i, is_M)``."""
        cached = self.__dict__.get("_edge_cache")
        if cached is None:
            cached = self._build_edges()
            object.__setattr__(self, "_edge_cache", cached)
        return cached

    def _build_edges(self):
        d = self.data
        edges, idx, is_m = [], [], []
        for k in range(len(d.i) - 1, -1, -1):
            edges += [d.log_u_next[k], d.log_v[k]]
            idx += [int(d.i[k]), int(d.i[k])]
            is_m += [False, True]
        return np.array(edges), np.array(idx), np.array(is_m)

    def _locate(self, log_u):
        edges, idx, is_m = self._edges()
        x = log_u - TIE_SLACK * np.abs(log_u)
        pos = np.searchsorted(edges, x, side="right") - 1
        if np.any((pos < 0) & (log_u < self.params.delta_log)):
            raise LogDomainError("log_u lies below the constructed range; increase i_max")
        pos = np.clip(pos, 0, len(edges) - 1)
        return pos, idx[pos], is_m[pos], edges

    def _extension_edge(self):
        pr = self.params
        log_f0 = -pr.i_min ** 2 + self.P * pr.delta_log
        log_f1 = math.log(self.P) + log_f0 - pr.delta_log
        return log_f0, log_f1

    def _eval(self, log_u, p):
        """``log f - p log u`` with the large terms grouped per branch."""
        log_u = np.asarray(log_u, dtype=float)
        shape = log_u.shape
        x = np.atleast_1d(log_u).astype(float)
        out = np.empty_like(x)
        P, th = self.P, self.params.theta
        high = x >= self.params.delta_log
        if np.any(high):
            lf0, lf1 = self._extension_edge()
            out[high] = nl._log_extension(x[high], self.params.delta_log, lf0, lf1) - p * x[high]
        low = ~high
        if np.any(low):
            xl = x[low]
            _, i, is_m, _ = self._locate(xl)
            i = i.astype(float)
            res = np.empty_like(xl)
            # M_i: sigma_i u^P
            res[is_m] = -i[is_m] ** 2 + (P - p) * xl[is_m]
            j = ~is_m
            if np.any(j):
                ij = i[j]
                lun = -np.exp((ij + 1.0) ** 2)
                r = xl[j] - lun
                rho = np.exp(-(2.0 * ij + 1.0))
                arg = th ** P * np.expm1(r) + rho * (th - np.exp(r))
                if np.any(arg <= 0):
                    raise LogDomainError("affine branch non-positive; point lies outside its connector")
                res[j] = ((P - p) * lun - p * r) - ij ** 2 - math.log(th - 1.0) + np.log(arg)
            out[low] = res
        out = out.reshape(shape)
        return out if out.ndim else float(out)

    def eval_log(self, log_u):
        return self._eval(log_u, 0.0)

    def eval_log_scaled(self, log_u, p):
        return self._eval(log_u, p)

    # -- hooks ----------------------------------------------------------------
    def s_breakpoints(self):
        d = self.data
        pts = np.concatenate([-d.log_u, -d.log_v])
        pts = pts[np.isfinite(pts) & (pts > 0)]
        return tuple(np.sort(pts))

    def criterion_cuts(self, alpha, n):
        # s = -log u_i = e^{i^2}: block ends, where partial sums gain sigma_i log(u_i / v_i)
        d = self.data
        s = -d.log_u_next
        return s[np.isfinite(s)]

    def scaling_hint(self):
        return (self.params.p, math.exp(self.params.delta_log))

    def structural_points(self):
        d = self.data
        pts = np.concatenate([d.log_u, d.log_v, d.log_u_next])
        pts = pts[np.isfinite(pts)]
        mids = 0.5 * (d.log_u_next + d.log_v)
        mids = mids[np.isfinite(mids)]
        return np.concatenate([pts, mids])

    def structural_certificates(self):
        certs = {}
        try:
            w = check_convexity_window(self.params)
            ok = w["holds_from"] == self.params.i_min and w["all_later"]
            certs["C"] = (ok, f"slope window holds for i in [{w['holds_from']}, {self.params.i_max}]; "
                              f"C^1 quadratic extension above delta")
        except NeverHolds as exc:
            certs["C"] = (False, str(exc))
        try:
            m = check_F_monotone(self.params)
            ok = m["holds_from"] == self.params.i_min
            certs["S"] = (ok, f"p a_i >= (p-1) b_i v_i for i >= {m['holds_from']}; limit {m['limit_ratio']:.6g}")
        except LimitNotAboveOne as exc:
            certs["S"] = (False, str(exc))
        return certs

    def liminf_log_ratios(self, alpha, n):
        """``log(f(v_i)/v_i^P')`` along ``u = v_i`` for ``P' = 1 + alpha/n``."""
        Pq = 1.0 + alpha / n
        d = self.data
        out = []
        for k, i in enumerate(d.i):
            lv = d.log_v[k]
            if Pq == self.P:
                out.append(-float(i) ** 2)
            elif np.isfinite(lv):
                out.append(-float(i) ** 2 + (self.P - Pq) * lv)
            else:
                out.append(-math.inf if self.P > Pq else math.inf)
        return np.array(out)

    def to_json(self):
        return {"kind": self.kind, "params": self.params.to_json()}


def build(params: ExampleParams) -> Stepwise:
    """Validate ``params`` and return the stepwise nonlinearity."""
    params.validate()
    data = LogIntervalData.compute(params)
    if not data.ordering_ok(params.theta):
        raise OrderingViolation("log u_{i+1} < log v_i < log u_i fails")
    return Stepwise(params=params, data=data)


# -- per-index checks -----------------------------------------------------------

def window_bounds(params: ExampleParams):
    """Bounds on ``rho = sigma_{i+1}/sigma_i`` that make the slopes increase across joints."""
    P, th = params.P, params.theta
    lower = th ** (P - 1.0) * (th - P * (th - 1.0))
    upper = th ** P / (1.0 + P * (th ** P - 1.0))
    return lower, upper


def check_convexity_window(params: ExampleParams) -> dict:
    """First index from which ``lower <= exp(-(2i+1)) <= upper`` holds, checked up to ``i_max``."""
    lower, upper = window_bounds(params)
    idx = np.arange(params.i_min, params.i_max + 1)
    rho = np.exp(-(2.0 * idx + 1.0))
    ok = (lower <= rho) & (rho <= upper)
    if not np.any(ok):
        raise NeverHolds(f"window [{lower:.6g}, {upper:.6g}] never contains exp(-(2i+1)) for i <= {params.i_max}")
    first = int(np.argmax(ok))
    return {"holds_from": int(idx[first]), "all_later": bool(np.all(ok[first:])),
            "lower": lower, "upper": upper, "per_index": ok}


def f_monotone_ratio(params: ExampleParams, i):
    """``p a_i / ((p-1) b_i v_i)``."""
    P, th, p = params.P, params.theta, params.p
    rho = np.exp(-(2.0 * np.asarray(i, dtype=float) + 1.0))
    return p * (th ** P - th * rho) / (th * (p - 1.0) * (th ** P - rho))


def check_F_monotone(params: ExampleParams) -> dict:
    """Where ``f/u^p`` is non-decreasing on the connectors, and the limit of the ratio."""
    p, th = params.p, params.theta
    limit = p / (th * (p - 1.0))
    if not limit > 1:
        raise LimitNotAboveOne(f"p/(theta(p-1)) = {limit:.12g} is not above 1")
    idx = np.arange(params.i_min, params.i_max + 1)
    r = f_monotone_ratio(params, idx)
    ok = r >= 1.0
    first = int(idx[int(np.argmax(ok))]) if np.any(ok) else None
    return {"holds_from": first, "limit_ratio": limit, "ratios": r}


def _reduced_connector(params: ExampleParams, i, r):
    """``log f - P log u_{i+1}`` on ``J_i`` at ``u = u_{i+1} e^r``."""
    P, th = params.P, params.theta
    rho = math.exp(-(2 * i + 1))
    return -i * i - math.log(th - 1.0) + math.log(th ** P * math.expm1(r) + rho * (th - math.exp(r)))


def joint_continuity(params: ExampleParams) -> np.ndarray:
    """Per-index max mismatch of ``log f`` across the joints ``u_{i+1}`` and ``v_i``.

    Both sides are compared after subtracting ``P log u_{i+1}``, which is exact
    for the block formulas and keeps the comparison meaningful for every ``i``.
    """
    P, lt = params.P, math.log(params.theta)
    out = []
    for i in range(params.i_min, params.i_max + 1):
        at_u = abs(_reduced_connector(params, i, 0.0) - (-(i + 1) ** 2))
        at_v = abs(_reduced_connector(params, i, lt) - (-i * i + P * lt))
        out.append(max(at_u, at_v))
    return np.array(out)


def joint_slopes(params: ExampleParams, data: LogIntervalData):
    """Log one-sided slopes at the joints, ascending in ``u``, reduced by ``(P-1) log u_{i+1}``.

    For each ``i``: slope of ``M_{i+1}`` at ``u_{i+1}``, slope ``b_i`` of ``J_i``, and
    slope of ``M_i`` at ``v_i``.  Convexity at the joints requires these to be
    non-decreasing; the step from ``M_i`` at ``u_i`` to ``J_{i-1}`` is the same
    test one index down.
    """
    P, lt = params.P, math.log(params.theta)
    i = data.i.astype(float)
    left = math.log(P) - (i + 1.0) ** 2
    mid = data.red_b
    right = math.log(P) - i ** 2 + (P - 1.0) * lt
    return left, mid, right


def joint_slopes_ok(params: ExampleParams, data: LogIntervalData) -> bool:
    left, mid, right = joint_slopes(params, data)
    return bool(np.all(left <= mid) and np.all(mid <= right))


def step3_direct(data: LogIntervalData) -> np.ndarray:
    """``sigma_i (log u_i - log v_i)`` from the stored log data (``nan`` where not representable)."""
    with np.errstate(invalid="ignore"):
        val = np.exp(data.log_sigma) * (data.log_u - data.log_v)
    return np.where(np.isfinite(val), val, np.nan)


def step3_term(params: ExampleParams, i: int) -> float:
    """``sigma_i log(u_i / v_i) = e^{2i+1} - 1 - e^{-i^2} log theta``."""
    return math.exp(2 * i + 1) - 1.0 - math.exp(-i * i) * math.log(params.theta)


def step3_divergence(params: ExampleParams, I: int) -> float:
    """Partial sum over ``i_min..I`` of the block contributions to the dichotomy integral."""
    if I > params.i_max:
        raise ValueError("I exceeds i_max")
    return math.fsum(step3_term(params, i) for i in range(params.i_min, I + 1))


def step4_memberships(params: ExampleParams, i: int) -> dict:
    """The three inequalities placing ``lambda_i = v_i^q`` in ``M_i`` and ``lambda_i^2`` in ``M_{i+1}``.

    Each is rescaled by ``e^{i^2}`` or ``e^{(i+1)^2}`` so it stays finite for
    every stored ``i``.
    """
    q, lt = params.q, math.log(params.theta)
    a = math.exp(-i * i)
    b = math.exp(-(i + 1) ** 2)
    lam_below_u = q * lt * a - q * math.exp(2 * i + 1) < -1.0
    sq_below_u = 2 * q * lt * b - 2 * q < -1.0
    sq_above_v = 2 * q * lt * b - 2 * q > lt * b - math.exp(2 * i + 3)
    return {"lambda_lt_u_i": lam_below_u, "lambda2_lt_u_next": sq_below_u, "lambda2_gt_v_next": sq_above_v}


def step4_threshold(params: ExampleParams) -> Optional[int]:
    """Smallest ``i`` from which all diagonal inclusions hold up to ``i_max - 1``."""
    good = [all(step4_memberships(params, i).values()) for i in range(params.i_min, params.i_max)]
    for k in range(len(good)):
        if all(good[k:]):
            return params.i_min + k
    return None


def step4_diagonal_ratio(f: Stepwise, i: int) -> float:
    """``log(f(lambda^2) / (lambda^P f(lambda)))`` for ``lambda = v_i^q``.

    The branch of each evaluation point is found by membership; the power
    parts cancel identically, leaving ``log sigma_{i+1} - log sigma_i``.
    """
    pr = f.params
    if not pr.i_min <= i < pr.i_max:
        raise ValueError("i must lie in [i_min, i_max - 1]")
    mem = step4_memberships(pr, i)
    if not all(mem.values()):
        bad = [k for k, v in mem.items() if not v]
        raise MembershipViolation(f"diagonal inclusions fail at i = {i}: {', '.join(bad)}", mem)
    P = f.P
    log_lam = pr.q * (math.log(pr.theta) - _exp_or_inf((i + 1) ** 2))
    if math.isfinite(log_lam):
        _, i1, m1, _ = f._locate(np.array([log_lam]))
        _, i2, m2, _ = f._locate(np.array([2.0 * log_lam]))
        if not (m1[0] and m2[0] and i1[0] == i and i2[0] == i + 1):
            raise MembershipViolation(f"located blocks disagree with the inclusions at i = {i}", mem)
        power = P * (2.0 * log_lam) - P * log_lam - P * log_lam
    else:
        power = 0.0
    return float(-(i + 1) ** 2 - (-i * i)) + power


# -- report ---------------------------------------------------------------------

def report_rows(f: Stepwise) -> list:
    pr = f.params
    win = check_convexity_window(pr)
    ratios = f_monotone_ratio(pr, f.data.i)
    rows = []
    partial = 0.0
    for k, i in enumerate(f.data.i):
        i = int(i)
        partial += step3_term(pr, i)
        mem = step4_memberships(pr, i) if i < pr.i_max else {}
        try:
            lr = step4_diagonal_ratio(f, i) if i < pr.i_max else math.nan
        except MembershipViolation:
            lr = math.nan
        rows.append({
            "i": i,
            "window_ok": bool(win["per_index"][k]),
            "r_i": float(ratios[k]),
            "partial_sum": partial,
            "log_ratio": lr,
            **{k2: bool(v) for k2, v in mem.items()},
        })
    return rows


def write_report_csv(rows, path):
    keys = list(rows[0].keys())
    for r in rows:
        for k in r:
            if k not in keys:
                keys.append(k)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        for r in rows:
            w.writerow(r)
