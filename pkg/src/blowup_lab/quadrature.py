"""Log-space quadrature and divergence detection for improper integrals.

Integrands are supplied as ``log g(s)`` so that values far outside the
double range (``exp(1e300)`` or ``exp(-1e300)``) can still be integrated and
compared.  All estimates are returned as logarithms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss

LN10 = math.log(10.0)

_XH, _WH = leggauss(20)
_XL, _WL = leggauss(10)
_LOG_WH = np.log(_WH)
_LOG_WL = np.log(_WL)


def log1mexp(x):
    """``log(1 - exp(x))`` for ``x <= 0``, accurate on the whole range."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(
            x > -math.log(2.0),
            np.log(-np.expm1(np.minimum(x, 0.0))),
            np.log1p(-np.exp(np.minimum(x, 0.0))),
        )
    out = np.where(x > 0, np.nan, out)
    return out if out.ndim else float(out)


def logsubexp(a, b):
    """``log(exp(a) - exp(b))`` for ``a >= b``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    with np.errstate(invalid="ignore"):
        out = a + log1mexp(np.where(np.isneginf(b), -np.inf, b - a))
    out = np.where(np.isneginf(b), a, out)
    return out if out.ndim else float(out)


def group_logsumexp(values, groups, n_groups):
    """Stable per-group ``log(sum(exp(values)))``."""
    m = np.full(n_groups, -np.inf)
    np.maximum.at(m, groups, values)
    safe_m = np.where(np.isfinite(m), m, 0.0)
    acc = np.zeros(n_groups)
    with np.errstate(invalid="ignore", over="ignore"):
        np.add.at(acc, groups, np.exp(values - safe_m[groups]))
    with np.errstate(divide="ignore"):
        out = safe_m + np.log(acc)
    out[np.isneginf(m)] = -np.inf
    out[np.isposinf(m)] = np.inf
    return out


@dataclass
class QuadInfo:
    converged: bool
    n_intervals: int
    n_evals: int
    unresolved: int = 0


def _node_values(log_g, lo, hi, geometric, x, logw):
    """Log-contributions ``log(w_k * g(s_k) * jacobian)`` at Gauss nodes."""
    lo = lo[:, None]
    hi = hi[:, None]
    geo = geometric[:, None]
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        tlo = np.where(geo, np.log(np.where(geo, lo, 1.0)), lo)
        thi = np.where(geo, np.log(np.where(geo, hi, 1.0)), hi)
        half = 0.5 * (thi - tlo)
        mid = 0.5 * (thi + tlo)
        t = mid + half * x[None, :]
        s = np.where(geo, np.exp(t), t)
        # the node map can round outside [lo, hi] when hi - lo is below one ulp of lo
        s = np.clip(s, lo, hi)
        vals = log_g(s.ravel()).reshape(s.shape)
        jac = np.where(geo, t, 0.0)
        out = vals + jac + np.log(half) + logw[None, :]
    out = np.where(half > 0, out, -np.inf)
    return out


def log_integrate_pieces(log_g, edges, breaks=(), rtol=1e-11, max_level=60,
                         max_intervals=200_000):
    """Integrate ``exp(log_g)`` over each piece ``[edges[k], edges[k+1]]``.

    Adaptive Gauss-Legendre (10 vs 20 nodes) in log space.  Long positive
    ranges are bisected geometrically and integrated in ``log s``; an interval
    is accepted when the two rules agree to ``rtol`` or when it is negligible
    against its piece's running total.

    Returns ``(log_values, info)`` with one log-integral per piece.
    """
    edges = np.asarray(edges, dtype=float)
    n_pieces = len(edges) - 1
    if n_pieces < 1:
        raise ValueError("need at least two edges")
    if np.any(np.diff(edges) < 0):
        raise ValueError("edges must be non-decreasing")
    breaks = np.unique(np.asarray(list(breaks) + [0.0, 1.0], dtype=float))

    lo_list, hi_list, grp_list = [], [], []
    for k in range(n_pieces):
        a, b = edges[k], edges[k + 1]
        inner = breaks[(breaks > a) & (breaks < b)]
        pts = np.concatenate(([a], inner, [b]))
        lo_list.append(pts[:-1])
        hi_list.append(pts[1:])
        grp_list.append(np.full(len(pts) - 1, k))
    lo = np.concatenate(lo_list)
    hi = np.concatenate(hi_list)
    grp = np.concatenate(grp_list)

    acc_vals = []
    acc_grp = []
    n_evals = 0
    unresolved = 0
    converged = True
    log_rtol = math.log(rtol)
    for level in range(max_level + 1):
        if lo.size == 0:
            break
        geometric = (lo > 0) & (hi > 4.0 * lo)
        vh = _node_values(log_g, lo, hi, geometric, _XH, _LOG_WH)
        vl = _node_values(log_g, lo, hi, geometric, _XL, _LOG_WL)
        n_evals += vh.size + vl.size
        if np.any(np.isnan(vh)) or np.any(np.isnan(vl)):
            raise FloatingPointError("integrand returned NaN")
        est_h = _row_logsumexp(vh)
        est_l = _row_logsumexp(vl)

        totals = group_logsumexp(
            np.concatenate([est_h] + acc_vals) if acc_vals else est_h,
            np.concatenate([grp] + acc_grp) if acc_grp else grp,
            n_pieces,
        )
        both_zero = np.isneginf(est_h) & np.isneginf(est_l)
        with np.errstate(invalid="ignore"):
            agree = np.abs(est_h - est_l) <= rtol
            agree |= both_zero
            negligible = est_h < totals[grp] + log_rtol - 2 * LN10
        done = agree | negligible
        if level == max_level:
            unresolved += int(np.count_nonzero(~done))
            converged = converged and bool(np.all(done))
            done[:] = True
        if lo.size > max_intervals:
            unresolved += int(np.count_nonzero(~done))
            converged = False
            done[:] = True
        acc_vals.append(est_h[done])
        acc_grp.append(grp[done])

        keep = ~done
        lo_k, hi_k, grp_k, geo_k = lo[keep], hi[keep], grp[keep], geometric[keep]
        mid = np.where(geo_k, np.sqrt(lo_k) * np.sqrt(hi_k), 0.5 * (lo_k + hi_k))
        # intervals that cannot be split any further in floating point
        stuck = (mid <= lo_k) | (mid >= hi_k)
        if np.any(stuck):
            unresolved += int(np.count_nonzero(stuck))
            converged = False
            acc_vals.append(_row_logsumexp(_node_values(
                log_g, lo_k[stuck], hi_k[stuck], geo_k[stuck], _XH, _LOG_WH)))
            acc_grp.append(grp_k[stuck])
            lo_k, hi_k, grp_k, mid = lo_k[~stuck], hi_k[~stuck], grp_k[~stuck], mid[~stuck]
        lo = np.concatenate([lo_k, mid])
        hi = np.concatenate([mid, hi_k])
        grp = np.concatenate([grp_k, grp_k])

    vals = np.concatenate(acc_vals) if acc_vals else np.array([])
    grps = np.concatenate(acc_grp) if acc_grp else np.array([], dtype=int)
    out = group_logsumexp(vals, grps, n_pieces)
    zero_width = edges[1:] == edges[:-1]
    out[zero_width] = -np.inf
    info = QuadInfo(converged=converged, n_intervals=len(vals), n_evals=n_evals,
                    unresolved=unresolved)
    return out, info


def _row_logsumexp(v):
    m = np.max(v, axis=1)
    safe = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        out = safe + np.log(np.sum(np.exp(v - safe[:, None]), axis=1))
    out = np.where(np.isneginf(m), -np.inf, out)
    out = np.where(np.isposinf(m), np.inf, out)
    return out


def log_integrate(log_g, a, b, breaks=(), rtol=1e-11, **kwargs):
    """``log`` of the integral of ``exp(log_g)`` over ``[a, b]``."""
    vals, info = log_integrate_pieces(log_g, [a, b], breaks, rtol=rtol, **kwargs)
    return float(vals[0]), info


def default_cut_schedule(s_start, per_decade=4, s_end=1e300):
    """Cut points for partial integrals in the variable ``s = -log u``.

    Decimal cuts ``u = 10^-k`` for ``k = 4..300`` followed by cuts geometric in
    ``s`` (``u = exp(-s)``) up to ``s_end``; only cuts beyond ``s_start`` are
    kept.
    """
    linear = LN10 * np.arange(4, 301, dtype=float)
    m = np.arange(1, int(per_decade * (math.log10(s_end) - math.log10(linear[-1]))) + 1)
    geometric = linear[-1] * 10.0 ** (m / per_decade)
    cuts = np.concatenate([linear, geometric[geometric <= s_end]])
    return cuts[cuts > s_start]


def geometric_schedule(s_start, s_end=1e300, per_decade=4):
    """Cuts geometric in ``s`` from ``max(s_start, 1)`` to ``s_end``."""
    s0 = max(1.0, s_start)
    k = np.arange(1, int(per_decade * (math.log10(s_end) - math.log10(s0))) + 1)
    cuts = s0 * 10.0 ** (k / per_decade)
    return cuts[cuts <= s_end]


@dataclass
class GrowthFit:
    model: str
    slope: float
    intercept: float
    residual: float
    description: str


@dataclass
class ImproperAssessment:
    """Outcome of the partial-integral growth test.

    ``status`` is ``"diverges"``, ``"converges"`` or ``"undetermined"``;
    ``log_total`` is the log of the last partial integral (the full improper
    integral when it converges).
    """

    status: str
    log_total: float
    cuts: np.ndarray
    log_partial: np.ndarray
    certificate: str
    fit: GrowthFit | None = None
    fits: list = field(default_factory=list)
    quad_converged: bool = True

    @property
    def diverges(self):
        return self.status == "diverges"

    @property
    def converges(self):
        return self.status == "converges"


def _lstsq_line(x, y):
    # both axes rescaled so that values near 1e300 stay representable
    xs = float(np.max(np.abs(x))) or 1.0
    ys = float(np.max(np.abs(y))) or 1.0
    xn, yn = x / xs, y / ys
    A = np.vstack([xn, np.ones_like(xn)]).T
    coef, *_ = np.linalg.lstsq(A, yn, rcond=None)
    resid = yn - A @ coef
    span = float(np.max(yn) - np.min(yn))
    rel = float(np.sqrt(np.mean(resid ** 2)) / span) if span > 0 else np.inf
    return float(coef[0]) * ys / xs, float(coef[1]) * ys, rel


def fit_growth(index, cuts, log_partial, schedule="geometric"):
    """Fit the candidate unbounded growth laws to the tail of a partial-integral series.

    Models, in the cut index ``j``: ``V`` affine in ``j``; ``log V`` affine in
    ``j``; ``log V`` affine in the cut ``s_j``.  Returns all fits sorted by
    relative residual (RMS over the range of the fitted quantity).
    """
    j = np.asarray(index, dtype=float)
    lv = np.asarray(log_partial, dtype=float)
    s = np.asarray(cuts, dtype=float)
    fits = []
    if np.max(lv) < 700:
        b, a, r = _lstsq_line(j, np.exp(lv))
        fits.append(GrowthFit("affine-V", b, a, r, "iterated-logarithmic growth (V ~ log log 1/u)"
                              if schedule == "geometric" else "V affine in cut index"))
    b, a, r = _lstsq_line(j, lv)
    if schedule == "geometric" and len(s) > 1:
        dlogs = float(np.mean(np.diff(np.log(s))))
        c = b / dlogs
        if abs(c - 1.0) < 0.02:
            desc = "logarithmic growth (V ~ log 1/u)"
        else:
            desc = f"power-of-logarithm growth (V ~ (log 1/u)^{c:.3g})"
    else:
        desc = f"geometric growth in cut index (ratio e^{b:.3g} per cut)"
    fits.append(GrowthFit("affine-logV", b, a, r, desc))
    if np.all(np.isfinite(s)):
        b, a, r = _lstsq_line(s, lv)
        fits.append(GrowthFit("affine-logV-in-s", b, a, r,
                              f"power-law growth (V ~ u^-{b:.3g})"))
    fits.sort(key=lambda g: g.residual)
    return fits


def assess_partials(cuts, log_partial, schedule="geometric", ratio_threshold=50.0,
                    fit_tol=0.01, conv_tol=1e-8, quad_converged=True):
    """Decide divergence or convergence of a sequence of partial integrals.

    Converges when the last half of the cut schedule adds less than
    ``conv_tol`` relative; diverges when a growth model fits the last half with
    relative residual below ``fit_tol``, the model predicts growth over that
    window, and the final partial exceeds ``ratio_threshold`` times the first.
    """
    cuts = np.asarray(cuts, dtype=float)
    lp = np.asarray(log_partial, dtype=float)
    n = len(lp)
    if n < 8:
        return ImproperAssessment("undetermined", float(lp[-1]) if n else -np.inf, cuts, lp,
                                  "too few cuts for a growth test", quad_converged=quad_converged)
    if np.isposinf(lp[-1]):
        return ImproperAssessment("diverges", np.inf, cuts, lp,
                                  "partial integral overflowed the log representation",
                                  quad_converged=quad_converged)
    half = n // 2
    tail_inc = logsubexp(lp[-1], lp[half]) if lp[-1] > lp[half] else -np.inf
    if np.isneginf(lp[-1]) or tail_inc - lp[-1] < math.log(conv_tol):
        rel = math.exp(tail_inc - lp[-1]) if np.isfinite(lp[-1]) and np.isfinite(tail_inc) else 0.0
        return ImproperAssessment(
            "converges", float(lp[-1]), cuts, lp,
            f"last half of the cut schedule (s in [{cuts[half]:.3g}, {cuts[-1]:.3g}]) "
            f"adds {rel:.2e} relative",
            quad_converged=quad_converged)

    finite = np.isfinite(lp)
    first = int(np.argmax(finite))
    # growth measured from the first cut, so the finite part above the
    # schedule does not mask a slow divergence
    if first + 1 < n and lp[first + 1] > lp[first]:
        log_ratio = float(logsubexp(lp[-1], lp[first]) - logsubexp(lp[first + 1], lp[first]))
    else:
        log_ratio = -np.inf
    idx = np.arange(n)
    fits = fit_growth(idx[half:], cuts[half:], lp[half:], schedule)
    best = fits[0]
    grows = lp[-1] - lp[half] > math.log(1.1)
    if best.residual < fit_tol and best.slope > 0 and grows and log_ratio > math.log(ratio_threshold):
        cert = (f"{best.description}; fit residual {best.residual:.2e} over cuts "
                f"{half}..{n - 1}; growth after first cut / first-decade growth = exp({log_ratio:.4g})")
        return ImproperAssessment("diverges", float(lp[-1]), cuts, lp, cert, best, fits,
                                  quad_converged=quad_converged)
    return ImproperAssessment(
        "undetermined", float(lp[-1]), cuts, lp,
        f"no decision: best fit {best.model} residual {best.residual:.2e}, "
        f"growth ratio = exp({log_ratio:.4g}), tail increment exp({tail_inc - lp[-1]:.3g}) relative",
        best, fits, quad_converged=quad_converged)


def improper_from(log_g, s_start, cuts, breaks=(), rtol=1e-11, schedule="geometric", **kw):
    """Partial integrals of ``exp(log_g)`` from ``s_start`` to each cut, assessed for divergence."""
    cuts = np.asarray(cuts, dtype=float)
    edges = np.concatenate([[s_start], cuts])
    pieces, info = log_integrate_pieces(log_g, edges, breaks, rtol=rtol)
    log_partial = np.logaddexp.accumulate(pieces)
    return assess_partials(cuts, log_partial, schedule=schedule,
                           quad_converged=info.converged, **kw)
