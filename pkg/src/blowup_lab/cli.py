"""Batch front-end: ``blowup-lab <command> --manifest <file> [--out <dir>] [--jobs N] [--validate]``.

A manifest is a JSON object ``{"command", "parameters", "seed", "output_dir"}``.
Missing parameters are filled from :data:`DEFAULTS`; the resolved manifest is
embedded in ``report.json`` so that re-running it reproduces the CSV tables.
The exit code is 0 iff every asserted check passes.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import example4 as e4
from . import kernel as K
from . import nonlinearity as nl
from . import ode
from . import pde
from .errors import BlowupLabError, ManifestError
from .verdict import Verdict

COMMANDS = ("criteria", "ode", "pde", "example4", "dichotomy-sweep", "kernel-verify")
OUT_ENV = "BLOWUP_LAB_OUT"

_POWER_SWEEP = [{"kind": "power", "p_offsets": [-0.25, 0.0, 0.01, 0.25]}]
_CELLS = [[2.0, 1], [1.0, 1], [1.0, 2], [0.5, 1]]
# the log correction is only active below c0 = 0.01, so global witnesses need small data
_LOG_SAMPLE = {"x0": [1e-4, 1e-3, 1e-2, 0.1, 1.0], "t0": [1.0, 10.0, 100.0]}

# desk-scale runtimes (8 cores) are noted next to each command
DEFAULTS = {
    # ~1 min
    "criteria": {"families": _POWER_SWEEP + [{"kind": "logcorrected", "beta": [0.5, 0.9, 1.0, 1.1, 1.5]}],
                 "cells": _CELLS, "check_theory": True},
    # ~30 s
    "ode": {"families": [{"kind": "power", "p_offsets": [-0.25, 0.25]},
                         {"kind": "power", "p_offsets": [0.0], "budget": {"t_max": 1e30}}],
            "cells": _CELLS,
            "sample": {"x0": [0.1, 1.0, 10.0, 100.0, 1000.0], "t0": [1.0, 10.0, 100.0]},
            "random_cells": 0,
            "budget": ode.OdeBudget().to_json()},
    # ~20 s
    "pde": {"f": {"kind": "power", "p": 4.0}, "alpha": 2.0, "n": 1, "L": 128.0, "N": 2048,
            "phi": {"shape": "gaussian", "amplitude": 0.05, "width": 0.5},
            "budget": {**pde.PdeBudget().to_json(), "rtol": 1e-10},
            "T": 100.0, "mode": "global", "checks": ["global_bound", "supersolution", "duhamel", "jensen"],
            "snapshots": [1.0, 10.0, 100.0, 300.0]},
    # ~10 s
    "example4": {**e4.ExampleParams().to_json(), "I": 8},
    # ~3 min with the PDE column enabled
    "dichotomy-sweep": {"families": [{"kind": "power", "p": [1.5, 2.0, 2.5, 3.0, 3.5, 4.0]},
                                     {"kind": "logcorrected", "beta": [0.5, 1.0, 1.5], "sample": _LOG_SAMPLE}],
                        "cells": [[2.0, 1]],
                        "ode": True, "pde": False,
                        "sample": {"x0": [0.1, 1.0, 10.0, 100.0, 1000.0], "t0": [1.0, 10.0, 100.0]},
                        "ode_budget": ode.OdeBudget().to_json(),
                        "critical_t_max": 1e30,
                        "pde_grid": {"L": 256.0, "N": 2048},
                        "pde_family": {"amplitudes": [0.05, 0.5, 5.0, 50.0, 500.0],
                                       "shapes": ["gaussian", "indicator"], "width": 1.0},
                        "pde_budget": {**pde.PdeBudget().to_json(), "t_max": 1e4, "early_global": True}},
    # ~1 min
    "kernel-verify": {"alphas": [0.5, 1.0, 1.5, 2.0], "dims": [1, 2], "L": 64.0, "N": 256,
                      "times": [0.5, 1.0, 2.0], "profile_t": 1.0, "tol": {
                          "mass": 1e-9, "scaling": 1e-8, "semigroup": 1e-10, "ratio": 1e-6, "cauchy": 1e-8}},
}


# -- manifest ------------------------------------------------------------------------

def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass
class ExperimentManifest:
    command: str
    parameters: dict = field(default_factory=dict)
    seed: int = 0
    output_dir: str | None = None

    @classmethod
    def from_dict(cls, d) -> "ExperimentManifest":
        if not isinstance(d, dict):
            raise ManifestError("manifest must be a JSON object")
        extra = set(d) - {"command", "parameters", "seed", "output_dir"}
        if extra:
            raise ManifestError(f"unknown manifest keys: {sorted(extra)}")
        cmd = d.get("command")
        if cmd not in COMMANDS:
            raise ManifestError(f"command must be one of {COMMANDS}, got {cmd!r}")
        params = d.get("parameters", {})
        if not isinstance(params, dict):
            raise ManifestError("parameters must be a JSON object")
        unknown = set(params) - set(DEFAULTS[cmd])
        if unknown:
            raise ManifestError(f"unknown parameters for {cmd}: {sorted(unknown)}")
        seed = d.get("seed", 0)
        if not isinstance(seed, int) or isinstance(seed, bool):
            raise ManifestError("seed must be an integer")
        return cls(cmd, params, seed, d.get("output_dir"))

    @classmethod
    def load(cls, path) -> "ExperimentManifest":
        try:
            with open(path) as fh:
                return cls.from_dict(json.load(fh))
        except json.JSONDecodeError as exc:
            raise ManifestError(f"{path}: invalid JSON: {exc}") from exc

    def resolved(self) -> "ExperimentManifest":
        return ExperimentManifest(self.command, _merge(DEFAULTS[self.command], self.parameters), self.seed,
                                  self.output_dir)

    def to_json(self) -> dict:
        return {"command": self.command, "parameters": self.parameters, "seed": self.seed,
                "output_dir": self.output_dir}


# -- report ----------------------------------------------------------------------------

@dataclass
class Report:
    checks: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)

    def check(self, name, passed, detail=""):
        self.checks.append({"name": name, "passed": bool(passed), "detail": str(detail)})
        return bool(passed)

    def failures(self):
        return [c for c in self.checks if not c["passed"]]

    def write(self, out_dir, manifest: ExperimentManifest, runtime: float):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for name, rows in self.tables.items():
            write_rows(out / f"{name}.csv", rows)
        doc = {"manifest": manifest.to_json(), "checks": self.checks, "summary": self.summary,
               "all_passed": not self.failures(), "runtime_seconds": runtime}
        with open(out / "report.json", "w") as fh:
            json.dump(doc, fh, indent=2, default=_json_default)
        return out


def _json_default(o):
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Verdict):
        return o.to_dict()
    return str(o)


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, Verdict):
        return str(v)
    return v


def write_rows(path, rows):
    keys = []
    for r in rows:
        for k in r:
            if k not in keys:
                keys.append(k)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        for r in rows:
            w.writerow({k: _cell(v) for k, v in r.items()})


# -- families ------------------------------------------------------------------------

def expand_family(entry: dict, alpha: float, n: int):
    """``(label, value, Nonlinearity, overrides)`` for one family entry at one ``(alpha, n)`` cell."""
    kind = entry["kind"]
    budget = entry.get("budget", {})
    P = nl.p_alpha(alpha, n)
    # ``sample`` and ``budget`` keys of an entry apply to the ODE runs only
    if kind == "power":
        if "p_offsets" in entry:
            ps = [(f"p_alpha{d:+g}", P + d) for d in entry["p_offsets"]]
        else:
            ps = [(f"p={p:g}", float(p)) for p in np.atleast_1d(entry["p"])]
        return [(lab, p, nl.PowerLaw(p), budget) for lab, p in ps]
    if kind == "logcorrected":
        return [(f"beta={b:g}", float(b), nl.LogCorrected(alpha, n, float(b)), budget)
                for b in np.atleast_1d(entry["beta"])]
    try:
        f = nl.from_json({k: v for k, v in entry.items() if k not in ("budget", "sample", "label")})
    except (KeyError, TypeError, ValueError) as exc:
        raise ManifestError(f"bad family entry {entry!r}: {exc}") from exc
    return [(entry.get("label", kind), math.nan, f, budget)]


def expected_outcome(kind: str, value: float, alpha: float, n: int):
    """Known answer for the power and log-corrected families (``None`` otherwise)."""
    if kind == "power":
        return "blowup" if value <= nl.p_alpha(alpha, n) + 1e-12 else "global"
    if kind == "logcorrected":
        return "blowup" if value <= 1.0 else "global"
    return None


def _iter_cells(params):
    for alpha, n in params["cells"]:
        for entry in params["families"]:
            for lab, val, f, over in expand_family(entry, float(alpha), int(n)):
                yield float(alpha), int(n), entry, lab, val, f, over


def _ode_agrees(crit: Verdict, v: Verdict) -> bool:
    """Determined ODE verdicts must match; Undetermined is tolerated only under a BlowUp criterion."""
    if v.is_determined:
        return crit.is_determined and v.outcome == crit.outcome
    return crit.is_blowup


def _sample(params, seed):
    s = params["sample"]
    x0 = list(s["x0"])
    k = int(params.get("random_cells", 0))
    if k:
        rng = np.random.default_rng(seed)
        x0 += [float(v) for v in 10.0 ** rng.uniform(-2.0, 4.0, size=k)]
    return ode.Sample(tuple(x0), tuple(s["t0"]))


# -- commands ------------------------------------------------------------------------

def run_criteria(m: ExperimentManifest, jobs: int, rep: Report):
    p = m.parameters
    rows = []
    for alpha, n, entry, lab, val, f, _ in _iter_cells(p):
        v = nl.classify(f, alpha, n)
        crit = nl.criterion_integral(f, alpha, n)
        exp = expected_outcome(entry["kind"], val, alpha, n)
        rows.append({"alpha": alpha, "n": n, "family": entry["kind"], "label": lab, "value": val,
                     "verdict": v.outcome, "expected": exp or "", "certificate": crit.certificate})
        if p["check_theory"] and exp is not None:
            rep.check(f"criterion alpha={alpha:g} n={n} {entry['kind']} {lab}", v.outcome == exp,
                      f"got {v}, expected {exp}")
    rep.tables["criteria"] = rows


def _ode_rows(p, seed, jobs, budget_key="budget", critical_t_max=None):
    base = ode.OdeBudget(**p[budget_key])
    summary, cells = [], []
    for alpha, n, entry, lab, val, f, over in _iter_cells(p):
        sample = _sample({**p, "sample": entry.get("sample", p["sample"])}, seed)
        budget = ode.OdeBudget(**{**base.to_json(), **over})
        if critical_t_max and entry["kind"] == "power" and abs(val - nl.p_alpha(alpha, n)) < 1e-12:
            budget = ode.OdeBudget(**{**budget.to_json(), "t_max": critical_t_max})
        crit = nl.classify(f, alpha, n)
        v, cl = ode.ode_blowup_property(f, alpha, n, sample, budget, jobs=jobs)
        for x0, t0, cv in cl:
            cells.append({"alpha": alpha, "n": n, "label": lab, "x0": x0, "t0": t0, "verdict": cv})
        summary.append({"alpha": alpha, "n": n, "family": entry["kind"], "label": lab, "value": val,
                        "criterion": crit.outcome, "ode": v.outcome, "ode_detail": str(v),
                        "agree": _ode_agrees(crit, v), "_f": f})
    return summary, cells


def run_ode(m: ExperimentManifest, jobs: int, rep: Report):
    summary, cells = _ode_rows(m.parameters, m.seed, jobs)
    for r in summary:
        r.pop("_f")
        rep.check(f"ode agrees alpha={r['alpha']:g} n={r['n']} {r['label']}", r["agree"],
                  f"criterion {r['criterion']}, ode {r['ode_detail']}")
    rep.tables["ode_boundary"] = summary
    rep.tables["ode_cells"] = cells


def run_dichotomy_sweep(m: ExperimentManifest, jobs: int, rep: Report):
    p = m.parameters
    if p["ode"]:
        summary, cells = _ode_rows(p, m.seed, jobs, "ode_budget", p["critical_t_max"])
        rep.tables["ode_cells"] = cells
    else:
        summary = [{"alpha": a, "n": n, "family": e["kind"], "label": lab, "value": val,
                    "criterion": nl.classify(f, a, n).outcome, "ode": "", "agree": True, "_f": f}
                   for a, n, e, lab, val, f, _ in _iter_cells(p)]
    pde_cells = []
    for r in summary:
        f = r.pop("_f")
        ok = r["agree"]
        if p["pde"]:
            spec = K.KernelSpec(r["alpha"], r["n"])
            grid = K.GridSpec(p["pde_grid"]["L"], p["pde_grid"]["N"])
            fam = pde.PhiFamily(tuple(p["pde_family"]["amplitudes"]), tuple(p["pde_family"]["shapes"]),
                                p["pde_family"]["width"])
            v, cl = pde.pde_blowup_property(f, spec, grid, fam, pde.PdeBudget(**p["pde_budget"]), jobs=jobs)
            r["pde"] = v.outcome
            pde_ok = (not v.is_determined) or v.outcome == r["criterion"]
            r["pde_agree"] = pde_ok
            ok = ok and pde_ok
            pde_cells += [{"alpha": r["alpha"], "n": r["n"], "label": r["label"], "shape": s, "amplitude": a,
                           "verdict": cv} for s, a, cv in cl]
        r["agree"] = ok
        rep.check(f"agreement alpha={r['alpha']:g} n={r['n']} {r['label']}", ok,
                  f"criterion {r['criterion']}, ode {r.get('ode')}, pde {r.get('pde', 'not run')}")
    rep.tables["agreement_matrix"] = summary
    if pde_cells:
        rep.tables["pde_cells"] = pde_cells


def _jensen_failures(tr, prob):
    bad = []
    for t in tr.snapshot_times():
        if t > 0:
            try:
                pde.jensen_check(tr.snapshots[t], prob, t)
            except BlowupLabError as exc:
                bad.append(str(exc))
    return bad


def _run_pde_blowup(p, f, spec, grid, rep: Report):
    budget = pde.PdeBudget(**{**p["budget"], "t_max": float(p["T"])})
    ref = pde.refinement_check(f, spec, grid, p["phi"], budget)
    tb, tf = ref["t_star"]
    rep.summary.update({"verdict": ref["base"].verdict.to_dict(), "refined_verdict": ref["refined"].verdict.to_dict(),
                        "t_star": tb, "t_star_refined": tf, "relative_change": ref["relative_change"]})
    rep.check("blow-up detected", ref["base"].verdict.is_blowup, str(ref["base"].verdict))
    rep.check("same verdict under refinement", ref["same_verdict"], str(ref["refined"].verdict))
    rep.check("t* within 5% under refinement", ref["relative_change"] <= 0.05, f"{ref['relative_change']:.3e}")
    tr = ref["base"]
    rep.tables["trace"] = [{"t": t, "sup": s, "l1": l, "z": z} for t, s, l, z in
                           zip(tr.times, tr.sup_norms, tr.l1_norms, tr.z_values)]
    if "jensen" in p["checks"] and tb is not None:
        snaps = [t for t in p["snapshots"] if t < tb]
        prob = pde.PdeProblem(f, spec, grid, pde.make_phi(grid, spec.n, **p["phi"]))
        tr2 = pde.evolve(prob, pde.PdeBudget(**{**budget.to_json(), "t_max": max(snaps)}), snapshot_times=snaps)
        bad = _jensen_failures(tr2, prob)
        rep.check(f"Jensen inequality on {len(snaps)} snapshots", not bad, "; ".join(bad[:3]))
    z = tr.z_values
    tail = np.diff(z[len(z) // 2:])
    rep.check("z eventually increasing", bool(np.all(tail >= -1e-12 * np.abs(z[1:]).max())), "")


def run_pde(m: ExperimentManifest, jobs: int, rep: Report):
    p = m.parameters
    f = nl.from_json(p["f"])
    spec = K.KernelSpec(float(p["alpha"]), int(p["n"]))
    grid = K.GridSpec(float(p["L"]), int(p["N"]))
    if p["mode"] == "blowup":
        return _run_pde_blowup(p, f, spec, grid, rep)
    if p["mode"] != "global":
        raise ManifestError("pde mode must be 'global' or 'blowup'")
    budget = pde.PdeBudget(**{**p["budget"], "t_max": float(p["T"])})
    prob = pde.PdeProblem(f, spec, grid, pde.make_phi(grid, spec.n, **p["phi"]))
    nodes = pde.default_nodes(float(p["T"]))
    chk = set(p["checks"])
    res = pde.small_data_bound_check(prob, float(p["T"]), nodes, budget)
    tr = res["trace"]
    rep.tables["trace"] = [{"t": t, "sup": s, "l1": l, "z": z} for t, s, l, z in
                           zip(tr.times, tr.sup_norms, tr.l1_norms, tr.z_values)]
    rep.summary["verdict"] = tr.verdict.to_dict()
    rep.summary["slope"] = res["slope"]
    rep.summary["max_excess_over_2S_phi"] = res["max_excess"]
    if "global_bound" in chk:
        rep.check("u <= 2 S(t) phi + 1e-8", res["max_excess"] <= 1e-8, f"max excess {res['max_excess']:.3e}")
        rep.check("decay slope within 0.05 of -n/alpha", abs(res["slope"] - res["target_slope"]) <= 0.05,
                  f"slope {res['slope']:.4f}")
        rep.check("global verdict", tr.verdict.is_global, str(tr.verdict))
    if "supersolution" in chk:
        ss = pde.supersolution_iterate(prob, T=float(p["T"]), nodes=nodes, compare_with_evolve=False)
        ev = np.stack([tr.snapshots[float(t)].values for t in nodes])
        gap = float(np.max(np.abs(ss["last"] - ev)))
        rep.summary["supersolution"] = {k: ss[k] for k in ("constants", "data_size", "within_rho", "monotone",
                                                           "supersolution_excess", "worst_increase")}
        rep.summary["supersolution"]["limit_gap"] = gap
        rep.check("data within the small-data radius", ss["within_rho"],
                  f"{ss['data_size']:.4g} vs rho {ss['constants']['rho']:.4g}")
        rep.check("supersolution iterates decrease monotonically", ss["monotone"],
                  f"worst increase {ss['worst_increase']:.3e}")
        rep.check("iterates approach the evolved solution", gap <= 1e-4, f"gap {gap:.3e}")
        rep.tables["iterates_sup"] = [{"t": t, **{f"u{k + 1}": s[j] for k, s in enumerate(ss["sup_norms"])}}
                                      for j, t in enumerate(nodes)]
    if "duhamel" in chk:
        r1 = pde.duhamel_residual(tr, prob, t_check=[nodes[-1]], stride=1)
        r2 = pde.duhamel_residual(tr, prob, t_check=[nodes[-1]], stride=2)
        rep.summary["duhamel"] = {"fine": r1, "coarse": r2, "ratio": r2 / r1 if r1 > 0 else math.inf}
        rep.check("Duhamel residual <= 1e-4", r1 <= 1e-4, f"{r1:.3e}")
        rep.check("Duhamel residual drops ~4x under node doubling", r2 / r1 >= 3.0 if r1 > 0 else True,
                  f"ratio {r2 / max(r1, 1e-300):.3f}")
    if "jensen" in chk:
        bad = _jensen_failures(tr, prob)
        rep.check("Jensen inequality on every snapshot", not bad, "; ".join(bad[:3]))


def run_example4(m: ExperimentManifest, jobs: int, rep: Report):
    p = dict(m.parameters)
    I = int(p.pop("I"))
    params = e4.ExampleParams.from_json(p)
    try:
        params.validate()
    except BlowupLabError as exc:
        rep.check("parameters admissible", False, f"{type(exc).__name__}: {exc}")
        rep.summary["error"] = {"type": type(exc).__name__, "message": str(exc)}
        return
    rep.check("parameters admissible", True, f"theta window {params.theta_window()}")
    f = e4.build(params)
    rep.check("interval ordering", f.data.ordering_ok(params.theta))
    jc = float(np.max(e4.joint_continuity(params)))
    rep.check("joint continuity (log mismatch <= 1e-10)", jc <= 1e-10, f"{jc:.3e}")
    rep.check("joint slopes ordered", e4.joint_slopes_ok(params, f.data))
    try:
        win = e4.check_convexity_window(params)
        rep.check("convexity window holds from i_min", win["holds_from"] == params.i_min, win["holds_from"])
    except BlowupLabError as exc:
        rep.check("convexity window holds from i_min", False, exc)
    try:
        fm = e4.check_F_monotone(params)
        rep.check("F-monotone limit ratio > 1", fm["limit_ratio"] > 1, f"{fm['limit_ratio']:.6g}")
    except BlowupLabError as exc:
        rep.check("F-monotone limit ratio > 1", False, exc)
    s3 = e4.step3_divergence(params, I)
    rep.check(f"divergent partial sum exceeds 1e6 by I = {I}", s3 > 1e6, f"{s3:.6g}")
    bad = []
    for i in range(params.i_min, params.i_max):
        try:
            lr = e4.step4_diagonal_ratio(f, i)
            if lr != -(2 * i + 1):
                bad.append(f"i={i}: {lr}")
        except BlowupLabError as exc:
            bad.append(f"i={i}: {exc}")
    rep.check("diagonal log-ratio = -(2i+1)", not bad, "; ".join(bad[:3]))
    hyp = nl.check_hypotheses(f)
    rep.check("hypotheses M, C, B, S hold", hyp.all_hold, ",".join(hyp.failing()))
    crit = nl.criterion_integral(f, params.alpha, params.n)
    rep.check("criterion integral diverges", crit.diverges, crit.certificate)
    v = nl.classify(f, params.alpha, params.n, report=hyp)
    rep.check("classify = BlowUp", v.is_blowup, str(v))
    sl = nl.sugitani_liminf(f, params.alpha, params.n)
    rep.check("liminf f(u)/u^P = 0", sl == 0.0, sl)
    rep.summary.update({"P": params.P, "theta_window": params.theta_window(), "step3_partial": s3,
                        "sugitani_liminf": sl, "verdict": v.to_dict()})
    rep.tables["example4"] = e4.report_rows(f)


def run_kernel_verify(m: ExperimentManifest, jobs: int, rep: Report):
    p = m.parameters
    tol = p["tol"]
    grid = K.GridSpec(float(p["L"]), int(p["N"]))
    times = [float(t) for t in p["times"]]
    rows, profiles = [], []
    for n in p["dims"]:
        for a in p["alphas"]:
            spec = K.KernelSpec(float(a), int(n))
            mass_err = abs(K.kernel_mass(spec, 1.0) - 1.0)
            rep.check(f"mass alpha={a:g} n={n}", mass_err <= tol["mass"], f"{mass_err:.3e}")
            r = np.array([0.0, 0.3, 1.0, 3.0])
            t = 2.5
            direct = np.asarray(K.kernel_radial(spec, r, t, "direct"))
            scaled = t ** (-n / a) * np.asarray(K.kernel_radial(spec, r * t ** (-1 / a), 1.0, "fourier"))
            sc_err = float(np.max(np.abs(direct - scaled) / np.abs(scaled)))
            rep.check(f"scaling alpha={a:g} n={n}", sc_err <= tol["scaling"], f"{sc_err:.3e}")
            phi = pde.gaussian_bump(grid, n, 1.0, 1.0)
            lhs = K.semigroup_apply(spec, grid, K.semigroup_apply(spec, grid, phi, 0.5), 0.7).values
            rhs = K.semigroup_apply(spec, grid, phi, 1.2).values
            sg = float(np.max(np.abs(lhs - rhs)))
            rep.check(f"semigroup alpha={a:g} n={n}", sg <= tol["semigroup"], f"{sg:.3e}")
            worst = math.inf
            for s in times:
                for tt in times:
                    if s <= tt:
                        try:
                            worst = min(worst, K.kernel_ratio_bound_check(spec, grid, s, tt, tol["ratio"])["min_ratio"])
                        except BlowupLabError as exc:
                            worst = min(worst, getattr(exc, "ratio", -math.inf))
            rep.check(f"ratio bound alpha={a:g} n={n}", worst >= 1 - tol["ratio"], f"min ratio {worst:.9g}")
            row = {"alpha": a, "n": n, "mass_error": mass_err, "scaling_error": sc_err,
                   "semigroup_error": sg, "min_ratio": worst}
            if a == 1.0:
                rr = np.linspace(0.0, 20.0, 201)
                num = np.asarray(K.kernel_radial(spec, rr, 1.0, "fourier"))
                cauchy = np.asarray(K.kernel_radial(spec, rr, 1.0, "auto"))
                ce = float(np.max(np.abs(num - cauchy) / cauchy))
                rep.check(f"Cauchy closed form n={n}", ce <= tol["cauchy"], f"{ce:.3e}")
                row["cauchy_error"] = ce
            rows.append(row)
            rr, kk = K.radial_profile(spec, float(p["profile_t"]), num=401)
            profiles += [{"alpha": a, "n": n, "r": x, "K": y} for x, y in zip(rr, kk)]
    rep.tables["kernel_checks"] = rows
    rep.tables["kernel_profiles"] = profiles


RUNNERS = {
    "criteria": run_criteria,
    "ode": run_ode,
    "pde": run_pde,
    "example4": run_example4,
    "dichotomy-sweep": run_dichotomy_sweep,
    "kernel-verify": run_kernel_verify,
}


def run_manifest(manifest: ExperimentManifest, out_dir=None, jobs: int = 1):
    """Run a manifest and write its report; returns ``(Report, output path)``."""
    resolved = manifest.resolved()
    out_dir = out_dir or manifest.output_dir or os.environ.get(OUT_ENV) or os.path.join("out", manifest.command)
    resolved.output_dir = str(out_dir)
    rep = Report()
    t0 = time.perf_counter()
    try:
        RUNNERS[manifest.command](resolved, jobs, rep)
    except BlowupLabError as exc:
        rep.check("run completed", False, f"{type(exc).__name__}: {exc}")
    path = rep.write(out_dir, resolved, time.perf_counter() - t0)
    return rep, path


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="blowup-lab", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--manifest", required=True, help="JSON manifest file")
    ap.add_argument("--out", help=f"output directory (default: manifest output_dir, ${OUT_ENV}, out/<command>)")
    ap.add_argument("--jobs", type=int, default=1, help="worker processes for sampled sweeps")
    ap.add_argument("--validate", action="store_true", help="check and print the resolved manifest, run nothing")
    args = ap.parse_args(argv)
    try:
        manifest = ExperimentManifest.load(args.manifest)
    except (ManifestError, OSError) as exc:
        print(f"manifest error: {exc}", file=sys.stderr)
        return 2
    if manifest.command != args.command:
        print(f"manifest error: manifest is for {manifest.command!r}, not {args.command!r}", file=sys.stderr)
        return 2
    if args.validate:
        print(json.dumps(manifest.resolved().to_json(), indent=2))
        return 0
    rep, path = run_manifest(manifest, args.out, args.jobs)
    for c in rep.checks:
        print(f"{'PASS' if c['passed'] else 'FAIL'}  {c['name']}  {c['detail']}")
    fails = rep.failures()
    print(f"{len(rep.checks) - len(fails)}/{len(rep.checks)} checks passed; report in {path}")
    return 0 if not fails else 1


if __name__ == "__main__":
    sys.exit(main())
