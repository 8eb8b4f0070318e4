"""Numerical laboratory for the blow-up dichotomy of fractional semilinear heat equations."""

from .verdict import Verdict, blowup, global_, undetermined
from .nonlinearity import (
    CriticalExponent,
    Custom,
    Linear,
    LogCorrected,
    Nonlinearity,
    PowerLaw,
    check_hypotheses,
    classify,
    criterion_integral,
    ell,
    eval_log,
    evaluate,
    from_json,
    sugitani_liminf,
)
from . import example4, kernel, ode, pde
from .kernel import Field, GridSpec, KernelSpec
from .ode import OdeBudget, OdeProblem, integrate, ode_blowup_property
from .pde import PdeBudget, PdeProblem, evolve, pde_blowup_property

__all__ = [
    "Verdict",
    "blowup",
    "global_",
    "undetermined",
    "CriticalExponent",
    "Custom",
    "Linear",
    "LogCorrected",
    "Nonlinearity",
    "PowerLaw",
    "check_hypotheses",
    "classify",
    "criterion_integral",
    "ell",
    "eval_log",
    "evaluate",
    "from_json",
    "sugitani_liminf",
    "example4",
    "kernel",
    "ode",
    "pde",
    "Field",
    "GridSpec",
    "KernelSpec",
    "OdeBudget",
    "OdeProblem",
    "integrate",
    "ode_blowup_property",
    "PdeBudget",
    "PdeProblem",
    "evolve",
    "pde_blowup_property",
]

__version__ = "0.1.0"
