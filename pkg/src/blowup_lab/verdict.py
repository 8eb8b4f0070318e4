"""Three-valued outcome shared by the criterion, ODE and PDE paths."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

BLOWUP = "blowup"
GLOBAL = "global"
UNDETERMINED = "undetermined"


@dataclass(frozen=True)
class Verdict:
    """Outcome of a blow-up test.

    ``t_star`` is only meaningful for ``blowup`` (``None`` at criterion level),
    ``decay_exponent`` only for ``global``; ``reason`` is mandatory for
    ``undetermined``.
    """

    outcome: str
    t_star: Optional[float] = None
    decay_exponent: Optional[float] = None
    reason: str = ""

    def __post_init__(self):
        if self.outcome not in (BLOWUP, GLOBAL, UNDETERMINED):
            raise ValueError(f"unknown outcome {self.outcome!r}")
        if self.outcome == UNDETERMINED and not self.reason:
            raise ValueError("an undetermined verdict needs a reason")
        if self.outcome != BLOWUP and self.t_star is not None:
            raise ValueError("t_star is only defined for blow-up")
        if self.outcome != GLOBAL and self.decay_exponent is not None:
            raise ValueError("decay_exponent is only defined for global verdicts")
        if self.t_star is not None and not self.t_star > 0:
            raise ValueError("t_star must be positive")

    @property
    def is_blowup(self) -> bool:
        return self.outcome == BLOWUP

    @property
    def is_global(self) -> bool:
        return self.outcome == GLOBAL

    @property
    def is_determined(self) -> bool:
        return self.outcome != UNDETERMINED

    def to_dict(self) -> dict:
        return {
            "outcome": self.outcome,
            "t_star": self.t_star,
            "decay_exponent": self.decay_exponent,
            "reason": self.reason,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Verdict":
        return cls(d["outcome"], d.get("t_star"), d.get("decay_exponent"), d.get("reason", ""))

    def __str__(self):
        if self.outcome == BLOWUP:
            return "BlowUp" if self.t_star is None else f"BlowUp(t*={self.t_star:.6g})"
        if self.outcome == GLOBAL:
            if self.decay_exponent is None:
                return "Global"
            return f"Global(decay={self.decay_exponent:.4g})"
        return f"Undetermined({self.reason})"


def blowup(t_star: Optional[float] = None) -> Verdict:
    return Verdict(BLOWUP, t_star=t_star)


def global_(decay_exponent: Optional[float] = None) -> Verdict:
    return Verdict(GLOBAL, decay_exponent=decay_exponent)


def undetermined(reason: str) -> Verdict:
    return Verdict(UNDETERMINED, reason=reason)


def aggregate(verdicts) -> Verdict:
    """Combine sampled verdicts into a blow-up-property verdict.

    One global run falsifies the property; it holds (on the sample) only if
    every run blew up.
    """
    verdicts = list(verdicts)
    if not verdicts:
        return undetermined("empty sample")
    n_global = sum(v.is_global for v in verdicts)
    if n_global:
        return global_()
    if all(v.is_blowup for v in verdicts):
        return blowup()
    n_undet = sum(not v.is_determined for v in verdicts)
    return undetermined(f"{n_undet} of {len(verdicts)} sampled runs undetermined, none global")
