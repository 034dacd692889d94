"""Per-trajectory sufficient statistics for parametric-family refits.

Engines can record, alongside a skeleton, the class-resolved hazard
integrals and per-jump quantities from which a parametric family can
re-evaluate its own log-density at any parameter value without
re-simulating.  Only segments with the failure flag unset are recorded:
post-failure dynamics are never biased, so their terms do not depend on
the family parameters.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .core import State


@dataclass(frozen=True)
class SegStat:
    """One pre-failure segment: mode and trapezoid integrals of the base
    failure-class and repair-class hazards along the flow grid."""

    mode: int
    fail_int: float
    rep_int: float


@dataclass(frozen=True)
class JumpStat:
    """One jump: departure/arrival states plus the hazard quantities needed
    to rebuild biased time and kernel factors.

    ``fail_mean``/``rep_mean`` are the jump interval's trapezoid means,
    ``fail_pt``/``rep_pt`` the pointwise class sums at the departure state
    (spontaneous jumps only; zero for boundary jumps).
    """

    kind: str
    s: float
    departure: State
    arrival: State
    fail_mean: float = 0.0
    rep_mean: float = 0.0
    fail_pt: float = 0.0
    rep_pt: float = 0.0
    chosen_rate: float = 0.0
    chosen_kind: Optional[str] = None


@dataclass
class TrajStats:
    segs: list[SegStat]
    jumps: list[JumpStat]
