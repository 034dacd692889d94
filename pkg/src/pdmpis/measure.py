"""Exact log-density of a skeleton and likelihood ratios between laws.

A skeleton's density with respect to the reference measure on trajectory
space factors per segment: a hazard factor for spontaneous jumps, a
survival exponent for every segment, and a kernel mass for every jump
arrival.  Boundary- and horizon-terminated segments carry no hazard
factor: the forced end is a point mass whose weight is the survival
probability (the unique convention under which the law integrates to 1,
validated by the normalization tests).

All terms are evaluated on exactly the flow grid the sampler used, so a
simulated skeleton's online log-weight and the offline f/g evaluation here
agree to rounding.  Densities are carried in log space throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from . import _pyengine
from .core import BOUNDARY, HORIZON, SPONTANEOUS, ModelSpec, Skeleton, State


class ImpossibleSkeletonError(ValueError):
    """The skeleton has zero density under the model (support violation on
    the original-process side)."""


class SupportViolationError(ValueError):
    """A scheme assigns zero mass to a skeleton of positive density."""


class DomainError(ValueError):
    """Quadrature requested past the segment's forced end."""


@dataclass(frozen=True)
class SegmentTerms:
    """Density terms of one segment; the kernel term belongs to the jump
    that terminates the segment (None for the horizon segment)."""

    log_hazard: Optional[float]
    survival: float
    log_kernel: Optional[float]


@dataclass
class LogDensityBreakdown:
    segments: list[SegmentTerms]
    total: float


def cumulative_intensity(model: ModelSpec, z: State, t: float) -> float:
    """Integral of the total hazard along the flow from ``z`` over [0, t].

    Trapezoid rule on the flow grid; raises DomainError when the flow hits
    a boundary strictly before ``t``.
    """
    if t < 0:
        raise DomainError("negative quadrature horizon")
    if t == 0.0:
        return 0.0
    try:
        out = _pyengine.walk_segment(model, None, z, 0.0, math.inf,
                                     duration=t, kind=HORIZON)
    except ImpossibleSkeletonError as e:
        raise DomainError(f"flow from {z} exits its domain before t={t}") from e
    return -out.surv_f


def _evaluate(model: ModelSpec, scheme, skeleton: Skeleton):
    """Dual f/g evaluation of a skeleton; returns two breakdowns.

    The f side never depends on the scheme, so evaluating with and without
    one yields bitwise-identical f terms.
    """
    entries = skeleton.entries
    if not entries or entries[-1].kind != HORIZON:
        raise ImpossibleSkeletonError("skeleton must end with a horizon segment")
    if any(e.kind == HORIZON for e in entries[:-1]):
        raise ImpossibleSkeletonError("horizon segment before the end")

    segs_f = []
    segs_g = []
    parts_f = []
    parts_g = []
    elapsed = 0.0
    budget0 = skeleton.t_f
    for i, e in enumerate(entries):
        seg = _pyengine.walk_segment(
            model, scheme, e.state, elapsed, budget0 - elapsed,
            duration=e.duration, kind=e.kind,
        )
        elapsed += e.duration
        lk_f = lk_g = None
        if e.kind != HORIZON:
            arrival = entries[i + 1].state
            if e.kind == SPONTANEOUS:
                lk_f, lk_g = _pyengine.eval_interior_logk(
                    model, scheme, seg.end_state, elapsed, arrival)
            else:
                lk_f, lk_g = _pyengine.eval_boundary_logk(
                    model, scheme, seg.end_state, elapsed, arrival)
        segs_f.append(SegmentTerms(seg.log_haz_f, seg.surv_f, lk_f))
        segs_g.append(SegmentTerms(seg.log_haz_g, seg.surv_g, lk_g))
        for st, parts in ((segs_f[-1], parts_f), (segs_g[-1], parts_g)):
            if st.log_hazard is not None:
                parts.append(st.log_hazard)
            parts.append(st.survival)
            if st.log_kernel is not None:
                parts.append(st.log_kernel)
    bd_f = LogDensityBreakdown(segs_f, math.fsum(parts_f))
    bd_g = LogDensityBreakdown(segs_g, math.fsum(parts_g))
    return bd_f, bd_g


def log_density(model: ModelSpec, skeleton: Skeleton) -> LogDensityBreakdown:
    """Log-density of ``skeleton`` under the model's original law."""
    bd_f, _ = _evaluate(model, None, skeleton)
    return bd_f


def log_density_under_scheme(model: ModelSpec, scheme, skeleton: Skeleton) -> LogDensityBreakdown:
    """Log-density of ``skeleton`` under the importance process of ``scheme``."""
    _, bd_g = _evaluate(model, scheme, skeleton)
    return bd_g


def log_likelihood_ratio(model: ModelSpec, scheme, skeleton: Skeleton) -> float:
    """log f - log g for a skeleton, term-by-term on the shared grid.

    Equals log_density(...).total - log_density_under_scheme(...).total
    exactly (identical arithmetic on both paths).
    """
    try:
        bd_f, bd_g = _evaluate(model, scheme, skeleton)
    except ImpossibleSkeletonError:
        raise
    if not math.isfinite(bd_g.total) and math.isfinite(bd_f.total):
        raise SupportViolationError(
            "scheme density vanishes on a skeleton of positive original density")
    return bd_f.total - bd_g.total
