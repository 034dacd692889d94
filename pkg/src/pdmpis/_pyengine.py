"""Pure-Python trajectory engine.

Works with any ModelSpec via its callback interface.  The compiled engine
(_cyengine) mirrors this module's arithmetic operation for operation for
the built-in tabular models; keep the two in sync (the parity test suite
compares them draw by draw).

Conventions shared by both engines and by the density evaluator:

* the flow grid of a segment is t_k = k*h with one final partial interval
  clamped to the boundary hitting time or the remaining budget;
* node states advance by one RK4 step per interval (step h, or the clamped
  final width);
* the cumulative intensity is the trapezoid sum over grid nodes, and jump
  times are drawn by linear interpolation of that piecewise-linear
  cumulative intensity, so a segment's operational jump-time density is
  lam_bar * exp(-Lambda(t)) with lam_bar the interval's trapezoid mean and
  a point mass exp(-Lambda(end)) at the forced end;
* interior transition picks use pointwise rates at the realized jump state;
* segments whose state already carries the failure flag are simulated with
  the original law even under a bias scheme (neutrality by construction).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from .core import (
    BOUNDARY,
    HORIZON,
    SPONTANEOUS,
    ModelContractError,
    ModelSpec,
    NumericalBlowupError,
    RunawayModelError,
    Skeleton,
    SkeletonEntry,
    State,
)
from ._stats import JumpStat, SegStat, TrajStats

_KERNEL_MASS_TOL = 1e-12
_MAX_FLOW_STEPS = 10**8


def rk4_step(model: ModelSpec, m: int, x: tuple, dt: float) -> tuple:
    f = model.vector_field
    k1 = f(m, x)
    x2 = tuple(xi + 0.5 * dt * k1i for xi, k1i in zip(x, k1))
    k2 = f(m, x2)
    x3 = tuple(xi + 0.5 * dt * k2i for xi, k2i in zip(x, k2))
    k3 = f(m, x3)
    x4 = tuple(xi + dt * k3i for xi, k3i in zip(x, k3))
    k4 = f(m, x4)
    return tuple(
        xi + (dt / 6.0) * (a + 2.0 * b + 2.0 * c + d)
        for xi, a, b, c, d in zip(x, k1, k2, k3, k4)
    )


def flow_to(model: ModelSpec, m: int, x: tuple, t: float) -> tuple:
    """Flow position after time t: full h-steps then one partial step."""
    h = model.step
    n = int(math.floor(t / h))
    if n * h > t:
        n -= 1
    for _ in range(n):
        x = rk4_step(model, m, x, h)
    rem = t - n * h
    if rem > 0.0:
        x = rk4_step(model, m, x, rem)
    return x


def _rates_at(model: ModelSpec, scheme, z: State, s_abs: float):
    """Total f-rate, total g-rate and class sums at one grid node.

    lam_g == lam_f when no scheme applies (none given, or the failure flag
    is already set on ``z``).
    """
    lam_f = 0.0
    fail = 0.0
    rep = 0.0
    biased = scheme is not None and not z.md
    lam_g = 0.0
    if biased:
        u_z = scheme.u(z, s_abs)
        if not u_z > 0.0:
            raise ModelContractError(f"scheme weight u must be positive, got {u_z}")
    for tr in model.transitions(z):
        r = tr.rate
        if r < 0.0 or not math.isfinite(r):
            raise ModelContractError(f"invalid hazard {r} at {z}")
        lam_f += r
        if tr.kind == "failure":
            fail += r
        elif tr.kind == "repair":
            rep += r
        if biased:
            lam_g += r * (scheme.u(tr.arrival, s_abs) / u_z)
    if not biased:
        lam_g = lam_f
    return lam_f, lam_g, fail, rep


@dataclass
class SegmentOutcome:
    """Everything the walker learns about one segment."""

    duration: float
    kind: str
    end_state: State
    # per-segment density terms (trapezoid-consistent)
    log_haz_f: Optional[float]
    surv_f: float
    log_haz_g: Optional[float]
    surv_g: float
    # class integrals / jump-interval means for family refits
    fail_int: float = 0.0
    rep_int: float = 0.0
    fail_mean: float = 0.0
    rep_mean: float = 0.0
    fail_pt: float = 0.0
    rep_pt: float = 0.0


def _identity_g_terms(model: ModelSpec, scheme, z: State, s_start: float,
                      duration: float, kind: str):
    """Biased survival and hazard terms through the certified identity.

    Valid for flow_identity schemes on frozen-position models: the biased
    cumulative intensity over the segment is

        lambda*t + power * (log u(z, s) - log u(z, s + t))

    with u the scheme's base committor, exact because u certifies the
    backward flow identity; the biased rate at the jump is its pointwise
    derivative lambda * (1 + power*(rho - 1)), rho the kernel-averaged u
    ratio.  Returns (log_haz_g or None, surv_g).
    """
    power = getattr(scheme, "power", 1.0)
    cell = model._cell(z.m, z.md)
    lam_pt = 0.0
    num = 0.0
    for tr in model.transitions(z):
        lam_pt += tr.rate
        num += tr.rate * scheme.u_base_cell(
            model._cell(tr.arrival.m, tr.arrival.md), s_start + duration)
    u0 = scheme.u_base_cell(cell, s_start)
    u_t = scheme.u_base_cell(cell, s_start + duration)
    if u_t <= 0.0:
        return (None, -math.inf) if kind == HORIZON else (math.inf, -math.inf)
    surv_g = -(lam_pt * duration + power * (math.log(u0) - math.log(u_t)))
    if kind == HORIZON:
        return None, surv_g
    if kind != SPONTANEOUS:
        raise ModelContractError("identity schemes support no forced jumps")
    rho = num / (lam_pt * u_t)
    return math.log(lam_pt * (1.0 + power * (rho - 1.0))), surv_g


def _identity_sample(model: ModelSpec, scheme, z: State, s_start: float,
                     budget: float, rng) -> SegmentOutcome:
    """Sample one segment under a flow_identity scheme by exact inversion."""
    exp_draw = -math.log(1.0 - rng.random())
    if budget <= 0.0:
        return SegmentOutcome(max(budget, 0.0), HORIZON, z, None, -0.0, None, -0.0)
    power = getattr(scheme, "power", 1.0)
    cell = model._cell(z.m, z.md)
    lam_pt = 0.0
    for tr in model.transitions(z):
        lam_pt += tr.rate
    u0 = scheme.u_base_cell(cell, s_start)
    log_u0 = math.log(u0)

    def big_lambda(v):
        u_v = scheme.u_base_cell(cell, s_start + v)
        if u_v <= 0.0:
            return math.inf if power > 0.0 else lam_pt * v
        return lam_pt * v + power * (log_u0 - math.log(u_v))

    if exp_draw >= big_lambda(budget):
        duration, kind = budget, HORIZON
    else:
        lo, hi = 0.0, budget
        it = 0
        while hi - lo > 1e-13 * max(1.0, budget) and it < 200:
            mid = 0.5 * (lo + hi)
            if big_lambda(mid) >= exp_draw:
                hi = mid
            else:
                lo = mid
            it += 1
        # a crossing inside the final sliver before the horizon would
        # evaluate u at exactly t_f; nudge it to the last interior point
        duration = hi if hi < budget else lo
        kind = SPONTANEOUS
    seg = walk_segment(model, None, z, s_start, budget, duration=duration, kind=kind)
    log_haz_g, surv_g = _identity_g_terms(model, scheme, z, s_start, duration, kind)
    seg.log_haz_g = log_haz_g
    seg.surv_g = surv_g
    return seg


def walk_segment(
    model: ModelSpec,
    scheme,
    z: State,
    s_start: float,
    budget: float,
    rng=None,
    duration: float = None,
    kind: str = None,
) -> SegmentOutcome:
    """March one segment's flow grid from ``z``.

    Sampling mode (rng given): draw E ~ Exp(1) and stop at the first of
    E-crossing / boundary hit / budget exhaustion.  Evaluation mode
    (duration and kind given): replay the identical grid up to the known
    terminator and return the same density terms the sampler produces.
    """
    h = model.step
    sample = rng is not None
    identity = (scheme is not None and not z.md
                and getattr(scheme, "flow_identity", False))
    if identity:
        if sample:
            return _identity_sample(model, scheme, z, s_start, budget, rng)
        seg = walk_segment(model, None, z, s_start, budget,
                           duration=duration, kind=kind)
        seg.log_haz_g, seg.surv_g = _identity_g_terms(
            model, scheme, z, s_start, duration, kind)
        return seg
    if sample:
        exp_draw = -math.log(1.0 - rng.random())
        if budget <= 0.0:
            return SegmentOutcome(max(budget, 0.0), HORIZON, z, None, -0.0, None, -0.0)
    elif duration is None or kind is None:
        raise ValueError("evaluation walk needs duration and kind")

    bt_prev = model.boundary_test(z.m, z.md, z.x)
    if bt_prev > 0.0:
        raise ModelContractError(f"segment starts outside its domain: {z}")

    x = z.x
    lam_f_prev, lam_g_prev, fail_prev, rep_prev = _rates_at(model, scheme, z, s_start)
    Lam_f = 0.0
    Lam_g = 0.0
    fail_int = 0.0
    rep_int = 0.0
    k = 0
    while True:
        t_k = k * h
        if not sample and kind == HORIZON and duration <= t_k:
            # horizon tail of zero length (a jump landed exactly on t_f)
            return SegmentOutcome(duration, HORIZON, z.with_x(x),
                                  None, -Lam_f, None, -Lam_g, fail_int, rep_int)
        end = t_k + h
        terminal = None
        if end >= budget:
            end = budget
            terminal = HORIZON
        dt = end - t_k
        x_next = rk4_step(model, z.m, x, dt)
        for c in x_next:
            if not math.isfinite(c):
                raise NumericalBlowupError(f"non-finite flow from {z} near t={end}")
        bt_next = model.boundary_test(z.m, z.md, x_next)

        if bt_prev < 0.0 and bt_next >= 0.0:
            # crossing inside this interval: bisect the offset from node k
            lo, hi = 0.0, dt
            while hi - lo > 1e-10:
                mid = 0.5 * (lo + hi)
                if model.boundary_test(z.m, z.md, rk4_step(model, z.m, x, mid)) >= 0.0:
                    hi = mid
                else:
                    lo = mid
            end = t_k + hi
            dt = hi
            zb = model.clamp_to_boundary(State(rk4_step(model, z.m, x, hi), z.m, z.md))
            x_next = zb.x
            terminal = BOUNDARY
        elif bt_prev >= 0.0 and bt_next >= 0.0:
            # started on the boundary with a non-entering flow: forced jump now
            end = t_k
            dt = 0.0
            x_next = x
            terminal = BOUNDARY

        lam_f_next, lam_g_next, fail_next, rep_next = _rates_at(
            model, scheme, State(x_next, z.m, z.md), s_start + end
        )
        lam_bar_f = 0.5 * (lam_f_prev + lam_f_next)
        lam_bar_g = 0.5 * (lam_g_prev + lam_g_next)
        Lam_f_next = Lam_f + lam_bar_f * dt
        Lam_g_next = Lam_g + lam_bar_g * dt
        fail_bar = 0.5 * (fail_prev + fail_next)
        rep_bar = 0.5 * (rep_prev + rep_next)

        if sample:
            if Lam_g_next >= exp_draw and Lam_g_next > Lam_g:
                frac = (exp_draw - Lam_g) / (Lam_g_next - Lam_g)
                s_jump = t_k + frac * dt
                if s_jump < end or terminal is None:
                    dpart = s_jump - t_k
                    xj = rk4_step(model, z.m, x, dpart) if dpart > 0.0 else x
                    zj = State(xj, z.m, z.md)
                    lf, lg, fpt, rpt = _rates_at(model, scheme, zj, s_start + s_jump)
                    return SegmentOutcome(
                        s_jump, SPONTANEOUS, zj,
                        math.log(lam_bar_f), -(Lam_f + lam_bar_f * dpart),
                        math.log(lam_bar_g), -(Lam_g + lam_bar_g * dpart),
                        fail_int + fail_bar * dpart, rep_int + rep_bar * dpart,
                        fail_bar, rep_bar, fpt, rpt,
                    )
            if terminal is not None:
                return SegmentOutcome(
                    end, terminal, State(x_next, z.m, z.md),
                    None, -Lam_f_next, None, -Lam_g_next,
                    fail_int + fail_bar * dt, rep_int + rep_bar * dt,
                )
        else:
            hit_interval = (duration <= end) or terminal is not None
            if hit_interval:
                if kind == SPONTANEOUS:
                    if duration > end:
                        from .measure import ImpossibleSkeletonError

                        raise ImpossibleSkeletonError(
                            "spontaneous duration extends past the segment's forced end"
                        )
                    if lam_bar_f <= 0.0 or lam_bar_g <= 0.0:
                        from .measure import ImpossibleSkeletonError

                        raise ImpossibleSkeletonError(
                            f"spontaneous jump with zero hazard from {z}"
                        )
                    dpart = duration - t_k
                    xj = rk4_step(model, z.m, x, dpart) if dpart > 0.0 else x
                    zj = State(xj, z.m, z.md)
                    lf, lg, fpt, rpt = _rates_at(model, scheme, zj, s_start + duration)
                    return SegmentOutcome(
                        duration, SPONTANEOUS, zj,
                        math.log(lam_bar_f), -(Lam_f + lam_bar_f * dpart),
                        math.log(lam_bar_g), -(Lam_g + lam_bar_g * dpart),
                        fail_int + fail_bar * dpart, rep_int + rep_bar * dpart,
                        fail_bar, rep_bar, fpt, rpt,
                    )
                if kind == BOUNDARY:
                    if terminal != BOUNDARY or abs(duration - end) > 1e-6:
                        from .measure import ImpossibleSkeletonError

                        raise ImpossibleSkeletonError(
                            "skeleton boundary time disagrees with the located crossing"
                        )
                    return SegmentOutcome(
                        duration, BOUNDARY, State(x_next, z.m, z.md),
                        None, -Lam_f_next, None, -Lam_g_next,
                        fail_int + fail_bar * dt, rep_int + rep_bar * dt,
                    )
                if kind == HORIZON:
                    if terminal == BOUNDARY and end < duration:
                        from .measure import ImpossibleSkeletonError

                        raise ImpossibleSkeletonError(
                            "skeleton claims a horizon end past a boundary hit"
                        )
                    dpart = duration - t_k
                    xe = rk4_step(model, z.m, x, dpart) if 0.0 < dpart < dt else (
                        x_next if dpart >= dt else x
                    )
                    return SegmentOutcome(
                        duration, HORIZON, State(xe, z.m, z.md),
                        None, -(Lam_f + lam_bar_f * dpart),
                        None, -(Lam_g + lam_bar_g * dpart),
                        fail_int + fail_bar * dpart, rep_int + rep_bar * dpart,
                    )
                raise ValueError(f"unknown segment kind {kind!r}")

        x = x_next
        bt_prev = bt_next
        lam_f_prev, lam_g_prev = lam_f_next, lam_g_next
        fail_prev, rep_prev = fail_next, rep_next
        Lam_f, Lam_g = Lam_f_next, Lam_g_next
        fail_int += fail_bar * dt
        rep_int += rep_bar * dt
        k += 1
        if k > _MAX_FLOW_STEPS:
            raise RunawayModelError("segment walk exceeded 1e8 flow steps")


def boundary_hit(model: ModelSpec, z: State, t_budget: float):
    """Locate the first boundary crossing of the flow from ``z``.

    Returns (t_star, clamped state), or (inf, None) when the flow stays
    interior for the whole budget.
    """
    h = model.step
    bt_prev = model.boundary_test(z.m, z.md, z.x)
    if bt_prev > 0.0:
        raise ModelContractError(f"state outside its domain: {z}")
    x = z.x
    k = 0
    while True:
        t_k = k * h
        if t_k >= t_budget:
            return math.inf, None
        end = t_k + h
        if end > t_budget:
            end = t_budget
        dt = end - t_k
        x_next = rk4_step(model, z.m, x, dt)
        bt_next = model.boundary_test(z.m, z.md, x_next)
        if bt_prev < 0.0 and bt_next >= 0.0:
            lo, hi = 0.0, dt
            while hi - lo > 1e-10:
                mid = 0.5 * (lo + hi)
                if model.boundary_test(z.m, z.md, rk4_step(model, z.m, x, mid)) >= 0.0:
                    hi = mid
                else:
                    lo = mid
            zb = model.clamp_to_boundary(State(rk4_step(model, z.m, x, hi), z.m, z.md))
            return t_k + hi, zb
        if bt_prev >= 0.0 and bt_next >= 0.0:
            return 0.0, model.clamp_to_boundary(z)
        x = x_next
        bt_prev = bt_next
        k += 1
        if k > _MAX_FLOW_STEPS:
            raise RunawayModelError("boundary search exceeded 1e8 flow steps")


def _fixup_md(model: ModelSpec, z_minus: State, arrival: State) -> State:
    if arrival.md:
        return arrival
    if model.failure_region(arrival) or model.failure_region(z_minus):
        return State(arrival.x, arrival.m, True)
    return arrival


def _interior_masses(model: ModelSpec, scheme, z_minus: State, s_abs: float):
    """Transition list with f- and g-masses and post-fixup arrivals."""
    trs = model.transitions(z_minus)
    if not trs:
        raise ModelContractError(f"spontaneous jump with no transitions at {z_minus}")
    biased = scheme is not None and not z_minus.md
    if biased:
        u_z = scheme.u(z_minus, s_abs)
    arrivals = []
    w_f = []
    w_g = []
    for tr in trs:
        if tr.rate < 0.0:
            raise ModelContractError(f"negative hazard at {z_minus}")
        w_f.append(tr.rate)
        w_g.append(tr.rate * (scheme.u(tr.arrival, s_abs) / u_z) if biased else tr.rate)
        arrivals.append(_fixup_md(model, z_minus, tr.arrival))
    return trs, arrivals, w_f, w_g


def _summed_masses(arrivals, w_f, w_g, chosen):
    r_f = r_g = 0.0
    for a, wf, wg in zip(arrivals, w_f, w_g):
        if a == chosen:
            r_f += wf
            r_g += wg
    return r_f, r_g


def draw_interior_arrival(model: ModelSpec, scheme, z_minus: State, s_abs: float, rng):
    """Categorical transition pick at an interior departure state.

    Returns (arrival, log_k_f, log_k_g, chosen Transition).  The recorded
    kernel masses sum over transitions sharing the same arrival state, so
    they match the density the evaluator assigns to the skeleton.
    """
    trs, arrivals, w_f, w_g = _interior_masses(model, scheme, z_minus, s_abs)
    lam_f = 0.0
    for w in w_f:
        lam_f += w
    lam_g = 0.0
    for w in w_g:
        lam_g += w
    if lam_f <= 0.0:
        raise ModelContractError(f"spontaneous jump drawn at zero total hazard: {z_minus}")
    thresh = rng.random() * lam_g
    acc = 0.0
    idx = len(trs) - 1
    for j, w in enumerate(w_g):
        acc += w
        if thresh < acc:
            idx = j
            break
    arrival = arrivals[idx]
    r_f, r_g = _summed_masses(arrivals, w_f, w_g, arrival)
    return (
        arrival,
        math.log(r_f) - math.log(lam_f),
        math.log(r_g) - math.log(lam_g),
        trs[idx],
    )


def eval_interior_logk(model: ModelSpec, scheme, z_minus: State, s_abs: float, arrival: State):
    """Log interior-kernel mass of ``arrival`` under f and under the scheme."""
    trs, arrivals, w_f, w_g = _interior_masses(model, scheme, z_minus, s_abs)
    lam_f = 0.0
    for w in w_f:
        lam_f += w
    lam_g = 0.0
    for w in w_g:
        lam_g += w
    r_f, r_g = _summed_masses(arrivals, w_f, w_g, arrival)
    if r_f <= 0.0 or lam_f <= 0.0:
        from .measure import ImpossibleSkeletonError

        raise ImpossibleSkeletonError(
            f"arrival {arrival} unreachable from {z_minus} by a spontaneous jump"
        )
    return math.log(r_f) - math.log(lam_f), math.log(r_g) - math.log(lam_g)


def _boundary_masses(model: ModelSpec, scheme, z_minus: State, s_abs: float):
    atoms = model.boundary_kernel(z_minus)
    if not atoms:
        raise ModelContractError(f"empty boundary kernel at {z_minus}")
    biased = scheme is not None and not z_minus.md
    arrivals = []
    w_f = []
    w_g = []
    mass = 0.0
    for a in atoms:
        if a.prob < 0.0:
            raise ModelContractError(f"negative kernel mass at {z_minus}")
        mass += a.prob
        w_f.append(a.prob)
        w_g.append(a.prob * scheme.kernel_weight(a.arrival, s_abs) if biased else a.prob)
        arrivals.append(_fixup_md(model, z_minus, a.arrival))
    if abs(mass - 1.0) > _KERNEL_MASS_TOL:
        raise ModelContractError(f"boundary kernel mass {mass!r} != 1 at {z_minus}")
    return atoms, arrivals, w_f, w_g


def draw_boundary_arrival(model: ModelSpec, scheme, z_minus: State, s_abs: float, rng):
    """Kernel draw at a boundary departure state."""
    atoms, arrivals, w_f, w_g = _boundary_masses(model, scheme, z_minus, s_abs)
    total = 0.0
    for w in w_g:
        total += w
    thresh = rng.random() * total
    acc = 0.0
    idx = len(atoms) - 1
    for j, w in enumerate(w_g):
        acc += w
        if thresh < acc:
            idx = j
            break
    arrival = arrivals[idx]
    r_f, r_g = _summed_masses(arrivals, w_f, w_g, arrival)
    return arrival, math.log(r_f), math.log(r_g) - math.log(total), atoms[idx]


def eval_boundary_logk(model: ModelSpec, scheme, z_minus: State, s_abs: float, arrival: State):
    atoms, arrivals, w_f, w_g = _boundary_masses(model, scheme, z_minus, s_abs)
    total = 0.0
    for w in w_g:
        total += w
    r_f, r_g = _summed_masses(arrivals, w_f, w_g, arrival)
    if r_f <= 0.0:
        from .measure import ImpossibleSkeletonError

        raise ImpossibleSkeletonError(
            f"arrival {arrival} not in the boundary kernel support of {z_minus}"
        )
    return math.log(r_f), math.log(r_g) - math.log(total)


@dataclass
class SimResult:
    skeleton: Skeleton
    log_weight: float
    final_state: State
    stats: Optional[TrajStats] = None


def simulate(
    model: ModelSpec,
    scheme,
    rng,
    z0: State = None,
    s0: float = 0.0,
    budget: float = None,
    collect_stats: bool = False,
) -> SimResult:
    """Simulate one trajectory (biased when ``scheme`` is given).

    The log importance weight log f - log g accumulates online from the
    shared per-segment terms; it is identically zero without a scheme.
    """
    z = z0 if z0 is not None else model.initial_state
    if budget is None:
        budget = model.t_f - s0
    entries = []
    log_w = 0.0
    elapsed = 0.0
    stats = TrajStats([], []) if collect_stats else None
    while True:
        if len(entries) > model.max_jumps:
            raise RunawayModelError(
                f"trajectory exceeded {model.max_jumps} jumps; Zeno-like model?"
            )
        seg = walk_segment(model, scheme, z, s0 + elapsed, budget - elapsed, rng=rng)
        entries.append(SkeletonEntry(z, seg.duration, seg.kind))
        log_w += seg.surv_f - seg.surv_g
        if seg.log_haz_f is not None:
            log_w += seg.log_haz_f - seg.log_haz_g
        if collect_stats and not z.md:
            stats.segs.append(SegStat(z.m, seg.fail_int, seg.rep_int))
        elapsed += seg.duration
        s_jump = s0 + elapsed
        if seg.kind == HORIZON:
            return SimResult(Skeleton(entries, model.t_f), log_w, seg.end_state, stats)
        if seg.kind == SPONTANEOUS:
            arrival, lkf, lkg, tr = draw_interior_arrival(
                model, scheme, seg.end_state, s_jump, rng
            )
            if collect_stats and not z.md:
                stats.jumps.append(JumpStat(
                    SPONTANEOUS, s_jump, seg.end_state, arrival,
                    seg.fail_mean, seg.rep_mean, seg.fail_pt, seg.rep_pt,
                    tr.rate, tr.kind,
                ))
        else:
            arrival, lkf, lkg, atom = draw_boundary_arrival(
                model, scheme, seg.end_state, s_jump, rng
            )
            if collect_stats and not z.md:
                stats.jumps.append(JumpStat(
                    BOUNDARY, s_jump, seg.end_state, arrival,
                    chosen_rate=atom.prob,
                ))
        log_w += lkf - lkg
        z = arrival
