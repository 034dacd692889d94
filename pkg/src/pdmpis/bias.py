"""Importance processes derived from a positive state weight function.

A bias scheme supplies a positive function u(z, s) approximating the
conditional failure probability from state z at time s.  The importance
process keeps the model's flows and boundaries and reweights only the jump
law: each transition's hazard is multiplied by u(arrival)/u(current), so
the total biased rate is lambda * u_minus/u, and forced-jump kernels are
reweighted proportionally to u at their arrivals.  Because the biased jump
times are specified through an intensity, their law normalizes itself, and
u > 0 guarantees the importance density dominates the original one on
every trajectory.

Once the failure flag is set the engines simulate the original law
regardless of the scheme (schemes must return u = 1 there; the engine
enforces neutrality structurally).
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from .core import ModelSpec, Skeleton, State, _as_generator


class SchemeContractError(ValueError):
    """A bias scheme violated its interface contract (e.g. u <= 0)."""


class BiasScheme(ABC):
    """Positive weight function u plus derived kernel weighting.

    ``kernel_weight`` is the weight applied to forced-jump kernel arrivals;
    by default it equals ``u``.  Schemes that treat on-demand transitions
    separately override it at boundary arrival positions, which leaves the
    along-flow intensities untouched.
    """

    #: parameter vector (empty for nonparametric schemes)
    params: np.ndarray = np.zeros(0)
    #: schemes certifying u' = lambda (u - u_minus) along flows support
    #: exact biased-time inversion instead of grid quadrature
    flow_identity: bool = False

    def __init__(self, model: ModelSpec):
        self.model = model

    @abstractmethod
    def u(self, z: State, s: float) -> float: ...

    def kernel_weight(self, z: State, s: float) -> float:
        return self.u(z, s)

    def u_minus(self, z_minus: State, s: float) -> float:
        """Kernel-averaged u at a jump departure state.

        Uses the boundary kernel when ``z_minus`` sits on its mode's
        boundary, otherwise the interior transition kernel (per-transition
        rates normalized by the total hazard).
        """
        m = self.model
        if m.boundary_test(z_minus.m, z_minus.md, z_minus.x) >= 0.0:
            return math.fsum(
                a.prob * self.kernel_weight(a.arrival, s)
                for a in m.boundary_kernel(z_minus)
            )
        trs = m.transitions(z_minus)
        lam = sum(t.rate for t in trs)
        if lam <= 0.0:
            raise SchemeContractError(
                f"u_minus undefined at zero-hazard interior state {z_minus}"
            )
        return math.fsum(t.rate * self.u(t.arrival, s) for t in trs) / lam

    def tabular(self, model: ModelSpec):
        """Compiled-engine description, or None to force the generic path."""
        return None


@dataclass
class TabularScheme:
    """Scheme arrays for the compiled engine.

    kind 1: per-cell constant u (``u_mode``) with a separate kernel weight
    table (``u_bnd``) applied to kernel arrivals at position ``special_x``.
    kind 2: exact committor u(cell, s) = up[cell] + sum_i W[cell, i] *
    exp(mu[i] * (s - t_f)), sampled through the certified-intensity
    identity (flow_identity schemes).
    """

    kind: int
    u_mode: np.ndarray = None
    u_bnd: np.ndarray = None
    special_x: float = math.nan
    mu: np.ndarray = None
    W: np.ndarray = None
    up: np.ndarray = None
    t_f: float = math.nan
    power: float = 1.0


@dataclass
class WeightedSkeleton:
    """An importance-process draw with its log likelihood ratio log f - g."""

    skeleton: Skeleton
    log_weight: float
    hit_failure: bool


def importance_intensity(model: ModelSpec, scheme: BiasScheme, z: State,
                         s: float, u_elapsed: float) -> float:
    """Biased total jump rate at flow time ``u_elapsed`` from (z, s).

    Evaluates lambda' = (u_minus/u) * lambda pointwise at the flow state.
    """
    from . import _pyengine

    zt = z if u_elapsed == 0.0 else z.with_x(
        _pyengine.flow_to(model, z.m, z.x, u_elapsed)
    )
    s_abs = s + u_elapsed
    if zt.md:
        return sum(t.rate for t in model.transitions(zt))
    u_here = scheme.u(zt, s_abs)
    if not u_here > 0.0:
        raise SchemeContractError(f"u({zt}, {s_abs}) = {u_here} is not positive")
    lam_g = 0.0
    for t in model.transitions(zt):
        lam_g += t.rate * (scheme.u(t.arrival, s_abs) / u_here)
    return lam_g


def importance_kernel(model: ModelSpec, scheme: BiasScheme, z_minus: State,
                      s: float) -> list[tuple[float, State]]:
    """Biased arrival distribution of a jump departing from ``z_minus``.

    Forced jumps reweight the boundary kernel; interior departures reweight
    transitions, so the result equals per-transition biased rates normalized
    by their sum.  Probabilities sum to 1 within 1e-12.
    """
    from . import _pyengine

    on_boundary = model.boundary_test(z_minus.m, z_minus.md, z_minus.x) >= 0.0
    if on_boundary:
        atoms, arrivals, _, w_g = _pyengine._boundary_masses(model, scheme, z_minus, s)
    else:
        atoms, arrivals, _, w_g = _pyengine._interior_masses(model, scheme, z_minus, s)
    total = math.fsum(w_g)
    if total <= 0.0:
        raise SchemeContractError(f"empty biased kernel at {z_minus}")
    return [(w / total, a) for w, a in zip(w_g, arrivals)]


def simulate_importance_trajectory(model: ModelSpec, scheme: BiasScheme, rng,
                                   engine: str = "auto") -> WeightedSkeleton:
    """Draw one biased trajectory and its log likelihood ratio."""
    from . import _dispatch

    res = _dispatch.simulate(model, scheme, rng, engine=engine)
    if not math.isfinite(res.log_weight):
        raise SchemeContractError(
            f"non-finite log weight {res.log_weight}; scheme violates support"
        )
    return WeightedSkeleton(res.skeleton, res.log_weight, res.skeleton.hit_failure)
