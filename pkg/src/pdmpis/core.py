"""State-space types and the jump-by-jump trajectory engine.

A model alternates deterministic flow (fixed-step RK4) with random jumps.
Jumps are either spontaneous (driven by state-dependent hazard rates),
forced by the flow hitting a mode boundary, or censored by the horizon.
The engine records the embedded chain of jump arrivals and inter-jump
durations (the trajectory skeleton), from which the full path can be
reconstructed by re-integrating the flow.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

SPONTANEOUS = "spontaneous"
BOUNDARY = "boundary"
HORIZON = "horizon"

#: bisection tolerance on the boundary hitting time (seconds)
BOUNDARY_TIME_TOL = 1e-10

#: default guard against runaway (Zeno-like) models
MAX_JUMPS_DEFAULT = 10**6


class ModelContractError(ValueError):
    """A model implementation violated its interface contract."""


class NumericalBlowupError(ArithmeticError):
    """The flow produced a non-finite state component."""


class RunawayModelError(RuntimeError):
    """More jumps than the configured guard; likely a Zeno-type model."""


@dataclass(frozen=True)
class State:
    """A point of the state space: position, mode, failure-visited flag.

    ``x`` is the physical-variable vector, ``m`` an integer mode id and
    ``md`` the flag that latches to True once the failure region has been
    visited.  ``md`` never decreases along a trajectory.
    """

    x: tuple[float, ...]
    m: int
    md: bool = False

    def with_x(self, x: Sequence[float]) -> "State":
        return replace(self, x=tuple(x))


@dataclass(frozen=True)
class Transition:
    """One spontaneous transition available from a state.

    ``rate`` is the hazard evaluated at the queried state; ``arrival`` the
    post-jump state (positions are typically preserved).  ``kind`` tags
    failure/repair-like transitions for parametric biasing families; it is
    optional and has no effect on the simulated law.
    """

    rate: float
    arrival: State
    kind: Optional[str] = None


@dataclass(frozen=True)
class KernelAtom:
    """One outcome of a (countable-support) transition kernel."""

    prob: float
    arrival: State


class ModelSpec(ABC):
    """Behavioral interface a simulatable model must provide.

    Implementations must be immutable after construction; all engine
    operations are pure functions of (model, state, rng) so models can be
    shared read-only across parallel workers.
    """

    #: position dimension
    dim: int = 1
    #: horizon (finite)
    t_f: float = 1.0
    #: RK4 step for the flow grid
    step: float = 0.01
    #: guard for the maximum number of jumps per trajectory
    max_jumps: int = MAX_JUMPS_DEFAULT

    @property
    @abstractmethod
    def initial_state(self) -> State: ...

    @abstractmethod
    def vector_field(self, m: int, x: tuple[float, ...]) -> tuple[float, ...]:
        """dx/dt in mode ``m`` at position ``x``."""

    @abstractmethod
    def boundary_test(self, m: int, md: bool, x: tuple[float, ...]) -> float:
        """Signed distance-like indicator: negative inside the mode's open
        domain, zero on its boundary, positive outside."""

    @abstractmethod
    def transitions(self, z: State) -> list[Transition]:
        """Spontaneous transitions available at interior state ``z``.

        The list order must be a deterministic function of the mode; the
        total interior hazard is the sum of the listed rates.
        """

    @abstractmethod
    def boundary_kernel(self, z_minus: State) -> list[KernelAtom]:
        """Arrival distribution for a forced jump departing from ``z_minus``
        on the boundary.  Probabilities must sum to 1 within 1e-12 and no
        atom may equal the departure state."""

    @abstractmethod
    def failure_region(self, z: State) -> bool:
        """Whether ``z`` lies in the critical region."""

    def clamp_to_boundary(self, z: State) -> State:
        """Snap a located boundary state exactly onto the boundary.

        Models with simple geometry override this so kernel departure and
        arrival positions are bitwise-reproducible.  Default: identity.
        """
        return z

    def tabular(self):
        """Tabular (affine-1d) description consumed by the compiled engine,
        or None when only the generic engine applies."""
        return None


@dataclass(frozen=True)
class RngStream:
    """Reproducible random stream identified by (seed, stream id).

    Identical pairs yield identical draw sequences; distinct stream ids give
    independent-quality streams (numpy SeedSequence semantics).
    """

    seed: int
    stream: int = 0

    def generator(self) -> np.random.Generator:
        return np.random.default_rng((int(self.seed), int(self.stream)))


def _as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError(f"expected RngStream or numpy Generator, got {type(rng)!r}")


@dataclass(frozen=True)
class SkeletonEntry:
    """One segment of the embedded chain: the state at the segment start,
    the segment duration and what terminated it."""

    state: State
    duration: float
    kind: str


@dataclass
class Skeleton:
    """The truncated embedded chain ((z_k, t_k))_k of one trajectory.

    Durations sum to the horizon (within one ulp of the accumulation
    order); exactly the last entry has kind == "horizon".
    """

    entries: list[SkeletonEntry]
    t_f: float

    @property
    def n_jumps(self) -> int:
        return len(self.entries) - 1

    @property
    def hit_failure(self) -> bool:
        return self.entries[-1].state.md

    def jump_times(self) -> list[float]:
        out, s = [], 0.0
        for e in self.entries[:-1]:
            s += e.duration
            out.append(s)
        return out


# ---------------------------------------------------------------------------
# public operations (delegate to the generic python engine; estimator-scale
# batch work goes through the compiled engine via the dispatch module)
# ---------------------------------------------------------------------------

def integrate_flow(model: ModelSpec, z: State, dt: float) -> State:
    """Advance ``z`` along its mode's flow for ``dt`` seconds (RK4)."""
    from . import _pyengine

    if dt < 0:
        raise ValueError("dt must be nonnegative")
    x = _pyengine.flow_to(model, z.m, z.x, dt)
    for c in x:
        if not math.isfinite(c):
            raise NumericalBlowupError(f"non-finite flow state {x} from {z}")
    return z.with_x(x)


def boundary_hit_time(model: ModelSpec, z: State, t_budget: float):
    """First time the flow from ``z`` exits its mode's domain.

    Returns ``(t_star, z_boundary)``; ``t_star`` is ``math.inf`` (and
    ``z_boundary`` None) when there is no crossing before ``t_budget``.
    """
    from . import _pyengine

    return _pyengine.boundary_hit(model, z, t_budget)


def sample_jump_time(model: ModelSpec, z: State, t_budget: float, rng):
    """Draw the next jump time from ``z`` with ``t_budget`` seconds left.

    Realizes the hybrid law: continuous part by inversion of the cumulative
    intensity accumulated on the RK4 grid, a point mass at the boundary
    hitting time, horizon censoring at ``t_budget``.  Returns (t, kind).
    """
    from . import _pyengine

    gen = _as_generator(rng)
    seg = _pyengine.walk_segment(model, None, z, 0.0, t_budget, rng=gen)
    return seg.duration, seg.kind


def sample_transition(model: ModelSpec, z_minus: State, kind: str, rng) -> State:
    """Draw the arrival state of a jump departing from ``z_minus``."""
    from . import _pyengine

    gen = _as_generator(rng)
    if kind == SPONTANEOUS:
        return _pyengine.draw_interior_arrival(model, None, z_minus, 0.0, gen)[0]
    if kind == BOUNDARY:
        return _pyengine.draw_boundary_arrival(model, None, z_minus, 0.0, gen)[0]
    raise ValueError(f"cannot sample a transition of kind {kind!r}")


def simulate_trajectory(model: ModelSpec, rng, engine: str = "auto") -> Skeleton:
    """Simulate one trajectory of ``model`` up to its horizon.

    ``engine`` is "auto" (compiled when the model supports it), "python"
    or "compiled".
    """
    from . import _dispatch

    return _dispatch.simulate(model, None, rng, engine=engine).skeleton
