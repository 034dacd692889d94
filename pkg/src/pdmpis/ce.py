"""Cross-entropy selection of importance-process parameters.

One step: draw biased trajectories until a fixed number of failures is
collected, then move the parameter to the maximizer of the weighted
failing-trajectory log-density (the sample counterpart of minimizing the
Kullback-Leibler divergence to the zero-variance law).  Iterate until the
parameter stops moving.  Sample sizes self-tune: a well-chosen start needs
only a few thousand draws per step.

A parametric family object provides: ``dim``, ``valid(alpha)``,
``family(alpha) -> BiasScheme`` and, when it can, ``logg_from_stats``
(re-evaluating a recorded trajectory's biased log-density at a new
parameter from sufficient statistics, without re-simulation).  Families
without statistics fall back to full density re-evaluation per candidate,
which is far slower.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import minimize

from . import _dispatch, measure
from .core import ModelSpec, RngStream


class InitializationTooWeakError(RuntimeError):
    """The draw cap was reached before collecting enough failures.

    The start parameter under- or over-biases so strongly that failing
    trajectories stay rare; restart from a parameter closer to a working
    bias (or raise the cap).
    """


@dataclass
class CeConfig:
    alpha0: np.ndarray
    n_ce: int = 100
    # max-norm stop threshold; must sit above the refit jitter floor of
    # the chosen n_ce (about 0.1 at n_ce = 100) or the loop never settles
    eps: float = 0.12
    max_iters: int = 20
    max_draws_per_step: int = 10**6
    n_restarts: int = 3               # extra randomized optimizer starts
    simplex_scale: float = 0.2
    chunk: int = 256                  # draw granularity while hunting failures

    def __post_init__(self):
        self.alpha0 = np.asarray(self.alpha0, float)
        if self.n_ce < 1 or self.eps <= 0.0:
            raise ValueError("need n_ce >= 1 and eps > 0")


@dataclass
class CeIteration:
    alpha: list[float]
    n_drawn: int
    n_hits: int
    objective: float
    objective_at_incumbent: float = math.nan


@dataclass
class CeTrace:
    iterations: list[CeIteration] = field(default_factory=list)
    final_alpha: list[float] = field(default_factory=list)
    converged: bool = False
    message: str = ""

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def _draw_until_hits(model, scheme, n_ce, cap, chunk, seed, stream0,
                     want_stats):
    """Simulate under the scheme until n_ce failing trajectories appear.

    Returns (n_drawn, hits) where hits is a list of (log_weight, payload)
    and payload is the trajectory's stats or its skeleton.
    """
    hits = []
    drawn = 0
    while len(hits) < n_ce:
        if drawn >= cap:
            raise InitializationTooWeakError(
                f"{len(hits)} failures in {drawn} draws (need {n_ce}); "
                "the current parameter under- or over-biases")
        take = min(chunk, cap - drawn)
        got = 0
        for i in range(take):
            res = _dispatch.simulate(
                model, scheme, RngStream(seed, stream0 + drawn + i),
                collect_stats=want_stats)
            if res.skeleton.hit_failure:
                payload = res.stats if want_stats else res.skeleton
                hits.append((res.log_weight, payload))
                got += 1
                if len(hits) >= n_ce:
                    drawn += i + 1
                    break
        else:
            drawn += take
            continue
        break
    return drawn, hits


def _objective_factory(model, family, hits, want_stats):
    """Negative weighted mean log-density over the retained failures.

    Weights are self-normalized (a positive rescale never moves the
    argmax) and shifted in log space for stability.  Families exposing
    packed statistics get a vectorized evaluation; otherwise each
    candidate re-evaluates full skeleton densities.
    """
    lws = np.array([lw for lw, _ in hits])
    w = np.exp(lws - lws.max())
    w = w / w.sum()
    payloads = [p for _, p in hits]
    packed = family.pack_stats(payloads) if (
        want_stats and hasattr(family, "pack_stats")) else None

    def objective(alpha):
        if not family.valid(alpha):
            return math.inf
        try:
            if packed is not None:
                vals = family.logg_packed(packed, alpha)
            elif want_stats:
                vals = [family.logg_from_stats(p, alpha) for p in payloads]
            else:
                sch = family(alpha)
                vals = [measure.log_density_under_scheme(model, sch, p).total
                        for p in payloads]
        except (ValueError, ArithmeticError):
            return math.inf
        tot = float(np.dot(w, vals))
        return -tot if math.isfinite(tot) else math.inf

    return objective


def _minimize_from(objective, x0, scale, restarts, gen):
    x0 = np.array(x0, float)
    best_x, best_v = x0.copy(), objective(x0)
    starts = [x0.copy()]
    for _ in range(restarts):
        starts.append(x0 + gen.uniform(-scale, scale, len(x0)))
    for s0 in starts:
        simplex = [s0.copy()]
        for d in range(len(s0)):
            v = s0.copy()
            v[d] += scale
            simplex.append(v)
        res = minimize(objective, s0, method="Nelder-Mead",
                       options={"initial_simplex": np.array(simplex),
                                "xatol": 1e-4, "fatol": 1e-10,
                                "maxiter": 400 * len(s0)})
        if res.fun < best_v:
            best_v, best_x = float(res.fun), np.asarray(res.x, float)
    return best_x, best_v


def ce_optimize(model: ModelSpec, family, cfg: CeConfig, rng: RngStream) -> CeTrace:
    """Iterate draw / refit steps until the parameter move drops below eps.

    Each refit uses exactly cfg.n_ce failing trajectories; the accepted
    parameter never scores worse than the incumbent on the same sample.
    """
    want_stats = hasattr(family, "pack_stats") or hasattr(family, "logg_from_stats")
    gen = RngStream(rng.seed, rng.stream + 10**9).generator()
    trace = CeTrace()
    alpha = np.array(cfg.alpha0, float)
    if not family.valid(alpha):
        raise ValueError(f"alpha0 {alpha} rejected by the family")
    stream = rng.stream
    for it in range(cfg.max_iters):
        scheme = family(alpha)
        drawn, hits = _draw_until_hits(
            model, scheme, cfg.n_ce, cfg.max_draws_per_step, cfg.chunk,
            rng.seed, stream, want_stats)
        stream += drawn
        objective = _objective_factory(model, family, hits, want_stats)
        incumbent_val = objective(alpha)
        new_alpha, new_val = _minimize_from(
            objective, alpha, cfg.simplex_scale, cfg.n_restarts, gen)
        if new_val > incumbent_val:
            new_alpha, new_val = alpha, incumbent_val
        trace.iterations.append(CeIteration(
            [float(a) for a in new_alpha], drawn, len(hits), float(new_val),
            float(incumbent_val)))
        move = float(np.max(np.abs(new_alpha - alpha)))
        alpha = new_alpha
        if move < cfg.eps:
            trace.converged = True
            trace.message = f"converged after {it + 1} steps (move {move:.3g})"
            break
    else:
        trace.message = f"stopped at max_iters={cfg.max_iters}"
    trace.final_alpha = [float(a) for a in alpha]
    return trace
