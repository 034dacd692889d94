"""Engine selection: compiled extension when available and applicable.

The compiled engine handles tabular models (both built-ins) and tabular
schemes; everything else runs on the generic Python engine.  Batch entry
points always prefer the compiled path because estimator-scale replication
counts are impractical without it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _pyengine
from .core import ModelSpec, Skeleton, SkeletonEntry, State, _as_generator

try:
    from . import _cyengine
    HAVE_COMPILED = True
except ImportError:  # extension not built; pure-python fallback
    _cyengine = None
    HAVE_COMPILED = False

_KINDS = {1: "spontaneous", 2: "boundary", 3: "horizon"}


def _compiled_applicable(model: ModelSpec, scheme) -> bool:
    if not HAVE_COMPILED or model.tabular() is None:
        return False
    return scheme is None or scheme.tabular(model) is not None


def _skeleton_from_arrays(model, cells, xs, durs, kinds, t_f) -> Skeleton:
    entries = []
    for c, x, d, k in zip(cells, xs, durs, kinds):
        m, md = model._from_cell(int(c))
        entries.append(SkeletonEntry(State((float(x),), m, md), float(d), _KINDS[int(k)]))
    return Skeleton(entries, t_f)


def _stats_from_arrays(model, seg_arr, jump_cells, jump_fl):
    # float layout: [s, dep_x, arr_x, fail_mean, rep_mean, fail_pt, rep_pt, rate]
    # int layout:   [kind, dep_cell, arr_cell, chosen_class]
    from ._stats import JumpStat, SegStat, TrajStats

    segs = [SegStat(int(r[0]) // 2, r[1], r[2]) for r in seg_arr]
    jumps = []
    for ic, fl in zip(jump_cells, jump_fl):
        kind = "spontaneous" if ic[0] == 1 else "boundary"
        dm, dmd = model._from_cell(int(ic[1]))
        am, amd = model._from_cell(int(ic[2]))
        jumps.append(JumpStat(
            kind, fl[0], State((fl[1],), dm, dmd), State((fl[2],), am, amd),
            fl[3], fl[4], fl[5], fl[6], fl[7],
            "failure" if ic[3] == 0 else ("repair" if ic[3] == 1 else None),
        ))
    return TrajStats(segs, jumps)


def simulate(model: ModelSpec, scheme, rng, engine: str = "auto",
             z0: State = None, s0: float = 0.0, budget: float = None,
             collect_stats: bool = False) -> _pyengine.SimResult:
    """One trajectory through the selected engine; same result layout."""
    if engine not in ("auto", "python", "compiled"):
        raise ValueError(f"unknown engine {engine!r}")
    use_compiled = engine == "compiled" or (
        engine == "auto" and _compiled_applicable(model, scheme))
    if engine == "compiled" and not _compiled_applicable(model, scheme):
        raise RuntimeError("compiled engine unavailable for this model/scheme")
    gen = _as_generator(rng)
    if not use_compiled:
        return _pyengine.simulate(model, scheme, gen, z0=z0, s0=s0, budget=budget,
                                  collect_stats=collect_stats)
    tab = model.tabular()
    stab = scheme.tabular(model) if scheme is not None else None
    z = z0 if z0 is not None else model.initial_state
    if budget is None:
        budget = model.t_f - s0
    out = _cyengine.simulate_one(
        tab, stab, model._cell(z.m, z.md), z.x[0], s0, budget, model.t_f,
        model.step, model.max_jumps, gen.bit_generator, collect_stats,
    )
    skel = _skeleton_from_arrays(model, out["cells"], out["xs"], out["durs"],
                                 out["kinds"], model.t_f)
    stats = None
    if collect_stats:
        stats = _stats_from_arrays(model, out["seg_stats"], out["jump_ints"],
                                   out["jump_floats"])
    fm, fmd = model._from_cell(int(out["final_cell"]))
    final = State((float(out["final_x"]),), fm, fmd)
    return _pyengine.SimResult(skel, float(out["log_weight"]), final, stats)


@dataclass
class BatchResult:
    """Replication-level outputs of a batch run (one entry per replication)."""

    hit: np.ndarray         # uint8
    log_weight: np.ndarray  # float64 (0 for unbiased runs)
    final_cell: np.ndarray  # int32
    final_x: np.ndarray     # float64
    n_jumps: np.ndarray     # int64


def run_batch(model: ModelSpec, scheme, seed: int, stream_start: int, n: int,
              engine: str = "auto", z0: State = None, s0: float = 0.0,
              budget: float = None) -> BatchResult:
    """n independent replications on streams stream_start .. +n-1."""
    use_compiled = engine == "compiled" or (
        engine == "auto" and _compiled_applicable(model, scheme))
    if engine == "compiled" and not _compiled_applicable(model, scheme):
        raise RuntimeError("compiled engine unavailable for this model/scheme")
    z = z0 if z0 is not None else model.initial_state
    if budget is None:
        budget = model.t_f - s0
    if use_compiled:
        tab = model.tabular()
        stab = scheme.tabular(model) if scheme is not None else None
        out = _cyengine.run_batch(
            tab, stab, model._cell(z.m, z.md), z.x[0], s0, budget, model.t_f,
            model.step, model.max_jumps, int(seed), int(stream_start), int(n),
        )
        return BatchResult(out["hit"], out["log_weight"], out["final_cell"],
                           out["final_x"], out["n_jumps"])
    hit = np.zeros(n, np.uint8)
    lw = np.zeros(n)
    fc = np.zeros(n, np.int32)
    fx = np.zeros(n)
    nj = np.zeros(n, np.int64)
    for i in range(n):
        gen = np.random.default_rng((int(seed), int(stream_start + i)))
        res = _pyengine.simulate(model, scheme, gen, z0=z, s0=s0, budget=budget)
        hit[i] = 1 if res.skeleton.hit_failure else 0
        lw[i] = res.log_weight
        fc[i] = model._cell(res.final_state.m, res.final_state.md)
        fx[i] = res.final_state.x[0]
        nj[i] = res.skeleton.n_jumps
    return BatchResult(hit, lw, fc, fx, nj)


def simulate_weighted_batch(model: ModelSpec, scheme, seed: int, stream_start: int,
                            n: int, collect_stats: bool = False,
                            engine: str = "auto"):
    """Replications that keep skeleton-level detail for failing draws.

    Returns a list of (hit, log_weight, stats-or-None) triples; stats are
    collected only for failing trajectories (they feed parameter refits).
    """
    out = []
    for i in range(n):
        res = simulate(model, scheme, np.random.default_rng((int(seed), int(stream_start + i))),
                       engine=engine, collect_stats=collect_stats)
        hit = res.skeleton.hit_failure
        out.append((hit, res.log_weight, res.stats if hit else None))
    return out
