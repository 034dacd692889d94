"""Crude Monte-Carlo and importance-sampling estimators with diagnostics.

Replications are replication-parallel over per-replication random streams,
so results are independent of the worker count up to floating-point
re-association of the merged sums (exact compensated summation per chunk).
Reports carry the estimate, its variance, a 95% interval, timing, the
efficiency 1/(sigma^2 * t_sim) and weight-degeneracy diagnostics.
"""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import asdict, dataclass, field
from multiprocessing import get_context

import numpy as np

from . import _dispatch
from .core import ModelSpec, RngStream

_TOP_K = 20


@dataclass
class EstimateReport:
    method: str
    p_hat: float
    var_hat: float            # variance of the estimator, sigma^2 / n
    ci95: tuple[float, float]
    n_sim: int
    n_hits: int
    t_sim: float              # wall seconds per replication
    efficiency: float         # 1 / (per-sample variance * t_sim)
    max_weight: float
    weight_quantiles: dict[str, float] = field(default_factory=dict)
    top_weights: list[float] = field(default_factory=list)
    seed: int = 0
    fail_weights: list[float] = field(default_factory=list, repr=False)

    def to_json(self) -> str:
        d = asdict(self)
        d["ci95"] = list(self.ci95)
        d.pop("fail_weights")
        return json.dumps(d, indent=2, sort_keys=True)


def _chunk_ranges(n: int, workers: int):
    base = n // workers
    rem = n % workers
    start = 0
    for w in range(workers):
        size = base + (1 if w < rem else 0)
        if size:
            yield start, size
        start += size


def _run_chunk(args):
    model, scheme, seed, stream0, count = args
    batch = _dispatch.run_batch(model, scheme, seed, stream0, count)
    w = np.where(batch.hit.astype(bool), np.exp(batch.log_weight), 0.0)
    fail_w = w[batch.hit.astype(bool)]
    return (
        int(count),
        int(batch.hit.sum()),
        math.fsum(w.tolist()),
        math.fsum((w * w).tolist()),
        np.sort(fail_w)[-_TOP_K:].tolist(),
        fail_w.tolist(),
    )


def _aggregate(model, scheme, n, rng: RngStream, workers: int, keep_weights: bool):
    seed, stream0 = rng.seed, rng.stream
    jobs = [(model, scheme, seed, stream0 + s, c) for s, c in _chunk_ranges(n, workers)]
    t0 = time.perf_counter()
    if workers > 1 and len(jobs) > 1:
        try:
            ctx = get_context("fork")
        except ValueError:
            ctx = get_context("spawn")
        with ctx.Pool(workers) as pool:
            parts = pool.map(_run_chunk, jobs)
    else:
        parts = [_run_chunk(j) for j in jobs]
    wall = time.perf_counter() - t0
    n_tot = sum(p[0] for p in parts)
    n_hits = sum(p[1] for p in parts)
    s1 = math.fsum(p[2] for p in parts)
    s2 = math.fsum(p[3] for p in parts)
    top = sorted([w for p in parts for w in p[4]])[-_TOP_K:]
    fail_w = np.concatenate([np.asarray(p[5]) for p in parts]) if keep_weights \
        else None
    return n_tot, n_hits, s1, s2, top, fail_w, wall


def _report(method, n, n_hits, s1, s2, top, fail_w, wall, seed, mc_exact=False):
    p_hat = s1 / n
    if mc_exact:
        sigma2 = p_hat * (1.0 - p_hat)
    else:
        sigma2 = (s2 - n * p_hat * p_hat) / (n - 1) if n > 1 else 0.0
        sigma2 = max(sigma2, 0.0)
    var_hat = sigma2 / n
    half = 1.96 * math.sqrt(var_hat)
    t_sim = wall / n
    eff = 1.0 / (sigma2 * t_sim) if sigma2 > 0 and t_sim > 0 else math.inf
    quants = {}
    if fail_w is not None and len(fail_w):
        for q in (0.5, 0.9, 0.99):
            quants[f"q{q}"] = float(np.quantile(fail_w, q))
    return EstimateReport(
        method=method, p_hat=p_hat, var_hat=var_hat,
        ci95=(p_hat - half, p_hat + half), n_sim=n, n_hits=n_hits,
        t_sim=t_sim, efficiency=eff, max_weight=float(top[-1]) if top else 0.0,
        weight_quantiles=quants, top_weights=[float(w) for w in top], seed=seed,
        fail_weights=[] if fail_w is None else [float(w) for w in fail_w],
    )


def crude_mc(model: ModelSpec, n: int, rng: RngStream, workers: int = 1) -> EstimateReport:
    """Plain hit-frequency estimator; variance p(1-p)/n."""
    if n < 1:
        raise ValueError("need n >= 1")
    n_tot, n_hits, s1, s2, top, fail_w, wall = _aggregate(
        model, None, n, rng, workers, keep_weights=False)
    return _report("mc", n_tot, n_hits, s1, s2, top, fail_w, wall, rng.seed,
                   mc_exact=True)


def importance_sampling(model: ModelSpec, scheme, n: int, rng: RngStream,
                        workers: int = 1, keep_weights: bool = True) -> EstimateReport:
    """Mean of weighted failure indicators under the importance process.

    The sample variance of the weighted indicators (n-1 normalization)
    estimates the per-sample variance; weight diagnostics expose
    degeneracy (a dominant largest weight signals an under-favored failure
    sub-region).
    """
    if n < 1:
        raise ValueError("need n >= 1")
    if scheme is None:
        raise ValueError("importance_sampling needs a scheme; use crude_mc")
    n_tot, n_hits, s1, s2, top, fail_w, wall = _aggregate(
        model, scheme, n, rng, workers, keep_weights=keep_weights)
    rep = _report("is", n_tot, n_hits, s1, s2, top, fail_w, wall, rng.seed)
    if not math.isfinite(rep.p_hat):
        raise ArithmeticError("non-finite estimate; scheme violates support")
    return rep


def weight_histogram(weights, bins: int = 50):
    """Log-spaced histogram of positive weights plus the top-k list.

    Accepts an EstimateReport (uses its retained failing weights) or a raw
    array.  Returns (edges, counts, top_k); degenerate all-equal samples
    occupy a single bin at that value.
    """
    if isinstance(weights, EstimateReport):
        weights = weights.fail_weights
    w = np.asarray([x for x in np.ravel(weights) if x > 0.0])
    if len(w) == 0:
        return np.array([0.0, 0.0]), np.array([0], np.int64), []
    lo, hi = float(w.min()), float(w.max())
    top = np.sort(w)[-_TOP_K:].tolist()
    if lo == hi:
        return np.array([lo, hi]), np.array([len(w)], np.int64), top
    edges = np.geomspace(lo, hi, bins + 1)
    edges[0] = lo
    edges[-1] = hi
    counts, _ = np.histogram(w, edges)
    return edges, counts, top


# ---------------------------------------------------------------------------
# artifact emission (bit-exact float columns: 17 significant digits)
# ---------------------------------------------------------------------------

RUNS_CSV_COLUMNS = ("method", "n", "p_hat", "var_hat", "ci_lo", "ci_hi",
                    "t_sim", "efficiency", "n_hits")


def _fmt(x) -> str:
    return f"{x:.17g}" if isinstance(x, float) else str(x)


def append_runs_csv(path, report: EstimateReport):
    new = not os.path.exists(path)
    with open(path, "a") as fh:
        if new:
            fh.write(",".join(RUNS_CSV_COLUMNS) + "\n")
        row = (report.method, report.n_sim, report.p_hat, report.var_hat,
               report.ci95[0], report.ci95[1], report.t_sim,
               report.efficiency, report.n_hits)
        fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_weights_csv(path, weights, bins: int = 50):
    edges, counts, top = weight_histogram(weights, bins)
    with open(path, "w") as fh:
        fh.write("bin_lo,bin_hi,count\n")
        for i, c in enumerate(counts):
            fh.write(f"{edges[i]:.17g},{edges[i + 1]:.17g},{int(c)}\n")
    return top
