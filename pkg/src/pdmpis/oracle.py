"""Independent ground truth for the conditional failure probability.

For constant-position finite-mode models the conditional failure
probability u(z, s) = P(failure before t_f | state z at s) solves a linear
backward system along mode space,

    du(z, s)/ds = lambda(z) * (u(z, s) - u_minus(z, s)),

with terminal condition u(., t_f) = [failure flag set].  Integrating it
backward on a fine grid gives a table that (a) pins the reference value
p = u(z0, 0) reused across the test suite, (b) yields the exactly optimal
importance scheme (feeding the table into the bias machinery realizes the
zero-variance process), and (c) supports direct numerical verification of
the stopping-time, boundary-invariance and flow-derivative identities the
optimal process relies on.

Models with nontrivial flows are covered by nested Monte-Carlo estimates
of u instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _dispatch
from .bias import BiasScheme, TabularScheme
from .core import ModelSpec, RngStream, State

#: clamp applied to table lookups near the horizon, where the exact value
#: vanishes for unfailed states; keeps the derived intensities finite
_TERMINAL_GUARD = 1e-9


class UnsupportedForDpError(ValueError):
    """Model is outside the constant-position finite-mode class."""


@dataclass
class UStarTable:
    """Backward-solved conditional failure probability per (cell, time)."""

    model: ModelSpec
    s_grid: np.ndarray          # increasing, s_grid[-1] == t_f
    values: np.ndarray          # (n_cells, n_grid), within [0, 1]
    h_dp: float

    @property
    def p(self) -> float:
        """Failure probability from the model's initial state."""
        tab = self.model.tabular()
        return float(self.values[tab.cell0, 0])

    def lookup_cell(self, cell: int, s: float) -> float:
        s = min(max(s, 0.0), self.model.t_f - _TERMINAL_GUARD)
        i = min(int(s / self.h_dp), len(self.s_grid) - 2)
        frac = (s - self.s_grid[i]) / self.h_dp
        v = self.values[cell]
        return float(v[i] + (v[i + 1] - v[i]) * frac)

    def lookup(self, z: State, s: float) -> float:
        if z.md:
            return 1.0
        return self.lookup_cell(self.model._cell(z.m, z.md), s)

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("mode,md,s,value\n")
            for cell in range(self.values.shape[0]):
                m, md = self.model._from_cell(cell)
                for s, v in zip(self.s_grid, self.values[cell]):
                    fh.write(f"{m},{int(md)},{s:.17g},{v:.17g}\n")


def _dp_rates(model: ModelSpec):
    tab = model.tabular()
    if tab is None:
        raise UnsupportedForDpError("model provides no tabular description")
    if np.any(tab.vf_a != 0.0) or np.any(tab.vf_b != 0.0) or np.any(tab.tr_b != 0.0):
        raise UnsupportedForDpError("dynamic program requires frozen positions "
                                    "and position-free rates")
    if np.any(np.isfinite(tab.lower)) or np.any(np.isfinite(tab.upper)):
        raise UnsupportedForDpError("dynamic program does not handle boundaries")
    per_cell = []
    for c in range(tab.n_cells):
        o, n = int(tab.trans_off[c]), int(tab.trans_n[c])
        rates = tab.tr_a[o:o + n].astype(float)
        tgts = tab.tr_target[o:o + n].astype(int)
        per_cell.append((rates, tgts))
    return tab, per_cell


def compute_ustar_dp(model: ModelSpec, h_dp: float = 1e-3) -> UStarTable:
    """Backward RK4 solve of the mode-coupled failure-probability system."""
    tab, per_cell = _dp_rates(model)
    n_cells = tab.n_cells
    n_steps = max(1, round(model.t_f / h_dp))
    h = model.t_f / n_steps
    s_grid = np.linspace(0.0, model.t_f, n_steps + 1)

    lam = np.zeros(n_cells)
    def rhs(u):
        out = np.zeros(n_cells)
        for c, (rates, tgts) in enumerate(per_cell):
            acc = 0.0
            for r, t in zip(rates, tgts):
                acc += r * u[t]
            out[c] = lam[c] * u[c] - acc
        return out

    for c, (rates, _) in enumerate(per_cell):
        lam[c] = float(np.sum(rates))

    values = np.empty((n_cells, n_steps + 1))
    u = np.array([1.0 if (c & 1) else 0.0 for c in range(n_cells)])
    values[:, n_steps] = u
    for i in range(n_steps - 1, -1, -1):
        dt = -h
        k1 = rhs(u)
        k2 = rhs(u + 0.5 * dt * k1)
        k3 = rhs(u + 0.5 * dt * k2)
        k4 = rhs(u + dt * k3)
        u = u + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if np.any(u < -1e-9) or np.any(u > 1.0 + 1e-9):
            raise ArithmeticError("backward solve left [0,1]; reduce h_dp")
        u = np.clip(u, 0.0, 1.0)
        values[:, i] = u
    return UStarTable(model, s_grid, values, h)


class CommittorScheme(BiasScheme):
    """Exact-committor scheme for constant-rate models.

    The backward system is linear with constant coefficients, so alongside
    the RK4 table this scheme carries its closed-form (spectral) solution
    u(cell, s) = u_p[cell] + sum_i W[cell, i] * exp(mu_i * (s - t_f)).
    The engines exploit the certified identity

        Lambda'(v) = lambda * v + log u(z, s) - log u(z, s + v)

    to sample biased jump times by exact inversion instead of grid
    quadrature: the biased intensity grows without bound as the horizon
    approaches (the process is being conditioned on failure), where
    interval means misrepresent it by orders of magnitude.  With the
    identity the likelihood ratio of every failing draw telescopes to the
    failure probability up to rounding.
    """

    flow_identity = True

    def __init__(self, table: UStarTable, power: float = 1.0):
        super().__init__(table.model)
        self.table = table
        self.power = float(power)
        self.params = np.array([self.power])
        self._mu, self._W, self._up = _spectral_solution(table.model)
        self._t_f = table.model.t_f

    def u_base_cell(self, cell: int, s: float) -> float:
        """The committor itself (before the power tilt)."""
        if cell & 1:
            return 1.0
        dt = s - self._t_f
        val = self._up[cell]
        for mu, w in zip(self._mu, self._W[cell]):
            val += w * math.exp(mu * dt)
        return val

    def u_cell(self, cell: int, s: float) -> float:
        return self.u_base_cell(cell, s) ** self.power

    def u(self, z: State, s: float) -> float:
        if z.md:
            return 1.0
        return self.u_cell(self.model._cell(z.m, z.md), s)

    def tabular(self, model) -> TabularScheme:
        return TabularScheme(kind=2, mu=self._mu, W=self._W, up=self._up,
                             t_f=self._t_f, power=self.power)


def _spectral_solution(model: ModelSpec):
    """Closed-form committor of a constant-rate model.

    Splits the backward system into the unfailed cells (unknowns) and the
    failed cells (frozen at 1): du/ds = M u - c with constant M, c, zero
    terminal condition, giving u(s) = u_p - exp(M (s - t_f)) u_p where
    u_p = M^{-1} c.  Requires real eigenvalues (true for the birth-death
    structure of the built-in chain).
    """
    tab, per_cell = _dp_rates(model)
    n = tab.n_cells
    live = [c for c in range(n) if not (c & 1)]
    idx = {c: i for i, c in enumerate(live)}
    k = len(live)
    M = np.zeros((k, k))
    cvec = np.zeros(k)
    for c in live:
        i = idx[c]
        rates, tgts = per_cell[c]
        M[i, i] = float(np.sum(rates))
        for r, t in zip(rates, tgts):
            if t & 1:
                cvec[i] += r
            else:
                M[i, idx[t]] -= r
    u_p = np.linalg.solve(M, cvec)
    mu, V = np.linalg.eig(M)
    if np.max(np.abs(mu.imag)) > 1e-12:
        raise UnsupportedForDpError("spectral committor needs real eigenvalues")
    mu = mu.real
    V = V.real
    coef = np.linalg.solve(V, -u_p)
    W_full = np.zeros((n, k))
    up_full = np.ones(n)
    for c in live:
        i = idx[c]
        up_full[c] = u_p[i]
        W_full[c] = V[i] * coef
    return mu, W_full, up_full


def exact_optimal_scheme(table: UStarTable) -> CommittorScheme:
    """The importance scheme realizing the zero-variance process."""
    return CommittorScheme(table, power=1.0)


class CommittorPowerFamily:
    """Geometric interpolation between the original and the optimal law.

    One parameter theta: intensities interpolate the certified-identity
    intensity with weight theta and kernels are reweighted by the
    committor raised to theta, so theta = 0 is the original process and
    theta = 1 the exact zero-variance process.  The family therefore
    contains the optimum, making it the reference case for checking that
    the cross-entropy refit finds a known best parameter.
    """

    dim = 1

    def __init__(self, table: UStarTable):
        self.table = table
        self.model = table.model

    def __call__(self, alpha) -> CommittorScheme:
        return CommittorScheme(self.table,
                               power=float(np.asarray(alpha).reshape(-1)[0]))

    def valid(self, alpha) -> bool:
        a = float(np.asarray(alpha).reshape(-1)[0])
        return 0.0 <= a <= 4.0

    def pack_stats(self, stats_list):
        """Flatten theta-independent features of a failing sample.

        Frozen positions make every quantity a function of (cell, time)
        pairs recoverable from the jump chain, evaluated once through the
        spectral committor.
        """
        ref = CommittorScheme(self.table, power=1.0)
        model = self.model
        seg_traj, seg_lamt, seg_D = [], [], []
        j_traj, j_lampt, j_rho, j_logk, j_logu = [], [], [], [], []
        atom_row, atom_logk, atom_logu = [], [], []
        for t, st in enumerate(stats_list):
            for i, j in enumerate(st.jumps):
                dep = j.departure
                cell = model._cell(dep.m, dep.md)
                s_end = j.s
                s_begin = 0.0 if i == 0 else st.jumps[i - 1].s
                seg_traj.append(t)
                seg_lamt.append(st.segs[i].fail_int + st.segs[i].rep_int)
                u0 = ref.u_base_cell(cell, s_begin)
                u1 = ref.u_base_cell(cell, s_end)
                seg_D.append(math.log(u0) - math.log(u1))
                lam_pt = 0.0
                num = 0.0
                row = len(j_traj)
                chosen_logu = 0.0
                for tr in model.transitions(dep):
                    lam_pt += tr.rate
                    ua = ref.u(tr.arrival, s_end)
                    num += tr.rate * ua
                    atom_row.append(row)
                    atom_logk.append(math.log(tr.rate))
                    atom_logu.append(math.log(ua))
                    if tr.arrival.m == j.arrival.m and tr.arrival.md == j.arrival.md:
                        chosen_logu = math.log(ua)
                j_traj.append(t)
                j_lampt.append(lam_pt)
                j_rho.append(num / (lam_pt * ref.u_base_cell(cell, s_end)))
                j_logk.append(math.log(j.chosen_rate))
                j_logu.append(chosen_logu)
        return {
            "n": len(stats_list),
            "seg_traj": np.array(seg_traj, np.intp),
            "seg_lamt": np.array(seg_lamt), "seg_D": np.array(seg_D),
            "j_traj": np.array(j_traj, np.intp), "j_lampt": np.array(j_lampt),
            "j_rho": np.array(j_rho), "j_logk": np.array(j_logk),
            "j_logu": np.array(j_logu),
            "atom_row": np.array(atom_row, np.intp),
            "atom_logk": np.array(atom_logk), "atom_logu": np.array(atom_logu),
        }

    def logg_packed(self, p, alpha) -> np.ndarray:
        th = float(np.asarray(alpha).reshape(-1)[0])
        out = np.zeros(p["n"])
        np.add.at(out, p["seg_traj"], -(p["seg_lamt"] + th * p["seg_D"]))
        lam_pr = p["j_lampt"] * (1.0 + th * (p["j_rho"] - 1.0))
        atom_w = np.exp(p["atom_logk"] + th * p["atom_logu"])
        norm = np.zeros(len(p["j_traj"]))
        np.add.at(norm, p["atom_row"], atom_w)
        np.add.at(out, p["j_traj"],
                  np.log(lam_pr) + p["j_logk"] + th * p["j_logu"] - np.log(norm))
        return out


def estimate_ustar_mc(model: ModelSpec, z: State, s: float, m: int, rng,
                      engine: str = "auto"):
    """Nested Monte-Carlo estimate of u(z, s): hit fraction of m runs.

    Returns (estimate, binomial standard error).
    """
    if m < 1:
        raise ValueError("need at least one replication")
    if s >= model.t_f:
        val = 1.0 if (z.md or model.failure_region(z)) else 0.0
        return val, 0.0
    if isinstance(rng, RngStream):
        seed, stream0 = rng.seed, rng.stream
    else:
        raise TypeError("estimate_ustar_mc derives per-replication streams; "
                        "pass an RngStream")
    batch = _dispatch.run_batch(model, None, seed, stream0, m,
                                engine=engine, z0=z, s0=s)
    p_hat = float(np.sum(batch.hit)) / m
    return p_hat, math.sqrt(p_hat * (1.0 - p_hat) / m)


@dataclass
class CheckResult:
    name: str
    lhs: float
    rhs: float
    tol: float
    passed: bool

    def __str__(self):
        mark = "ok " if self.passed else "FAIL"
        return (f"[{mark}] {self.name}: lhs={self.lhs:.6g} rhs={self.rhs:.6g} "
                f"tol={self.tol:.3g}")


@dataclass
class CheckReport:
    results: list[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def add(self, *args):
        self.results.append(CheckResult(*args))


def check_tower_property_dp(table: UStarTable, cell: int, s: float, delta: float,
                            n_outer: int, rng: RngStream) -> CheckResult:
    """u(z,s) must equal the mean of u at a later stopping time.

    Outer Monte Carlo advances the chain to s + delta; the table supplies
    the inner conditional probability exactly.
    """
    model = table.model
    m, md = model._from_cell(cell)
    z = State((model.tabular().x0,), m, md)
    batch = _dispatch.run_batch(model, None, rng.seed, rng.stream, n_outer,
                                z0=z, s0=s, budget=delta)
    vals = np.array([
        table.lookup_cell(int(c), s + delta) for c in batch.final_cell
    ])
    lhs = table.lookup_cell(cell, s)
    rhs = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(n_outer))
    tol = 3.0 * max(se, 1e-12)
    return CheckResult(f"tower(cell={cell},s={s},d={delta})", lhs, rhs, tol,
                       abs(lhs - rhs) <= tol)


def check_flow_derivative_dp(table: UStarTable, cell: int, s: float) -> CheckResult:
    """Central difference of u along (frozen) flow vs lambda*(u - u_minus)."""
    model = table.model
    tab, per_cell = _dp_rates(model)
    h = table.h_dp
    i = int(round(s / h))
    i = min(max(i, 1), len(table.s_grid) - 2)
    v = table.values[cell]
    fd = (v[i + 1] - v[i - 1]) / (2.0 * h)
    rates, tgts = per_cell[cell]
    lam = float(np.sum(rates))
    u_here = float(v[i])
    u_minus = float(np.sum(rates * table.values[tgts, i]) / lam) if lam > 0 else u_here
    rhs = lam * (u_here - u_minus)
    tol = 5.0 * h
    return CheckResult(f"flow-derivative(cell={cell},s={table.s_grid[i]:.3f})",
                       fd, rhs, tol, abs(fd - rhs) <= tol)


def check_tower_property_mc(model: ModelSpec, z: State, s: float, delta: float,
                            n_lhs: int, n_outer: int, n_inner: int,
                            rng: RngStream) -> CheckResult:
    """Tower identity by nested Monte Carlo (flow models)."""
    lhs, se_l = estimate_ustar_mc(model, z, s, n_lhs, rng)
    batch = _dispatch.run_batch(model, None, rng.seed, rng.stream + n_lhs,
                                n_outer, z0=z, s0=s, budget=delta)
    inner = np.empty(n_outer)
    stream = rng.stream + n_lhs + n_outer
    for i in range(n_outer):
        m_i, md_i = model._from_cell(int(batch.final_cell[i]))
        zi = State((float(batch.final_x[i]),), m_i, md_i)
        est, _ = estimate_ustar_mc(model, zi, s + delta, n_inner,
                                   RngStream(rng.seed, stream))
        stream += n_inner
        inner[i] = est
    rhs = float(inner.mean())
    se_r = float(inner.std(ddof=1) / math.sqrt(n_outer))
    tol = 3.0 * math.hypot(se_l, se_r)
    return CheckResult(f"tower-mc(s={s},d={delta})", lhs, rhs, tol,
                       abs(lhs - rhs) <= tol)


def check_boundary_invariance_mc(model: ModelSpec, z_interior: State, s: float,
                                 n_side: int, rng: RngStream) -> CheckResult:
    """Kernel-invariance at a forced jump: the flow-side limit of u equals
    the kernel average of u over arrivals.

    ``z_interior`` must flow into a boundary; it should sit close to it so
    the flow-side estimate approximates the limit.
    """
    from . import _pyengine

    t_star, z_b = _pyengine.boundary_hit(model, z_interior, model.t_f - s)
    if not math.isfinite(t_star):
        raise ValueError("state does not reach a boundary")
    lhs, se_l = estimate_ustar_mc(model, z_interior, s, n_side, rng)
    atoms = model.boundary_kernel(z_b)
    rhs_terms = []
    var_terms = []
    stream = rng.stream + n_side
    s_hit = s + t_star
    for a in atoms:
        arr = _pyengine._fixup_md(model, z_b, a.arrival)
        est, se = estimate_ustar_mc(model, arr, s_hit, n_side,
                                    RngStream(rng.seed, stream))
        stream += n_side
        rhs_terms.append(a.prob * est)
        var_terms.append((a.prob * se) ** 2)
    rhs = math.fsum(rhs_terms)
    tol = 3.0 * math.sqrt(se_l ** 2 + math.fsum(var_terms)) + 1e-12
    return CheckResult(f"boundary-invariance(s={s})", lhs, rhs, tol,
                       abs(lhs - rhs) <= tol)


def check_ustar_identities(model: ModelSpec, table: UStarTable = None,
                           rng: RngStream = None, heavy: bool = True) -> CheckReport:
    """Run the identity suite appropriate to the model class.

    Constant-position models (table given): tower property via the table
    and the flow-derivative identity at randomized grid points.  Flow
    models: nested-MC tower property and boundary kernel-invariance at
    late-time spot states with non-negligible failure probability.
    """
    rng = rng or RngStream(2024, 0)
    rep = CheckReport()
    if table is not None:
        gen = RngStream(rng.seed, rng.stream + 900000).generator()
        rep.add(*vars(check_tower_property_dp(
            table, table.model.tabular().cell0, 0.0, 0.4 * model.t_f,
            4000, rng)).values())
        rep.add(*vars(check_tower_property_dp(
            table, table.model.tabular().cell0 + 2, 0.15 * model.t_f,
            0.3 * model.t_f, 4000, RngStream(rng.seed, rng.stream + 5000))).values())
        md0_cells = [c for c in range(table.values.shape[0]) if c % 2 == 0]
        for _ in range(10):
            cell = md0_cells[int(gen.integers(len(md0_cells)))]
            s = float(gen.uniform(0.05, 0.95)) * model.t_f
            rep.add(*vars(check_flow_derivative_dp(table, cell, s)).values())
        return rep

    from .models import FAILED, OFF, heater_mode

    n = 200000 if heavy else 20000
    z_tower = State((0.4,), heater_mode((FAILED, FAILED, FAILED)), False)
    rep.add(*vars(check_tower_property_mc(
        model, z_tower, 95.0, 1.0, n, 400, max(n // 400, 200), rng)).values())
    z_near = State((model.params.x_min + 1e-3,),
                   heater_mode((FAILED, FAILED, OFF)), False)
    rep.add(*vars(check_boundary_invariance_mc(
        model, z_near, 90.0, n, RngStream(rng.seed, rng.stream + 10**7))).values())
    return rep
