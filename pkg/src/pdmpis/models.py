"""Built-in models: the heated-room benchmark and a small constant-rate chain.

The heated room: one physical variable (room temperature) driven by
dX/dt = beta1*(x_e - X) + beta2*[any heater ON], three identical heaters in
passive redundancy.  Heaters turn on at x_min (with a failure-on-demand
cascade), off at x_max, fail spontaneously at rate fail_a + fail_b*x and
are repaired at a constant rate.  System failure is the temperature
dropping below zero, which can only happen with all three heaters broken.

The small chain ("tiny ctmc") is a boundary-free constant-rate
birth-death model of component failures used as the desk-scale oracle
substrate: every quantity of interest is computable by dynamic programming.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from ._stats import TrajStats
from ._tabular import CLASS_FAILURE, CLASS_REPAIR, TabularModel
from .bias import BiasScheme, SchemeContractError, TabularScheme
from .core import KernelAtom, ModelSpec, State, Transition

ON, OFF, FAILED = 0, 1, 2
_STATUS_NAMES = {ON: "ON", OFF: "OFF", FAILED: "F"}


class _TableBackedModel(ModelSpec):
    """ModelSpec generated from a TabularModel (1-d position).

    Public mode id m and the failure flag md map to the flat cell index
    m*2 + md used by the tables and the compiled engine.
    """

    def __init__(self, table: TabularModel, t_f: float, step: float):
        self._tab = table.validate()
        self.t_f = float(t_f)
        self.step = float(step)

    # -- cell mapping -------------------------------------------------
    @staticmethod
    def _cell(m: int, md: bool) -> int:
        return m * 2 + (1 if md else 0)

    @staticmethod
    def _from_cell(cell: int) -> tuple[int, bool]:
        return cell // 2, bool(cell & 1)

    @property
    def initial_state(self) -> State:
        m, md = self._from_cell(self._tab.cell0)
        return State((self._tab.x0,), m, md)

    def vector_field(self, m: int, x):
        t = self._tab
        c = self._cell(m, False)
        return (t.vf_a[c] + t.vf_b[c] * x[0],)

    def boundary_test(self, m: int, md: bool, x):
        t = self._tab
        c = self._cell(m, md)
        return max(t.lower[c] - x[0], x[0] - t.upper[c])

    def clamp_to_boundary(self, z: State) -> State:
        t = self._tab
        c = self._cell(z.m, z.md)
        lo, up = t.lower[c], t.upper[c]
        if not math.isinf(lo) and (math.isinf(up) or abs(z.x[0] - lo) <= abs(z.x[0] - up)):
            return State((float(lo),), z.m, z.md)
        if not math.isinf(up):
            return State((float(up),), z.m, z.md)
        return z

    def transitions(self, z: State) -> list[Transition]:
        t = self._tab
        c = self._cell(z.m, z.md)
        o, n = int(t.trans_off[c]), int(t.trans_n[c])
        out = []
        for j in range(o, o + n):
            rate = t.tr_a[j] + t.tr_b[j] * z.x[0]
            tgt = int(t.tr_target_lo[j]) if (t.tr_cond[j] and z.x[0] <= t.cond_x) \
                else int(t.tr_target[j])
            m2, md2 = self._from_cell(tgt)
            kind = "failure" if t.tr_class[j] == CLASS_FAILURE else (
                "repair" if t.tr_class[j] == CLASS_REPAIR else None)
            out.append(Transition(rate, State(z.x, m2, md2), kind))
        return out

    def boundary_kernel(self, z_minus: State) -> list[KernelAtom]:
        t = self._tab
        c = self._cell(z_minus.m, z_minus.md)
        x = z_minus.x[0]
        if x == t.lower[c] and t.lower_kid[c] >= 0:
            kid = int(t.lower_kid[c])
        elif x == t.upper[c] and t.upper_kid[c] >= 0:
            kid = int(t.upper_kid[c])
        else:
            from .core import ModelContractError

            raise ModelContractError(f"{z_minus} is not on a kernel-bearing boundary")
        o, n = int(t.kern_off[kid]), int(t.kern_n[kid])
        xk = float(t.kern_x[kid])
        out = []
        for j in range(o, o + n):
            m2, md2 = self._from_cell(int(t.kern_target[j]))
            out.append(KernelAtom(float(t.kern_prob[j]), State((xk,), m2, md2)))
        return out

    def tabular(self):
        return self._tab


# ---------------------------------------------------------------------------
# heated room
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HeatedRoomParams:
    """Benchmark parameters; defaults reproduce the reference setup."""

    x_min: float = 0.5
    x_max: float = 5.5
    x_e: float = -1.5
    beta1: float = 0.1
    beta2: float = 5.0
    gamma: float = 0.01            # failure-on-demand probability
    fail_a: float = 0.0021         # spontaneous failure rate = fail_a + fail_b*x
    fail_b: float = 0.00015
    repair_rate: float = 0.2
    t_f: float = 100.0
    x0: float = 7.5
    step: float = 0.01
    #: whether heaters can fail spontaneously in any non-broken status
    #: ("all") or only while actively heating ("active_only")
    failures_apply_to: str = "all"

    def __post_init__(self):
        if not (self.x_e < 0.0 < self.x_min < self.x_max):
            raise ValueError("requires x_e < 0 < x_min < x_max")
        for r in (self.beta1, self.gamma, self.fail_a, self.fail_b, self.repair_rate):
            if r < 0:
                raise ValueError("rates must be nonnegative")
        if self.failures_apply_to not in ("all", "active_only"):
            raise ValueError("failures_apply_to must be 'all' or 'active_only'")


def heater_mode(statuses) -> int:
    """Public mode id of a status triple (each ON/OFF/FAILED)."""
    s1, s2, s3 = statuses
    return s1 * 9 + s2 * 3 + s3


def heater_statuses(m: int) -> tuple[int, int, int]:
    return (m // 9, (m // 3) % 3, m % 3)


def failed_count(m: int) -> int:
    return sum(1 for s in heater_statuses(m) if s == FAILED)


def _activation_cascade(statuses, gamma):
    """Arrival modes of the low-boundary activation with fail-on-demand.

    Candidates (non-broken heaters) are tried in index order; each attempt
    fails on demand with probability gamma, breaking that heater and
    passing demand to the next.
    """
    cands = [i for i, s in enumerate(statuses) if s != FAILED]
    out = []
    broken = list(statuses)
    p_prefix = 1.0
    for i in cands:
        arr = list(broken)
        arr[i] = ON
        out.append((p_prefix * (1.0 - gamma), tuple(arr)))
        broken[i] = FAILED
        p_prefix *= gamma
    out.append((p_prefix, tuple(broken)))  # every candidate failed on demand
    return out


class HeatedRoomModel(_TableBackedModel):
    dim = 1

    def __init__(self, params: HeatedRoomParams = None):
        self.params = params or HeatedRoomParams()
        super().__init__(_build_heated_table(self.params), self.params.t_f,
                         self.params.step)

    def failure_region(self, z: State) -> bool:
        return z.x[0] < 0.0

    def describe_mode(self, m: int) -> str:
        return "(" + ",".join(_STATUS_NAMES[s] for s in heater_statuses(m)) + ")"


def _build_heated_table(p: HeatedRoomParams) -> TabularModel:
    n_cells = 54
    vf_a = np.zeros(n_cells)
    vf_b = np.zeros(n_cells)
    lower = np.full(n_cells, -math.inf)
    upper = np.full(n_cells, math.inf)
    lower_kid = np.full(n_cells, -1, np.int32)
    upper_kid = np.full(n_cells, -1, np.int32)
    trans_off = np.zeros(n_cells, np.int32)
    trans_n = np.zeros(n_cells, np.int32)
    tr_a, tr_b, tr_target, tr_class, tr_cond, tr_target_lo = [], [], [], [], [], []
    kern_off, kern_n, kern_prob, kern_target, kern_x = [], [], [], [], []

    def add_kernel(atoms, x_at):
        kid = len(kern_off)
        kern_off.append(len(kern_prob))
        kern_n.append(len(atoms))
        for prob, cell in atoms:
            kern_prob.append(prob)
            kern_target.append(cell)
        kern_x.append(x_at)
        return kid

    for statuses in product((ON, OFF, FAILED), repeat=3):
        m = heater_mode(statuses)
        any_on = ON in statuses
        all_f = statuses == (FAILED, FAILED, FAILED)
        for md in (0, 1):
            c = m * 2 + md
            vf_a[c] = p.beta1 * p.x_e + (p.beta2 if any_on else 0.0)
            vf_b[c] = -p.beta1
            if any_on:
                upper[c] = p.x_max
                off_all = tuple(OFF if s == ON else s for s in statuses)
                upper_kid[c] = add_kernel(
                    [(1.0, heater_mode(off_all) * 2 + md)], p.x_max)
            if any_on or all_f:
                if md == 0:
                    # active boundary of the critical region latches the flag
                    lower[c] = 0.0
                    lower_kid[c] = add_kernel([(1.0, m * 2 + 1)], 0.0)
            else:
                lower[c] = p.x_min
                atoms = [(prob, heater_mode(arr) * 2 + md)
                         for prob, arr in _activation_cascade(statuses, p.gamma)]
                lower_kid[c] = add_kernel(atoms, p.x_min)

            trans_off[c] = len(tr_a)
            for i, s in enumerate(statuses):
                can_fail = (s == ON) if p.failures_apply_to == "active_only" \
                    else (s != FAILED)
                if can_fail:
                    arr = list(statuses)
                    arr[i] = FAILED
                    tr_a.append(p.fail_a)
                    tr_b.append(p.fail_b)
                    tr_target.append(heater_mode(arr) * 2 + md)
                    tr_class.append(CLASS_FAILURE)
                    tr_cond.append(0)
                    tr_target_lo.append(-1)
            for i, s in enumerate(statuses):
                if s == FAILED:
                    others_failed = all(
                        statuses[j] == FAILED for j in range(3) if j != i)
                    arr_off = list(statuses)
                    arr_off[i] = OFF
                    tr_a.append(p.repair_rate)
                    tr_b.append(0.0)
                    tr_target.append(heater_mode(arr_off) * 2 + md)
                    tr_class.append(CLASS_REPAIR)
                    if others_failed:
                        # repaired heater restarts only if demand is active
                        arr_on = list(statuses)
                        arr_on[i] = ON
                        tr_cond.append(1)
                        tr_target_lo.append(heater_mode(arr_on) * 2 + md)
                    else:
                        tr_cond.append(0)
                        tr_target_lo.append(-1)
            trans_n[c] = len(tr_a) - trans_off[c]

    return TabularModel(
        n_cells=n_cells,
        vf_a=vf_a, vf_b=vf_b, lower=lower, upper=upper,
        lower_kid=lower_kid, upper_kid=upper_kid,
        trans_off=trans_off, trans_n=trans_n,
        tr_a=np.array(tr_a), tr_b=np.array(tr_b),
        tr_target=np.array(tr_target, np.int32),
        tr_class=np.array(tr_class, np.int32),
        tr_cond=np.array(tr_cond, np.int8),
        tr_target_lo=np.array(tr_target_lo, np.int32),
        cond_x=p.x_min,
        kern_off=np.array(kern_off, np.int32),
        kern_n=np.array(kern_n, np.int32),
        kern_prob=np.array(kern_prob),
        kern_target=np.array(kern_target, np.int32),
        kern_x=np.array(kern_x),
        cell0=heater_mode((OFF, OFF, OFF)) * 2,
        x0=p.x0,
    )


def heated_room_model(params: HeatedRoomParams = None) -> HeatedRoomModel:
    return HeatedRoomModel(params)


class HeatedRoomScheme(BiasScheme):
    """Two-parameter importance weight for the heated room.

    u multiplies hazards so that each spontaneous failure rate gains the
    factor exp(a1*(2b+1)) and each repair rate loses exp(-a1*(2b-1)), b
    being the broken-heater count before the jump; activation kernels at
    x_min are reweighted by exp(a2*b(arrival)^2).  a1 = a2 = 0 reproduces
    the original process.
    """

    def __init__(self, model: HeatedRoomModel, alpha1: float, alpha2: float):
        super().__init__(model)
        if alpha1 < 0 or alpha2 < 0:
            raise SchemeContractError("exponents must be nonnegative")
        self.alpha1 = float(alpha1)
        self.alpha2 = float(alpha2)
        self.params = np.array([alpha1, alpha2])
        self._x_min = model.params.x_min
        self._u_cell = np.ones(54)
        self._ubnd_cell = np.ones(54)
        for m in range(27):
            b = failed_count(m)
            self._u_cell[m * 2] = math.exp(alpha1 * b * b)
            self._ubnd_cell[m * 2] = math.exp(alpha2 * b * b)

    def u(self, z: State, s: float) -> float:
        if z.md:
            return 1.0
        return float(self._u_cell[z.m * 2])

    def kernel_weight(self, z: State, s: float) -> float:
        if z.md:
            return 1.0
        if z.x[0] == self._x_min:
            return float(self._ubnd_cell[z.m * 2])
        return float(self._u_cell[z.m * 2])

    def failure_multiplier(self, b: int) -> float:
        return math.exp(self.alpha1 * (2 * b + 1))

    def repair_multiplier(self, b: int) -> float:
        return math.exp(-self.alpha1 * (2 * b - 1))

    def tabular(self, model) -> TabularScheme:
        return TabularScheme(kind=1, u_mode=self._u_cell, u_bnd=self._ubnd_cell,
                             special_x=self._x_min)


def heated_room_scheme(model: HeatedRoomModel, alpha1: float, alpha2: float):
    return HeatedRoomScheme(model, alpha1, alpha2)


# ---------------------------------------------------------------------------
# tiny constant-rate chain
# ---------------------------------------------------------------------------

class TinyCtmcModel(_TableBackedModel):
    """Birth-death chain of broken components; mode id = broken count.

    Component failures occur at rate (n_comp - k) * a, repairs at k * b.
    The critical region is "all components broken"; entering it latches the
    failure flag.  Position is a dummy frozen coordinate.
    """

    dim = 1

    def __init__(self, a: float, b: float, n_comp: int = 2, t_f: float = 2.0,
                 step: float = 0.01):
        if a <= 0 or b < 0 or n_comp < 1:
            raise ValueError("needs a > 0, b >= 0, n_comp >= 1")
        self.a = float(a)
        self.b = float(b)
        self.n_comp = int(n_comp)
        super().__init__(_build_tiny_table(self.a, self.b, self.n_comp), t_f, step)

    def failure_region(self, z: State) -> bool:
        return z.m == self.n_comp


def _build_tiny_table(a: float, b: float, n: int) -> TabularModel:
    n_cells = (n + 1) * 2
    tr_a, tr_b, tr_target, tr_class, tr_cond, tr_target_lo = [], [], [], [], [], []
    trans_off = np.zeros(n_cells, np.int32)
    trans_n = np.zeros(n_cells, np.int32)
    for k in range(n + 1):
        for md in (0, 1):
            c = k * 2 + md
            trans_off[c] = len(tr_a)
            if k < n:
                md2 = 1 if (md or k + 1 == n) else 0
                tr_a.append((n - k) * a)
                tr_b.append(0.0)
                tr_target.append((k + 1) * 2 + md2)
                tr_class.append(CLASS_FAILURE)
                tr_cond.append(0)
                tr_target_lo.append(-1)
            if k > 0 and b > 0.0:
                tr_a.append(k * b)
                tr_b.append(0.0)
                tr_target.append((k - 1) * 2 + md)
                tr_class.append(CLASS_REPAIR)
                tr_cond.append(0)
                tr_target_lo.append(-1)
            trans_n[c] = len(tr_a) - trans_off[c]
    return TabularModel(
        n_cells=n_cells,
        vf_a=np.zeros(n_cells), vf_b=np.zeros(n_cells),
        lower=np.full(n_cells, -math.inf), upper=np.full(n_cells, math.inf),
        lower_kid=np.full(n_cells, -1, np.int32),
        upper_kid=np.full(n_cells, -1, np.int32),
        trans_off=trans_off, trans_n=trans_n,
        tr_a=np.array(tr_a), tr_b=np.array(tr_b),
        tr_target=np.array(tr_target, np.int32),
        tr_class=np.array(tr_class, np.int32),
        tr_cond=np.array(tr_cond, np.int8),
        tr_target_lo=np.array(tr_target_lo, np.int32),
        cond_x=0.0,
        kern_off=np.zeros(0, np.int32), kern_n=np.zeros(0, np.int32),
        kern_prob=np.zeros(0), kern_target=np.zeros(0, np.int32),
        kern_x=np.zeros(0),
        cell0=0,
        x0=0.0,
    )


def tiny_ctmc_model(a: float, b: float, n_comp: int = 2, t_f: float = 2.0,
                    step: float = 0.01) -> TinyCtmcModel:
    return TinyCtmcModel(a, b, n_comp, t_f, step)


class TiltScheme(BiasScheme):
    """One-parameter tilt for the tiny chain: u = exp(-theta*(n - k)).

    Anchored at u = 1 on the critical mode so the weight is continuous with
    the post-failure plateau; theta = 0 is the original process.
    """

    def __init__(self, model: TinyCtmcModel, theta: float):
        super().__init__(model)
        if abs(theta) > 50.0:
            raise SchemeContractError("tilt magnitude out of range")
        self.theta = float(theta)
        self.params = np.array([theta])
        n = model.n_comp
        self._u_cell = np.ones((n + 1) * 2)
        for k in range(n + 1):
            self._u_cell[k * 2] = math.exp(-theta * (n - k))

    def u(self, z: State, s: float) -> float:
        if z.md:
            return 1.0
        return float(self._u_cell[z.m * 2])

    def tabular(self, model) -> TabularScheme:
        return TabularScheme(kind=1, u_mode=self._u_cell, u_bnd=self._u_cell,
                             special_x=math.nan)


# ---------------------------------------------------------------------------
# parametric families for the cross-entropy refit
# ---------------------------------------------------------------------------

def _logg_from_stats(model, scheme, mf, mr, stats: TrajStats) -> float:
    """Biased log-density terms of a recorded trajectory.

    ``mf``/``mr`` give, per public mode, the failure- and repair-class
    hazard multipliers of the candidate parameter; kernel reweighting is
    recomputed through the candidate scheme.  Post-failure terms are
    parameter-free and omitted (constant offsets in the refit objective).
    """
    tot = 0.0
    for seg in stats.segs:
        tot -= mf[seg.mode] * seg.fail_int + mr[seg.mode] * seg.rep_int
    for j in stats.jumps:
        if j.kind == "spontaneous":
            m = j.departure.m
            lam_bar = mf[m] * j.fail_mean + mr[m] * j.rep_mean
            lam_pt = mf[m] * j.fail_pt + mr[m] * j.rep_pt
            mult = mf[m] if j.chosen_kind == "failure" else mr[m]
            tot += math.log(lam_bar) + math.log(j.chosen_rate * mult) - math.log(lam_pt)
        else:
            atoms = model.boundary_kernel(j.departure)
            norm = math.fsum(
                a.prob * scheme.kernel_weight(a.arrival, j.s) for a in atoms)
            w = scheme.kernel_weight(j.arrival, j.s)
            tot += math.log(j.chosen_rate * w) - math.log(norm)
    return tot


@dataclass
class _PackedStats:
    """Stats of a whole failing sample flattened for vectorized refits.

    Rows remember which trajectory they came from; per-candidate
    evaluation is a handful of numpy expressions over these arrays.
    """

    n_traj: int
    seg_traj: np.ndarray
    seg_b: np.ndarray
    seg_fail: np.ndarray
    seg_rep: np.ndarray
    sj_traj: np.ndarray
    sj_b: np.ndarray
    sj_fail_mean: np.ndarray
    sj_rep_mean: np.ndarray
    sj_fail_pt: np.ndarray
    sj_rep_pt: np.ndarray
    sj_rate: np.ndarray
    sj_is_fail: np.ndarray
    bk_jump_traj: np.ndarray      # one row per boundary jump
    bk_jump_logp: np.ndarray      # log prob of the chosen atom
    bk_jump_k: np.ndarray         # chosen atom's exponent feature b^2 (or 0)
    bk_atom_jump: np.ndarray      # one row per kernel atom of those jumps
    bk_atom_prob: np.ndarray
    bk_atom_k: np.ndarray


def _pack_common(model, stats_list, b_of_mode, x_min):
    seg_traj, seg_b, seg_fail, seg_rep = [], [], [], []
    sj = {k: [] for k in ("traj", "b", "fm", "rm", "fp", "rp", "rate", "isf")}
    bk_jt, bk_jlp, bk_jk = [], [], []
    bk_at, bk_ap, bk_ak = [], [], []
    for t, st in enumerate(stats_list):
        for seg in st.segs:
            seg_traj.append(t)
            seg_b.append(b_of_mode(seg.mode))
            seg_fail.append(seg.fail_int)
            seg_rep.append(seg.rep_int)
        for j in st.jumps:
            if j.kind == "spontaneous":
                sj["traj"].append(t)
                sj["b"].append(b_of_mode(j.departure.m))
                sj["fm"].append(j.fail_mean)
                sj["rm"].append(j.rep_mean)
                sj["fp"].append(j.fail_pt)
                sj["rp"].append(j.rep_pt)
                sj["rate"].append(j.chosen_rate)
                sj["isf"].append(1.0 if j.chosen_kind == "failure" else 0.0)
            else:
                row = len(bk_jt)
                bk_jt.append(t)
                bk_jlp.append(math.log(j.chosen_rate))
                biased_at = (x_min is not None
                             and j.departure.x[0] == x_min)
                k_chosen = 0.0
                for a in model.boundary_kernel(j.departure):
                    k = 0.0
                    if biased_at and not a.arrival.md:
                        k = float(b_of_mode(a.arrival.m) ** 2)
                    bk_at.append(row)
                    bk_ap.append(a.prob)
                    bk_ak.append(k)
                    if a.arrival.m == j.arrival.m and a.arrival.md == j.arrival.md:
                        k_chosen = k
                bk_jk.append(k_chosen)
    return _PackedStats(
        len(stats_list),
        np.array(seg_traj, np.intp), np.array(seg_b, np.intp),
        np.array(seg_fail), np.array(seg_rep),
        np.array(sj["traj"], np.intp), np.array(sj["b"], np.intp),
        np.array(sj["fm"]), np.array(sj["rm"]), np.array(sj["fp"]),
        np.array(sj["rp"]), np.array(sj["rate"]), np.array(sj["isf"]),
        np.array(bk_jt, np.intp), np.array(bk_jlp), np.array(bk_jk),
        np.array(bk_at, np.intp), np.array(bk_ap), np.array(bk_ak),
    )


def _logg_packed(p: _PackedStats, mf_of_b, mr_of_b, a2) -> np.ndarray:
    """Per-trajectory biased log-density terms for one candidate parameter."""
    out = np.zeros(p.n_traj)
    mf_seg = mf_of_b(p.seg_b)
    mr_seg = mr_of_b(p.seg_b)
    np.add.at(out, p.seg_traj, -(mf_seg * p.seg_fail + mr_seg * p.seg_rep))
    if len(p.sj_traj):
        mf_j = mf_of_b(p.sj_b)
        mr_j = mr_of_b(p.sj_b)
        lam_bar = mf_j * p.sj_fail_mean + mr_j * p.sj_rep_mean
        lam_pt = mf_j * p.sj_fail_pt + mr_j * p.sj_rep_pt
        mult = np.where(p.sj_is_fail > 0.5, mf_j, mr_j)
        np.add.at(out, p.sj_traj,
                  np.log(lam_bar) + np.log(p.sj_rate * mult) - np.log(lam_pt))
    if len(p.bk_jump_traj):
        atom_w = p.bk_atom_prob * np.exp(a2 * p.bk_atom_k)
        norm = np.zeros(len(p.bk_jump_traj))
        np.add.at(norm, p.bk_atom_jump, atom_w)
        np.add.at(out, p.bk_jump_traj,
                  p.bk_jump_logp + a2 * p.bk_jump_k - np.log(norm))
    return out


class HeatedRoomFamily:
    """alpha = (a1, a2), both nonnegative; alpha = 0 is the original law."""

    dim = 2

    def __init__(self, model: HeatedRoomModel):
        self.model = model
        self._b = np.array([failed_count(m) for m in range(27)], float)

    def __call__(self, alpha) -> HeatedRoomScheme:
        return HeatedRoomScheme(self.model, alpha[0], alpha[1])

    def valid(self, alpha) -> bool:
        return alpha[0] >= 0.0 and alpha[1] >= 0.0 and bool(np.all(np.abs(alpha) < 20.0))

    def logg_from_stats(self, stats: TrajStats, alpha) -> float:
        sch = self(alpha)
        a1 = float(alpha[0])
        mf = [math.exp(a1 * (2 * failed_count(m) + 1)) for m in range(27)]
        mr = [math.exp(-a1 * (2 * failed_count(m) - 1)) for m in range(27)]
        return _logg_from_stats(self.model, sch, mf, mr, stats)

    def pack_stats(self, stats_list) -> _PackedStats:
        return _pack_common(self.model, stats_list, lambda m: failed_count(int(m)),
                            self.model.params.x_min)

    def logg_packed(self, packed: _PackedStats, alpha) -> np.ndarray:
        a1, a2 = float(alpha[0]), float(alpha[1])
        b = np.arange(4, dtype=float)
        mf_tab = np.exp(a1 * (2.0 * b + 1.0))
        mr_tab = np.exp(-a1 * (2.0 * b - 1.0))
        return _logg_packed(packed, lambda bb: mf_tab[bb], lambda bb: mr_tab[bb], a2)


class TiltFamily:
    """Single tilt exponent for the tiny chain."""

    dim = 1

    def __init__(self, model: TinyCtmcModel):
        self.model = model

    def __call__(self, alpha) -> TiltScheme:
        return TiltScheme(self.model, float(np.asarray(alpha).reshape(-1)[0]))

    def valid(self, alpha) -> bool:
        return bool(np.all(np.abs(alpha) < 50.0))

    def logg_from_stats(self, stats: TrajStats, alpha) -> float:
        sch = self(alpha)
        th = sch.theta
        mf = [math.exp(th) for _ in range(self.model.n_comp + 1)]
        mr = [math.exp(-th) for _ in range(self.model.n_comp + 1)]
        return _logg_from_stats(self.model, sch, mf, mr, stats)

    def pack_stats(self, stats_list) -> _PackedStats:
        return _pack_common(self.model, stats_list, lambda m: int(m), None)

    def logg_packed(self, packed: _PackedStats, alpha) -> np.ndarray:
        th = float(np.asarray(alpha).reshape(-1)[0])
        mf = math.exp(th)
        mr = math.exp(-th)
        return _logg_packed(packed, lambda bb: np.full(len(bb), mf),
                            lambda bb: np.full(len(bb), mr), 0.0)
