# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled trajectory engine for tabular models.

Mirrors _pyengine expression for expression (same RK4 combination order,
same trapezoid accumulation, same uniform-draw consumption) so that a
given (seed, stream) produces identical skeletons on both engines.  Only
the built-in affine-1d tabular models and tabular schemes run here; the
generic Python engine covers everything else.
"""

import numpy as np

cimport numpy as cnp
from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport INFINITY, NAN, exp, fabs, isfinite, isnan, log, pow
from numpy.random cimport bitgen_t

cnp.import_array()

DEF KIND_SPONT = 1
DEF KIND_BOUNDARY = 2
DEF KIND_HORIZON = 3


cdef class CyModel:
    cdef double[::1] vf_a, vf_b, lower, upper, tr_a, tr_b, kern_prob, kern_x
    cdef int[::1] lower_kid, upper_kid, trans_off, trans_n, tr_target
    cdef int[::1] tr_class, kern_off, kern_n, kern_target, tr_target_lo
    cdef signed char[::1] tr_cond
    cdef double cond_x
    cdef int n_cells


cdef CyModel wrap_model(tab):
    cdef CyModel m = CyModel()
    m.vf_a = np.ascontiguousarray(tab.vf_a, np.float64)
    m.vf_b = np.ascontiguousarray(tab.vf_b, np.float64)
    m.lower = np.ascontiguousarray(tab.lower, np.float64)
    m.upper = np.ascontiguousarray(tab.upper, np.float64)
    m.tr_a = np.ascontiguousarray(tab.tr_a, np.float64)
    m.tr_b = np.ascontiguousarray(tab.tr_b, np.float64)
    m.kern_prob = np.ascontiguousarray(tab.kern_prob, np.float64)
    m.kern_x = np.ascontiguousarray(tab.kern_x, np.float64)
    m.lower_kid = np.ascontiguousarray(tab.lower_kid, np.int32)
    m.upper_kid = np.ascontiguousarray(tab.upper_kid, np.int32)
    m.trans_off = np.ascontiguousarray(tab.trans_off, np.int32)
    m.trans_n = np.ascontiguousarray(tab.trans_n, np.int32)
    m.tr_target = np.ascontiguousarray(tab.tr_target, np.int32)
    m.tr_class = np.ascontiguousarray(tab.tr_class, np.int32)
    m.kern_off = np.ascontiguousarray(tab.kern_off, np.int32)
    m.kern_n = np.ascontiguousarray(tab.kern_n, np.int32)
    m.kern_target = np.ascontiguousarray(tab.kern_target, np.int32)
    m.tr_target_lo = np.ascontiguousarray(tab.tr_target_lo, np.int32)
    m.tr_cond = np.ascontiguousarray(tab.tr_cond, np.int8)
    m.cond_x = tab.cond_x
    m.n_cells = tab.n_cells
    return m


cdef class CyScheme:
    cdef int kind                  # 0 none, 1 cell table, 2 spectral identity
    cdef double[::1] u_mode, u_bnd, mu, up
    cdef double[:, ::1] W
    cdef double special_x, t_f, power
    cdef int n_eig


cdef CyScheme wrap_scheme(stab):
    cdef CyScheme s = CyScheme()
    if stab is None:
        s.kind = 0
        return s
    s.kind = stab.kind
    s.power = 1.0
    if stab.kind == 1:
        s.u_mode = np.ascontiguousarray(stab.u_mode, np.float64)
        s.u_bnd = np.ascontiguousarray(stab.u_bnd, np.float64)
        s.special_x = stab.special_x
    elif stab.kind == 2:
        s.mu = np.ascontiguousarray(stab.mu, np.float64)
        s.up = np.ascontiguousarray(stab.up, np.float64)
        s.W = np.ascontiguousarray(stab.W, np.float64)
        s.t_f = stab.t_f
        s.power = stab.power
        s.n_eig = s.mu.shape[0]
    else:
        raise ValueError(f"unknown tabular scheme kind {stab.kind}")
    return s


cdef inline double cy_rk4(double a, double b, double x, double dt) nogil:
    cdef double k1 = a + b * x
    cdef double x2 = x + 0.5 * dt * k1
    cdef double k2 = a + b * x2
    cdef double x3 = x + 0.5 * dt * k2
    cdef double k3 = a + b * x3
    cdef double x4 = x + dt * k3
    cdef double k4 = a + b * x4
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


cdef inline double bt_of(CyModel m, int cell, double x) nogil:
    cdef double lo = m.lower[cell] - x
    cdef double hi = x - m.upper[cell]
    return lo if lo >= hi else hi


cdef inline double clamp_x(CyModel m, int cell, double x) nogil:
    cdef double lo = m.lower[cell]
    cdef double up = m.upper[cell]
    if lo != -INFINITY and (up == INFINITY or fabs(x - lo) <= fabs(x - up)):
        return lo
    if up != INFINITY:
        return up
    return x


cdef inline double u_base(CyScheme s, int cell, double s_abs) nogil:
    cdef double val
    cdef int i
    if cell & 1:
        return 1.0
    val = s.up[cell]
    for i in range(s.n_eig):
        val += s.W[cell, i] * exp(s.mu[i] * (s_abs - s.t_f))
    return val


cdef inline double scheme_u(CyScheme s, int cell, double s_abs) nogil:
    if cell & 1:
        return 1.0
    if s.kind == 1:
        return s.u_mode[cell]
    return pow(u_base(s, cell, s_abs), s.power)


cdef inline double kernel_w(CyScheme s, int cell, double x, double s_abs) nogil:
    if cell & 1:
        return 1.0
    if s.kind == 1:
        if x == s.special_x:
            return s.u_bnd[cell]
        return s.u_mode[cell]
    return scheme_u(s, cell, s_abs)


cdef inline int resolve_target(CyModel m, int j, double x) nogil:
    if m.tr_cond[j] and x <= m.cond_x:
        return m.tr_target_lo[j]
    return m.tr_target[j]


cdef int rates_at(CyModel m, CyScheme s, int biased, int cell, double x,
                  double s_abs, double* lam_f, double* lam_g, double* fail,
                  double* rep) except -1:
    cdef int o = m.trans_off[cell]
    cdef int n = m.trans_n[cell]
    cdef int j, tgt
    cdef double r, u_z, lf = 0.0, lg = 0.0, fl = 0.0, rp = 0.0
    if biased:
        u_z = scheme_u(s, cell, s_abs)
        if not u_z > 0.0:
            raise ValueError("scheme weight u must be positive")
    for j in range(o, o + n):
        r = m.tr_a[j] + m.tr_b[j] * x
        if r < 0.0 or not isfinite(r):
            raise ValueError("invalid hazard in tabular model")
        lf += r
        if m.tr_class[j] == 0:
            fl += r
        elif m.tr_class[j] == 1:
            rp += r
        if biased:
            tgt = resolve_target(m, j, x)
            lg += r * (scheme_u(s, tgt, s_abs) / u_z)
    if not biased:
        lg = lf
    lam_f[0] = lf
    lam_g[0] = lg
    fail[0] = fl
    rep[0] = rp
    return 0


cdef class SegOut:
    cdef public double duration, x_end, log_haz_f, surv_f, log_haz_g, surv_g
    cdef public double fail_int, rep_int, fail_mean, rep_mean, fail_pt, rep_pt
    cdef public int kind


cdef int walk(CyModel m, CyScheme s, int cell, double x0, double s_start,
              double budget, double h, bitgen_t* rng, double ev_duration,
              int ev_kind, SegOut out) except -1:
    """One segment: sample mode when rng != NULL, else evaluation mode.

    Mirrors _pyengine.walk_segment for the non-identity path.
    """
    cdef bint sample = rng != NULL
    cdef bint biased = s.kind != 0 and not (cell & 1)
    cdef double exp_draw = 0.0, duration = ev_duration
    cdef int kind = ev_kind
    cdef double bt_prev, bt_next, x, x_next, t_k, end, dt, lo, hi, mid
    cdef double lam_f_prev, lam_g_prev, fail_prev, rep_prev
    cdef double lam_f_next, lam_g_next, fail_next, rep_next
    cdef double Lam_f = 0.0, Lam_g = 0.0, fail_int = 0.0, rep_int = 0.0
    cdef double lam_bar_f, lam_bar_g, fail_bar, rep_bar, Lam_f_next, Lam_g_next
    cdef double frac, s_jump, dpart, xj, lf, lg, fpt, rpt, xe
    cdef long k = 0
    cdef int terminal

    # segments under an identity scheme (cell unfailed) sample elsewhere;
    # evaluation of their f side happens here with biased disabled
    if s.kind == 2 and biased and sample:
        raise RuntimeError("identity scheme must sample through walk_identity")
    if s.kind == 2:
        biased = False

    if sample:
        exp_draw = -log(1.0 - rng.next_double(rng.state))
        if budget <= 0.0:
            out.duration = budget if budget > 0.0 else 0.0
            out.kind = KIND_HORIZON
            out.x_end = x0
            out.log_haz_f = NAN
            out.surv_f = -0.0
            out.log_haz_g = NAN
            out.surv_g = -0.0
            out.fail_int = 0.0
            out.rep_int = 0.0
            return 0

    bt_prev = bt_of(m, cell, x0)
    if bt_prev > 0.0:
        raise ValueError("segment starts outside its domain")
    x = x0
    rates_at(m, s, biased, cell, x, s_start, &lam_f_prev, &lam_g_prev,
             &fail_prev, &rep_prev)
    while True:
        t_k = k * h
        if not sample and kind == KIND_HORIZON and duration <= t_k:
            out.duration = duration
            out.kind = KIND_HORIZON
            out.x_end = x
            out.log_haz_f = NAN
            out.surv_f = -Lam_f
            out.log_haz_g = NAN
            out.surv_g = -Lam_g
            out.fail_int = fail_int
            out.rep_int = rep_int
            return 0
        end = t_k + h
        terminal = 0
        if end >= budget:
            end = budget
            terminal = KIND_HORIZON
        dt = end - t_k
        x_next = cy_rk4(m.vf_a[cell], m.vf_b[cell], x, dt)
        if not isfinite(x_next):
            raise ArithmeticError("non-finite flow state")
        bt_next = bt_of(m, cell, x_next)

        if bt_prev < 0.0 and bt_next >= 0.0:
            lo = 0.0
            hi = dt
            while hi - lo > 1e-10:
                mid = 0.5 * (lo + hi)
                if bt_of(m, cell, cy_rk4(m.vf_a[cell], m.vf_b[cell], x, mid)) >= 0.0:
                    hi = mid
                else:
                    lo = mid
            end = t_k + hi
            dt = hi
            x_next = clamp_x(m, cell, cy_rk4(m.vf_a[cell], m.vf_b[cell], x, hi))
            terminal = KIND_BOUNDARY
        elif bt_prev >= 0.0 and bt_next >= 0.0:
            end = t_k
            dt = 0.0
            x_next = x
            terminal = KIND_BOUNDARY

        rates_at(m, s, biased, cell, x_next, s_start + end, &lam_f_next,
                 &lam_g_next, &fail_next, &rep_next)
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
                if s_jump < end or terminal == 0:
                    dpart = s_jump - t_k
                    xj = cy_rk4(m.vf_a[cell], m.vf_b[cell], x, dpart) if dpart > 0.0 else x
                    rates_at(m, s, biased, cell, xj, s_start + s_jump,
                             &lf, &lg, &fpt, &rpt)
                    out.duration = s_jump
                    out.kind = KIND_SPONT
                    out.x_end = xj
                    out.log_haz_f = log(lam_bar_f)
                    out.surv_f = -(Lam_f + lam_bar_f * dpart)
                    out.log_haz_g = log(lam_bar_g)
                    out.surv_g = -(Lam_g + lam_bar_g * dpart)
                    out.fail_int = fail_int + fail_bar * dpart
                    out.rep_int = rep_int + rep_bar * dpart
                    out.fail_mean = fail_bar
                    out.rep_mean = rep_bar
                    out.fail_pt = fpt
                    out.rep_pt = rpt
                    return 0
            if terminal != 0:
                out.duration = end
                out.kind = terminal
                out.x_end = x_next
                out.log_haz_f = NAN
                out.surv_f = -Lam_f_next
                out.log_haz_g = NAN
                out.surv_g = -Lam_g_next
                out.fail_int = fail_int + fail_bar * dt
                out.rep_int = rep_int + rep_bar * dt
                return 0
        else:
            if duration <= end or terminal != 0:
                if kind == KIND_SPONT:
                    if duration > end or lam_bar_f <= 0.0 or lam_bar_g <= 0.0:
                        raise ValueError("impossible spontaneous segment")
                    dpart = duration - t_k
                    xj = cy_rk4(m.vf_a[cell], m.vf_b[cell], x, dpart) if dpart > 0.0 else x
                    rates_at(m, s, biased, cell, xj, s_start + duration,
                             &lf, &lg, &fpt, &rpt)
                    out.duration = duration
                    out.kind = KIND_SPONT
                    out.x_end = xj
                    out.log_haz_f = log(lam_bar_f)
                    out.surv_f = -(Lam_f + lam_bar_f * dpart)
                    out.log_haz_g = log(lam_bar_g)
                    out.surv_g = -(Lam_g + lam_bar_g * dpart)
                    out.fail_int = fail_int + fail_bar * dpart
                    out.rep_int = rep_int + rep_bar * dpart
                    out.fail_mean = fail_bar
                    out.rep_mean = rep_bar
                    out.fail_pt = fpt
                    out.rep_pt = rpt
                    return 0
                if kind == KIND_BOUNDARY:
                    if terminal != KIND_BOUNDARY or fabs(duration - end) > 1e-6:
                        raise ValueError("skeleton boundary time mismatch")
                    out.duration = duration
                    out.kind = KIND_BOUNDARY
                    out.x_end = x_next
                    out.log_haz_f = NAN
                    out.surv_f = -Lam_f_next
                    out.log_haz_g = NAN
                    out.surv_g = -Lam_g_next
                    out.fail_int = fail_int + fail_bar * dt
                    out.rep_int = rep_int + rep_bar * dt
                    return 0
                if kind == KIND_HORIZON:
                    if terminal == KIND_BOUNDARY and end < duration:
                        raise ValueError("horizon end past a boundary hit")
                    dpart = duration - t_k
                    if 0.0 < dpart < dt:
                        xe = cy_rk4(m.vf_a[cell], m.vf_b[cell], x, dpart)
                    elif dpart >= dt:
                        xe = x_next
                    else:
                        xe = x
                    out.duration = duration
                    out.kind = KIND_HORIZON
                    out.x_end = xe
                    out.log_haz_f = NAN
                    out.surv_f = -(Lam_f + lam_bar_f * dpart)
                    out.log_haz_g = NAN
                    out.surv_g = -(Lam_g + lam_bar_g * dpart)
                    out.fail_int = fail_int + fail_bar * dpart
                    out.rep_int = rep_int + rep_bar * dpart
                    return 0
                raise ValueError("unknown segment kind")

        x = x_next
        bt_prev = bt_next
        lam_f_prev = lam_f_next
        lam_g_prev = lam_g_next
        fail_prev = fail_next
        rep_prev = rep_next
        Lam_f = Lam_f_next
        Lam_g = Lam_g_next
        fail_int += fail_bar * dt
        rep_int += rep_bar * dt
        k += 1
        if k > 100000000:
            raise RuntimeError("segment walk exceeded 1e8 flow steps")
    return 0


cdef int walk_identity(CyModel m, CyScheme s, int cell, double x0,
                       double s_start, double budget, double h,
                       bitgen_t* rng, SegOut out) except -1:
    """Sample a segment under the spectral identity scheme (frozen flow)."""
    cdef double exp_draw = -log(1.0 - rng.next_double(rng.state))
    cdef double lam_pt = 0.0, num, u0, log_u0, u_v, u_t, rho
    cdef double lo, hi, mid, lam_val, duration
    cdef double power = s.power
    cdef int kind, j, o, n, it
    if budget <= 0.0:
        out.duration = budget if budget > 0.0 else 0.0
        out.kind = KIND_HORIZON
        out.x_end = x0
        out.log_haz_f = NAN
        out.surv_f = -0.0
        out.log_haz_g = NAN
        out.surv_g = -0.0
        out.fail_int = 0.0
        out.rep_int = 0.0
        return 0
    o = m.trans_off[cell]
    n = m.trans_n[cell]
    for j in range(o, o + n):
        lam_pt += m.tr_a[j] + m.tr_b[j] * x0
    u0 = u_base(s, cell, s_start)
    log_u0 = log(u0)

    u_v = u_base(s, cell, s_start + budget)
    if u_v <= 0.0:
        lam_val = INFINITY if power > 0.0 else lam_pt * budget
    else:
        lam_val = lam_pt * budget + power * (log_u0 - log(u_v))
    if exp_draw >= lam_val:
        duration = budget
        kind = KIND_HORIZON
    else:
        lo = 0.0
        hi = budget
        it = 0
        while hi - lo > 1e-13 * (1.0 if budget < 1.0 else budget) and it < 200:
            mid = 0.5 * (lo + hi)
            u_v = u_base(s, cell, s_start + mid)
            if u_v <= 0.0:
                lam_val = INFINITY if power > 0.0 else lam_pt * mid
            else:
                lam_val = lam_pt * mid + power * (log_u0 - log(u_v))
            if lam_val >= exp_draw:
                hi = mid
            else:
                lo = mid
            it += 1
        # a crossing inside the final sliver before the horizon would
        # evaluate u at exactly t_f; nudge it to the last interior point
        duration = hi if hi < budget else lo
        kind = KIND_SPONT
    walk(m, s, cell, x0, s_start, budget, h, NULL, duration, kind, out)
    # overwrite the g terms with the identity forms
    num = 0.0
    for j in range(o, o + n):
        num += (m.tr_a[j] + m.tr_b[j] * x0) * u_base(
            s, resolve_target(m, j, x0), s_start + duration)
    u_t = u_base(s, cell, s_start + duration)
    if u_t <= 0.0:
        out.log_haz_g = INFINITY if kind != KIND_HORIZON else NAN
        out.surv_g = -INFINITY
        return 0
    out.surv_g = -(lam_pt * duration + power * (log_u0 - log(u_t)))
    if kind == KIND_SPONT:
        rho = num / (lam_pt * u_t)
        out.log_haz_g = log(lam_pt * (1.0 + power * (rho - 1.0)))
    else:
        out.log_haz_g = NAN
    return 0


cdef bitgen_t* get_bitgen(bit_generator):
    return <bitgen_t*> PyCapsule_GetPointer(bit_generator.capsule, "BitGenerator")


cdef class TrajOut:
    """Per-trajectory accumulator; recording is optional."""
    cdef public double log_weight, final_x, elapsed
    cdef public int final_cell
    cdef public long n_jumps
    cdef public bint hit
    cdef list cells, xs, durs, kinds, seg_stats, jump_ints, jump_floats


cdef int run_one(CyModel m, CyScheme s, int cell0, double x0, double s0,
                 double budget0, double t_f, double h, long max_jumps,
                 bitgen_t* rng, bint record, bint stats, TrajOut tr,
                 SegOut seg) except -1:
    cdef int cell = cell0
    cdef double x = x0
    cdef double elapsed = 0.0
    cdef double log_w = 0.0
    cdef double s_jump, thresh, acc, r, u_z, total, w, lam_f, lam_g
    cdef double kx, lkf, lkg, chosen_rate
    cdef int j, o, n, idx, tgt, kid, chosen_class, arr_cell
    cdef long n_seg = 0
    cdef bint biased_here
    while True:
        n_seg += 1
        if n_seg > max_jumps:
            raise RuntimeError("trajectory exceeded the jump guard")
        if s.kind == 2 and not (cell & 1):
            walk_identity(m, s, cell, x, s0 + elapsed, budget0 - elapsed, h,
                          rng, seg)
        else:
            walk(m, s, cell, x, s0 + elapsed, budget0 - elapsed, h, rng,
                 0.0, 0, seg)
        if record:
            tr.cells.append(cell)
            tr.xs.append(x)
            tr.durs.append(seg.duration)
            tr.kinds.append(seg.kind)
        log_w += seg.surv_f - seg.surv_g
        if seg.kind == KIND_SPONT:
            log_w += seg.log_haz_f - seg.log_haz_g
        if stats and not (cell & 1):
            tr.seg_stats.append((cell, seg.fail_int, seg.rep_int))
        elapsed += seg.duration
        s_jump = s0 + elapsed
        if seg.kind == KIND_HORIZON:
            tr.log_weight = log_w
            tr.final_cell = cell
            tr.final_x = seg.x_end
            tr.n_jumps = n_seg - 1
            tr.hit = (cell & 1) != 0
            tr.elapsed = elapsed
            return 0

        biased_here = s.kind != 0 and not (cell & 1)
        if seg.kind == KIND_SPONT:
            o = m.trans_off[cell]
            n = m.trans_n[cell]
            if n <= 0:
                raise ValueError("spontaneous jump with no transitions")
            lam_f = 0.0
            lam_g = 0.0
            if biased_here:
                u_z = scheme_u(s, cell, s_jump)
            for j in range(o, o + n):
                r = m.tr_a[j] + m.tr_b[j] * seg.x_end
                lam_f += r
                if biased_here:
                    lam_g += r * (scheme_u(s, resolve_target(m, j, seg.x_end), s_jump) / u_z)
                else:
                    lam_g += r
            thresh = rng.next_double(rng.state) * lam_g
            acc = 0.0
            idx = o + n - 1
            for j in range(o, o + n):
                r = m.tr_a[j] + m.tr_b[j] * seg.x_end
                if biased_here:
                    w = r * (scheme_u(s, resolve_target(m, j, seg.x_end), s_jump) / u_z)
                else:
                    w = r
                acc += w
                if thresh < acc:
                    idx = j
                    break
            chosen_rate = m.tr_a[idx] + m.tr_b[idx] * seg.x_end
            if biased_here:
                w = chosen_rate * (scheme_u(s, resolve_target(m, idx, seg.x_end), s_jump) / u_z)
            else:
                w = chosen_rate
            lkf = log(chosen_rate) - log(lam_f)
            lkg = log(w) - log(lam_g)
            tgt = resolve_target(m, idx, seg.x_end)
            if stats and not (cell & 1):
                chosen_class = m.tr_class[idx]
                tr.jump_ints.append((1, cell, tgt, chosen_class))
                tr.jump_floats.append((s_jump, seg.x_end, seg.x_end,
                                       seg.fail_mean, seg.rep_mean,
                                       seg.fail_pt, seg.rep_pt, chosen_rate))
            log_w += lkf - lkg
            cell = tgt
            x = seg.x_end
        else:
            if seg.x_end == m.lower[cell] and m.lower_kid[cell] >= 0:
                kid = m.lower_kid[cell]
            elif seg.x_end == m.upper[cell] and m.upper_kid[cell] >= 0:
                kid = m.upper_kid[cell]
            else:
                raise ValueError("boundary state without a kernel")
            o = m.kern_off[kid]
            n = m.kern_n[kid]
            kx = m.kern_x[kid]
            total = 0.0
            for j in range(o, o + n):
                if biased_here:
                    total += m.kern_prob[j] * kernel_w(s, m.kern_target[j], kx, s_jump)
                else:
                    total += m.kern_prob[j]
            thresh = rng.next_double(rng.state) * total
            acc = 0.0
            idx = o + n - 1
            for j in range(o, o + n):
                if biased_here:
                    w = m.kern_prob[j] * kernel_w(s, m.kern_target[j], kx, s_jump)
                else:
                    w = m.kern_prob[j]
                acc += w
                if thresh < acc:
                    idx = j
                    break
            if biased_here:
                w = m.kern_prob[idx] * kernel_w(s, m.kern_target[idx], kx, s_jump)
            else:
                w = m.kern_prob[idx]
            lkf = log(m.kern_prob[idx])
            lkg = log(w) - log(total)
            arr_cell = m.kern_target[idx]
            if stats and not (cell & 1):
                tr.jump_ints.append((2, cell, arr_cell, 2))
                tr.jump_floats.append((s_jump, seg.x_end, kx, 0.0, 0.0, 0.0,
                                       0.0, m.kern_prob[idx]))
            log_w += lkf - lkg
            cell = arr_cell
            x = kx
    return 0


def simulate_one(tab, stab, int cell0, double x0, double s0, double budget,
                 double t_f, double h, long max_jumps, bit_generator,
                 bint collect_stats):
    """Single recorded trajectory; returns a dict of plain arrays."""
    cdef CyModel m = wrap_model(tab)
    cdef CyScheme s = wrap_scheme(stab)
    cdef bitgen_t* rng = get_bitgen(bit_generator)
    cdef TrajOut tr = TrajOut()
    cdef SegOut seg = SegOut()
    tr.cells, tr.xs, tr.durs, tr.kinds = [], [], [], []
    tr.seg_stats, tr.jump_ints, tr.jump_floats = [], [], []
    run_one(m, s, cell0, x0, s0, budget, t_f, h, max_jumps, rng, True,
            collect_stats, tr, seg)
    return {
        "cells": tr.cells, "xs": tr.xs, "durs": tr.durs, "kinds": tr.kinds,
        "log_weight": tr.log_weight, "final_cell": tr.final_cell,
        "final_x": tr.final_x, "hit": tr.hit,
        "seg_stats": tr.seg_stats, "jump_ints": tr.jump_ints,
        "jump_floats": tr.jump_floats,
    }


def run_batch(tab, stab, int cell0, double x0, double s0, double budget,
              double t_f, double h, long max_jumps, object seed,
              object stream0, long n):
    """n replications on consecutive streams; aggregate arrays only."""
    cdef CyModel m = wrap_model(tab)
    cdef CyScheme s = wrap_scheme(stab)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] hit = np.zeros(n, np.uint8)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] lw = np.zeros(n, np.float64)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] fc = np.zeros(n, np.int32)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] fx = np.zeros(n, np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] nj = np.zeros(n, np.int64)
    cdef TrajOut tr = TrajOut()
    cdef SegOut seg = SegOut()
    cdef bitgen_t* rng
    cdef long i
    default_rng = np.random.default_rng
    for i in range(n):
        gen = default_rng((seed, stream0 + i))
        rng = get_bitgen(gen.bit_generator)
        run_one(m, s, cell0, x0, s0, budget, t_f, h, max_jumps, rng, False,
                False, tr, seg)
        hit[i] = 1 if tr.hit else 0
        lw[i] = tr.log_weight
        fc[i] = tr.final_cell
        fx[i] = tr.final_x
        nj[i] = tr.n_jumps
    return {"hit": hit, "log_weight": lw, "final_cell": fc, "final_x": fx,
            "n_jumps": nj}
