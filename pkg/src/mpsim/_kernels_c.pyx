# cython: language_level=3
"""Compiled twin of ``_kernels_py``.

Same signatures, same arithmetic order, bit-identical results. Loops that are
independent per element run under OpenMP; everything with a sequential float
accumulation stays serial so results do not depend on the thread count.
"""
import numpy as np
cimport numpy as cnp
cimport cython
from cython.parallel cimport prange
from libc.stdint cimport uint64_t, int64_t, int32_t, int8_t, uint8_t
from libcpp.vector cimport vector
from libcpp.algorithm cimport sort as cpp_sort
from libcpp.pair cimport pair

cnp.import_array()

NAME = "cython"

cdef extern from *:
    """
    #ifdef _OPENMP
    #include <omp.h>
    static int mps_set_threads(int n) { if (n > 0) omp_set_num_threads(n); return omp_get_max_threads(); }
    static int mps_get_threads(void) { return omp_get_max_threads(); }
    #else
    static int mps_set_threads(int n) { (void)n; return 1; }
    static int mps_get_threads(void) { return 1; }
    #endif
    """
    int mps_set_threads(int n) nogil
    int mps_get_threads() nogil

cdef enum:
    HEA, INC, INA, PRE, ASY, SYM, MSY, SSY, IMA, IMS, DEA

cdef uint64_t K_STREAM = 0x9E3779B97F4A7C15ULL
cdef uint64_t K_A = 0xD1B54A32D192ED03ULL
cdef uint64_t K_B = 0x8CB92BA72F3D8DD7ULL
cdef double INV53 = 1.0 / 9007199254740992.0


def set_num_threads(int n):
    return mps_set_threads(n)


def get_num_threads():
    return mps_get_threads()


cdef inline uint64_t mix(uint64_t z) noexcept nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline double draw(uint64_t h0, uint64_t a, uint64_t b) noexcept nogil:
    cdef uint64_t h = mix(h0 + a * K_A)
    h = mix(h ^ (b * K_B))
    return <double>(h >> 11) * INV53


def stream_key(seed, stream):
    cdef uint64_t s = <uint64_t>(int(seed) & 0xFFFFFFFFFFFFFFFF)
    cdef uint64_t t = <uint64_t>(int(stream) & 0xFFFFFFFFFFFFFFFF)
    return int(mix(s ^ (t * K_STREAM)))


def uniform(seed, stream, a, b):
    a_arr = np.asarray(a, dtype=np.int64)
    b_arr = np.asarray(b, dtype=np.int64)
    shape = np.broadcast_shapes(a_arr.shape, b_arr.shape)
    aa = np.ascontiguousarray(np.broadcast_to(a_arr, shape)).ravel()
    bb = np.ascontiguousarray(np.broadcast_to(b_arr, shape)).ravel()
    cdef Py_ssize_t n = aa.shape[0], i
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef const int64_t[::1] av = aa
    cdef const int64_t[::1] bv = bb
    cdef uint64_t h0 = <uint64_t>stream_key(seed, stream)
    for i in prange(n, nogil=True, schedule="static"):
        o[i] = draw(h0, <uint64_t>av[i], <uint64_t>bv[i])
    return out.reshape(shape)


def build_visits(const int32_t[:, ::1] aff, active, const int8_t[::1] group, const int8_t[::1] act,
                 const int8_t[::1] shop, rule):
    cdef const uint8_t[::1] act_on = np.ascontiguousarray(active, dtype=np.uint8)
    cdef const uint8_t[:, :, :, ::1] r = np.ascontiguousarray(rule, dtype=np.uint8)
    cdef Py_ssize_t n = aff.shape[0], nt = aff.shape[1], i, t, k
    counts_arr = np.zeros(n + 1, dtype=np.int64)
    cdef int64_t[::1] counts = counts_arr
    cdef int64_t c
    for i in prange(n, nogil=True, schedule="static"):
        c = 0
        if act_on[i]:
            for t in range(nt):
                if aff[i, t] >= 0 and r[group[i], act[i], shop[i], t]:
                    c = c + 1
        counts[i + 1] = c
    offs_arr = np.cumsum(counts_arr)
    cdef int64_t[::1] offs = offs_arr
    cdef Py_ssize_t total = offs[n]
    agent_arr = np.empty(total, dtype=np.int32)
    fac_arr = np.empty(total, dtype=np.int32)
    typ_arr = np.empty(total, dtype=np.int8)
    cdef int32_t[::1] va = agent_arr
    cdef int32_t[::1] vf = fac_arr
    cdef int8_t[::1] vt = typ_arr
    for i in prange(n, nogil=True, schedule="static"):
        if act_on[i]:
            k = offs[i]
            for t in range(nt):
                if aff[i, t] >= 0 and r[group[i], act[i], shop[i], t]:
                    va[k] = <int32_t>i
                    vf[k] = aff[i, t]
                    vt[k] = <int8_t>t
                    k = k + 1
    return agent_arr, fac_arr, typ_arr


ctypedef pair[double, int64_t] KeyIdx


def kickout(const int32_t[::1] v_agent, const int32_t[::1] v_fac, const double[::1] key, cap, Py_ssize_t n_fac):
    cdef Py_ssize_t n = v_fac.shape[0], i, f, j, s, e
    keep_arr = np.ones(n, dtype=bool)
    if n == 0:
        return keep_arr
    cdef const int64_t[::1] capv = np.ascontiguousarray(cap, dtype=np.int64)
    cdef uint8_t[::1] keep = keep_arr.view(np.uint8)
    start_arr = np.zeros(n_fac + 1, dtype=np.int64)
    cdef int64_t[::1] start = start_arr
    for i in range(n):
        start[v_fac[i] + 1] += 1
    cdef bint any_over = False
    for f in range(n_fac):
        if start[f + 1] > capv[f]:
            any_over = True
        start[f + 1] += start[f]
    if not any_over:
        return keep_arr
    # counting sort of visit indices by facility (stable)
    pos_arr = start_arr[:-1].copy()
    cdef int64_t[::1] pos = pos_arr
    idx_arr = np.empty(n, dtype=np.int64)
    cdef int64_t[::1] idx = idx_arr
    for i in range(n):
        f = v_fac[i]
        idx[pos[f]] = i
        pos[f] += 1
    cdef vector[KeyIdx] buf
    cdef Py_ssize_t m
    with nogil:
        for f in range(n_fac):
            s = start[f]
            e = start[f + 1]
            if e - s <= capv[f]:
                continue
            buf.clear()
            for j in range(s, e):
                buf.push_back(KeyIdx(key[idx[j]], idx[j]))
            cpp_sort(buf.begin(), buf.end())
            # threshold element: everything strictly after rank cap-1 is dropped
            m = capv[f]
            for j in range(s, e):
                i = idx[j]
                if m == 0:
                    keep[i] = 0
                elif KeyIdx(key[i], i) > buf[m - 1]:
                    keep[i] = 0
    return keep_arr


def infect(const int32_t[::1] v_agent, const int32_t[::1] v_fac, const double[::1] w_src, const double[::1] w_vic,
           const double[::1] coef, const double[::1] u, Py_ssize_t n_agents, Py_ssize_t n_fac):
    cdef Py_ssize_t n = v_fac.shape[0], i, a
    pressure_arr = np.zeros(n_fac, dtype=np.float64)
    p_arr = np.empty(n, dtype=np.float64)
    q_arr = np.zeros(n_agents, dtype=np.float64)
    hit_arr = np.full(n_agents, -1, dtype=np.int64)
    cdef double[::1] pressure = pressure_arr
    cdef double[::1] p = p_arr
    cdef double[::1] q = q_arr
    cdef int64_t[::1] hit = hit_arr
    cdef double val, prod
    cdef int32_t f
    with nogil:
        for i in range(n):
            pressure[v_fac[i]] += w_src[i]
    for i in prange(n, nogil=True, schedule="static"):
        f = v_fac[i]
        val = coef[f] * w_vic[i] * pressure[f]
        if val > 1.0:
            val = 1.0
        p[i] = val
    with nogil:
        i = 0
        while i < n:
            a = v_agent[i]
            prod = 1.0 - p[i]
            if u[i] < p[i] and hit[a] < 0:
                hit[a] = i
            i = i + 1
            while i < n and v_agent[i] == a:
                prod = prod * (1.0 - p[i])
                if u[i] < p[i] and hit[a] < 0:
                    hit[a] = i
                i = i + 1
            q[a] = 1.0 - prod
    return pressure_arr, p_arr, q_arr, hit_arr


def attribute(victim_fac, u, const int32_t[::1] v_agent, const int32_t[::1] v_fac, const double[::1] w_src, Py_ssize_t n_fac):
    cdef const int32_t[::1] vic = np.ascontiguousarray(victim_fac, dtype=np.int32)
    cdef const double[::1] uu = np.ascontiguousarray(u, dtype=np.float64)
    cdef Py_ssize_t m = vic.shape[0], n = v_fac.shape[0], i, j, f, lo, hi, mid, s, e
    out_arr = np.full(m, -1, dtype=np.int32)
    if m == 0:
        return out_arr
    cdef int32_t[::1] out = out_arr
    start_arr = np.zeros(n_fac + 1, dtype=np.int64)
    cdef int64_t[::1] start = start_arr
    cdef Py_ssize_t ns = 0
    for i in range(n):
        if w_src[i] > 0:
            start[v_fac[i] + 1] += 1
            ns += 1
    if ns == 0:
        return out_arr
    for f in range(n_fac):
        start[f + 1] += start[f]
    pos_arr = start_arr[:-1].copy()
    cdef int64_t[::1] pos = pos_arr
    sa_arr = np.empty(ns, dtype=np.int32)
    cum_arr = np.empty(ns, dtype=np.float64)
    cdef int32_t[::1] sa = sa_arr
    cdef double[::1] cum = cum_arr
    for i in range(n):
        if w_src[i] > 0:
            f = v_fac[i]
            sa[pos[f]] = v_agent[i]
            cum[pos[f]] = w_src[i]
            pos[f] += 1
    cdef double acc = 0.0, base, total, target
    for j in range(ns):
        acc = acc + cum[j]
        cum[j] = acc
    with nogil:
        for i in range(m):
            f = vic[i]
            s = start[f]
            e = start[f + 1]
            if e <= s:
                continue
            base = cum[s - 1] if s > 0 else 0.0
            total = cum[e - 1] - base
            target = base + uu[i] * total
            # first index with cum > target (searchsorted side='right')
            lo = 0
            hi = ns
            while lo < hi:
                mid = (lo + hi) // 2
                if cum[mid] <= target:
                    lo = mid + 1
                else:
                    hi = mid
            if lo < s:
                lo = s
            if lo > e - 1:
                lo = e - 1
            out[i] = sa[lo]
    return out_arr


def advance_health(const int8_t[::1] state, const int8_t[::1] group, hosp, days_sym, const double[::1] u1,
                   const double[::1] u2, const double[::1] rates, const double[::1] sev,
                   const double[::1] nhos_death, const double[::1] hosp_death):
    cdef Py_ssize_t n = state.shape[0], i
    cdef const uint8_t[::1] h = np.ascontiguousarray(hosp, dtype=np.uint8)
    new_arr = np.asarray(state).copy()
    days_arr = np.array(days_sym, dtype=np.int16, copy=True)
    cdef int8_t[::1] new = new_arr
    cdef cnp.int16_t[::1] days = days_arr
    cdef int8_t s, g
    cdef double qd
    cdef double r_inc = rates[0], r_asyf = rates[1], r_pre = rates[2], r_ina = rates[3]
    cdef double r_reca = rates[4], r_hos = rates[5], r_recs = rates[6], r_rec = rates[7]
    cdef double r_dia = rates[8], r_dis = rates[9]
    for i in prange(n, nogil=True, schedule="static"):
        s = state[i]
        g = group[i]
        if s == INC:
            if u1[i] < r_inc:
                if u2[i] < r_asyf:
                    new[i] = INA
                else:
                    new[i] = PRE
        elif s == PRE:
            if u1[i] < r_pre:
                new[i] = SYM
                days[i] = 1
        elif s == INA:
            if u1[i] < r_ina:
                new[i] = ASY
        elif s == ASY:
            if u1[i] < r_reca:
                new[i] = IMA
        elif s == SYM:
            if u1[i] < r_hos:
                if u2[i] < sev[g]:
                    new[i] = SSY
                else:
                    new[i] = MSY
            days[i] = days[i] + 1
        elif s == MSY:
            if u1[i] < r_recs:
                new[i] = IMS
                days[i] = 0
            else:
                days[i] = days[i] + 1
        elif s == SSY:
            if h[i]:
                qd = hosp_death[g]
                if u1[i] < qd:
                    new[i] = DEA
                    days[i] = 0
                elif u1[i] < qd + r_rec:
                    new[i] = IMS
                    days[i] = 0
                else:
                    days[i] = days[i] + 1
            else:
                if u1[i] < nhos_death[g]:
                    new[i] = DEA
                    days[i] = 0
                else:
                    days[i] = days[i] + 1
        elif s == IMA:
            if u1[i] < r_dia:
                new[i] = HEA
        elif s == IMS:
            if u1[i] < r_dis:
                new[i] = HEA
    return new_arr, days_arr
