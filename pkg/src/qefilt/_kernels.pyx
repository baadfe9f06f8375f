# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled simulation kernels (hot-loop backend).

Mirrors qefilt._kernels_py function for function; see that module for the
randomness layout contract. Arithmetic is ordered to match the fallback:
edge contributions accumulate in edge order, quantization uses the same
floor/clip/offset expression, and state updates combine terms in the same
association, so edge-sampled paths agree bitwise and dense paths agree to
rounding error (the fallback's matmul may reassociate sums).
"""

import numpy as np

cimport cython
from libc.math cimport fabs, floor

BACKEND = "compiled"


cdef inline double _qerr(double z, double step, double lo_idx, double hi_idx) nogil:
    cdef double idx = floor(z / step)
    if idx < lo_idx:
        idx = lo_idx
    elif idx > hi_idx:
        idx = hi_idx
    return (idx + 0.5) * step - z


cdef inline void _edge_apply(double[::1] out, const double[::1] v,
                             const int[::1] eu, const int[::1] ev, const double[::1] ew,
                             const unsigned char* keep, bint lap_style) nogil:
    cdef Py_ssize_t e, u, w
    cdef Py_ssize_t n_edges = eu.shape[0]
    cdef Py_ssize_t i
    cdef double c, wb
    for i in range(out.shape[0]):
        out[i] = 0.0
    for e in range(n_edges):
        if not keep[e]:
            continue
        u = eu[e]
        w = ev[e]
        if lap_style:
            c = ew[e] * (v[u] - v[w])
            out[u] += c
            out[w] -= c
        else:
            wb = ew[e]
            out[u] += wb * v[w]
            out[w] += wb * v[u]


cdef inline void _dense_apply(double[::1] out, const double[::1] v, const double[:, ::1] S) nogil:
    cdef Py_ssize_t i, j, n = S.shape[0]
    cdef double acc
    for i in range(n):
        acc = 0.0
        for j in range(n):
            acc += S[i, j] * v[j]
        out[i] = acc


def fir_chunk(const double[:, ::1] S, const double[::1] taps, const double[::1] x,
              const double[:, ::1] alpha,
              const int[::1] eu, const int[::1] ev, const double[::1] ew,
              bint lap_style, bint use_res, double p,
              double step, double lo_idx, double hi_idx, double qrange,
              bint use_dither, bint quantize_on,
              const double[:, ::1] urand, bint collect=False):
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t t_trials = urand.shape[0]
    cdef Py_ssize_t k_order = taps.shape[0] - 1
    cdef bint use_edges = use_res and p < 1.0
    cdef Py_ssize_t e_cnt = eu.shape[0] if use_edges else 0

    yq_arr = np.empty((n, t_trials))
    yref_arr = np.empty((n, t_trials))
    ov_arr = np.zeros(t_trials, dtype=np.int64)
    states_arr = np.empty((k_order + 1, n, t_trials)) if collect else None
    errors_arr = np.empty((k_order, n, t_trials)) if collect else None

    cdef double[:, ::1] yq = yq_arr
    cdef double[:, ::1] yref = yref_arr
    cdef long long[::1] ov = ov_arr
    cdef double[:, :, ::1] states = states_arr if collect else None
    cdef double[:, :, ::1] errors = errors_arr if collect else None

    scratch_arr = np.empty((6, n))
    cdef double[:, ::1] scratch = scratch_arr
    keep_arr = np.empty(max(e_cnt, 1), dtype=np.uint8)
    cdef unsigned char[::1] keep = keep_arr

    cdef double[::1] wq = scratch[0]
    cdef double[::1] wref = scratch[1]
    cdef double[::1] err = scratch[2]
    cdef double[::1] v = scratch[3]
    cdef double[::1] nxt = scratch[4]
    cdef double[::1] nxtref = scratch[5]

    cdef Py_ssize_t t, k, i, e, pos
    cdef double z, d
    cdef long long ovc

    with nogil:
        for t in range(t_trials):
            pos = 0
            ovc = 0
            for i in range(n):
                wq[i] = x[i]
                wref[i] = x[i]
                yq[i, t] = taps[0] * wq[i]
                yref[i, t] = taps[0] * wref[i]
            if collect:
                for i in range(n):
                    states[0, i, t] = wq[i]
            for k in range(1, k_order + 1):
                if use_edges:
                    for e in range(e_cnt):
                        keep[e] = 1 if urand[t, pos + e] < p else 0
                    pos += e_cnt
                if quantize_on:
                    for i in range(n):
                        if use_dither:
                            d = (urand[t, pos + i] - 0.5) * step
                            z = wq[i] + d
                        else:
                            z = wq[i]
                        if fabs(z) > qrange:
                            ovc += 1
                        err[i] = _qerr(z, step, lo_idx, hi_idx)
                        v[i] = wq[i] + err[i]
                    if use_dither:
                        pos += n
                else:
                    for i in range(n):
                        err[i] = 0.0
                        v[i] = wq[i]
                if use_edges:
                    _edge_apply(nxt, v, eu, ev, ew, &keep[0], lap_style)
                    _edge_apply(nxtref, wref, eu, ev, ew, &keep[0], lap_style)
                else:
                    _dense_apply(nxt, v, S)
                    _dense_apply(nxtref, wref, S)
                for i in range(n):
                    wq[i] = nxt[i] - alpha[i, k - 1] * err[i]
                    wref[i] = nxtref[i]
                    yq[i, t] += taps[k] * wq[i]
                    yref[i, t] += taps[k] * wref[i]
                if collect:
                    for i in range(n):
                        states[k, i, t] = wq[i]
                        errors[k - 1, i, t] = err[i]
            ov[t] = ovc
    return yq_arr, yref_arr, ov_arr, states_arr, errors_arr


def arma_chunk(const double[:, ::1] S, const double[::1] psis, const double[::1] gains,
               const double[::1] x, const double[:, ::1] alpha,
               const int[::1] eu, const int[::1] ev, const double[::1] ew,
               bint lap_style, bint use_res, double p,
               Py_ssize_t t_max,
               double step, double lo_idx, double hi_idx, double qrange,
               bint use_dither, bint quantize_on,
               const double[:, ::1] urand, bint collect=False):
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t t_trials = urand.shape[0]
    cdef Py_ssize_t k_br = psis.shape[0]
    cdef bint use_edges = use_res and p < 1.0
    cdef Py_ssize_t e_cnt = eu.shape[0] if use_edges else 0

    dev_arr = np.empty((t_max, t_trials))
    refsq_arr = np.empty((t_max, t_trials))
    qqsq_arr = np.empty((t_max, t_trials))
    yqsum_arr = np.zeros((t_max, n))
    yrefsum_arr = np.zeros((t_max, n))
    yqlast_arr = np.empty((n, t_trials))
    yreflast_arr = np.empty((n, t_trials))
    ov_arr = np.zeros(t_trials, dtype=np.int64)
    states_arr = np.zeros((t_max + 1, k_br, n, t_trials)) if collect else None

    cdef double[:, ::1] dev_sq = dev_arr
    cdef double[:, ::1] ref_sq = refsq_arr
    cdef double[:, ::1] qq_sq = qqsq_arr
    cdef double[:, ::1] yq_sum = yqsum_arr
    cdef double[:, ::1] yref_sum = yrefsum_arr
    cdef double[:, ::1] yq_last = yqlast_arr
    cdef double[:, ::1] yref_last = yreflast_arr
    cdef long long[::1] ov = ov_arr
    cdef double[:, :, :, ::1] states = states_arr if collect else None

    wq_arr = np.empty((k_br, n))
    wref_arr = np.empty((k_br, n))
    gx_arr = np.asarray(gains)[:, None] * np.asarray(x)[None, :]
    cdef double[:, ::1] wq = wq_arr
    cdef double[:, ::1] wref = wref_arr
    cdef double[:, ::1] gx = np.ascontiguousarray(gx_arr)

    scratch_arr = np.empty((6, n))
    cdef double[:, ::1] scratch = scratch_arr
    cdef double[::1] err = scratch[0]
    cdef double[::1] v = scratch[1]
    cdef double[::1] nxt = scratch[2]
    cdef double[::1] yq_t = scratch[3]
    cdef double[::1] yref_t = scratch[4]
    keep_arr = np.empty(max(e_cnt, 1), dtype=np.uint8)
    cdef unsigned char[::1] keep = keep_arr

    cdef Py_ssize_t t, tt, k, i, e, pos
    cdef double z, d, dv, acc_dev, acc_ref, acc_qq
    cdef long long ovc

    with nogil:
        for t in range(t_trials):
            pos = 0
            ovc = 0
            for k in range(k_br):
                for i in range(n):
                    wq[k, i] = 0.0
                    wref[k, i] = 0.0
            for tt in range(1, t_max + 1):
                if use_edges:
                    for e in range(e_cnt):
                        keep[e] = 1 if urand[t, pos + e] < p else 0
                    pos += e_cnt
                for i in range(n):
                    yq_t[i] = 0.0
                    yref_t[i] = 0.0
                for k in range(k_br):
                    if quantize_on:
                        for i in range(n):
                            if use_dither:
                                d = (urand[t, pos + i] - 0.5) * step
                                z = wq[k, i] + d
                            else:
                                z = wq[k, i]
                            if fabs(z) > qrange:
                                ovc += 1
                            err[i] = _qerr(z, step, lo_idx, hi_idx)
                            v[i] = wq[k, i] + err[i]
                        if use_dither:
                            pos += n
                    else:
                        for i in range(n):
                            err[i] = 0.0
                            v[i] = wq[k, i]
                    if use_edges:
                        _edge_apply(nxt, v, eu, ev, ew, &keep[0], lap_style)
                    else:
                        _dense_apply(nxt, v, S)
                    for i in range(n):
                        wq[k, i] = (psis[k] * nxt[i] + gx[k, i]) - alpha[i, k] * err[i]
                    if use_edges:
                        _edge_apply(nxt, wref[k], eu, ev, ew, &keep[0], lap_style)
                    else:
                        _dense_apply(nxt, wref[k], S)
                    for i in range(n):
                        wref[k, i] = psis[k] * nxt[i] + gx[k, i]
                        yq_t[i] += wq[k, i]
                        yref_t[i] += wref[k, i]
                if collect:
                    for k in range(k_br):
                        for i in range(n):
                            states[tt, k, i, t] = wq[k, i]
                acc_dev = 0.0
                acc_ref = 0.0
                acc_qq = 0.0
                for i in range(n):
                    dv = yq_t[i] - yref_t[i]
                    acc_dev += dv * dv
                    acc_ref += yref_t[i] * yref_t[i]
                    acc_qq += yq_t[i] * yq_t[i]
                    yq_sum[tt - 1, i] += yq_t[i]
                    yref_sum[tt - 1, i] += yref_t[i]
                dev_sq[tt - 1, t] = acc_dev
                ref_sq[tt - 1, t] = acc_ref
                qq_sq[tt - 1, t] = acc_qq
                if tt == t_max:
                    for i in range(n):
                        yq_last[i, t] = yq_t[i]
                        yref_last[i, t] = yref_t[i]
            ov[t] = ovc
    return (dev_arr, refsq_arr, qqsq_arr, yqsum_arr, yrefsum_arr,
            yqlast_arr, yreflast_arr, ov_arr, states_arr)


def fir_noise_chunk(const double[:, ::1] S, const double[::1] taps, const double[:, ::1] alpha,
                    const int[::1] eu, const int[::1] ev, const double[::1] ew,
                    bint lap_style, bint use_res, double p,
                    const double[::1] noise_scales, const double[:, ::1] urand):
    cdef Py_ssize_t n = S.shape[0]
    cdef Py_ssize_t t_trials = urand.shape[0]
    cdef Py_ssize_t k_order = taps.shape[0] - 1
    cdef bint use_edges = use_res and p < 1.0
    cdef Py_ssize_t e_cnt = eu.shape[0] if use_edges else 0

    power_arr = np.zeros(t_trials)
    cdef double[::1] power = power_arr

    scratch_arr = np.empty((5, n))
    cdef double[:, ::1] scratch = scratch_arr
    cdef double[::1] w = scratch[0]
    cdef double[::1] y = scratch[1]
    cdef double[::1] nz = scratch[2]
    cdef double[::1] v = scratch[3]
    cdef double[::1] nxt = scratch[4]
    keep_arr = np.empty(max(e_cnt, 1), dtype=np.uint8)
    cdef unsigned char[::1] keep = keep_arr

    cdef Py_ssize_t t, k, i, e, pos
    cdef double acc

    with nogil:
        for t in range(t_trials):
            pos = 0
            for i in range(n):
                w[i] = 0.0
                y[i] = 0.0
            for k in range(1, k_order + 1):
                if use_edges:
                    for e in range(e_cnt):
                        keep[e] = 1 if urand[t, pos + e] < p else 0
                    pos += e_cnt
                for i in range(n):
                    nz[i] = (urand[t, pos + i] - 0.5) * noise_scales[k - 1]
                    v[i] = w[i] + nz[i]
                pos += n
                if use_edges:
                    _edge_apply(nxt, v, eu, ev, ew, &keep[0], lap_style)
                else:
                    _dense_apply(nxt, v, S)
                for i in range(n):
                    w[i] = nxt[i] - alpha[i, k - 1] * nz[i]
                    y[i] += taps[k] * w[i]
            acc = 0.0
            for i in range(n):
                acc += y[i] * y[i]
            power[t] = acc / n
    return power_arr


def arma_noise_chunk(const double[:, ::1] S, const double[::1] psis, const double[:, ::1] alpha,
                     const int[::1] eu, const int[::1] ev, const double[::1] ew,
                     bint lap_style, bint use_res, double p,
                     Py_ssize_t t_max, Py_ssize_t window,
                     const double[::1] noise_scales, const double[:, ::1] urand):
    cdef Py_ssize_t n = S.shape[0]
    cdef Py_ssize_t t_trials = urand.shape[0]
    cdef Py_ssize_t k_br = psis.shape[0]
    cdef bint use_edges = use_res and p < 1.0
    cdef Py_ssize_t e_cnt = eu.shape[0] if use_edges else 0

    branch_arr = np.zeros((k_br, t_trials))
    total_arr = np.zeros(t_trials)
    cdef double[:, ::1] branch_power = branch_arr
    cdef double[::1] total_power = total_arr

    w_arr = np.empty((k_br, n))
    cdef double[:, ::1] w = w_arr
    scratch_arr = np.empty((4, n))
    cdef double[:, ::1] scratch = scratch_arr
    cdef double[::1] nz = scratch[0]
    cdef double[::1] v = scratch[1]
    cdef double[::1] nxt = scratch[2]
    cdef double[::1] y_t = scratch[3]
    keep_arr = np.empty(max(e_cnt, 1), dtype=np.uint8)
    cdef unsigned char[::1] keep = keep_arr

    cdef Py_ssize_t t, tt, k, i, e, pos
    cdef double acc

    with nogil:
        for t in range(t_trials):
            pos = 0
            for k in range(k_br):
                for i in range(n):
                    w[k, i] = 0.0
            for tt in range(1, t_max + 1):
                if use_edges:
                    for e in range(e_cnt):
                        keep[e] = 1 if urand[t, pos + e] < p else 0
                    pos += e_cnt
                for i in range(n):
                    y_t[i] = 0.0
                for k in range(k_br):
                    for i in range(n):
                        nz[i] = (urand[t, pos + i] - 0.5) * noise_scales[k]
                        v[i] = w[k, i] + nz[i]
                    pos += n
                    if use_edges:
                        _edge_apply(nxt, v, eu, ev, ew, &keep[0], lap_style)
                    else:
                        _dense_apply(nxt, v, S)
                    for i in range(n):
                        w[k, i] = psis[k] * nxt[i] - alpha[i, k] * nz[i]
                        y_t[i] += w[k, i]
                if tt > t_max - window:
                    acc = 0.0
                    for i in range(n):
                        acc += y_t[i] * y_t[i]
                    total_power[t] += acc / n
                    for k in range(k_br):
                        acc = 0.0
                        for i in range(n):
                            acc += w[k, i] * w[k, i]
                        branch_power[k, t] += acc / n
            total_power[t] /= window
            for k in range(k_br):
                branch_power[k, t] /= window
    return branch_arr, total_arr
