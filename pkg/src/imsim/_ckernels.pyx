# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled detection kernels. Mirrors ``imsim._pykernels`` exactly."""

from libc.stdlib cimport malloc, free

import numpy as np


def antenna_combinations(int groups, int group_size):
    index = np.arange(group_size ** groups)
    digits = [(index // group_size ** (groups - 1 - g)) % group_size for g in range(groups)]
    return np.stack(digits, axis=1).astype(np.int64)


def slot_search(const double complex[:, :, ::1] y,
                const double complex[:, :, :, ::1] h,
                const double complex[::1] symbols,
                int groups, int group_size, double alpha,
                long long[:, :, ::1] ant_out,
                long long[:, ::1] sym_out,
                double[:, ::1] on_out,
                double[:, ::1] off_out):
    cdef Py_ssize_t n_frames = y.shape[0], n_slots = y.shape[1], n_rx = y.shape[2]
    cdef Py_ssize_t n_sym = symbols.shape[0]
    cdef Py_ssize_t f, t, r, g, m, c, n_combos = 1
    cdef double off, best, acc, dr, di, vr, vi, sr, si
    cdef long long best_combo, best_sym
    for g in range(groups):
        n_combos *= group_size

    cdef double *yr = <double *> malloc(n_rx * sizeof(double))
    cdef double *yi = <double *> malloc(n_rx * sizeof(double))
    cdef double *accr = <double *> malloc(n_rx * sizeof(double))
    cdef double *acci = <double *> malloc(n_rx * sizeof(double))
    cdef double *xr = <double *> malloc(n_sym * sizeof(double))
    cdef double *xi = <double *> malloc(n_sym * sizeof(double))
    cdef long long *digit = <long long *> malloc(groups * sizeof(long long))
    if not (yr and yi and accr and acci and xr and xi and digit):
        free(yr); free(yi); free(accr); free(acci); free(xr); free(xi); free(digit)
        raise MemoryError()
    try:
        for m in range(n_sym):
            xr[m] = alpha * symbols[m].real
            xi[m] = alpha * symbols[m].imag
        with nogil:
            for f in range(n_frames):
                for t in range(n_slots):
                    off = 0.0
                    for r in range(n_rx):
                        yr[r] = y[f, t, r].real
                        yi[r] = y[f, t, r].imag
                        off = off + yr[r] * yr[r] + yi[r] * yi[r]
                    best = 1e308
                    best_combo = 0
                    best_sym = 0
                    for g in range(groups):
                        digit[g] = 0
                    for c in range(n_combos):
                        # superposition of the chosen column of every group
                        for r in range(n_rx):
                            vr = 0.0
                            vi = 0.0
                            for g in range(groups):
                                vr = vr + h[f, t, r, g * group_size + digit[g]].real
                                vi = vi + h[f, t, r, g * group_size + digit[g]].imag
                            accr[r] = vr
                            acci[r] = vi
                        for m in range(n_sym):
                            sr = xr[m]
                            si = xi[m]
                            acc = 0.0
                            for r in range(n_rx):
                                dr = yr[r] - (accr[r] * sr - acci[r] * si)
                                di = yi[r] - (accr[r] * si + acci[r] * sr)
                                acc = acc + dr * dr + di * di
                            if acc < best:
                                best = acc
                                best_combo = c
                                best_sym = m
                        # odometer step, last group fastest
                        g = groups - 1
                        while g >= 0:
                            digit[g] += 1
                            if digit[g] < group_size:
                                break
                            digit[g] = 0
                            g -= 1
                    on_out[f, t] = best
                    off_out[f, t] = off
                    sym_out[f, t] = best_sym
                    for g in range(groups - 1, -1, -1):
                        ant_out[f, t, g] = best_combo % group_size
                        best_combo = best_combo // group_size
    finally:
        free(yr); free(yi); free(accr); free(acci); free(xr); free(xi); free(digit)


def brute_force(const double complex[:, ::1] y,
                const double complex[:, :, ::1] h,
                const long long[:, ::1] positions,
                const double complex[:, ::1] values,
                long long[::1] best_out,
                double[::1] metric_out):
    cdef Py_ssize_t n_frames = y.shape[0], n_rows = y.shape[1], n_cols = h.shape[2]
    cdef Py_ssize_t n_words = positions.shape[0], nnz = positions.shape[1]
    cdef Py_ssize_t f, k, j, r, col, lo, hi
    cdef double best, acc, sr, si, hr, hi_, rr, ri
    cdef long long best_k
    cdef double *res_r = <double *> malloc(n_rows * sizeof(double))
    cdef double *res_i = <double *> malloc(n_rows * sizeof(double))
    # nonzero row range of each column (block-circulant columns are row bands)
    cdef Py_ssize_t *row_lo = <Py_ssize_t *> malloc(n_cols * sizeof(Py_ssize_t))
    cdef Py_ssize_t *row_hi = <Py_ssize_t *> malloc(n_cols * sizeof(Py_ssize_t))
    if not (res_r and res_i and row_lo and row_hi):
        free(res_r); free(res_i); free(row_lo); free(row_hi)
        raise MemoryError()
    try:
        with nogil:
            for f in range(n_frames):
                for col in range(n_cols):
                    row_lo[col] = n_rows
                    row_hi[col] = 0
                    for r in range(n_rows):
                        if h[f, r, col].real != 0.0 or h[f, r, col].imag != 0.0:
                            if r < row_lo[col]:
                                row_lo[col] = r
                            row_hi[col] = r + 1
                best = 1e308
                best_k = 0
                for k in range(n_words):
                    for r in range(n_rows):
                        res_r[r] = y[f, r].real
                        res_i[r] = y[f, r].imag
                    for j in range(nnz):
                        col = positions[k, j]
                        sr = values[k, j].real
                        si = values[k, j].imag
                        lo = row_lo[col]
                        hi = row_hi[col]
                        for r in range(lo, hi):
                            hr = h[f, r, col].real
                            hi_ = h[f, r, col].imag
                            res_r[r] = res_r[r] - (hr * sr - hi_ * si)
                            res_i[r] = res_i[r] - (hr * si + hi_ * sr)
                    acc = 0.0
                    for r in range(n_rows):
                        rr = res_r[r]
                        ri = res_i[r]
                        acc = acc + rr * rr + ri * ri
                    if acc < best:
                        best = acc
                        best_k = k
                best_out[f] = best_k
                metric_out[f] = best
    finally:
        free(res_r); free(res_i); free(row_lo); free(row_hi)


def joint_search(const double complex[:, ::1] y,
                 const double complex[:, :, ::1] h,
                 const double complex[::1] symbols,
                 int groups, int group_size, double alpha,
                 int n_slots, int n_tx,
                 const long long[:, ::1] taps,
                 long long[::1] rank_out,
                 long long[:, :, ::1] ant_out,
                 long long[:, ::1] sym_out,
                 double[::1] metric_out):
    cdef Py_ssize_t n_frames = y.shape[0], n_rows = y.shape[1]
    cdef Py_ssize_t n_sym = symbols.shape[0], n_taps = taps.shape[0], n_act = taps.shape[1]
    cdef Py_ssize_t f, t, u, r, g, c, c2, m, m2, k, l, p, n_combos = 1, n_hyp
    cdef double yy, vr, vi, zr, zi, er, total, best, gr, gi, xr_, xi_, acc, dr, di
    cdef long long best_rank, col, tmp
    for g in range(groups):
        n_combos *= group_size
    n_hyp = n_combos * n_sym

    # combination -> column offset within a slot, group 0 most significant
    combo_cols = np.empty((n_combos, groups), dtype=np.int64)
    for c in range(n_combos):
        tmp = c
        for g in range(groups - 1, -1, -1):
            combo_cols[c, g] = g * group_size + tmp % group_size
            tmp = tmp // group_size
    cdef long long[:, ::1] cols = combo_cols
    # superposed columns v[t, c, r]
    cdef double[:, :, ::1] v_r = np.empty((n_slots, n_combos, n_rows))
    cdef double[:, :, ::1] v_i = np.empty((n_slots, n_combos, n_rows))
    # per-slot hypothesis terms -2 Re(a^H y) + |a|^2, indexed [t, c * M + m]
    cdef double[:, ::1] single = np.empty((n_slots, n_hyp))
    # pair terms need Re(conj(x_m) x_m2 * v_tc^H v_uc2)
    cdef double[:, :, :, ::1] gram_r = np.zeros((n_slots, n_slots, n_combos, n_combos))
    cdef double[:, :, :, ::1] gram_i = np.zeros((n_slots, n_slots, n_combos, n_combos))
    cdef double[::1] xr = np.empty(n_sym)
    cdef double[::1] xi = np.empty(n_sym)
    need = np.zeros((n_slots, n_slots), dtype=np.uint8)
    for p in range(n_taps):
        for k in range(n_act):
            for l in range(k + 1, n_act):
                need[taps[p, k], taps[p, l]] = 1
    cdef unsigned char[:, ::1] pair_needed = need
    cdef long long[::1] hyp = np.zeros(n_act, dtype=np.int64)
    cdef long long[::1] best_hyp = np.zeros(n_act, dtype=np.int64)
    cdef double[::1] partial = np.zeros(n_act + 1)
    for m in range(n_sym):
        xr[m] = alpha * symbols[m].real
        xi[m] = alpha * symbols[m].imag

    with nogil:
        for f in range(n_frames):
            yy = 0.0
            for r in range(n_rows):
                yy = yy + y[f, r].real * y[f, r].real + y[f, r].imag * y[f, r].imag
            for t in range(n_slots):
                for c in range(n_combos):
                    zr = 0.0
                    zi = 0.0
                    er = 0.0
                    for r in range(n_rows):
                        vr = 0.0
                        vi = 0.0
                        for g in range(groups):
                            col = t * n_tx + cols[c, g]
                            vr = vr + h[f, r, col].real
                            vi = vi + h[f, r, col].imag
                        v_r[t, c, r] = vr
                        v_i[t, c, r] = vi
                        # z = v^H y
                        zr = zr + vr * y[f, r].real + vi * y[f, r].imag
                        zi = zi + vr * y[f, r].imag - vi * y[f, r].real
                        er = er + vr * vr + vi * vi
                    for m in range(n_sym):
                        # Re(conj(a) . y) with a = x v  ->  Re(conj(x) z)
                        single[t, c * n_sym + m] = (-2.0 * (xr[m] * zr + xi[m] * zi)
                                                    + (xr[m] * xr[m] + xi[m] * xi[m]) * er)
            for t in range(n_slots):
                for u in range(t + 1, n_slots):
                    if not pair_needed[t, u]:
                        continue
                    for c in range(n_combos):
                        for c2 in range(n_combos):
                            gr = 0.0
                            gi = 0.0
                            for r in range(n_rows):
                                # v_tc^H v_uc2
                                gr = gr + v_r[t, c, r] * v_r[u, c2, r] + v_i[t, c, r] * v_i[u, c2, r]
                                gi = gi + v_r[t, c, r] * v_i[u, c2, r] - v_i[t, c, r] * v_r[u, c2, r]
                            gram_r[t, u, c, c2] = gr
                            gram_i[t, u, c, c2] = gi

            best = 1e308
            best_rank = 0
            for p in range(n_taps):
                # odometer over one hypothesis per active slot, first slot most significant
                for k in range(n_act):
                    hyp[k] = 0
                partial[0] = yy
                k = 0
                while True:
                    # extend partial sums from level k downwards
                    while k < n_act:
                        t = taps[p, k]
                        c = hyp[k] // n_sym
                        m = hyp[k] % n_sym
                        acc = partial[k] + single[t, hyp[k]]
                        for l in range(k):
                            u = taps[p, l]
                            c2 = hyp[l] // n_sym
                            m2 = hyp[l] % n_sym
                            # 2 Re(conj(a_l) a_k) = 2 Re(conj(x_m2) x_m g), g = v_u^H v_t
                            xr_ = xr[m2] * xr[m] + xi[m2] * xi[m]
                            xi_ = xr[m2] * xi[m] - xi[m2] * xr[m]
                            gr = gram_r[u, t, c2, c]
                            gi = gram_i[u, t, c2, c]
                            acc = acc + 2.0 * (xr_ * gr - xi_ * gi)
                        partial[k + 1] = acc
                        k = k + 1
                    total = partial[n_act]
                    if total < best:
                        best = total
                        best_rank = p
                        for l in range(n_act):
                            best_hyp[l] = hyp[l]
                    # advance odometer
                    k = n_act - 1
                    while k >= 0:
                        hyp[k] = hyp[k] + 1
                        if hyp[k] < n_hyp:
                            break
                        hyp[k] = 0
                        k = k - 1
                    if k < 0:
                        break

            # report the directly evaluated residual of the winner
            acc = 0.0
            for r in range(n_rows):
                dr = y[f, r].real
                di = y[f, r].imag
                for k in range(n_act):
                    t = taps[best_rank, k]
                    c = best_hyp[k] // n_sym
                    m = best_hyp[k] % n_sym
                    dr = dr - (v_r[t, c, r] * xr[m] - v_i[t, c, r] * xi[m])
                    di = di - (v_r[t, c, r] * xi[m] + v_i[t, c, r] * xr[m])
                acc = acc + dr * dr + di * di
            metric_out[f] = acc
            rank_out[f] = best_rank
            for k in range(n_act):
                c = best_hyp[k] // n_sym
                sym_out[f, k] = best_hyp[k] % n_sym
                for g in range(groups - 1, -1, -1):
                    ant_out[f, k, g] = c % group_size
                    c = c // group_size
