# cython: language_level=3
"""Compiled versions of the hot kernels in ``_purepy``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, INFINITY

cnp.import_array()

cdef double TAU = 1e-12


def smo_svr(K, y, double epsilon, double C, double tol=1e-6, long max_iter=10_000_000):
    cdef double[:, ::1] Kv = np.ascontiguousarray(K, dtype=np.float64)
    cdef double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef Py_ssize_t n = yv.shape[0]
    cdef Py_ssize_t m = 2 * n
    a_arr = np.zeros(m)
    G_arr = np.empty(m)
    p_arr = np.empty(m)
    f_arr = np.zeros(n)
    cdef double[::1] a = a_arr
    cdef double[::1] G = G_arr
    cdef double[::1] p = p_arr
    cdef double[::1] f = f_arr
    cdef Py_ssize_t t, i, j, ki, kj, kt
    cdef double s_t, gmax, gmax2, v, grad_diff, quad, obj, obj_min
    cdef double si, sj, ai_old, aj_old, delta, diff, total, di, dj
    cdef long n_iter = 0
    cdef bint converged = False

    for t in range(n):
        p[t] = epsilon - yv[t]
        p[t + n] = epsilon + yv[t]
    for t in range(m):
        G[t] = p[t]

    while n_iter < max_iter:
        gmax = -INFINITY
        i = -1
        for t in range(m):
            if t < n:
                if a[t] < C and -G[t] >= gmax:
                    gmax = -G[t]
                    i = t
            else:
                if a[t] > 0 and G[t] >= gmax:
                    gmax = G[t]
                    i = t
        if i < 0:
            converged = True
            break
        ki = i % n
        gmax2 = -INFINITY
        obj_min = INFINITY
        j = -1
        for t in range(m):
            kt = t % n
            if t < n:
                if not (a[t] > 0):
                    continue
                v = G[t]
            else:
                if not (a[t] < C):
                    continue
                v = -G[t]
            if v >= gmax2:
                gmax2 = v
            grad_diff = gmax + v
            if grad_diff > 0:
                quad = Kv[ki, ki] + Kv[kt, kt] - 2.0 * Kv[ki, kt]
                if quad <= 0:
                    quad = TAU
                obj = -(grad_diff * grad_diff) / quad
                if obj <= obj_min:
                    obj_min = obj
                    j = t
        if gmax + gmax2 < tol or j < 0:
            converged = True
            break
        kj = j % n
        si = 1.0 if i < n else -1.0
        sj = 1.0 if j < n else -1.0
        ai_old = a[i]
        aj_old = a[j]
        quad = Kv[ki, ki] + Kv[kj, kj] - 2.0 * Kv[ki, kj]
        if quad <= 0:
            quad = TAU
        if si != sj:
            delta = (-G[i] - G[j]) / quad
            diff = a[i] - a[j]
            a[i] += delta
            a[j] += delta
            if diff > 0:
                if a[j] < 0:
                    a[j] = 0.0
                    a[i] = diff
            else:
                if a[i] < 0:
                    a[i] = 0.0
                    a[j] = -diff
            if diff > 0:
                if a[i] > C:
                    a[i] = C
                    a[j] = C - diff
            else:
                if a[j] > C:
                    a[j] = C
                    a[i] = C + diff
        else:
            delta = (G[i] - G[j]) / quad
            total = a[i] + a[j]
            a[i] -= delta
            a[j] += delta
            if total > C:
                if a[i] > C:
                    a[i] = C
                    a[j] = total - C
            else:
                if a[j] < 0:
                    a[j] = 0.0
                    a[i] = total
            if total > C:
                if a[j] > C:
                    a[j] = C
                    a[i] = total - C
            else:
                if a[i] < 0:
                    a[i] = 0.0
                    a[j] = total

        di = si * (a[i] - ai_old)
        dj = sj * (a[j] - aj_old)
        for t in range(n):
            f[t] += di * Kv[ki, t] + dj * Kv[kj, t]
            G[t] = f[t] + p[t]
            G[t + n] = -f[t] + p[t + n]
        n_iter += 1

    coef = a_arr[:n] - a_arr[n:]
    return coef, n_iter, bool(converged)


def demean_sweeps(data, codes, n_groups, double tol=1e-10, long max_sweeps=10_000):
    cdef double[:, ::1] X = data
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t m = X.shape[1]
    cdef Py_ssize_t nf = len(codes)
    cdef Py_ssize_t r, c, g, f
    cdef long sweep
    cdef double change, shift
    cdef cnp.int64_t[::1] code
    cdef double[::1] cnt
    cdef double[:, ::1] sums

    code_views = [np.ascontiguousarray(cd, dtype=np.int64) for cd in codes]
    count_views = [np.bincount(cd, minlength=ng).astype(np.float64) for cd, ng in zip(code_views, n_groups)]
    sum_bufs = [np.zeros((ng, m)) for ng in n_groups]

    for sweep in range(1, max_sweeps + 1):
        change = 0.0
        for f in range(nf):
            code = code_views[f]
            cnt = count_views[f]
            sums = sum_bufs[f]
            sums[:, :] = 0.0
            for r in range(n):
                g = code[r]
                for c in range(m):
                    sums[g, c] += X[r, c]
            for g in range(sums.shape[0]):
                if cnt[g] > 0:
                    for c in range(m):
                        sums[g, c] /= cnt[g]
            for r in range(n):
                g = code[r]
                for c in range(m):
                    shift = sums[g, c]
                    X[r, c] -= shift
                    if fabs(shift) > change:
                        change = fabs(shift)
        if change < tol:
            return sweep
    return -1
