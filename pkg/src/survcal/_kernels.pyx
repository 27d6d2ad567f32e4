# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels; same contracts as ``survcal._pure``."""

import numpy as np
cimport numpy as cnp

cnp.import_array()

from survcal._pure import event_table


def jackknife_loo(times, events, grid, bint restricted_mean):
    cdef cnp.float64_t[::1] t = np.ascontiguousarray(times, dtype=np.float64)
    cdef cnp.uint8_t[::1] e = np.ascontiguousarray(events, dtype=np.uint8)
    cdef cnp.float64_t[::1] g = np.ascontiguousarray(grid, dtype=np.float64)
    u_arr, d_arr, y_arr = event_table(
        np.asarray(t), np.asarray(e).astype(bool), np.asarray(g).max()
    )
    cdef cnp.float64_t[::1] u = u_arr
    cdef cnp.float64_t[::1] d = d_arr
    cdef cnp.float64_t[::1] y = y_arr
    cdef Py_ssize_t n = t.shape[0]
    cdef Py_ssize_t ng = g.shape[0]
    full_arr = np.empty(ng)
    loo_arr = np.empty((n, ng))
    cdef cnp.float64_t[::1] full = full_arr
    cdef cnp.float64_t[:, ::1] loo = loo_arr
    _row(u, d, y, -1.0, 0, 0, g, restricted_mean, full)
    cdef Py_ssize_t i
    for i in range(n):
        _row(u, d, y, t[i], e[i], 1, g, restricted_mean, loo[i])
    return full_arr, loo_arr


cdef void _row(cnp.float64_t[::1] u, cnp.float64_t[::1] d, cnp.float64_t[::1] y,
               double ti, bint ei, bint drop, cnp.float64_t[::1] g,
               bint restricted_mean, cnp.float64_t[::1] out) noexcept nogil:
    # KM product over distinct event times, optionally with one row removed
    cdef Py_ssize_t j = 0, k, nj = u.shape[0], ng = g.shape[0]
    cdef double surv = 1.0, yj, dj, area, lo, hi, t
    for k in range(ng):
        t = g[k]
        if restricted_mean:
            area = 0.0
            lo = 0.0
            surv = 1.0
            j = 0
            while True:
                hi = u[j] if j < nj else t
                if hi > t:
                    hi = t
                if hi > lo:
                    area += surv * (hi - lo)
                if j >= nj or u[j] >= t:
                    break
                yj = y[j]
                dj = d[j]
                if drop:
                    if ti >= u[j]:
                        yj -= 1.0
                        if ei and ti == u[j]:
                            dj -= 1.0
                if yj > 0:
                    surv *= 1.0 - dj / yj
                lo = u[j]
                j += 1
            out[k] = area
        else:
            surv = 1.0
            j = 0
            while j < nj and u[j] < t:
                yj = y[j]
                dj = d[j]
                if drop:
                    if ti >= u[j]:
                        yj -= 1.0
                        if ei and ti == u[j]:
                            dj -= 1.0
                if yj > 0:
                    surv *= 1.0 - dj / yj
                j += 1
            out[k] = surv


def best_split(X, y, features, Py_ssize_t min_leaf):
    cdef cnp.float64_t[:, :] xv = np.asarray(X, dtype=np.float64)
    cdef cnp.float64_t[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef Py_ssize_t n = yv.shape[0]
    cdef Py_ssize_t best_f = -1, f, k, idx
    cdef double best_thr = 0.0, best_gain = 0.0
    cdef double s_left, s_right, total, gain, nl, nr, thr, x_prev, x_next
    cdef cnp.intp_t[::1] order
    if n < 2 * min_leaf:
        return best_f, best_thr, best_gain
    cs_arr = np.empty(n)
    cdef cnp.float64_t[::1] cs = cs_arr
    for f in features:
        order = np.argsort(np.asarray(xv[:, f]), kind="stable").astype(np.intp)
        total = 0.0
        for k in range(n):
            total += yv[order[k]]
            cs[k] = total
        for k in range(min_leaf, n - min_leaf + 1):
            x_prev = xv[order[k - 1], f]
            x_next = xv[order[k], f]
            if not x_prev < x_next:
                continue
            s_left = cs[k - 1]
            s_right = total - s_left
            nl = <double>k
            nr = n - nl
            gain = s_left * s_left / nl + s_right * s_right / nr - total * total / n
            if gain > best_gain:
                thr = 0.5 * (x_prev + x_next)
                if thr >= x_next:
                    thr = x_prev
                best_f, best_thr, best_gain = f, thr, gain
    return best_f, best_thr, best_gain


def concordance_counts(pred, times, events, bint tie_credit):
    """Sweep times in decreasing order with a Fenwick tree over prediction ranks.

    Each event is compared only with rows whose time is strictly larger, which
    are exactly the rows inserted before its tie group.
    """
    p_arr = np.ascontiguousarray(pred, dtype=np.float64)
    t_arr = np.ascontiguousarray(times, dtype=np.float64)
    cdef Py_ssize_t n = t_arr.shape[0]
    cdef cnp.intp_t[::1] order = np.argsort(-t_arr, kind="stable").astype(np.intp)
    cdef cnp.intp_t[::1] rank = (np.searchsorted(np.unique(p_arr), p_arr) + 1).astype(np.intp)
    cdef cnp.float64_t[::1] t = t_arr
    cdef cnp.uint8_t[::1] e = np.ascontiguousarray(events, dtype=np.uint8)
    cdef Py_ssize_t m = n + 1
    cdef cnp.int64_t[::1] tree = np.zeros(m + 1, dtype=np.int64)
    cdef Py_ssize_t a = 0, b, k, i, r
    cdef long long inserted = 0, den = 0, wins = 0, ties = 0, le, lt
    with nogil:
        while a < n:
            b = a
            while b + 1 < n and t[order[b + 1]] == t[order[a]]:
                b += 1
            for k in range(a, b + 1):
                i = order[k]
                if not e[i]:
                    continue
                le = 0
                r = rank[i]
                while r > 0:
                    le += tree[r]
                    r -= r & -r
                lt = 0
                r = rank[i] - 1
                while r > 0:
                    lt += tree[r]
                    r -= r & -r
                den += inserted
                wins += inserted - le
                ties += le - lt
            for k in range(a, b + 1):
                r = rank[order[k]]
                while r <= m:
                    tree[r] += 1
                    r += r & -r
                inserted += 1
            a = b + 1
    cdef double num = <double>wins
    if tie_credit:
        num += 0.5 * ties
    return num, int(den)
