# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot kernels in ``_kernels_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, INFINITY

cnp.import_array()


def softmax_kl_rows(scores_t, scores_s, double tau):
    cdef const double[:, ::1] st = np.ascontiguousarray(scores_t, dtype=np.float64)
    cdef const double[:, ::1] ss = np.ascontiguousarray(scores_s, dtype=np.float64)
    cdef Py_ssize_t b = st.shape[0], n = st.shape[1]
    if ss.shape[0] != b or ss.shape[1] != n:
        raise ValueError("score matrices must have equal shapes")
    kl_arr = np.empty(b, dtype=np.float64)
    grad_arr = np.empty((b, n), dtype=np.float64)
    es_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] kl = kl_arr
    cdef double[:, ::1] grad = grad_arr
    cdef double[::1] es = es_arr
    cdef Py_ssize_t i, j
    cdef double inv_tau = 1.0 / tau
    cdef double mt, ms, et, sum_t, sum_s, lse_t, lse_s, lpt, lps, pt, acc
    with nogil:
        for i in range(b):
            mt = -INFINITY
            ms = -INFINITY
            for j in range(n):
                if st[i, j] > mt:
                    mt = st[i, j]
                if ss[i, j] > ms:
                    ms = ss[i, j]
            sum_t = 0.0
            sum_s = 0.0
            # grad row doubles as scratch for the teacher exponentials
            for j in range(n):
                et = exp((st[i, j] - mt) * inv_tau)
                grad[i, j] = et
                sum_t += et
                es[j] = exp((ss[i, j] - ms) * inv_tau)
                sum_s += es[j]
            lse_t = log(sum_t)
            lse_s = log(sum_s)
            acc = 0.0
            for j in range(n):
                pt = grad[i, j] / sum_t
                lpt = (st[i, j] - mt) * inv_tau - lse_t
                lps = (ss[i, j] - ms) * inv_tau - lse_s
                acc += pt * (lpt - lps)
                grad[i, j] = (es[j] / sum_s - pt) * inv_tau
            kl[i] = acc if acc > 0.0 else 0.0
    return kl_arr, grad_arr


def hungarian_min(cost):
    cdef const double[:, ::1] c = np.ascontiguousarray(cost, dtype=np.float64)
    cdef Py_ssize_t n = c.shape[0]
    if c.shape[1] != n:
        raise ValueError("cost matrix must be square")
    u_arr = np.zeros(n + 1)
    v_arr = np.zeros(n + 1)
    minv_arr = np.empty(n + 1)
    p_arr = np.zeros(n + 1, dtype=np.intp)
    way_arr = np.zeros(n + 1, dtype=np.intp)
    used_arr = np.zeros(n + 1, dtype=np.uint8)
    cdef double[::1] u = u_arr, v = v_arr, minv = minv_arr
    cdef Py_ssize_t[::1] p = p_arr, way = way_arr
    cdef unsigned char[::1] used = used_arr
    cdef Py_ssize_t i, j, i0, j0, j1
    cdef double delta, cur
    with nogil:
        for i in range(1, n + 1):
            p[0] = i
            j0 = 0
            for j in range(n + 1):
                minv[j] = INFINITY
                used[j] = 0
            while True:
                used[j0] = 1
                i0 = p[j0]
                delta = INFINITY
                j1 = 0
                for j in range(1, n + 1):
                    if not used[j]:
                        cur = c[i0 - 1, j - 1] - u[i0] - v[j]
                        if cur < minv[j]:
                            minv[j] = cur
                            way[j] = j0
                        if minv[j] < delta:
                            delta = minv[j]
                            j1 = j
                for j in range(n + 1):
                    if used[j]:
                        u[p[j]] += delta
                        v[j] -= delta
                    else:
                        minv[j] -= delta
                j0 = j1
                if p[j0] == 0:
                    break
            while True:
                j1 = way[j0]
                p[j0] = p[j1]
                j0 = j1
                if j0 == 0:
                    break
    col_of_row = np.empty(n, dtype=np.int64)
    for j in range(1, n + 1):
        col_of_row[p[j] - 1] = j - 1
    return col_of_row
