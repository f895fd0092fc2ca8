# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled cluster loops for the QIF scores and Jacobian.

Same contract as ``gaplm._kernels_py.qif_blocks``; the structured basis
matrices are applied implicitly (cluster sums for EC, neighbours for AR1)
so no T x T matrix is ever formed. Cluster loops are compiled and the final
Jacobian contraction goes to BLAS.
"""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def qif_rows(const double[:, ::1] D, const double[::1] a, const double[::1] da,
             const double[::1] v, const double[::1] dv, const cnp.int64_t[::1] starts,
             int code, int K):
    # One pass builds the scores and the rows R (N, K*p) with
    # R[t, block k] = da_t (M_k v)_t D_t + a_t (M_k (dv D))_t; the Jacobian is D^T R.
    cdef Py_ssize_t N = D.shape[0]
    cdef Py_ssize_t p = D.shape[1]
    cdef Py_ssize_t n = starts.shape[0] - 1
    scores_arr = np.zeros((n, K * p))
    rows_arr = np.empty((N, K * p))
    sd_arr = np.zeros(p)
    cdef double[:, ::1] S = scores_arr
    cdef double[:, ::1] R = rows_arr
    cdef double[::1] sd = sd_arr
    cdef Py_ssize_t i, t, j, s0, s1
    cdef double vsum, mv, u0, u1, w0, w1, cp, cn

    with nogil:
        for i in range(n):
            s0 = starts[i]
            s1 = starts[i + 1]
            if code == 1 and K == 2:
                vsum = 0.0
                for j in range(p):
                    sd[j] = 0.0
                for t in range(s0, s1):
                    vsum += v[t]
                    for j in range(p):
                        sd[j] += dv[t] * D[t, j]
            for t in range(s0, s1):
                u0 = a[t] * v[t]
                w0 = da[t] * v[t] + a[t] * dv[t]
                for j in range(p):
                    S[i, j] += D[t, j] * u0
                    R[t, j] = w0 * D[t, j]
                if K == 2:
                    if code == 1:
                        mv = vsum - v[t]
                        u1 = a[t] * mv
                        w1 = da[t] * mv - a[t] * dv[t]
                        for j in range(p):
                            S[i, p + j] += D[t, j] * u1
                            R[t, p + j] = w1 * D[t, j] + a[t] * sd[j]
                    else:
                        mv = 0.0
                        cp = 0.0
                        cn = 0.0
                        if t > s0:
                            mv += v[t - 1]
                            cp = a[t] * dv[t - 1]
                        if t < s1 - 1:
                            mv += v[t + 1]
                            cn = a[t] * dv[t + 1]
                        u1 = a[t] * mv
                        w1 = da[t] * mv
                        for j in range(p):
                            S[i, p + j] += D[t, j] * u1
                            R[t, p + j] = w1 * D[t, j]
                        if cp != 0.0:
                            for j in range(p):
                                R[t, p + j] += cp * D[t - 1, j]
                        if cn != 0.0:
                            for j in range(p):
                                R[t, p + j] += cn * D[t + 1, j]

    return scores_arr, rows_arr


def qif_blocks(D, a, da, v, dv, starts, code, K):
    scores, rows = qif_rows(D, a, da, v, dv, starts, code, K)
    Dm = np.asarray(D)
    jt = Dm.T @ rows                     # (p, K*p), column block k is Jacobian block k
    p = Dm.shape[1]
    return scores, np.ascontiguousarray(np.vstack([jt[:, i * p:(i + 1) * p] for i in range(K)]))


def qif_scores(const double[:, ::1] D, const double[::1] a, const double[::1] v,
               const cnp.int64_t[::1] starts, int code, int K):
    cdef Py_ssize_t p = D.shape[1]
    cdef Py_ssize_t n = starts.shape[0] - 1
    scores_arr = np.zeros((n, K * p))
    cdef double[:, ::1] S = scores_arr
    cdef Py_ssize_t i, t, j, s0, s1
    cdef double vsum, mv, u0, u1
    with nogil:
        for i in range(n):
            s0 = starts[i]
            s1 = starts[i + 1]
            vsum = 0.0
            if code == 1 and K == 2:
                for t in range(s0, s1):
                    vsum += v[t]
            for t in range(s0, s1):
                u0 = a[t] * v[t]
                if K == 2:
                    if code == 1:
                        mv = vsum - v[t]
                    else:
                        mv = 0.0
                        if t > s0:
                            mv += v[t - 1]
                        if t < s1 - 1:
                            mv += v[t + 1]
                    u1 = a[t] * mv
                    for j in range(p):
                        S[i, j] += D[t, j] * u0
                        S[i, p + j] += D[t, j] * u1
                else:
                    for j in range(p):
                        S[i, j] += D[t, j] * u0
    return scores_arr
