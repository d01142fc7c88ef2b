# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Kalman kernels: forward filter and backward r/N smoother.

Mirrors the pure-Python module ``_kalman_py`` exactly; selected at import
time in ``kalman.py``.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport log, sqrt

cnp.import_array()

cdef double LOG_2PI = 1.8378770664093453


from mbsts_tl._kalman_py import SingularInnovationError


cdef inline void _mm(double[:, ::1] A, double[:, ::1] B, double[:, ::1] C,
                     Py_ssize_t ai, Py_ssize_t aj, Py_ssize_t bj):
    # C[ai, bj] = A[ai, aj] @ B[aj, bj]
    cdef Py_ssize_t i, j, k
    cdef double s
    for i in range(ai):
        for j in range(bj):
            s = 0.0
            for k in range(aj):
                s += A[i, k] * B[k, j]
            C[i, j] = s


cdef inline void _mm_nt(double[:, ::1] A, double[:, ::1] B, double[:, ::1] C,
                        Py_ssize_t ai, Py_ssize_t aj, Py_ssize_t bi):
    # C[ai, bi] = A[ai, aj] @ B[bi, aj].T
    cdef Py_ssize_t i, j, k
    cdef double s
    for i in range(ai):
        for j in range(bi):
            s = 0.0
            for k in range(aj):
                s += A[i, k] * B[j, k]
            C[i, j] = s


cdef inline void _mm_tn(double[:, ::1] A, double[:, ::1] B, double[:, ::1] C,
                        Py_ssize_t ai, Py_ssize_t aj, Py_ssize_t bj):
    # C[aj, bj] = A[ai, aj].T @ B[ai, bj]
    cdef Py_ssize_t i, j, k
    cdef double s
    for i in range(aj):
        for j in range(bj):
            s = 0.0
            for k in range(ai):
                s += A[k, i] * B[k, j]
            C[i, j] = s


cdef inline int _chol(double[:, ::1] A, Py_ssize_t n):
    # In-place lower Cholesky; zeroes the strict upper triangle.
    cdef Py_ssize_t i, j, k
    cdef double s
    for j in range(n):
        s = A[j, j]
        for k in range(j):
            s -= A[j, k] * A[j, k]
        if s <= 0.0:
            return -1
        A[j, j] = sqrt(s)
        for i in range(j + 1, n):
            s = A[i, j]
            for k in range(j):
                s -= A[i, k] * A[j, k]
            A[i, j] = s / A[j, j]
        for i in range(j):
            A[i, j] = 0.0
    return 0


cdef inline void _chol_inverse(double[:, ::1] L, double[:, ::1] Ainv,
                               double[::1] work, Py_ssize_t n):
    # Ainv = (L L.T)^{-1}, column by column via two triangular solves.
    cdef Py_ssize_t col, i, k
    cdef double s
    for col in range(n):
        for i in range(n):
            s = 1.0 if i == col else 0.0
            for k in range(i):
                s -= L[i, k] * work[k]
            work[i] = s / L[i, i]
        for i in range(n - 1, -1, -1):
            s = work[i]
            for k in range(i + 1, n):
                s -= L[k, i] * Ainv[k, col]
            Ainv[i, col] = s / L[i, i]


def kf_forward(object T_in, object Z_in, object Q_in, object R_in,
               object a0_in, object P0_in, object y_in):
    """Forward Kalman pass; see ``_kalman_py.kf_forward`` for the contract."""
    cdef double[:, ::1] T = np.ascontiguousarray(T_in, dtype=np.float64)
    cdef double[:, ::1] Z = np.ascontiguousarray(Z_in, dtype=np.float64)
    cdef double[:, ::1] Q = np.ascontiguousarray(Q_in, dtype=np.float64)
    cdef double[:, ::1] R = np.ascontiguousarray(R_in, dtype=np.float64)
    cdef cnp.ndarray y_arr = np.ascontiguousarray(y_in, dtype=np.float64)
    cdef double[:, ::1] y = y_arr

    cdef Py_ssize_t n_obs = y.shape[0]
    cdef Py_ssize_t p = y.shape[1]
    cdef Py_ssize_t n = T.shape[0]

    apred_arr = np.empty((n_obs, n))
    Ppred_arr = np.empty((n_obs, n, n))
    att_arr = np.empty((n_obs, n))
    Ptt_arr = np.empty((n_obs, n, n))
    vs_arr = np.empty((n_obs, p))
    Finv_arr = np.empty((n_obs, p, p))
    cdef double[:, ::1] apred = apred_arr
    cdef double[:, :, ::1] Ppred = Ppred_arr
    cdef double[:, ::1] att = att_arr
    cdef double[:, :, ::1] Ptt = Ptt_arr
    cdef double[:, ::1] vs = vs_arr
    cdef double[:, :, ::1] Finv = Finv_arr

    cdef double[::1] a = np.array(a0_in, dtype=np.float64).ravel().copy()
    cdef double[:, ::1] P = np.ascontiguousarray(P0_in, dtype=np.float64).copy()

    cdef double[:, ::1] PZt = np.empty((n, p))
    cdef double[:, ::1] F = np.empty((p, p))
    cdef double[:, ::1] Fi = np.empty((p, p))
    cdef double[:, ::1] K = np.empty((n, p))
    cdef double[:, ::1] TP = np.empty((n, n))
    cdef double[::1] v = np.empty(p)
    cdef double[::1] w = np.empty(p)
    cdef double[::1] work = np.empty(p)

    cdef double loglik = 0.0
    cdef Py_ssize_t t, i, j, k
    cdef double s

    for t in range(n_obs):
        for i in range(n):
            apred[t, i] = a[i]
            for j in range(n):
                Ppred[t, i, j] = P[i, j]
        # v = y[t] - Z a
        for i in range(p):
            s = y[t, i]
            for k in range(n):
                s -= Z[i, k] * a[k]
            v[i] = s
            vs[t, i] = s
        _mm_nt(P, Z, PZt, n, n, p)
        # F = Z PZt + R, symmetrized
        for i in range(p):
            for j in range(p):
                s = R[i, j]
                for k in range(n):
                    s += Z[i, k] * PZt[k, j]
                F[i, j] = s
        for i in range(p):
            for j in range(i):
                s = 0.5 * (F[i, j] + F[j, i])
                F[i, j] = s
                F[j, i] = s
        if _chol(F, p) != 0:
            raise SingularInnovationError(
                f"innovation covariance singular at t={t}")
        # log-likelihood via triangular solve
        for i in range(p):
            s = v[i]
            for k in range(i):
                s -= F[i, k] * w[k]
            w[i] = s / F[i, i]
        s = 0.0
        for i in range(p):
            s += w[i] * w[i]
            loglik -= log(F[i, i])
        loglik -= 0.5 * (p * LOG_2PI + s)
        _chol_inverse(F, Fi, work, p)
        for i in range(p):
            for j in range(p):
                Finv[t, i, j] = Fi[i, j]
        _mm(PZt, Fi, K, n, p, p)
        # filtered moments
        for i in range(n):
            s = a[i]
            for k in range(p):
                s += K[i, k] * v[k]
            att[t, i] = s
        for i in range(n):
            for j in range(i + 1):
                s = P[i, j]
                for k in range(p):
                    s -= K[i, k] * PZt[j, k]
                Ptt[t, i, j] = s
        for i in range(n):
            for j in range(i):
                Ptt[t, j, i] = Ptt[t, i, j]
        # predict
        for i in range(n):
            s = 0.0
            for k in range(n):
                s += T[i, k] * att[t, k]
            a[i] = s
        _mm(T, Ptt_arr[t], TP, n, n, n)
        for i in range(n):
            for j in range(i + 1):
                s = Q[i, j]
                for k in range(n):
                    s += TP[i, k] * T[j, k]
                P[i, j] = s
                P[j, i] = s
    return loglik, apred_arr, Ppred_arr, att_arr, Ptt_arr, vs_arr, Finv_arr


def dk_backward(object T_in, object Z_in, object apred_in, object Ppred_in,
                object vs_in, object Finv_in):
    """Backward r/N smoothing pass; see ``_kalman_py.dk_backward``."""
    cdef double[:, ::1] T = np.ascontiguousarray(T_in, dtype=np.float64)
    cdef double[:, ::1] Z = np.ascontiguousarray(Z_in, dtype=np.float64)
    cdef double[:, ::1] apred = np.ascontiguousarray(apred_in, dtype=np.float64)
    cdef double[:, :, ::1] Ppred = np.ascontiguousarray(Ppred_in, dtype=np.float64)
    cdef double[:, ::1] vs = np.ascontiguousarray(vs_in, dtype=np.float64)
    cdef double[:, :, ::1] Finv = np.ascontiguousarray(Finv_in, dtype=np.float64)

    cdef Py_ssize_t n_obs = apred.shape[0]
    cdef Py_ssize_t n = apred.shape[1]
    cdef Py_ssize_t p = vs.shape[1]

    asm_arr = np.empty((n_obs, n))
    Vsm_arr = np.empty((n_obs, n, n))
    cdef double[:, ::1] asm = asm_arr
    cdef double[:, :, ::1] Vsm = Vsm_arr

    cdef double[::1] r = np.zeros(n)
    cdef double[::1] r_new = np.empty(n)
    cdef double[:, ::1] N = np.zeros((n, n))
    cdef double[:, ::1] N_new = np.empty((n, n))
    cdef double[:, ::1] ZtFi = np.empty((n, p))
    cdef double[:, ::1] M = np.empty((n, p))
    cdef double[:, ::1] K = np.empty((n, p))
    cdef double[:, ::1] L = np.empty((n, n))
    cdef double[:, ::1] NL = np.empty((n, n))
    cdef double[:, ::1] PN = np.empty((n, n))
    cdef double[:, ::1] Pt = np.empty((n, n))

    cdef Py_ssize_t t, i, j, k
    cdef double s

    for t in range(n_obs - 1, -1, -1):
        for i in range(n):
            for j in range(n):
                Pt[i, j] = Ppred[t, i, j]
        # ZtFi = Z.T @ Finv[t]
        for i in range(n):
            for j in range(p):
                s = 0.0
                for k in range(p):
                    s += Z[k, i] * Finv[t, k, j]
                ZtFi[i, j] = s
        _mm(Pt, ZtFi, M, n, n, p)
        _mm(T, M, K, n, n, p)
        # L = T - K Z
        for i in range(n):
            for j in range(n):
                s = T[i, j]
                for k in range(p):
                    s -= K[i, k] * Z[k, j]
                L[i, j] = s
        # r_new = ZtFi v + L.T r
        for i in range(n):
            s = 0.0
            for k in range(p):
                s += ZtFi[i, k] * vs[t, k]
            for k in range(n):
                s += L[k, i] * r[k]
            r_new[i] = s
        # N_new = ZtFi Z + L.T N L
        _mm(N, L, NL, n, n, n)
        for i in range(n):
            for j in range(n):
                s = 0.0
                for k in range(p):
                    s += ZtFi[i, k] * Z[k, j]
                for k in range(n):
                    s += L[k, i] * NL[k, j]
                N_new[i, j] = s
        # smoothed moments
        for i in range(n):
            s = apred[t, i]
            for k in range(n):
                s += Pt[i, k] * r_new[k]
            asm[t, i] = s
        _mm(Pt, N_new, PN, n, n, n)
        for i in range(n):
            for j in range(i + 1):
                s = 0.0
                for k in range(n):
                    s += PN[i, k] * Pt[k, j]
                Vsm[t, i, j] = Pt[i, j] - s
                Vsm[t, j, i] = Vsm[t, i, j]
        for i in range(n):
            r[i] = r_new[i]
            for j in range(n):
                N[i, j] = N_new[i, j]
    return asm_arr, Vsm_arr
