"""Pure-NumPy Kalman kernels (fallback for the compiled extension).

Both implementations share the same signatures and are benchmarked
against each other in ``benchmarks/bench_kalman.py``.
"""

from __future__ import annotations

import numpy as np

_LOG_2PI = float(np.log(2.0 * np.pi))


class SingularInnovationError(RuntimeError):
    """Innovation covariance not positive definite (degenerate R and Q)."""


def kf_forward(T, Z, Q, R, a0, P0, y):
    """Forward Kalman pass.

    Returns (loglik, apred, Ppred, att, Ptt, v, Finv) where apred/Ppred are
    the one-step predictive moments of the state at each time (the prior
    a0/P0 at t=0), att/Ptt the filtered moments, v the innovations and Finv
    the inverted innovation covariances.
    """
    y = np.asarray(y, dtype=float)
    n_obs, p = y.shape
    n = T.shape[0]
    apred = np.empty((n_obs, n))
    Ppred = np.empty((n_obs, n, n))
    att = np.empty((n_obs, n))
    Ptt = np.empty((n_obs, n, n))
    vs = np.empty((n_obs, p))
    Finv = np.empty((n_obs, p, p))

    a = np.array(a0, dtype=float)
    P = np.array(P0, dtype=float)
    loglik = 0.0
    eye_p = np.eye(p)
    for t in range(n_obs):
        apred[t] = a
        Ppred[t] = P
        v = y[t] - Z @ a
        PZt = P @ Z.T
        F = Z @ PZt + R
        F = 0.5 * (F + F.T)
        try:
            L = np.linalg.cholesky(F)
        except np.linalg.LinAlgError as exc:
            raise SingularInnovationError(
                f"innovation covariance singular at t={t}") from exc
        w = np.linalg.solve(L, v)
        loglik += -0.5 * (p * _LOG_2PI + w @ w) - np.log(np.diag(L)).sum()
        Fi = np.linalg.solve(L.T, np.linalg.solve(L, eye_p))
        K = PZt @ Fi
        a_f = a + K @ v
        P_f = P - K @ PZt.T
        P_f = 0.5 * (P_f + P_f.T)
        att[t] = a_f
        Ptt[t] = P_f
        vs[t] = v
        Finv[t] = Fi
        a = T @ a_f
        P = T @ P_f @ T.T + Q
        P = 0.5 * (P + P.T)
    return loglik, apred, Ppred, att, Ptt, vs, Finv


def dk_backward(T, Z, apred, Ppred, vs, Finv):
    """Fixed-interval smoother via the backward r/N recursion.

    Avoids inverting predictive state covariances (which are singular when
    the state carries a constant slot), using only the innovation inverses
    produced by the forward pass.
    """
    n_obs, n = apred.shape
    asm = np.empty((n_obs, n))
    Vsm = np.empty((n_obs, n, n))
    r = np.zeros(n)
    N = np.zeros((n, n))
    for t in range(n_obs - 1, -1, -1):
        Fi = Finv[t]
        ZtFi = Z.T @ Fi
        K = T @ Ppred[t] @ ZtFi
        L = T - K @ Z
        r = ZtFi @ vs[t] + L.T @ r
        N = ZtFi @ Z + L.T @ N @ L
        asm[t] = apred[t] + Ppred[t] @ r
        V = Ppred[t] - Ppred[t] @ N @ Ppred[t]
        Vsm[t] = 0.5 * (V + V.T)
    return asm, Vsm
