"""Univariate linear Gaussian state-space filter and smoother.

    y_t = Z a_t + d_t + e_t,          e_t ~ N(0, H)
    a_{t+1} = T a_t + R n_t,          n_t ~ N(0, Q)

``RQR`` stands for ``R Q R'``. Diffuse states are handled with a large initial
variance; the first ``n_skip`` prediction errors are then left out of the
likelihood.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy import linalg

LOG2PI = float(np.log(2 * np.pi))


@njit(cache=True)
def _filter(y, Z, d, H, T, RQR, a1, P1, n_skip, store):
    n = y.shape[0]
    m = a1.shape[0]
    a = a1.copy()
    P = P1.copy()
    v = np.zeros(n)
    F = np.zeros(n)
    a_pred = np.zeros((n + 1 if store else 1, m))
    P_pred = np.zeros((n + 1 if store else 1, m, m))
    Tt = np.ascontiguousarray(T.T)
    sum_logf = 0.0
    sum_v2f = 0.0
    used = 0
    for t in range(n):
        if store:
            a_pred[t] = a
            P_pred[t] = P
        PZ = P @ Z
        f = Z @ PZ + H
        vt = y[t] - (Z @ a + d[t])
        v[t] = vt
        F[t] = f
        if f > 1e-14 * (1.0 + abs(H)):
            K = PZ / f
            a = a + K * vt
            P = P - np.outer(K, PZ)
            if t >= n_skip:
                sum_logf += np.log(f)
                sum_v2f += vt * vt / f
                used += 1
        a = T @ a
        P = T @ P @ Tt + RQR
        P = 0.5 * (P + P.T)
    if store:
        a_pred[n] = a
        P_pred[n] = P
    return sum_logf, sum_v2f, used, v, F, a, P, a_pred, P_pred


@njit(cache=True)
def _arma_filter(y, phi, R, P1):
    """Concentrated-likelihood filter for an ARMA in Harvey form (unit innovation variance).

    Uses the companion structure of the transition (first column ``phi``,
    ones on the superdiagonal), so each step costs O(m^2) rather than O(m^3).
    """
    n = y.shape[0]
    m = phi.shape[0]
    a = np.zeros(m)
    P = P1.copy()
    TP = np.zeros((m, m))
    row = np.zeros(m)
    v = np.zeros(n)
    F = np.zeros(n)
    sum_logf = 0.0
    sum_v2f = 0.0
    used = 0
    for t in range(n):
        f = P[0, 0]
        vt = y[t] - a[0]
        v[t] = vt
        F[t] = f
        if f > 1e-14:
            k0 = vt / f
            for i in range(m):
                a[i] += P[i, 0] * k0
                row[i] = P[0, i]
            for i in range(m):
                ci = row[i] / f
                for j in range(m):
                    P[i, j] -= ci * row[j]
            sum_logf += np.log(f)
            sum_v2f += vt * vt / f
            used += 1
        a0 = a[0]
        for i in range(m - 1):
            a[i] = phi[i] * a0 + a[i + 1]
        a[m - 1] = phi[m - 1] * a0
        for i in range(m):
            for j in range(m):
                TP[i, j] = phi[i] * P[0, j] + (P[i + 1, j] if i + 1 < m else 0.0)
        for i in range(m):
            for j in range(i, m):
                val = TP[i, 0] * phi[j] + (TP[i, j + 1] if j + 1 < m else 0.0) + R[i] * R[j]
                P[i, j] = val
                P[j, i] = val
    return sum_logf, sum_v2f, used, v, F, a, P


@njit(cache=True)
def _smooth(Z, T, v, F, a_pred, P_pred, H):
    n = v.shape[0]
    m = Z.shape[0]
    r = np.zeros(m)
    out = np.zeros((n, m))
    for t in range(n - 1, -1, -1):
        P = P_pred[t]
        PZ = P @ Z
        f = F[t]
        if f > 1e-14 * (1.0 + abs(H)):
            K = T @ PZ / f
            L = T - np.outer(K, Z)
            r = Z * (v[t] / f) + np.ascontiguousarray(L.T) @ r
        else:
            r = np.ascontiguousarray(T.T) @ r
        # r now holds r_{t-1}
        out[t] = a_pred[t] + P @ r
    return out


@dataclass
class StateSpace:
    Z: np.ndarray
    T: np.ndarray
    RQR: np.ndarray
    H: float
    a1: np.ndarray
    P1: np.ndarray
    n_skip: int = 0


@dataclass
class FilterResult:
    loglik: float
    v: np.ndarray             # prediction errors
    F: np.ndarray             # prediction-error variances
    predictions: np.ndarray   # one-step predictions of y_t
    a_next: np.ndarray        # predicted state for t = n
    P_next: np.ndarray
    a_pred: np.ndarray | None = None
    P_pred: np.ndarray | None = None
    nobs: int = 0
    sum_logf: float = 0.0
    sum_v2f: float = 0.0


def kalman_filter(model: StateSpace, y, d=None, store: bool = False) -> FilterResult:
    """Prediction-error decomposition of the Gaussian log-likelihood."""
    y = np.ascontiguousarray(y, dtype=float)
    d = np.zeros_like(y) if d is None else np.ascontiguousarray(d, dtype=float)
    out = _filter(y, np.ascontiguousarray(model.Z, float), d, float(model.H),
                  np.ascontiguousarray(model.T, float), np.ascontiguousarray(model.RQR, float),
                  np.ascontiguousarray(model.a1, float), np.ascontiguousarray(model.P1, float),
                  int(model.n_skip), store)
    slf, sv2, used, v, F, a, P, a_pred, P_pred = out
    ll = -0.5 * (used * LOG2PI + slf + sv2)
    return FilterResult(float(ll) if np.isfinite(ll) else -np.inf, v, F, y - v, a, P,
                        a_pred if store else None, P_pred if store else None, int(used), float(slf), float(sv2))


def kalman_loglik(model: StateSpace, y, d=None) -> FilterResult:
    """Log-likelihood with one-step predictions and their variances (alias of :func:`kalman_filter`)."""
    return kalman_filter(model, y, d)


def arma_filter(phi: np.ndarray, R: np.ndarray, P1: np.ndarray, y) -> FilterResult:
    """Fast path of :func:`kalman_filter` for Harvey-form ARMA models with ``Z = e_1`` and ``H = 0``."""
    y = np.ascontiguousarray(y, dtype=float)
    slf, sv2, used, v, F, a, P = _arma_filter(y, np.ascontiguousarray(phi, float),
                                              np.ascontiguousarray(R, float), np.ascontiguousarray(P1, float))
    ll = -0.5 * (used * LOG2PI + slf + sv2)
    return FilterResult(float(ll) if np.isfinite(ll) else -np.inf, v, F, y - v, a, P, None, None,
                        int(used), float(slf), float(sv2))


def kalman_smoother(model: StateSpace, y, d=None) -> np.ndarray:
    """Smoothed states ``E[a_t | y_1..y_n]`` (fixed-interval, backward recursion)."""
    res = kalman_filter(model, y, d, store=True)
    return _smooth(np.ascontiguousarray(model.Z, float), np.ascontiguousarray(model.T, float),
                   res.v, res.F, res.a_pred, res.P_pred, float(model.H))


def stationary_cov(T: np.ndarray, RQR: np.ndarray) -> np.ndarray:
    """Solution ``P`` of ``P = T P T' + RQR`` for a stable transition matrix."""
    return linalg.solve_discrete_lyapunov(T, RQR)
