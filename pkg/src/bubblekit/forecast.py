"""Forecasting models, rolling one-step evaluation and forecast comparison.

SARIMA(X) models are regressions with seasonal ARIMA errors,

    phi(L) Phi(L^s) (1 - L)^d (1 - L^s)^D (y_t - x_t' beta) = theta(L) Theta(L^s) e_t,

estimated by exact maximum likelihood: the differenced errors follow a
stationary ARMA whose likelihood comes from the Kalman filter, with the
innovation variance concentrated out. AR and MA polynomials are parameterized
through partial autocorrelations, so every candidate is stationary and
invertible.

The structural model has a local linear trend, a dummy seasonal and a lagged
dependent term,

    y_t = mu_t + tau_t + phi y_{t-1} + e_t,
    mu_{t+1} = mu_t + delta_t + u_t,  delta_{t+1} = delta_t + v_t,
    tau_{t+1} = -(tau_t + ... + tau_{t-S+2}) + w_t,

with variances estimated by maximum likelihood.
"""
from __future__ import annotations

import csv
import io
import json
import warnings
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np
from scipy import optimize, signal, stats

from ._kalman import StateSpace, arma_filter, kalman_filter, kalman_smoother, stationary_cov
from ._validation import DataError, NumericError, as_1d, as_2d
from .ts import Dataset, TimeSeries, format_month
from .unitroot import kpss_test

# partial autocorrelations are kept within tanh(+-4.5), about +-0.9998
PACF_BOUND = 4.5

# --------------------------------------------------------------------------
# orders and polynomials


@dataclass(frozen=True)
class SarimaOrder:
    p: int = 0
    d: int = 0
    q: int = 0
    P: int = 0
    D: int = 0
    Q: int = 0
    s: int = 12

    def __post_init__(self):
        vals = (self.p, self.d, self.q, self.P, self.D, self.Q)
        if any(int(v) != v or v < 0 for v in vals):
            raise DataError("orders must be nonnegative integers")
        if self.d + self.D > 2:
            raise DataError("total differencing d + D must be <= 2")
        if (self.P or self.D or self.Q) and self.s < 2:
            raise DataError("season length must be >= 2 with seasonal terms")

    @property
    def n_arma(self) -> int:
        return self.p + self.q + self.P + self.Q

    def __str__(self) -> str:
        return f"({self.p},{self.d},{self.q})({self.P},{self.D},{self.Q})[{self.s}]"

    @classmethod
    def parse(cls, text: str) -> "SarimaOrder":
        """``"p,d,q"`` or ``"p,d,q,P,D,Q,s"``."""
        vals = [int(v) for v in text.replace("(", ",").replace(")", ",").replace("[", ",").replace("]", ",")
                .split(",") if v.strip()]
        if len(vals) == 3:
            return cls(*vals)
        if len(vals) in (6, 7):
            return cls(*vals)
        raise DataError(f"cannot parse order {text!r}")


def constrain_pacf(x: np.ndarray) -> np.ndarray:
    """Map unconstrained reals to the coefficients of a stationary AR polynomial.

    ``tanh`` gives partial autocorrelations in (-1, 1); the Durbin-Levinson
    recursion turns them into AR coefficients.
    """
    r = np.tanh(np.asarray(x, float))
    phi = np.empty(0)
    for k in range(r.size):
        new = np.empty(k + 1)
        new[k] = r[k]
        new[:k] = phi - r[k] * phi[::-1]
        phi = new
    return phi


def unconstrain_pacf(phi: np.ndarray) -> np.ndarray:
    """Inverse of :func:`constrain_pacf` (requires a stationary polynomial)."""
    phi = np.array(phi, float)
    p = phi.size
    r = np.empty(p)
    for k in range(p - 1, -1, -1):
        rk = phi[k]
        if not abs(rk) < 1:
            raise DataError("polynomial is not stationary")
        r[k] = rk
        if k:
            phi = (phi[:k] + rk * phi[:k][::-1]) / (1 - rk * rk)
    return np.arctanh(r)


def _lagpoly(coefs: np.ndarray, step: int, sign: float) -> np.ndarray:
    out = np.zeros(step * len(coefs) + 1)
    out[0] = 1.0
    out[step::step] = sign * np.asarray(coefs)
    return out


def _diff_poly(d: int, D: int, s: int) -> np.ndarray:
    c = np.array([1.0])
    for _ in range(d):
        c = np.convolve(c, [1.0, -1.0])
    for _ in range(D):
        c = np.convolve(c, _lagpoly([1.0], s, -1.0))
    return c


def difference(x: np.ndarray, order: SarimaOrder) -> np.ndarray:
    """Apply ``(1 - L)^d (1 - L^s)^D`` along the first axis (drops the first d + sD rows)."""
    c = _diff_poly(order.d, order.D, order.s)
    k = c.size - 1
    x = np.asarray(x, float)
    out = sum(c[j] * x[k - j:x.shape[0] - j] for j in range(c.size))
    return np.asarray(out)


def _arma_ss(ar: np.ndarray, ma: np.ndarray) -> StateSpace:
    """Harvey state-space form of ``w_t = sum ar_i w_{t-i} + e_t + sum ma_j e_{t-j}`` (unit variance)."""
    r = max(len(ar), len(ma) + 1, 1)
    T = np.zeros((r, r))
    T[:len(ar), 0] = ar
    T[np.arange(r - 1), np.arange(1, r)] = 1.0
    R = np.zeros(r)
    R[0] = 1.0
    R[1:len(ma) + 1] = ma
    RQR = np.outer(R, R)
    Z = np.zeros(r)
    Z[0] = 1.0
    P1 = stationary_cov(T, RQR) if r > 1 or T[0, 0] != 0 else RQR.copy()
    return StateSpace(Z, T, RQR, 0.0, np.zeros(r), P1, 0)


def _arma_run(ss: StateSpace, w: np.ndarray):
    return arma_filter(ss.T[:, 0], ss.RQR[:, 0], ss.P1, w)


def _psi_weights(ar: np.ndarray, ma: np.ndarray, n: int) -> np.ndarray:
    psi = np.zeros(n)
    for j in range(n):
        v = 1.0 if j == 0 else (ma[j - 1] if j - 1 < len(ma) else 0.0)
        for i in range(1, min(j, len(ar)) + 1):
            v += ar[i - 1] * psi[j - i]
        psi[j] = v
    return psi


def _numgrad(f, x, h=1e-6):
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h * max(1.0, abs(x[i]))
        g[i] = (f(x + e) - f(x - e)) / (2 * e[i])
    return g


def _minimize(f, x0, bounds=None, maxiter=500):
    if x0.size == 0:
        return x0, True, "no free parameters", 0
    res = optimize.minimize(f, x0, jac=lambda z: _numgrad(f, z), method="L-BFGS-B", bounds=bounds,
                            options={"maxiter": maxiter, "ftol": 1e-15, "gtol": 1e-9, "maxls": 50})
    return res.x, bool(res.success), str(res.message), int(res.nit)


def _series(y, name="y"):
    if isinstance(y, TimeSeries):
        return y.values, y.start, y.name
    return as_1d(y, name), None, name


def _exog(X, n):
    if X is None:
        return np.empty((n, 0)), []
    if isinstance(X, Dataset):
        return X.matrix(), X.names
    X = as_2d(X, "X")
    return X, [f"x{j + 1}" for j in range(X.shape[1])]


# --------------------------------------------------------------------------
# SARIMA(X)


@dataclass
class SarimaFit:
    order: SarimaOrder
    ar: np.ndarray
    ma: np.ndarray
    sar: np.ndarray
    sma: np.ndarray
    beta: np.ndarray
    exog_names: list
    include_mean: bool
    sigma2: float
    loglik: float
    nobs: int
    converged: bool
    message: str
    grad_norm: float
    y: np.ndarray = field(repr=False)
    X: np.ndarray = field(repr=False)
    start: int | None = None
    fitted: np.ndarray = field(repr=False, default=None)     # one-step predictions of y (NaN before differencing)
    fitted_var: np.ndarray = field(repr=False, default=None)
    a_next: np.ndarray = field(repr=False, default=None)
    P_next: np.ndarray = field(repr=False, default=None)
    x_opt: np.ndarray = field(repr=False, default=None)

    @property
    def n_params(self) -> int:
        return self.order.n_arma + self.beta.size + 1

    @property
    def aic(self) -> float:
        return -2 * self.loglik + 2 * self.n_params

    @property
    def aicc(self) -> float:
        k, n = self.n_params, self.nobs
        return self.aic + (2 * k * (k + 1) / (n - k - 1) if n - k - 1 > 0 else np.inf)

    @property
    def bic(self) -> float:
        return -2 * self.loglik + np.log(self.nobs) * self.n_params

    def full_polynomials(self) -> tuple[np.ndarray, np.ndarray]:
        """Expanded stationary AR and MA coefficients of the differenced errors."""
        return _expand(self.order, self.ar, self.ma, self.sar, self.sma)

    def forecast(self, steps: int = 1, X_future=None) -> tuple[np.ndarray, np.ndarray]:
        """Point forecasts and standard errors for the next ``steps`` periods.

        The one-step standard error is exact given the parameters; longer
        horizons use the psi weights of the integrated model.
        """
        if steps < 1:
            raise DataError("steps must be >= 1")
        k = self.beta.size
        Xf = _future_exog(X_future, steps, k - int(self.include_mean), self.include_mean)
        ar, ma = self.full_polynomials()
        ss = _arma_ss(ar, ma)
        a, P = self.a_next.copy(), self.P_next.copy()
        w_hat = np.empty(steps)
        f1 = float(ss.Z @ P @ ss.Z)
        for h in range(steps):
            w_hat[h] = ss.Z @ a
            a = ss.T @ a
        c = _diff_poly(self.order.d, self.order.D, self.order.s)
        u = list(self.y - self.X @ self.beta)
        for h in range(steps):
            # w_t = sum_j c_j u_{t-j}  =>  u_t = w_t - sum_{j>=1} c_j u_{t-j}
            u.append(w_hat[h] - sum(c[j] * u[-j] for j in range(1, c.size)))
        mean = np.asarray(u[-steps:]) + Xf @ self.beta
        full_ar = -np.convolve(_lagpoly(ar, 1, -1.0), c)[1:]
        psi = _psi_weights(full_ar, ma, steps)
        var = self.sigma2 * np.cumsum(psi ** 2)
        var[0] = self.sigma2 * f1
        return mean, np.sqrt(var)

    def apply(self, y, X=None) -> "SarimaFit":
        """Same parameters, filtered over new data (no re-estimation)."""
        return _fit_fixed(self, y, X)

    def to_dict(self) -> dict:
        return {"order": str(self.order), "ar": self.ar.tolist(), "ma": self.ma.tolist(),
                "sar": self.sar.tolist(), "sma": self.sma.tolist(), "beta": self.beta.tolist(),
                "exog": (["mean"] if self.include_mean else []) + list(self.exog_names),
                "sigma2": self.sigma2, "loglik": self.loglik, "aicc": self.aicc, "nobs": self.nobs,
                "converged": self.converged, "grad_norm": self.grad_norm}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _future_exog(X_future, steps, k_x, include_mean):
    if k_x == 0:
        Xf = np.empty((steps, 0))
    else:
        if X_future is None:
            raise DataError("future exogenous values are required for a SARIMAX forecast")
        Xf = X_future.matrix() if isinstance(X_future, Dataset) else as_2d(X_future, "X_future")
        if Xf.shape != (steps, k_x):
            raise DataError(f"X_future must have shape ({steps}, {k_x}), got {Xf.shape}")
    if include_mean:
        Xf = np.column_stack([np.ones(steps), Xf])
    return Xf


def _expand(order, ar, ma, sar, sma):
    arp = np.convolve(_lagpoly(ar, 1, -1.0), _lagpoly(sar, order.s, -1.0))
    map_ = np.convolve(_lagpoly(ma, 1, 1.0), _lagpoly(sma, order.s, 1.0))
    return -arp[1:], map_[1:]


def _split(order: SarimaOrder, x: np.ndarray, k: int):
    i = 0
    out = []
    for n, sign in ((order.p, 1.0), (order.q, -1.0), (order.P, 1.0), (order.Q, -1.0)):
        out.append(sign * constrain_pacf(x[i:i + n]))
        i += n
    out.append(x[i:i + k])
    return out


def _concentrated(order, x, w_levels, Xd, k):
    """Concentrated log-likelihood and filter output for parameter vector ``x``."""
    ar, ma, sar, sma, beta = _split(order, x, k)
    w = w_levels - Xd @ beta if k else w_levels
    fa, fm = _expand(order, ar, ma, sar, sma)
    ss = _arma_ss(fa, fm)
    res = _arma_run(ss, w)
    n = res.nobs
    # with unit innovation variance every prediction variance is >= 1; anything
    # else means the stationary covariance was not computed accurately
    if n < w.shape[0] or res.F.min() < 1 - 1e-6:
        return -np.inf, res, np.nan, ss
    s2 = res.sum_v2f / n
    if not (s2 > 0 and np.isfinite(s2)):
        return -np.inf, res, s2, ss
    ll = -0.5 * n * (np.log(2 * np.pi) + 1 + np.log(s2)) - 0.5 * res.sum_logf
    return ll, res, s2, ss


def _css_start(order, wd, Xd, k):
    beta0 = np.linalg.lstsq(Xd, wd, rcond=None)[0] if k else np.empty(0)
    e0 = wd - Xd @ beta0 if k else wd
    m = order.n_arma
    if m == 0:
        return beta0
    cond = order.p + order.s * order.P

    def css(z):
        ar, ma, sar, sma, _ = _split(order, np.concatenate([z, beta0]), k)
        fa, fm = _expand(order, ar, ma, sar, sma)
        e = signal.lfilter(np.r_[1.0, -fa], np.r_[1.0, fm], e0)
        return float(np.mean(e[cond:] ** 2))

    z, *_ = _minimize(css, np.zeros(m), bounds=[(-PACF_BOUND, PACF_BOUND)] * m, maxiter=200)
    return np.concatenate([z, beta0])


def fit_sarima(y, order: SarimaOrder = SarimaOrder(), X=None, include_mean: bool | None = None,
               maxiter: int = 500) -> SarimaFit:
    """Exact maximum-likelihood SARIMA, or SARIMAX when ``X`` is given.

    ``include_mean`` defaults to ``True`` only without differencing. All-zero
    exogenous columns are kept with a zero coefficient.
    """
    yv, start, _ = _series(y)
    n = yv.shape[0]
    Xv, xnames = _exog(X, n)
    if Xv.shape[0] != n:
        raise DataError(f"exogenous data has {Xv.shape[0]} rows, series has {n}")
    if include_mean is None:
        include_mean = order.d + order.D == 0
    Xall = np.column_stack([np.ones(n), Xv]) if include_mean else Xv
    k = Xall.shape[1]
    live = np.any(Xall != 0, axis=0)
    wd = difference(yv, order)
    Xd = difference(Xall, order) if k else np.empty((wd.shape[0], 0))
    n_eff = wd.shape[0]
    n_par = order.n_arma + k + 1
    if n_eff < 3 * n_par:
        raise DataError(f"{n_eff} observations after differencing; need >= {3 * n_par} for {n_par} parameters")
    Xl = Xd[:, live]
    kl = Xl.shape[1]
    if kl:
        sv = np.linalg.svd(Xl, compute_uv=False)
        if sv[-1] <= 1e-10 * sv[0]:
            raise DataError("singular exogenous block (collinear regressors after differencing)")
    x0 = _css_start(order, wd, Xl, kl)
    scale = np.concatenate([np.ones(order.n_arma), np.maximum(np.abs(x0[order.n_arma:]), 1.0)])

    def negll(z):
        ll, *_ = _concentrated(order, z * scale, wd, Xl, kl)
        return -ll / n_eff if np.isfinite(ll) else 1e10

    bounds = [(-PACF_BOUND, PACF_BOUND)] * order.n_arma + [(None, None)] * kl
    z0 = x0 / scale
    z0[:order.n_arma] = np.clip(z0[:order.n_arma], -PACF_BOUND, PACF_BOUND)
    z, ok, msg, _ = _minimize(negll, z0, bounds=bounds, maxiter=maxiter)
    x = z * scale
    ll, res, s2, ss = _concentrated(order, x, wd, Xl, kl)
    if not np.isfinite(ll):
        raise NumericError("non-finite likelihood at the optimum")
    gnorm = float(np.max(np.abs(_numgrad(lambda t: _concentrated(order, t, wd, Xl, kl)[0], x)), initial=0.0))
    ar, ma, sar, sma, bl = _split(order, x, kl)
    beta = np.zeros(k)
    beta[live] = bl
    fit = SarimaFit(order, ar, ma, sar, sma, beta, xnames, bool(include_mean), float(s2), float(ll), n_eff,
                    ok, msg, gnorm, yv.copy(), Xall.copy(), start, x_opt=x)
    _attach_filter(fit, res, ss)
    return fit


def _attach_filter(fit: SarimaFit, res, ss):
    n = fit.y.shape[0]
    k0 = n - res.v.shape[0]
    u = fit.y - fit.X @ fit.beta
    c = _diff_poly(fit.order.d, fit.order.D, fit.order.s)
    fitted = np.full(n, np.nan)
    var = np.full(n, np.nan)
    for i, t in enumerate(range(k0, n)):
        # w_t = u_t + sum_{j>=1} c_j u_{t-j}, so the prediction of u_t drops the known part
        known = sum(c[j] * u[t - j] for j in range(1, c.size))
        fitted[t] = res.predictions[i] - known + fit.X[t] @ fit.beta
        var[t] = res.F[i] * fit.sigma2
    fit.fitted, fit.fitted_var = fitted, var
    fit.a_next, fit.P_next = res.a_next, res.P_next


def _fit_fixed(fit: SarimaFit, y, X=None) -> SarimaFit:
    yv, start, _ = _series(y)
    n = yv.shape[0]
    Xv, _ = _exog(X, n)
    Xall = np.column_stack([np.ones(n), Xv]) if fit.include_mean else Xv
    if Xall.shape[1] != fit.beta.size:
        raise DataError("exogenous columns do not match the fitted model")
    u = yv - Xall @ fit.beta
    w = difference(u, fit.order)
    ar, ma = fit.full_polynomials()
    ss = _arma_ss(ar, ma)
    res = _arma_run(ss, w)
    s2 = fit.sigma2
    ll = -0.5 * (res.nobs * np.log(2 * np.pi * s2) + res.sum_logf + res.sum_v2f / s2)
    out = SarimaFit(fit.order, fit.ar, fit.ma, fit.sar, fit.sma, fit.beta, fit.exog_names, fit.include_mean, s2,
                    float(ll), w.shape[0], fit.converged, "fixed parameters", fit.grad_norm, yv.copy(),
                    Xall.copy(), start, x_opt=fit.x_opt)
    _attach_filter(out, res, ss)
    return out


def kpss_ndiffs(y, alpha: float = 0.05, max_d: int = 2) -> int:
    """Number of first differences until the level KPSS test stops rejecting."""
    x = as_1d(getattr(y, "values", y), "y")
    for d in range(max_d + 1):
        if x.shape[0] < 10 or np.ptp(x) == 0:
            return d
        try:
            res = kpss_test(x, "level")
        except NumericError:
            return d
        if not res.reject[min(res.reject, key=lambda a: abs(a - alpha))]:
            return d
        x = np.diff(x)
    return max_d


def seasonal_strength(y, s: int = 12) -> float:
    """``max(0, 1 - var(remainder) / var(seasonal + remainder))`` from a moving-seasonal decomposition.

    The trend is a centered ``2 x s`` moving average. Each cycle-subseries of
    the detrended data is smoothed with a 3 x 5 moving average, so a drifting
    seasonal pattern is tracked. The seasonal estimate is then re-centered.
    """
    x = as_1d(getattr(y, "values", y), "y")
    n = x.shape[0]
    if n < 2 * s + 1:
        return 0.0
    mw = np.r_[0.5, np.ones(s - 1), 0.5] / s if s % 2 == 0 else np.ones(s) / s
    trend = np.convolve(x, mw, mode="valid")
    off = (mw.size - 1) // 2
    detr = x[off:off + trend.size] - trend
    pos = (np.arange(trend.size) + off) % s
    w = np.array([1.0, 2, 3, 3, 3, 2, 1])
    seas = np.empty_like(detr)
    for j in range(s):
        idx = np.flatnonzero(pos == j)
        seas[idx] = _smooth_same(detr[idx], w)
    seas -= _smooth_same(seas, mw)
    rem = detr - seas
    denom = np.var(seas + rem)
    return 0.0 if denom == 0 else float(max(0.0, 1 - np.var(rem) / denom))


def _smooth_same(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Weighted moving average, renormalized where the window is truncated at the ends."""
    return np.convolve(x, w, mode="same") / np.convolve(np.ones(x.size), w, mode="same")


def auto_order(y, X=None, max_p: int = 3, max_q: int = 3, max_P: int = 2, max_Q: int = 2, s: int = 12,
               d: int | None = None, D: int | None = None) -> tuple[SarimaOrder, list[dict]]:
    """Exhaustive AICc search over ARMA orders after choosing d (KPSS) and D (seasonal strength > 0.64)."""
    yv, _, _ = _series(y)
    if D is None:
        D = int(s >= 2 and seasonal_strength(yv, s) > 0.64)
    if d is None:
        base = difference(yv, SarimaOrder(0, 0, 0, 0, D, 0, s)) if D else yv
        d = min(kpss_ndiffs(base), 2 - D)
    table = []
    best, best_fit = None, None
    seasonal = (D > 0) or max_P > 0 or max_Q > 0
    for p in range(max_p + 1):
        for q in range(max_q + 1):
            for P in range(max_P + 1 if seasonal else 1):
                for Q in range(max_Q + 1 if seasonal else 1):
                    order = SarimaOrder(p, d, q, P, D, Q, s)
                    try:
                        with warnings.catch_warnings():
                            warnings.simplefilter("ignore")
                            fit = fit_sarima(y, order, X)
                    except (DataError, NumericError, np.linalg.LinAlgError) as exc:
                        table.append({"order": str(order), "aicc": None, "error": str(exc)})
                        continue
                    table.append({"order": str(order), "aicc": fit.aicc, "error": None})
                    if np.isfinite(fit.aicc) and (best_fit is None or fit.aicc < best_fit.aicc - 1e-9):
                        best, best_fit = order, fit
    if best is None:
        raise NumericError("no candidate order could be fitted")
    return best, table


# --------------------------------------------------------------------------
# structural model


@dataclass(frozen=True)
class StructuralSpec:
    trend: bool = True
    seasonal: int = 12
    ar1: bool = True

    def __post_init__(self):
        if self.seasonal == 1 or self.seasonal < 0:
            raise DataError("seasonal period must be 0 (none) or >= 2")

    @property
    def n_states(self) -> int:
        return (2 if self.trend else 1) + max(self.seasonal - 1, 0)


def _structural_ss(spec: StructuralSpec, var_obs, var_level, var_slope, var_seas, kappa) -> StateSpace:
    m = spec.n_states
    T = np.zeros((m, m))
    RQR = np.zeros((m, m))
    Z = np.zeros(m)
    Z[0] = 1.0
    T[0, 0] = 1.0
    RQR[0, 0] = var_level
    i = 1
    if spec.trend:
        T[0, 1] = 1.0
        T[1, 1] = 1.0
        RQR[1, 1] = var_slope
        i = 2
    if spec.seasonal:
        S = spec.seasonal
        Z[i] = 1.0
        T[i, i:i + S - 1] = -1.0
        for j in range(1, S - 1):
            T[i + j, i + j - 1] = 1.0
        RQR[i, i] = var_seas
    return StateSpace(Z, T, RQR, var_obs, np.zeros(m), kappa * np.eye(m), m)


@dataclass
class StructuralFit:
    spec: StructuralSpec
    var_obs: float
    var_level: float
    var_slope: float
    var_seasonal: float
    phi: float
    loglik: float
    nobs: int
    converged: bool
    y: np.ndarray = field(repr=False)
    start: int | None = None
    a_next: np.ndarray = field(repr=False, default=None)
    P_next: np.ndarray = field(repr=False, default=None)
    kappa: float = 1e7

    def _model(self):
        return _structural_ss(self.spec, self.var_obs, self.var_level, self.var_slope, self.var_seasonal,
                              self.kappa)

    def forecast(self, steps: int = 1) -> tuple[np.ndarray, np.ndarray]:
        ss = self._model()
        a, P = self.a_next.copy(), self.P_next.copy()
        last = self.y[-1]
        mean, se = np.empty(steps), np.empty(steps)
        # with phi != 0 the lagged term feeds back; variance propagated to first order
        extra = 0.0
        for h in range(steps):
            mean[h] = ss.Z @ a + self.phi * last
            f = ss.Z @ P @ ss.Z + ss.H
            se[h] = np.sqrt(f + self.phi ** 2 * extra)
            extra = f + self.phi ** 2 * extra
            last = mean[h]
            a = ss.T @ a
            P = ss.T @ P @ ss.T.T + ss.RQR
        return mean, se

    def smoothed_states(self) -> np.ndarray:
        y = self.y
        return kalman_smoother(self._model(), y[1:], self.phi * y[:-1])

    def to_dict(self) -> dict:
        return {"model": "structural", "trend": self.spec.trend, "seasonal": self.spec.seasonal,
                "var_obs": self.var_obs, "var_level": self.var_level, "var_slope": self.var_slope,
                "var_seasonal": self.var_seasonal, "phi": self.phi, "loglik": self.loglik, "nobs": self.nobs}


def fit_structural(y, spec: StructuralSpec = StructuralSpec(), kappa: float = 1e7) -> StructuralFit:
    """Maximum-likelihood structural model; a stand-in for Bayesian sampling of the same state equations.

    Variances are searched on a log scale relative to the variance of the first
    differences; the initial states are diffuse (large prior variance) and the
    first ``n_states`` prediction errors are excluded from the likelihood.
    """
    yv, start, _ = _series(y)
    n = yv.shape[0]
    if spec.seasonal and n < 2 * spec.seasonal + 4:
        raise DataError(f"need at least {2 * spec.seasonal + 4} observations with a seasonal component")
    if n < spec.n_states + 6:
        raise DataError("series too short for the structural model")
    target, lagged = yv[1:], yv[:-1]
    if np.ptp(yv) == 0:
        fit = StructuralFit(spec, 0.0, 0.0, 0.0, 0.0, 0.0, np.inf, n - 1, True, yv.copy(), start, kappa=kappa)
        ss = fit._model()
        fit.a_next = np.zeros(spec.n_states)
        fit.a_next[0] = yv[0]
        fit.P_next = np.zeros_like(ss.P1)
        return fit
    s2 = float(np.var(np.diff(yv))) or float(np.var(yv))
    kap = kappa * max(s2, float(np.var(yv)), 1e-12)
    n_var = 2 + int(spec.trend) + int(spec.seasonal > 0)

    def unpack(x):
        v = np.exp(x[:n_var]) * s2
        vo, vl = v[0], v[1]
        vs = v[2] if spec.trend else 0.0
        vw = v[-1] if spec.seasonal else 0.0
        phi = float(np.tanh(x[n_var])) if spec.ar1 else 0.0
        return vo, vl, vs, vw, phi

    def negll(x):
        vo, vl, vs, vw, phi = unpack(x)
        ss = _structural_ss(spec, vo, vl, vs, vw, kap)
        res = kalman_filter(ss, target, phi * lagged)
        return -res.loglik / res.nobs if np.isfinite(res.loglik) else 1e10

    bounds = [(-30.0, 5.0)] * n_var + ([(-3.0, 3.0)] if spec.ar1 else [])
    best = None
    for start_v in (-1.0, -4.0):
        x0 = np.r_[np.full(n_var, start_v), np.zeros(int(spec.ar1))]
        x, ok, _, _ = _minimize(negll, x0, bounds=bounds)
        val = negll(x)
        if best is None or val < best[0]:
            best = (val, x, ok)
    _, x, ok = best
    vo, vl, vs, vw, phi = unpack(x)
    ss = _structural_ss(spec, vo, vl, vs, vw, kap)
    res = kalman_filter(ss, target, phi * lagged)
    return StructuralFit(spec, vo, vl, vs, vw, phi, res.loglik, res.nobs, ok, yv.copy(), start, res.a_next,
                         res.P_next, kap)


# --------------------------------------------------------------------------
# accuracy and comparison


def smape(actual, forecast) -> float:
    """Symmetric MAPE in percent, mean of |A| and |F| as denominator."""
    a, f = as_1d(actual, "actual"), as_1d(forecast, "forecast")
    if a.shape != f.shape:
        raise DataError("actual and forecast lengths differ")
    den = (np.abs(a) + np.abs(f)) / 2
    if np.any(den == 0):
        raise DataError("SMAPE undefined where actual and forecast are both zero")
    return float(100.0 * np.mean(np.abs(f - a) / den))


def rmse(actual, forecast) -> float:
    a, f = as_1d(actual, "actual"), as_1d(forecast, "forecast")
    if a.shape != f.shape:
        raise DataError("actual and forecast lengths differ")
    return float(np.sqrt(np.mean((f - a) ** 2)))


def accuracy(actual, forecast, metric: str = "SMAPE") -> float:
    metric = metric.upper()
    if metric == "SMAPE":
        return smape(actual, forecast)
    if metric == "RMSE":
        return rmse(actual, forecast)
    raise DataError("metric must be SMAPE or RMSE")


@dataclass(frozen=True)
class DmResult:
    statistic: float
    pvalue: float
    alternative: str
    loss: str
    h: int
    T: int
    mu: float = 0.0
    note: str = ""


def dm_test(loss_a, loss_b, h: int = 1, alternative: str = "two-sided", loss: str = "squared",
            mu: float = 0.0) -> DmResult:
    """Diebold-Mariano test on ``d_t = loss_a - loss_b``.

    ``alternative="a-better"`` means model a has the smaller expected loss.
    The long-run variance is the sample variance when ``h = 1`` and a
    Newey-West (Bartlett, ``h - 1`` lags) estimate otherwise.
    """
    a, b = as_1d(loss_a, "loss_a"), as_1d(loss_b, "loss_b")
    if a.shape != b.shape:
        raise DataError("loss sequences must have equal length")
    T = a.shape[0]
    if T < 10:
        raise DataError("need at least 10 loss pairs")
    if h < 1:
        raise DataError("h must be >= 1")
    if alternative not in ("two-sided", "a-better", "b-better"):
        raise DataError("alternative must be two-sided, a-better or b-better")
    dlt = a - b
    dbar = dlt.mean()
    e = dlt - dbar
    lrv = float(e @ e / T)
    for k in range(1, h):
        lrv += 2 * (1 - k / h) * float(e[k:] @ e[:-k] / T)
    if lrv <= 0 or np.allclose(e, 0):
        return DmResult(0.0, 1.0, alternative, loss, h, T, mu, "identical losses")
    stat = (dbar - mu) / np.sqrt(lrv / T)
    if alternative == "two-sided":
        p = 2 * stats.norm.sf(abs(stat))
    elif alternative == "a-better":
        p = stats.norm.cdf(stat)
    else:
        p = stats.norm.sf(stat)
    return DmResult(float(stat), float(min(1.0, p)), alternative, loss, h, T, mu)


# --------------------------------------------------------------------------
# rolling evaluation


class Forecaster(Protocol):
    """Anything with ``name``, ``uses_x`` and ``fit_forecast``; ``prepare`` is optional.

    ``fit_forecast(y, X, x_next)`` sees data through month t - 1 (and the
    regressor row used for month t) and returns ``(forecast, se)``.
    """

    name: str
    uses_x: bool

    def fit_forecast(self, y: np.ndarray, X: np.ndarray | None,
                     x_next: np.ndarray | None) -> tuple[float, float]:
        ...


@dataclass
class SarimaModel:
    """SARIMA(X) forecaster.

    ``order=None`` runs :func:`auto_order` once, on the first training window.
    ``refit=False`` keeps the first window's parameters and only re-filters
    (the fast path for long holdouts).
    """

    name: str = "SARIMA"
    order: SarimaOrder | None = None
    uses_x: bool = False
    refit: bool = True
    bounds: dict = field(default_factory=dict)
    _fixed: SarimaFit | None = field(default=None, repr=False)

    def prepare(self, y, X):
        if self.order is None:
            self.order, _ = auto_order(y, X if self.uses_x else None, **self.bounds)
        if not self.refit:
            self._fixed = fit_sarima(y, self.order, X if self.uses_x else None)

    def fit_forecast(self, y, X, x_next):
        Xm = X if self.uses_x else None
        if self.order is None:
            self.prepare(y, X)
        fit = fit_sarima(y, self.order, Xm) if self._fixed is None else self._fixed.apply(y, Xm)
        mean, se = fit.forecast(1, x_next[None, :] if self.uses_x else None)
        return float(mean[0]), float(se[0])


@dataclass
class StructuralModel:
    name: str = "Structural"
    spec: StructuralSpec = field(default_factory=StructuralSpec)
    uses_x: bool = False

    def fit_forecast(self, y, X, x_next):
        mean, se = fit_structural(y, self.spec).forecast(1)
        return float(mean[0]), float(se[0])


@dataclass
class VecmModel:
    """VECM on ``[y, X]`` in levels; forecasts the first variable."""

    name: str = "VECM"
    p: int = 2
    rank: int = 1
    uses_x: bool = True

    def fit_forecast(self, y, X, x_next):
        from .var import fit_vecm, forecast_vecm
        fit = fit_vecm(np.column_stack([y, X]), self.p, self.rank)
        out = forecast_vecm(fit, 1)
        return float(out[0, 0]), float(np.sqrt(fit.sigma_u[0, 0]))


@dataclass
class ForecastPath:
    model: str
    index: np.ndarray          # positions in the series
    actual: np.ndarray
    forecast: np.ndarray
    se: np.ndarray
    error: str | None = None
    start: int | None = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def rows(self) -> list[tuple]:
        lab = (lambda i: format_month(self.start + int(i))) if self.start is not None else str
        return [(lab(i), a, f, s, self.model) for i, a, f, s in zip(self.index, self.actual, self.forecast, self.se)]


def lag_exog(X: np.ndarray, mode: str) -> np.ndarray:
    """Regressor rows used for ``y_t``: ``X_t`` (contemporaneous) or ``X_{t-1}`` (lagged; first row NaN)."""
    if mode == "contemporaneous":
        return X
    if mode == "lagged":
        out = np.full_like(X, np.nan)
        out[1:] = X[:-1]
        return out
    raise DataError("lag_mode must be contemporaneous or lagged")


_FAILURES = (DataError, NumericError, np.linalg.LinAlgError, ValueError, ArithmeticError)


def _one_step(model, y, X, x_next):
    try:
        return model.fit_forecast(y, X, x_next), None
    except _FAILURES as exc:
        return None, f"{type(exc).__name__}: {exc}"


def rolling_one_step(models: Sequence, y, X=None, holdout: int = 25, lag_mode: str = "contemporaneous",
                     workers: int = 1) -> list[ForecastPath]:
    """Refit every model on data through month t - 1 and forecast month t, for the last ``holdout`` months.

    A model whose fit fails stops at that month and its path records the
    reason; the other models are unaffected. With ``workers > 1`` the
    (model, month) fits run in a process pool; results do not depend on the
    worker count.
    """
    yv, start, _ = _series(y)
    n = yv.shape[0]
    if holdout < 2 or holdout > n - 10:
        raise DataError(f"holdout must be in [2, {n - 10}] for a series of length {n}")
    Xv = None
    if X is not None:
        Xv, _ = _exog(X, n)
        if Xv.shape[0] != n:
            raise DataError("X must cover the whole series including the holdout")
        Xv = lag_exog(Xv, lag_mode)
    first = 1 if (Xv is not None and lag_mode == "lagged") else 0
    months = range(n - holdout, n)

    def args(m, t):
        return (yv[first:t], Xv[first:t] if m.uses_x else None, Xv[t] if m.uses_x else None)

    results: dict = {}
    pool_jobs = []
    for mi, m in enumerate(models):
        if m.uses_x and Xv is None:
            results[mi] = [(None, f"DataError: model {m.name} needs exogenous data")]
            continue
        if hasattr(m, "prepare"):
            try:
                m.prepare(*args(m, months[0])[:2])
            except _FAILURES as exc:
                results[mi] = [(None, f"{type(exc).__name__}: {exc}")]
                continue
        pool_jobs.append(mi)
    if workers > 1 and pool_jobs:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=workers) as ex:
            futs = {mi: [ex.submit(_one_step, models[mi], *args(models[mi], t)) for t in months] for mi in pool_jobs}
            for mi, fl in futs.items():
                results[mi] = [f.result() for f in fl]
    else:
        for mi in pool_jobs:
            out = []
            for t in months:
                r = _one_step(models[mi], *args(models[mi], t))
                out.append(r)
                if r[1] is not None:
                    break
            results[mi] = out
    paths = []
    for mi, m in enumerate(models):
        idx, fc, se, err = [], [], [], None
        for t, (val, e) in zip(months, results[mi]):
            if e is not None:
                err = e
                break
            idx.append(t)
            fc.append(val[0])
            se.append(val[1])
        idx = np.array(idx, int)
        paths.append(ForecastPath(m.name, idx, yv[idx], np.array(fc, float), np.array(se, float), err, start))
    return paths


def paths_csv(paths: Sequence[ForecastPath]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["month", "actual", "forecast", "se", "model"])
    for p in paths:
        for r in p.rows():
            w.writerow([r[0], repr(float(r[1])), repr(float(r[2])), repr(float(r[3])), r[4]])
    return buf.getvalue()


def comparison_table(paths: Sequence[ForecastPath]) -> list[dict]:
    """SMAPE and RMSE per model (completed paths only)."""
    rows = []
    for p in paths:
        if p.ok:
            rows.append({"model": p.model, "SMAPE": smape(p.actual, p.forecast), "RMSE": rmse(p.actual, p.forecast)})
        else:
            rows.append({"model": p.model, "SMAPE": None, "RMSE": None, "error": p.error})
    return rows


def _common(path: ForecastPath, paths: Sequence[ForecastPath]) -> ForecastPath:
    idx = path.index
    for q in paths:
        if q.ok:
            idx = np.intersect1d(idx, q.index)
    keep = np.isin(path.index, idx)
    return ForecastPath(path.model, path.index[keep], path.actual[keep], path.forecast[keep], path.se[keep],
                        None, path.start)


def dm_matrix(paths: Sequence[ForecastPath], alternative: str = "a-better") -> list[dict]:
    """One-sided DM p-values on squared errors for every ordered pair of completed models.

    Paths are compared over their common months; fewer than 10 gives an empty cell with a note.
    """
    ok = [_common(p, paths) for p in paths if p.ok]
    rows = []
    for a in ok:
        for b in ok:
            if a is b:
                continue
            try:
                res = dm_test((a.forecast - a.actual) ** 2, (b.forecast - b.actual) ** 2, 1, alternative)
            except DataError as exc:
                rows.append({"model": a.model, "versus": b.model, "statistic": None, "pvalue": None,
                             "note": str(exc)})
                continue
            rows.append({"model": a.model, "versus": b.model, "statistic": res.statistic, "pvalue": res.pvalue,
                         "note": res.note})
    return rows
