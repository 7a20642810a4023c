"""Vector autoregressions, Granger causality, Cholesky impulse responses and cointegration.

All estimators take a :class:`~bubblekit.ts.Dataset` (or a ``(T, K)`` array) with
one column per variable, in the order used for Cholesky identification.
"""
from __future__ import annotations

import csv
import io
import json
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

import numpy as np
from scipy import linalg, stats

from ._validation import DataError, NumericError, as_2d
from .ts import Dataset

CRITERIA = ("FPE", "AIC", "BIC", "HQ")


def _panel(d) -> tuple[np.ndarray, list[str], int | None]:
    if isinstance(d, Dataset):
        return d.matrix(), d.names, d.start
    Y = as_2d(d, "data")
    return Y, [f"y{j + 1}" for j in range(Y.shape[1])], None


@dataclass(frozen=True)
class VarSpec:
    """Lag order and deterministic terms.

    ``seasonal`` is 0 or ``season - 1`` centered dummies (``sd1 .. sd11`` for monthly
    data, ``sd1`` = January when the calendar is known, else the first sample month).
    """

    p: int = 1
    constant: bool = True
    seasonal: int = 0
    season: int = 12

    def __post_init__(self):
        if self.p < 1:
            raise DataError("lag order p must be >= 1")
        if self.seasonal not in (0, self.season - 1):
            raise DataError(f"seasonal dummy count must be 0 or {self.season - 1}")

    @property
    def n_det(self) -> int:
        return int(self.constant) + self.seasonal


def _deterministic(spec: VarSpec, n_total: int, start: int | None) -> tuple[np.ndarray, list[str]]:
    cols, names = [], []
    if spec.constant:
        cols.append(np.ones(n_total))
        names.append("const")
    if spec.seasonal:
        s = spec.season
        pos = (np.arange(n_total) + (start % s if start is not None else 0)) % s
        for j in range(s - 1):
            cols.append(np.where(pos == j, 1.0 - 1.0 / s, -1.0 / s))
            names.append(f"sd{j + 1}")
    D = np.column_stack(cols) if cols else np.empty((n_total, 0))
    return D, names


def _var_design(Y: np.ndarray, p: int, spec: VarSpec, start, first: int | None = None):
    """Regressor matrix ``[lags, deterministic]`` for targets ``Y[first:]`` (default ``first = p``)."""
    T, K = Y.shape
    first = p if first is None else first
    lags = [Y[first - i:T - i] for i in range(1, p + 1)]
    D, _ = _deterministic(spec, T, start)
    X = np.hstack(lags + [D[first:]])
    return Y[first:], X


@dataclass
class VarFit:
    names: list
    spec: VarSpec
    coef: np.ndarray          # (n_regressors, K): rows = [y1.l1..yK.l1, .., y1.lp..yK.lp, deterministic]
    bse: np.ndarray
    resid: np.ndarray
    sigma_u: np.ndarray       # residual covariance with degrees-of-freedom correction
    XtX_inv: np.ndarray
    regressors: list
    nobs: int
    start: int | None = None
    meta: dict = field(default_factory=dict)

    @property
    def K(self) -> int:
        return len(self.names)

    @property
    def df_resid(self) -> int:
        return self.nobs - self.coef.shape[0]

    @property
    def A(self) -> list[np.ndarray]:
        """Lag matrices ``A_i`` with ``y_t = sum A_i y_{t-i} + ...`` (row = equation)."""
        K = self.K
        return [self.coef[i * K:(i + 1) * K].T for i in range(self.spec.p)]

    @property
    def sigma_ml(self) -> np.ndarray:
        return self.resid.T @ self.resid / self.nobs

    @property
    def loglik(self) -> float:
        K, n = self.K, self.nobs
        _, logdet = np.linalg.slogdet(self.sigma_ml)
        return float(-0.5 * n * (K * np.log(2 * np.pi) + logdet + K))

    @property
    def tvalues(self) -> np.ndarray:
        return self.coef / self.bse

    @property
    def pvalues(self) -> np.ndarray:
        return 2 * stats.t.sf(np.abs(self.tvalues), self.df_resid)

    def companion(self) -> np.ndarray:
        K, p = self.K, self.spec.p
        F = np.zeros((K * p, K * p))
        F[:K] = np.hstack(self.A)
        if p > 1:
            F[K:, :-K] = np.eye(K * (p - 1))
        return F

    def is_stable(self) -> bool:
        return bool(np.max(np.abs(np.linalg.eigvals(self.companion()))) < 1)

    def table(self, equation: str) -> list[tuple]:
        """``(Variable, Estimate, Std. Error, t value, p)`` rows of one equation."""
        j = self.names.index(equation)
        return [(r, float(self.coef[i, j]), float(self.bse[i, j]), float(self.tvalues[i, j]),
                 float(self.pvalues[i, j])) for i, r in enumerate(self.regressors)]

    def table_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["equation", "Variable", "Estimate", "Std. Error", "t value", "p"])
        for eq in self.names:
            for row in self.table(eq):
                w.writerow([eq, row[0], *(repr(v) for v in row[1:])])
        return buf.getvalue()

    def predict(self, Y_hist: np.ndarray, steps: int) -> np.ndarray:
        """Iterated forecasts after ``Y_hist``, the full sample starting at the fit's first month."""
        K, p = self.K, self.spec.p
        Y_hist = np.asarray(Y_hist, float)
        hist = [row for row in Y_hist[-p:]]
        T = Y_hist.shape[0]
        D, _ = _deterministic(self.spec, T + steps, self.start)
        out = np.empty((steps, K))
        for h in range(steps):
            x = np.concatenate([hist[-i] for i in range(1, p + 1)] + [D[T + h]])
            out[h] = x @ self.coef
            hist.append(out[h])
        return out

    def to_json(self) -> str:
        return json.dumps({"names": self.names, "p": self.spec.p, "constant": self.spec.constant,
                           "seasonal": self.spec.seasonal, "regressors": self.regressors,
                           "coef": self.coef.tolist(), "bse": self.bse.tolist(),
                           "sigma_u": self.sigma_u.tolist(), "nobs": self.nobs, "meta": self.meta},
                          sort_keys=True)


def fit_var(d, spec: VarSpec = VarSpec(), first: int | None = None) -> VarFit:
    """Equation-by-equation least squares.

    ``first`` fixes the first target row (used to put several lag orders on a
    common sample); it defaults to ``spec.p``.
    """
    Y, names, start = _panel(d)
    T, K = Y.shape
    p = spec.p
    first = p if first is None else first
    if first < p:
        raise DataError("first target row must be >= p")
    target, X = _var_design(Y, p, spec, start, first)
    n, m = X.shape
    if n <= m:
        raise DataError(f"sample too short: {n} observations for {m} regressors per equation")
    regressors = [f"{v}.l{i}" for i in range(1, p + 1) for v in names] + _deterministic(spec, 1, start)[1]
    q, r = linalg.qr(X, mode="economic")
    dg = np.abs(np.diag(r))
    if dg.min() <= 1e-12 * max(dg.max(), 1.0):
        raise NumericError("singular regressor matrix")
    coef = linalg.solve_triangular(r, q.T @ target)
    resid = target - X @ coef
    rinv = linalg.solve_triangular(r, np.eye(m))
    XtX_inv = rinv @ rinv.T
    sigma_u = resid.T @ resid / (n - m)
    bse = np.sqrt(np.outer(np.diag(XtX_inv), np.diag(sigma_u)))
    fit = VarFit(list(names), spec, coef, bse, resid, sigma_u, XtX_inv, regressors, n, start)
    if start is not None:
        fit.meta["first_target_month"] = start + first
    return fit


def select_lag(d, pmax: int = 12, criterion: str = "FPE", spec: VarSpec = VarSpec()) -> tuple[int, dict]:
    """Lag order minimizing an information criterion on the common sample ``t > pmax``.

    Returns the chosen order and the criterion values for every order.
    """
    criterion = criterion.upper()
    if criterion not in CRITERIA:
        raise DataError(f"criterion must be one of {CRITERIA}")
    Y, _, _ = _panel(d)
    T, K = Y.shape
    if pmax < 1:
        raise DataError("pmax must be >= 1")
    per_eq = K * pmax + spec.n_det
    if T - pmax < 10 * per_eq:
        raise DataError(f"insufficient sample: {T - pmax} observations for {per_eq} regressors per equation "
                        "(need 10x)")
    values = {}
    n = T - pmax
    for p in range(1, pmax + 1):
        fit = fit_var(d, VarSpec(p, spec.constant, spec.seasonal, spec.season), first=pmax)
        _, logdet = np.linalg.slogdet(fit.sigma_ml)
        npar = p * K * K + K * spec.n_det
        nstar = p * K + spec.n_det
        values[p] = {
            "AIC": logdet + 2.0 * npar / n,
            "HQ": logdet + 2.0 * np.log(np.log(n)) * npar / n,
            "BIC": logdet + np.log(n) * npar / n,
            "FPE": ((n + nstar) / (n - nstar)) ** K * np.exp(logdet),
        }
    best = min(values, key=lambda p: (values[p][criterion], p))
    return best, values


def granger_wald(d, cause: str, effect: str, p: int, spec: VarSpec | None = None) -> tuple[float, float]:
    """Wald chi-square test that ``cause`` lags have zero coefficients in the ``effect`` equation."""
    if cause == effect:
        raise DataError("cause and effect must be different columns")
    spec = VarSpec(p) if spec is None else VarSpec(p, spec.constant, spec.seasonal, spec.season)
    fit = fit_var(d, spec)
    if cause not in fit.names or effect not in fit.names:
        raise DataError(f"columns {cause!r} and {effect!r} must both be in the dataset")
    ci, ei = fit.names.index(cause), fit.names.index(effect)
    idx = [i * fit.K + ci for i in range(p)]
    b = fit.coef[idx, ei]
    V = fit.sigma_u[ei, ei] * fit.XtX_inv[np.ix_(idx, idx)]
    W = float(b @ np.linalg.solve(V, b))
    return W, float(stats.chi2.sf(W, p))


def ma_coefficients(fit: VarFit, horizons: int) -> np.ndarray:
    """Moving-average matrices ``Phi_0 .. Phi_H``."""
    K, p = fit.K, fit.spec.p
    A = fit.A
    Phi = np.zeros((horizons + 1, K, K))
    Phi[0] = np.eye(K)
    for h in range(1, horizons + 1):
        for i in range(1, min(h, p) + 1):
            Phi[h] += Phi[h - i] @ A[i - 1]
    return Phi


@dataclass
class IrfResult:
    shock: str
    sign: int
    responses: np.ndarray     # (H + 1, K)
    names: list
    ordering: list
    stable: bool

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["horizon", *self.names])
        for h, row in enumerate(self.responses):
            w.writerow([h, *(repr(float(v)) for v in row)])
        return buf.getvalue()


def irf_cholesky(fit: VarFit, horizons: int, shock: str, sign: int = 1) -> IrfResult:
    """Orthogonalized responses to a one-standard-deviation shock in ``shock``.

    Identification uses the lower Cholesky factor of the residual covariance in
    the column order of the fit.
    """
    if sign not in (1, -1):
        raise DataError("sign must be +1 or -1")
    if shock not in fit.names:
        raise DataError(f"unknown shock variable {shock!r}")
    try:
        P = np.linalg.cholesky(fit.sigma_u)
    except np.linalg.LinAlgError as exc:
        raise NumericError("residual covariance is not positive definite") from exc
    stable = fit.is_stable()
    if not stable:
        warnings.warn("VAR is not stable; impulse responses do not decay")
    j = fit.names.index(shock)
    Phi = ma_coefficients(fit, horizons)
    resp = sign * (Phi @ P[:, j])
    return IrfResult(shock, sign, resp, list(fit.names), list(fit.names), stable)


# --------------------------------------------------------------------------
# cointegration


def _johansen_moments(Y: np.ndarray, p: int):
    dY = np.diff(Y, axis=0)
    T = Y.shape[0]
    Z0 = dY[p - 1:]
    Z1 = Y[p - 1:T - 1]
    n = Z0.shape[0]
    Z2 = [np.ones((n, 1))] + [dY[p - 1 - i:T - 1 - i] for i in range(1, p)]
    Z2 = np.hstack(Z2)
    B0, *_ = np.linalg.lstsq(Z2, Z0, rcond=None)
    B1, *_ = np.linalg.lstsq(Z2, Z1, rcond=None)
    R0, R1 = Z0 - Z2 @ B0, Z1 - Z2 @ B1
    S00, S11, S01 = R0.T @ R0 / n, R1.T @ R1 / n, R0.T @ R1 / n
    return S00, S11, S01, n, Z0, Z1, Z2


def _reduced_rank(S00, S11, S01):
    try:
        C = np.linalg.cholesky(S11)
        Ci = linalg.solve_triangular(C, np.eye(C.shape[0]), lower=True)
        M = Ci @ S01.T @ np.linalg.solve(S00, S01) @ Ci.T
    except np.linalg.LinAlgError as exc:
        raise NumericError("singular moment matrix in reduced-rank regression") from exc
    lam, V = np.linalg.eigh((M + M.T) / 2)
    order = np.argsort(lam)[::-1]
    lam = np.clip(lam[order], 0.0, 1.0 - 1e-15)
    beta = Ci.T @ V[:, order]
    return lam, beta


def _johansen_eigs_batch(y: np.ndarray) -> np.ndarray:
    """Eigenvalues (descending) for a batch of VAR(1) level panels ``(n, T, K)`` with a constant."""
    dY = np.diff(y, axis=1)
    Z1 = y[:, :-1]
    R0 = dY - dY.mean(axis=1, keepdims=True)
    R1 = Z1 - Z1.mean(axis=1, keepdims=True)
    n = R0.shape[1]
    S00 = np.einsum("bti,btj->bij", R0, R0) / n
    S11 = np.einsum("bti,btj->bij", R1, R1) / n
    S01 = np.einsum("bti,btj->bij", R0, R1) / n
    C = np.linalg.cholesky(S11)
    Ci = np.linalg.inv(C)
    M = Ci @ np.swapaxes(S01, 1, 2) @ np.linalg.solve(S00, S01) @ np.swapaxes(Ci, 1, 2)
    lam = np.linalg.eigvalsh((M + np.swapaxes(M, 1, 2)) / 2)
    return np.clip(lam[:, ::-1], 0.0, 1.0 - 1e-15)


@lru_cache(maxsize=1)
def _johansen_table() -> dict:
    text = resources.files("bubblekit").joinpath("data", "johansen_cv.json").read_text()
    return json.loads(text)


@dataclass
class JohansenResult:
    eigenvalues: np.ndarray
    trace: np.ndarray          # trace[r] tests rank <= r
    crit_95: np.ndarray
    rank: int
    p: int
    nobs: int
    case: str = "unrestricted constant"


def johansen_trace(d, p: int = 2, level: float = 0.05) -> JohansenResult:
    """Trace test with an unrestricted constant; ``p`` is the lag order of the levels VAR.

    The selected rank is the first ``r`` whose hypothesis ``rank <= r`` is not
    rejected (``K`` if all are rejected).
    """
    Y, _, _ = _panel(d)
    K = Y.shape[1]
    if K > 3:
        raise DataError("embedded critical values cover at most 3 variables")
    if p < 1:
        raise DataError("p must be >= 1")
    if Y.shape[0] - p < 10 * (K * p + 1):
        raise DataError("sample too short for the Johansen test")
    S00, S11, S01, n, *_ = _johansen_moments(Y, p)
    lam, _ = _reduced_rank(S00, S11, S01)
    trace = np.array([-n * np.log1p(-lam[r:]).sum() for r in range(K)])
    key = {0.10: "0.1", 0.05: "0.05", 0.01: "0.01"}.get(round(level, 10))
    if key is None:
        raise DataError("level must be 0.10, 0.05 or 0.01")
    tab = _johansen_table()
    crit = np.array([tab[str(K - r)][key] for r in range(K)])
    rank = next((r for r in range(K) if trace[r] <= crit[r]), K)
    return JohansenResult(lam, trace, crit, rank, p, n)


@dataclass
class VecmFit:
    names: list
    rank: int
    p: int
    alpha: np.ndarray       # (K, r) loadings
    beta: np.ndarray        # (K, r) cointegrating relations, beta[:r] = I
    gamma: list             # p - 1 short-run matrices (K, K)
    mu: np.ndarray          # constant in the differenced equation
    sigma_u: np.ndarray
    last_levels: np.ndarray
    last_diffs: np.ndarray

    @property
    def Pi(self) -> np.ndarray:
        return self.alpha @ self.beta.T


def fit_vecm(d, p: int = 2, rank: int = 1) -> VecmFit:
    """Reduced-rank estimate of ``dy_t = mu + alpha beta' y_{t-1} + sum Gamma_i dy_{t-i} + e_t``."""
    Y, names, _ = _panel(d)
    K = Y.shape[1]
    if rank < 1:
        raise DataError("rank 0: no cointegration, fit a VAR in differences instead")
    if rank >= K:
        raise DataError(f"rank {rank} = K means a stationary system; fit a VAR in levels instead")
    S00, S11, S01, n, Z0, Z1, Z2 = _johansen_moments(Y, p)
    _, V = _reduced_rank(S00, S11, S01)
    beta = V[:, :rank]
    head = beta[:rank, :rank]
    if abs(np.linalg.det(head)) < 1e-12:
        raise NumericError("cannot normalize cointegrating relations")
    beta = beta @ np.linalg.inv(head)
    ect = Z1 @ beta
    X = np.hstack([ect, Z2])
    B, *_ = np.linalg.lstsq(X, Z0, rcond=None)
    resid = Z0 - X @ B
    alpha = B[:rank].T
    mu = B[rank]
    gamma = [B[rank + 1 + i * K: rank + 1 + (i + 1) * K].T for i in range(p - 1)]
    sigma = resid.T @ resid / (n - X.shape[1])
    dY = np.diff(Y, axis=0)
    return VecmFit(list(names), rank, p, alpha, beta, gamma, mu, sigma, Y[-1].copy(),
                   dY[len(dY) - (p - 1):].copy() if p > 1 else np.empty((0, K)))


def forecast_vecm(fit: VecmFit, steps: int) -> np.ndarray:
    """Level forecasts ``(steps, K)``: each step adds the predicted difference to the previous level."""
    if steps < 1:
        raise DataError("steps must be >= 1")
    level = fit.last_levels.copy()
    diffs = [row for row in fit.last_diffs]
    out = np.empty((steps, len(fit.names)))
    for h in range(steps):
        dy = fit.mu + fit.Pi @ level
        for i, G in enumerate(fit.gamma, start=1):
            dy = dy + G @ diffs[-i]
        level = level + dy
        diffs.append(dy)
        out[h] = level
    return out
