"""Logistic regression: maximum likelihood, elastic net, stepwise selection and diagnostics.

The elastic-net objective, on standardized features, is

    F(b0, b) = -(1/N) loglik(b0, b) + lam * (alpha * ||b||_1 + (1 - alpha) / 2 * ||b||_2^2)

with an unpenalized intercept. It is minimized by proximal Newton steps: each
outer iteration forms the weighted least-squares approximation of the
log-likelihood at the current point and solves the penalized quadratic exactly by
cyclic coordinate descent with soft-thresholding. A backtracking step on the true
objective keeps ``F`` nonincreasing from one outer iteration to the next.
"""
from __future__ import annotations

import csv
import io
import json
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numba import njit
from scipy import stats
from scipy.special import expit
from sklearn.base import BaseEstimator, ClassifierMixin

from ._ols import r_squared
from ._validation import DataError, NumericError, as_1d, as_2d, check_binary

SEPARATION_BOUND = 30.0


@dataclass(frozen=True)
class Design:
    """Feature matrix with names and a binary response.

    ``center``/``scale`` record the standardization applied to ``X`` (``None`` for
    raw features).
    """

    names: tuple
    X: np.ndarray
    y: np.ndarray
    center: np.ndarray | None = None
    scale: np.ndarray | None = None

    def __post_init__(self):
        X = as_2d(self.X, "X")
        y = check_binary(self.y, "y")
        if X.shape[0] != y.shape[0]:
            raise DataError(f"X has {X.shape[0]} rows but y has {y.shape[0]} entries")
        names = tuple(self.names) if self.names is not None else tuple(f"x{j}" for j in range(X.shape[1]))
        if len(names) != X.shape[1]:
            raise DataError("one name per feature column is required")
        if len(set(names)) != len(names):
            raise DataError("feature names must be unique")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "names", names)

    @classmethod
    def from_arrays(cls, X, y, names: Sequence[str] | None = None) -> "Design":
        return cls(tuple(names) if names is not None else None, X, y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def standardized(self) -> "Design":
        """Zero-mean, unit (population) variance columns; constant columns are rejected."""
        if self.scale is not None:
            return self
        mu = self.X.mean(axis=0)
        sd = self.X.std(axis=0)
        bad = [n for n, s in zip(self.names, sd) if not s > 1e-12]
        if bad:
            raise DataError(f"constant feature(s) cannot be standardized: {bad}")
        return Design(self.names, (self.X - mu) / sd, self.y, mu, sd)

    def select(self, names: Sequence[str]) -> "Design":
        idx = [self.names.index(n) for n in names]
        X = self.X[:, idx] if idx else np.empty((self.n, 0))
        return Design(tuple(names), X, self.y)

    def rows(self, sl) -> "Design":
        return Design(self.names, self.X[sl], self.y[sl], self.center, self.scale)


def _xmat(X, p):
    X = as_2d(X, "X") if np.ndim(X) else np.empty((0, p))
    if X.shape[1] != p:
        raise DataError(f"expected {p} feature columns, got {X.shape[1]}")
    return X


# --------------------------------------------------------------------------
# maximum likelihood


@dataclass
class LogitFit:
    names: tuple
    intercept: float
    coef: np.ndarray
    loglik: float
    cov: np.ndarray
    nobs: int
    n_iter: int
    grad_norm: float

    @property
    def params(self) -> np.ndarray:
        return np.concatenate([[self.intercept], self.coef])

    @property
    def bse(self) -> np.ndarray:
        return np.sqrt(np.diag(self.cov))

    @property
    def zvalues(self) -> np.ndarray:
        return self.params / self.bse

    @property
    def pvalues(self) -> np.ndarray:
        return 2 * stats.norm.sf(np.abs(self.zvalues))

    @property
    def aic(self) -> float:
        return -2 * self.loglik + 2 * (len(self.coef) + 1)

    def decision_function(self, X) -> np.ndarray:
        return self.intercept + _xmat(X, len(self.coef)) @ self.coef

    def predict_proba(self, X) -> np.ndarray:
        return expit(self.decision_function(X))

    def to_dict(self) -> dict:
        return {"kind": "logit", "names": list(self.names), "intercept": self.intercept,
                "coef": self.coef.tolist(), "bse": self.bse.tolist(), "loglik": self.loglik,
                "nobs": self.nobs, "n_iter": self.n_iter, "grad_norm": self.grad_norm}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _loglik(eta, y):
    # sum of y*eta - log(1 + exp(eta)), stable for large |eta|
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


def fit_logit(d: Design, tol: float = 1e-10, max_iter: int = 100) -> LogitFit:
    """Maximum-likelihood logit by Newton-Raphson (IRLS) with step halving.

    Raises :class:`DataError` on perfect separation, detected when a slope
    exceeds 30 in absolute value on the standardized scale.
    """
    X, y = d.X, d.y
    n, p = X.shape
    if y.min() == y.max():
        raise DataError("response has a single class")
    if n <= p + 1:
        raise DataError(f"need more than {p + 1} rows, got {n}")
    sd = X.std(axis=0) if p else np.empty(0)
    Z = np.column_stack([np.ones(n), X])
    ybar = y.mean()
    b = np.zeros(p + 1)
    b[0] = np.log(ybar / (1 - ybar))
    ll = _loglik(Z @ b, y)
    for it in range(1, max_iter + 1):
        mu = expit(Z @ b)
        g = Z.T @ (y - mu)
        H = (Z * (mu * (1 - mu))[:, None]).T @ Z
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError as exc:
            raise NumericError("singular information matrix") from exc
        t = 1.0
        while True:
            bn = b + t * step
            lln = _loglik(Z @ bn, y)
            if lln >= ll - 1e-12 * abs(ll) or t < 1e-10:
                break
            t *= 0.5
        b, ll = bn, lln
        if p and np.max(np.abs(b[1:] * sd)) > SEPARATION_BOUND:
            raise DataError("perfect or quasi-complete separation: coefficients diverge")
        if np.max(np.abs(g)) < tol or np.max(np.abs(t * step)) < 1e-13:
            break
    else:
        raise NumericError(f"logit did not converge in {max_iter} iterations")
    mu = expit(Z @ b)
    g = Z.T @ (y - mu)
    H = (Z * (mu * (1 - mu))[:, None]).T @ Z
    try:
        cov = np.linalg.inv(H)
    except np.linalg.LinAlgError as exc:
        raise NumericError("singular information matrix") from exc
    if not np.all(np.isfinite(cov)) or np.linalg.cond(H) > 1e14:
        raise NumericError("singular information matrix")
    return LogitFit(d.names, float(b[0]), b[1:].copy(), ll, cov, n, it, float(np.max(np.abs(g))))


# --------------------------------------------------------------------------
# elastic net


@njit(cache=True)
def _cd_quadratic(X, z, w, b0, beta, l1, l2, tol, max_sweeps):
    """Coordinate descent for (1/2N) sum w (z - b0 - X beta)^2 + l1 |beta|_1 + l2/2 |beta|^2."""
    n, p = X.shape
    r = z - b0 - X @ beta
    xw2 = np.empty(p)
    for j in range(p):
        s = 0.0
        for i in range(n):
            s += w[i] * X[i, j] * X[i, j]
        xw2[j] = s / n
    sw = w.sum() / n
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        maxd = 0.0
        s = 0.0
        for i in range(n):
            s += w[i] * r[i]
        d0 = s / n / sw
        b0 += d0
        for i in range(n):
            r[i] -= d0
        maxd = max(maxd, sw * d0 * d0)
        for j in range(p):
            g = 0.0
            for i in range(n):
                g += w[i] * X[i, j] * r[i]
            g = g / n + xw2[j] * beta[j]
            if g > l1:
                new = (g - l1) / (xw2[j] + l2)
            elif g < -l1:
                new = (g + l1) / (xw2[j] + l2)
            else:
                new = 0.0
            diff = new - beta[j]
            if diff != 0.0:
                for i in range(n):
                    r[i] -= diff * X[i, j]
                beta[j] = new
                maxd = max(maxd, xw2[j] * diff * diff)
        if maxd < tol:
            break
    return b0, sweeps


def enet_objective(b0: float, beta: np.ndarray, X: np.ndarray, y: np.ndarray, alpha: float, lam: float) -> float:
    eta = b0 + X @ beta
    nll = -_loglik(eta, y) / X.shape[0]
    return nll + lam * (alpha * np.abs(beta).sum() + 0.5 * (1 - alpha) * beta @ beta)


def enet_gradient(b0: float, beta: np.ndarray, X: np.ndarray, y: np.ndarray, alpha: float, lam: float) -> np.ndarray:
    """Gradient of :func:`enet_objective` in ``(b0, beta)`` where every ``beta_j != 0``."""
    r = expit(b0 + X @ beta) - y
    n = X.shape[0]
    g0 = r.sum() / n
    g = X.T @ r / n + lam * (alpha * np.sign(beta) + (1 - alpha) * beta)
    return np.concatenate([[g0], g])


def kkt_residual(b0: float, beta: np.ndarray, X: np.ndarray, y: np.ndarray, alpha: float, lam: float) -> float:
    """Largest violation of the optimality conditions (intercept, active and inactive slopes)."""
    r = y - expit(b0 + X @ beta)
    n = X.shape[0]
    g = -X.T @ r / n
    active = beta != 0
    viol = [abs(r.sum() / n)]
    if active.any():
        viol.append(np.max(np.abs(g[active] + lam * (1 - alpha) * beta[active]
                                  + lam * alpha * np.sign(beta[active]))))
    if (~active).any():
        viol.append(max(0.0, np.max(np.abs(g[~active])) - lam * alpha))
    return float(max(viol))


def lambda_max(d: Design, alpha: float) -> float:
    """Smallest penalty giving all-zero slopes (standardized features)."""
    ds = d.standardized()
    ybar = ds.y.mean()
    return float(np.max(np.abs(ds.X.T @ (ds.y - ybar))) / (ds.n * max(alpha, 1e-3)))


@dataclass
class EnetFit:
    names: tuple
    alpha: float
    lam: float
    intercept_std: float
    coef_std: np.ndarray
    center: np.ndarray
    scale: np.ndarray
    objective: float
    kkt: float
    history: list = field(repr=False, default_factory=list)
    sweeps: int = 0
    cv_table: list | None = None

    @property
    def coef(self) -> np.ndarray:
        return self.coef_std / self.scale

    @property
    def intercept(self) -> float:
        return float(self.intercept_std - np.sum(self.coef_std * self.center / self.scale))

    @property
    def active(self) -> list[str]:
        return [n for n, b in zip(self.names, self.coef_std) if b != 0]

    def decision_function(self, X) -> np.ndarray:
        return self.intercept + _xmat(X, len(self.names)) @ self.coef

    def predict_proba(self, X) -> np.ndarray:
        return expit(self.decision_function(X))

    def to_dict(self) -> dict:
        return {"kind": "enet", "names": list(self.names), "alpha": self.alpha, "lambda": self.lam,
                "intercept": self.intercept, "coef": self.coef.tolist(),
                "intercept_std": self.intercept_std, "coef_std": self.coef_std.tolist(),
                "center": self.center.tolist(), "scale": self.scale.tolist(),
                "objective": self.objective, "kkt": self.kkt, "active": self.active,
                "cv_table": self.cv_table}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def fit_enet(d: Design, alpha: float, lam: float, warm: tuple | None = None, tol: float = 1e-10,
             max_sweeps: int = 10_000) -> EnetFit:
    """Elastic-net logistic regression on standardized features.

    ``d`` is standardized first if it is not already. ``warm`` is an optional
    ``(intercept_std, coef_std)`` starting point.
    """
    if not 0.0 <= alpha <= 1.0:
        raise DataError("alpha must lie in [0, 1]")
    if lam < 0:
        raise DataError("lambda must be >= 0")
    ds = d.standardized()
    X, y = np.ascontiguousarray(ds.X), ds.y
    n, p = X.shape
    if y.min() == y.max():
        raise DataError("response has a single class")
    if warm is None:
        ybar = y.mean()
        b0, beta = float(np.log(ybar / (1 - ybar))), np.zeros(p)
    else:
        b0, beta = float(warm[0]), np.array(warm[1], dtype=float)
    l1, l2 = lam * alpha, lam * (1 - alpha)
    f = enet_objective(b0, beta, X, y, alpha, lam)
    history = [f]
    used = 0
    kkt = kkt_residual(b0, beta, X, y, alpha, lam)
    while kkt > 1e-12:
        if used >= max_sweeps:
            raise NumericError(f"elastic net did not converge within {max_sweeps} sweeps (KKT {kkt:.2e})")
        eta = b0 + X @ beta
        mu = expit(eta)
        w = np.maximum(mu * (1 - mu), 1e-5)
        z = eta + (y - mu) / w
        nb = beta.copy()
        nb0, sw = _cd_quadratic(X, z, w, b0, nb, l1, l2, (tol * 1e-3) ** 2, max_sweeps - used)
        used += sw
        # backtrack along the proximal Newton direction until F does not increase
        t = 1.0
        while True:
            cb0, cb = b0 + t * (nb0 - b0), beta + t * (nb - beta)
            fc = enet_objective(cb0, cb, X, y, alpha, lam)
            if fc <= f or t < 1e-12:
                break
            t *= 0.5
        if fc > f:
            cb0, cb, fc = b0, beta, f
        stalled = abs(f - fc) <= 1e-16 * max(1.0, abs(f)) and np.max(np.abs(cb - beta), initial=0) < 1e-14
        b0, beta, f = cb0, cb, fc
        history.append(f)
        kkt = kkt_residual(b0, beta, X, y, alpha, lam)
        if stalled:
            break
        if lam == 0 and p and np.max(np.abs(beta)) > SEPARATION_BOUND:
            raise DataError("perfect or quasi-complete separation: coefficients diverge")
    return EnetFit(ds.names, float(alpha), float(lam), b0, beta, ds.center, ds.scale, f, kkt, history, used)


def enet_path(d: Design, alpha: float, lambdas: Sequence[float]) -> list[EnetFit]:
    """Warm-started fits along a decreasing sequence of penalties."""
    fits, warm = [], None
    ds = d.standardized()
    for lam in lambdas:
        fit = fit_enet(ds, alpha, lam, warm)
        warm = (fit.intercept_std, fit.coef_std)
        fits.append(fit)
    return fits


# --------------------------------------------------------------------------
# cross-validation


@dataclass(frozen=True)
class CvPlan:
    """Expanding-window folds: train on ``[0, e)``, evaluate on ``[e, e + horizon)``."""

    initial: int = 120
    horizon: int = 12
    n_alpha: int = 15
    n_lambda: int = 15
    alpha_min: float = 0.05
    lambda_ratio: float = 1e-3

    def __post_init__(self):
        if self.initial < 2 or self.horizon < 1:
            raise DataError("initial >= 2 and horizon >= 1 required")
        if self.n_alpha < 1 or self.n_lambda < 1:
            raise DataError("grid must be nonempty")

    def folds(self, n: int) -> list[tuple[int, int]]:
        """``(train_end, test_end)`` pairs; only complete evaluation blocks are used."""
        if self.initial + self.horizon > n:
            raise DataError(f"plan needs initial + horizon <= {n}")
        return [(e, e + self.horizon) for e in range(self.initial, n - self.horizon + 1, self.horizon)]

    def alphas(self) -> np.ndarray:
        return np.linspace(self.alpha_min, 1.0, self.n_alpha) if self.n_alpha > 1 else np.array([1.0])

    def lambdas(self, lmax: float) -> np.ndarray:
        if self.n_lambda == 1:
            return np.array([lmax])
        return np.geomspace(lmax, lmax * self.lambda_ratio, self.n_lambda)


def log_loss(y, p) -> float:
    p = np.clip(p, 1e-15, 1 - 1e-15)
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log1p(-p)))


def cv_tune(d: Design, plan: CvPlan = CvPlan()) -> tuple[float, float, EnetFit, list[dict]]:
    """Grid search over (alpha, lambda) scored by held-out log-loss on expanding folds.

    The penalty grid for each ``alpha`` runs from ``lambda_max`` of the full
    sample down by ``plan.lambda_ratio``. Returns the selected pair, the refit on
    all rows and the table of mean held-out losses.
    """
    folds = plan.folds(d.n)
    grid = [(a, plan.lambdas(lambda_max(d, a))) for a in plan.alphas()]
    losses = {}
    used = 0
    for e, f in folds:
        train, test = d.rows(slice(0, e)), d.rows(slice(e, f))
        if train.y.min() == train.y.max():
            warnings.warn(f"fold ending at {e} has a single-class training window; skipped")
            continue
        try:
            train.standardized()
        except DataError:
            warnings.warn(f"fold ending at {e} has a constant feature; skipped")
            continue
        used += 1
        for a, lams in grid:
            for fit in enet_path(train, a, lams):
                losses.setdefault((a, fit.lam), []).append(log_loss(test.y, fit.predict_proba(test.X)))
    if used == 0:
        raise DataError("every fold was skipped")
    table = [{"alpha": float(a), "lambda": float(lam), "mean_loss": float(np.mean(losses[(a, lam)])),
              "folds": len(losses[(a, lam)])} for a, lams in grid for lam in lams]
    best = min(table, key=lambda r: r["mean_loss"])
    fit = fit_enet(d, best["alpha"], best["lambda"])
    fit.cv_table = table
    return best["alpha"], best["lambda"], fit, table


# --------------------------------------------------------------------------
# selection and diagnostics


def _intercept_only(d: Design) -> LogitFit:
    return fit_logit(Design((), np.empty((d.n, 0)), d.y))


def lr_test(full: LogitFit, reduced: LogitFit) -> tuple[float, float]:
    df = len(full.coef) - len(reduced.coef)
    stat = max(0.0, 2 * (full.loglik - reduced.loglik))
    return stat, float(stats.chi2.sf(stat, df))


def backward_stepwise(d: Design, p_out: float = 0.05) -> tuple[LogitFit, list[str]]:
    """Drop, one at a time, the feature with the largest likelihood-ratio p-value above ``p_out``."""
    kept = list(d.names)
    fit = fit_logit(d)
    while kept:
        worst, worst_p = None, -1.0
        for name in kept:
            sub = [k for k in kept if k != name]
            reduced = fit_logit(d.select(sub)) if sub else _intercept_only(d)
            _, pv = lr_test(fit, reduced)
            if pv > worst_p:
                worst, worst_p, worst_fit = name, pv, reduced
        if worst_p <= p_out:
            break
        kept.remove(worst)
        fit = worst_fit
    return fit, kept


@dataclass
class Diagnostics:
    vif: dict
    link_test_p: float
    lr_stat: float
    lr_p: float


def vif(X) -> np.ndarray:
    """Variance inflation factors; ``inf`` for a feature that is a linear combination of the others."""
    X = as_2d(X, "X")
    n, p = X.shape
    out = np.empty(p)
    for j in range(p):
        others = np.column_stack([np.ones(n), np.delete(X, j, axis=1)])
        try:
            r2 = r_squared(X[:, j], others)
        except NumericError:
            out[j] = np.inf
            continue
        out[j] = np.inf if r2 >= 1 - 1e-12 else 1.0 / (1.0 - r2)
    return out


def link_test(d: Design, fit: LogitFit) -> float:
    """p-value of the squared linear predictor when added to a logit on the linear predictor."""
    eta = fit.decision_function(d.X)
    sq = eta * eta
    # residualizing hat^2 on (1, hat) leaves its coefficient and Wald test unchanged
    # but removes the near-collinearity when hat varies little
    H = np.column_stack([np.ones(d.n), eta])
    sq = sq - H @ np.linalg.lstsq(H, sq, rcond=None)[0]
    Z = np.column_stack([eta, sq])
    Z = Z / np.where(Z.std(axis=0) > 0, Z.std(axis=0), 1.0)
    aux = fit_logit(Design(("hat", "hatsq"), Z, d.y))
    return float(aux.pvalues[2])


def diagnostics(d: Design, fit: LogitFit) -> Diagnostics:
    v = vif(d.X) if d.p > 1 else np.ones(d.p)
    stat, pv = lr_test(fit, _intercept_only(d))
    return Diagnostics(dict(zip(d.names, v.tolist())), link_test(d, fit), stat, pv)


# --------------------------------------------------------------------------
# classification


@dataclass(frozen=True)
class ConfusionMatrix:
    """2x2 counts, rows = predicted class (0, 1), columns = reference class (0, 1)."""

    counts: tuple

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.shape != (2, 2) or np.any(c < 0) or np.any(c != np.round(c)):
            raise DataError("confusion matrix needs 2x2 nonnegative integer counts")
        object.__setattr__(self, "counts", tuple(tuple(int(v) for v in row) for row in c))

    @property
    def total(self) -> int:
        return sum(map(sum, self.counts))

    @property
    def accuracy(self) -> float:
        return (self.counts[0][0] + self.counts[1][1]) / self.total

    @property
    def sensitivity(self) -> float:
        """True-positive rate for class 1."""
        pos = self.counts[0][1] + self.counts[1][1]
        return self.counts[1][1] / pos if pos else float("nan")

    @property
    def specificity(self) -> float:
        neg = self.counts[0][0] + self.counts[1][0]
        return self.counts[0][0] / neg if neg else float("nan")

    @classmethod
    def from_labels(cls, predicted, reference) -> "ConfusionMatrix":
        p, r = check_binary(predicted, "predicted"), check_binary(reference, "reference")
        if p.shape != r.shape:
            raise DataError("predicted and reference lengths differ")
        c = np.zeros((2, 2), int)
        np.add.at(c, (p.astype(int), r.astype(int)), 1)
        return cls(c)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["predicted", "reference_0", "reference_1"])
        for k, row in enumerate(self.counts):
            w.writerow([k, *row])
        return buf.getvalue()


def classify_and_score(fit, X_test, y_test, threshold: float = 0.5,
                       names: Sequence[str] | None = None) -> tuple[ConfusionMatrix, float]:
    """Predict class 1 when the fitted probability is at least ``threshold``."""
    if names is not None and tuple(names) != tuple(fit.names):
        raise DataError(f"test columns {tuple(names)} do not match fitted features {tuple(fit.names)}")
    X = _xmat(X_test, len(fit.names))
    pred = (fit.predict_proba(X) >= threshold).astype(float)
    cm = ConfusionMatrix.from_labels(pred, as_1d(y_test, "y_test"))
    return cm, cm.accuracy


# --------------------------------------------------------------------------
# estimator wrappers


class LogitRegression(ClassifierMixin, BaseEstimator):
    """Unpenalized logistic regression (``fit`` / ``predict_proba`` / ``predict``)."""

    def __init__(self, threshold=0.5):
        self.threshold = threshold

    def fit(self, X, y):
        X = as_2d(X)
        self.fit_ = fit_logit(Design.from_arrays(X, y))
        self.coef_, self.intercept_ = self.fit_.coef, self.fit_.intercept
        self.classes_ = np.array([0.0, 1.0])
        self.n_features_in_ = X.shape[1]
        return self

    def predict_proba(self, X):
        p = self.fit_.predict_proba(X)
        return np.column_stack([1 - p, p])

    def predict(self, X):
        return (self.predict_proba(X)[:, 1] >= self.threshold).astype(float)


class ElasticNetLogit(LogitRegression):
    """Elastic-net logistic regression at fixed ``(alpha, lam)``; ``lam=None`` tunes by expanding-window CV."""

    def __init__(self, alpha=0.5, lam=None, initial=120, horizon=12, threshold=0.5):
        self.alpha = alpha
        self.lam = lam
        self.initial = initial
        self.horizon = horizon
        self.threshold = threshold

    def fit(self, X, y):
        X = as_2d(X)
        d = Design.from_arrays(X, y)
        if self.lam is None:
            self.alpha_, self.lam_, self.fit_, self.cv_table_ = cv_tune(d, CvPlan(self.initial, self.horizon))
        else:
            self.alpha_, self.lam_ = self.alpha, self.lam
            self.fit_ = fit_enet(d, self.alpha, self.lam)
        self.coef_, self.intercept_ = self.fit_.coef, self.fit_.intercept
        self.classes_ = np.array([0.0, 1.0])
        self.n_features_in_ = X.shape[1]
        return self
