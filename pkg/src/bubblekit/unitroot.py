"""Unit-root and explosiveness tests.

ADF and KPSS stationarity tests, the Breusch-Pagan heteroskedasticity check,
and the recursive right-tailed statistics (SADF, GSADF, BSADF) with
simulation-based critical values and episode date-stamping.

Every ADF regression over every sub-sample window is solved from prefix sums
of the regressor cross-products, so a full BSADF scan costs one batched
small linear solve per window rather than one least-squares fit.
"""
from __future__ import annotations

import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict
from importlib import resources
from typing import Sequence

import numpy as np
from scipy import stats
from sklearn.base import BaseEstimator

from ._ols import ols
from ._validation import DataError, NumericError, as_1d, as_2d, check_level, rng_for
from .ts import TimeSeries, format_month

_DETERMINISTIC = ("none", "constant", "trend")

# MacKinnon (2010) response surfaces: cv(T) = b0 + b1/T + b2/T^2 + b3/T^3, levels 1/5/10 %
_MACKINNON = {
    "none": [[-2.56574, -2.2358, -3.627, 0.0], [-1.941, -0.2686, -3.365, 31.223],
             [-1.61682, 0.2656, -2.714, 25.364]],
    "constant": [[-3.43035, -6.5393, -16.786, -79.433], [-2.86154, -2.8903, -4.234, -40.04],
                 [-2.56677, -1.5384, -2.809, 0.0]],
    "trend": [[-3.95877, -9.0531, -28.428, -134.155], [-3.41049, -4.3904, -9.036, -45.374],
              [-3.12705, -2.5856, -3.925, -22.38]],
}
_ADF_LEVELS = (0.01, 0.05, 0.10)


@dataclass(frozen=True)
class AdfSpec:
    """Deterministic terms and lag rule of the ADF regression.

    ``lag_rule="fixed"`` uses exactly ``k`` lagged differences; ``lag_rule="bic"``
    searches ``0..k`` (``k=None``: ``floor(12 * (T/100) ** 0.25)``).
    """

    deterministic: str = "constant"
    lag_rule: str = "bic"
    k: int | None = None

    def __post_init__(self):
        if self.deterministic not in _DETERMINISTIC:
            raise DataError(f"deterministic must be one of {_DETERMINISTIC}")
        if self.lag_rule not in ("fixed", "bic"):
            raise DataError("lag_rule must be 'fixed' or 'bic'")
        if self.k is not None and self.k < 0:
            raise DataError("lag order must be >= 0")
        if self.lag_rule == "fixed" and self.k is None:
            object.__setattr__(self, "k", 0)

    def max_lag(self, nobs: int) -> int:
        if self.k is not None:
            return int(self.k)
        return int(math.floor(12 * (nobs / 100) ** 0.25))

    def describe(self) -> str:
        return f"{self.deterministic}/{self.lag_rule}({self.k})"

    @property
    def n_det(self) -> int:
        return _DETERMINISTIC.index(self.deterministic)


#: lag-0, constant-only regression: the default for the recursive statistics
SCAN_SPEC = AdfSpec("constant", "fixed", 0)


@dataclass
class AdfResult:
    statistic: float
    lag: int
    nobs: int
    critical_values: dict
    reject: dict
    tail: str = "left"


def _adf_design(y: np.ndarray, k: int, deterministic: str):
    """Rows for t = k+1..T-1: regressors [y_{t-1}, det..., dy_{t-1..t-k}] and dy_t."""
    dy = np.diff(y)
    T = y.shape[0]
    t = np.arange(k + 1, T)
    cols = [y[t - 1]]
    if deterministic in ("constant", "trend"):
        cols.append(np.ones(t.shape[0]))
    if deterministic == "trend":
        cols.append(t.astype(float))
    for j in range(1, k + 1):
        cols.append(dy[t - 1 - j])
    return dy[t - 1], np.column_stack(cols)


def adf_test(s, spec: AdfSpec = AdfSpec(), tail: str = "left",
             cv_reps: int = 2000, cv_seed: int = 0) -> AdfResult:
    """Augmented Dickey-Fuller t-ratio on the lagged level.

    ``tail="left"`` tests a unit root against stationarity with MacKinnon
    (2010) critical values; ``tail="right"`` tests against an explosive root
    with critical values simulated under the weak-intercept null at the same T.
    """
    y = as_1d(getattr(s, "values", s), "series")
    T = y.shape[0]
    kmax = spec.max_lag(T)
    n_reg = 1 + spec.n_det
    if T - 1 - kmax < 10 + n_reg + kmax:
        raise DataError(f"series too short for ADF with {kmax} lags: {T} observations")
    if spec.lag_rule == "fixed":
        k = kmax
    else:
        # lag search on the common sample t = kmax+1..T-1
        best = None
        for kk in range(kmax + 1):
            dep, X = _adf_design(y, kmax, spec.deterministic)
            Xk = X[:, :n_reg + kk]
            res = ols(dep, Xk)
            n = dep.shape[0]
            bic = n * math.log(res.rss / n) + Xk.shape[1] * math.log(n)
            if best is None or bic < best[0] - 1e-12:
                best = (bic, kk)
        k = best[1]
    dep, X = _adf_design(y, k, spec.deterministic)
    res = ols(dep, X)
    stat = float(res.params[0] / res.bse[0])
    n = dep.shape[0]
    if tail == "left":
        cvs = {lvl: float(sum(b / n ** i for i, b in enumerate(coef)))
               for lvl, coef in zip(_ADF_LEVELS, _MACKINNON[spec.deterministic])}
        reject = {lvl: stat < cv for lvl, cv in cvs.items()}
    elif tail == "right":
        table = mc_critical_values("ADF", T, None, AdfSpec(spec.deterministic, "fixed", k),
                                   reps=cv_reps, seed=cv_seed, levels=(0.90, 0.95, 0.99))
        cvs = {round(1 - lvl, 10): float(v) for lvl, v in zip(table.levels, table.values)}
        reject = {lvl: stat > cv for lvl, cv in cvs.items()}
    else:
        raise DataError("tail must be 'left' or 'right'")
    return AdfResult(stat, k, n, cvs, reject, tail)


# --------------------------------------------------------------------------
# KPSS

_KPSS_TABLE = None


def _kpss_table() -> dict:
    global _KPSS_TABLE
    if _KPSS_TABLE is None:
        with resources.files("bubblekit").joinpath("data/kpss_cv.json").open() as fh:
            _KPSS_TABLE = json.load(fh)
    return _KPSS_TABLE


@dataclass
class KpssResult:
    statistic: float
    lags: int
    critical_values: dict
    reject: dict


def kpss_test(s, deterministic: str = "level", lags: int | None = None) -> KpssResult:
    """KPSS stationarity test with a Bartlett-kernel long-run variance.

    Bandwidth defaults to ``floor(4 * (T/100) ** 0.25)``. Critical values come
    from the bundled null simulation (see ``data/kpss_cv.json``).
    """
    y = as_1d(getattr(s, "values", s), "series")
    T = y.shape[0]
    if T < 20:
        raise DataError(f"KPSS needs at least 20 observations, got {T}")
    if deterministic == "level":
        e = y - y.mean()
    elif deterministic == "trend":
        t = np.arange(T, dtype=float)
        X = np.column_stack([np.ones(T), t])
        e = y - X @ np.linalg.lstsq(X, y, rcond=None)[0]
    else:
        raise DataError("deterministic must be 'level' or 'trend'")
    L = int(math.floor(4 * (T / 100) ** 0.25)) if lags is None else int(lags)
    lrv = float(e @ e) / T
    for j in range(1, L + 1):
        lrv += 2 * (1 - j / (L + 1)) * float(e[j:] @ e[:-j]) / T
    if not lrv > 1e-14 * max(1.0, float(np.abs(y).max()) ** 2):
        raise NumericError("zero long-run variance: residuals are constant")
    S = np.cumsum(e)
    stat = float(S @ S) / (T * T * lrv)
    table = _kpss_table()[deterministic]
    cvs = {float(k): float(v) for k, v in table.items()}
    return KpssResult(stat, L, cvs, {a: stat > cv for a, cv in cvs.items()})


# --------------------------------------------------------------------------
# Breusch-Pagan

def breusch_pagan(residuals, regressors) -> tuple[float, float]:
    """Koenker's studentised Breusch-Pagan test: ``n * R^2`` of e^2 on [1, Z].

    ``regressors`` excludes the constant; the chi-square reference has one
    degree of freedom per regressor column.
    """
    e = as_1d(residuals, "residuals")
    Z = as_2d(regressors, "regressors")
    n, k = Z.shape
    if n != e.shape[0]:
        raise DataError("residuals and regressors must have the same number of rows")
    if n < k + 2:
        raise DataError(f"need at least {k + 2} observations, got {n}")
    if not np.any(e != 0):
        raise DataError("residuals are all zero")
    u = e * e
    X = np.column_stack([np.ones(n), Z])
    res = ols(u, X)
    tss = float(((u - u.mean()) ** 2).sum())
    if tss == 0:
        return 0.0, 1.0
    stat = n * (1 - res.rss / tss)
    return float(stat), float(stats.chi2.sf(stat, k))


# --------------------------------------------------------------------------
# recursive statistics

def min_window(T: int) -> float:
    """Minimal window fraction ``0.01 + 1.8 / sqrt(T)``, raised so the window holds >= 10 points."""
    if T < 20:
        raise DataError(f"sample size must be >= 20, got {T}")
    r0 = 0.01 + 1.8 / math.sqrt(T)
    if math.floor(r0 * T) < 10:
        r0 = 10 / T
    return r0


def window_size(T: int, r0: float) -> int:
    return max(int(math.floor(r0 * T + 1e-9)), 3)


def _scan_all(y: np.ndarray, m0: int, spec: AdfSpec):
    """ADF statistics for every window [r1, r2] with r2 - r1 + 1 >= m0.

    Returns (r1, r2, stat) flat arrays sorted by r2 then r1. Windows whose
    regression is singular get -inf.
    """
    T = y.shape[0]
    kmax = spec.max_lag(m0) if spec.lag_rule == "bic" else int(spec.k)
    n_reg = 1 + spec.n_det
    dep, X = _adf_design(y, kmax, spec.deterministic)
    X = X.copy()
    if spec.n_det >= 1:
        # centring the level (and trend) leaves the slope and its s.e. unchanged
        X[:, 0] -= X[:, 0].mean()
        if spec.n_det == 2:
            X[:, 2] -= X[:, 2].mean()
    Z = np.column_stack([X, dep])
    p = Z.shape[1]
    P = np.zeros((T, p, p))
    P[kmax + 1:] = np.cumsum(Z[:, :, None] * Z[:, None, :], axis=0)

    r2 = np.concatenate([np.full(r + 2 - m0, r) for r in range(m0 - 1, T)])
    r1 = np.concatenate([np.arange(0, r + 2 - m0) for r in range(m0 - 1, T)])
    lo = r1 + kmax  # prefix index before the first usable row t = r1 + kmax + 1
    S = P[r2] - P[lo]
    nobs = (r2 - lo).astype(float)

    def fit(m):
        A = S[:, :m, :m]
        b = S[:, :m, p - 1]
        rhs = np.zeros((A.shape[0], m, 2))
        rhs[:, :, 0] = b
        rhs[:, 0, 1] = 1.0
        with np.errstate(all="ignore"):
            try:
                sol = np.linalg.solve(A, rhs)
            except np.linalg.LinAlgError:
                sol = np.stack([_safe_solve(a, r) for a, r in zip(A, rhs)])
            beta = sol[:, :, 0]
            rss = S[:, p - 1, p - 1] - np.einsum("ij,ij->i", beta, b)
        return beta[:, 0], rss, sol[:, 0, 1]

    if spec.lag_rule == "fixed":
        g, rss, inv00 = fit(n_reg + kmax)
        m = n_reg + kmax
    else:
        best_bic = np.full(r1.shape[0], np.inf)
        g = np.full(r1.shape[0], np.nan)
        rss = np.full(r1.shape[0], np.nan)
        inv00 = np.full(r1.shape[0], np.nan)
        m = np.zeros(r1.shape[0])
        for kk in range(kmax + 1):
            gk, rk, ik = fit(n_reg + kk)
            with np.errstate(all="ignore"):
                bic = nobs * np.log(np.maximum(rk, 1e-300) / nobs) + (n_reg + kk) * np.log(nobs)
            better = bic < best_bic - 1e-12
            best_bic = np.where(better, bic, best_bic)
            g = np.where(better, gk, g)
            rss = np.where(better, rk, rss)
            inv00 = np.where(better, ik, inv00)
            m = np.where(better, n_reg + kk, m)
    with np.errstate(all="ignore"):
        dof = nobs - m
        s2 = rss / dof
        se = np.sqrt(s2 * inv00)
        stat = g / se
    bad = ~np.isfinite(stat) | (dof < 1)
    stat = np.where(bad, -np.inf, stat)
    return r1, r2, stat


def _safe_solve(a, rhs):
    try:
        return np.linalg.solve(a, rhs)
    except np.linalg.LinAlgError:
        return np.full(rhs.shape, np.nan)


@dataclass
class ScanStats:
    r2: np.ndarray          # series index of each window end point
    bsadf: np.ndarray
    forward: np.ndarray     # ADF on [0, r2]
    sadf: float
    gsadf: float
    adf: float              # full-sample statistic


def scan_statistics(y, r0: float | None = None, spec: AdfSpec = SCAN_SPEC) -> ScanStats:
    """BSADF sequence, forward ADF sequence, SADF, GSADF and the full-sample ADF."""
    y = as_1d(getattr(y, "values", y), "series", min_len=20)
    T = y.shape[0]
    r0 = min_window(T) if r0 is None else float(r0)
    m0 = window_size(T, r0)
    r1, r2, st = _scan_all(y, m0, spec)
    starts = np.flatnonzero(np.r_[True, r2[1:] != r2[:-1]])
    bsadf = np.maximum.reduceat(st, starts)
    forward = st[starts]  # r1 = 0 is the first entry of each r2 group
    ends = np.arange(m0 - 1, T)
    return ScanStats(ends, bsadf, forward, float(forward.max()), float(bsadf.max()), float(forward[-1]))


# --------------------------------------------------------------------------
# Monte Carlo critical values

KINDS = ("ADF", "SADF", "GSADF", "BSADF")


@dataclass
class CriticalValueTable:
    """Simulated null quantiles of a right-tailed statistic.

    For ``kind="BSADF"`` ``values`` has one row per quantile level and one
    column per window end point ``r2`` (series indexes ``m0 - 1 .. T - 1``).
    """

    kind: str
    T: int
    r0: float
    levels: tuple
    values: list
    reps: int
    seed: int
    spec: str
    null: dict = field(default_factory=lambda: {"d": 1.0, "eta": 1.0, "gamma": 1.0})

    def value(self, level: float):
        for lvl, v in zip(self.levels, self.values):
            if abs(lvl - level) < 1e-9:
                return np.asarray(v, dtype=float) if self.kind == "BSADF" else float(v)
        raise DataError(f"level {level} not available in critical-value table (have {self.levels})")

    def to_json(self) -> str:
        d = asdict(self)
        d["levels"] = list(self.levels)
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "CriticalValueTable":
        d = json.loads(text)
        d["levels"] = tuple(d["levels"])
        return cls(**d)


def cache_dir() -> str:
    path = os.environ.get("BUBBLEKIT_CACHE") or os.path.join(os.path.expanduser("~"), ".cache", "bubblekit")
    os.makedirs(path, exist_ok=True)
    return path


def _cache_key(kind, T, r0, spec, reps, seed, levels) -> str:
    payload = json.dumps({"kind": kind, "T": T, "r0": round(r0, 12), "spec": spec.describe(),
                          "reps": reps, "seed": seed, "levels": [round(x, 12) for x in levels],
                          "v": 1}, sort_keys=True)
    return f"{kind.lower()}-{hashlib.sha256(payload.encode()).hexdigest()[:20]}.json"


def simulate_null_path(T: int, rng: np.random.Generator, d: float = 1.0, eta: float = 1.0) -> np.ndarray:
    """Random walk with weak drift ``d * T ** -eta`` and N(0, 1) shocks."""
    return np.cumsum(d * T ** (-eta) + rng.standard_normal(T))


def _null_chunk(args):
    T, r0, spec, seed, lo, hi = args
    out = []
    for i in range(lo, hi):
        y = simulate_null_path(T, rng_for(seed, i))
        st = scan_statistics(y, r0, spec)
        out.append((st.adf, st.sadf, st.gsadf, st.bsadf))
    return out


def mc_critical_values(kind: str, T: int, r0: float | None = None, spec: AdfSpec = SCAN_SPEC,
                       reps: int = 2000, seed: int = 0, levels: Sequence[float] = (0.90, 0.95, 0.99),
                       workers: int = 1, use_cache: bool = True) -> CriticalValueTable:
    """Right-tail quantiles of ADF / SADF / GSADF / BSADF under the weak-intercept null.

    One simulation produces all four statistics; every kind is cached under a
    content-addressed file name, so later requests with the same parameters are
    read back from disk. Replication ``i`` draws from the stream ``(seed, i)``,
    making the table independent of ``workers``.
    """
    kind = kind.upper()
    if kind not in KINDS:
        raise DataError(f"kind must be one of {KINDS}")
    if reps < 500:
        raise DataError("reps must be >= 500")
    levels = tuple(float(check_level(x, "level")) for x in levels)
    if T < 20:
        raise DataError("T must be >= 20")
    r0 = min_window(T) if r0 is None else float(r0)
    path = os.path.join(cache_dir(), _cache_key(kind, T, r0, spec, reps, seed, levels))
    if use_cache and os.path.exists(path):
        with open(path) as fh:
            return CriticalValueTable.from_json(fh.read())

    bounds = np.linspace(0, reps, max(1, workers) * 4 + 1).astype(int) if workers > 1 else np.array([0, reps])
    jobs = [(T, r0, spec, seed, int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            chunks = list(ex.map(_null_chunk, jobs))
    else:
        chunks = [_null_chunk(j) for j in jobs]
    rows = [r for c in chunks for r in c]
    adf = np.array([r[0] for r in rows])
    sadf = np.array([r[1] for r in rows])
    gsadf = np.array([r[2] for r in rows])
    bsadf = np.vstack([r[3] for r in rows])
    lv = np.array(levels)
    tables = {
        "ADF": np.quantile(adf, lv).tolist(),
        "SADF": np.quantile(sadf, lv).tolist(),
        "GSADF": np.quantile(gsadf, lv).tolist(),
        "BSADF": np.quantile(bsadf, lv, axis=0).tolist(),
    }
    out = None
    for k, vals in tables.items():
        tab = CriticalValueTable(k, T, r0, levels, vals, reps, seed, spec.describe())
        if use_cache:
            with open(os.path.join(cache_dir(), _cache_key(k, T, r0, spec, reps, seed, levels)), "w") as fh:
                fh.write(tab.to_json())
        if k == kind:
            out = tab
    return out


# --------------------------------------------------------------------------
# date-stamping

@dataclass(frozen=True)
class Episode:
    start: int      # first index with BSADF > cv
    peak: int       # argmax of BSADF within [start, end)
    end: int        # first index after start with BSADF < cv (last index if never)
    closed: bool = True

    @property
    def duration(self) -> int:
        return self.end - self.start


@dataclass
class ExuberanceResult:
    r2: np.ndarray
    bsadf: np.ndarray
    cv: np.ndarray
    forward: np.ndarray
    sadf: float
    gsadf: float
    alpha: float
    episodes: list
    start_month: int | None = None

    @property
    def flags(self) -> np.ndarray:
        return self.bsadf > self.cv

    def exuberance_indicator(self, length: int) -> np.ndarray:
        """0/1 per series observation: 1 inside a date-stamped episode."""
        out = np.zeros(length, dtype=int)
        for ep in self.episodes:
            out[ep.start:ep.end] = 1
        return out

    def rows(self) -> list[tuple]:
        """``(r2, month, bsadf, cv, flag)`` records for CSV export."""
        month = (lambda i: format_month(self.start_month + int(i))) if self.start_month is not None else str
        return [(int(i), month(i), float(b), float(c), int(b > c))
                for i, b, c in zip(self.r2, self.bsadf, self.cv)]


def date_stamp(r2: np.ndarray, stat: np.ndarray, cv: np.ndarray) -> list[Episode]:
    """Episodes from first-crossing rules: start where stat first exceeds cv,
    end at the first later point where it falls below."""
    episodes = []
    n = stat.shape[0]
    i = 0
    while i < n:
        if stat[i] > cv[i]:
            j = i + 1
            while j < n and not stat[j] < cv[j]:
                j += 1
            closed = j < n
            end = j if closed else n - 1
            seg = stat[i:j]
            peak = i + int(np.argmax(seg))
            episodes.append(Episode(int(r2[i]), int(r2[peak]), int(r2[end]), closed))
            i = j + 1 if closed else n
        else:
            i += 1
    return episodes


def exuberance_scan(s, r0: float | None = None, spec: AdfSpec = SCAN_SPEC,
                    cv: CriticalValueTable | None = None, alpha: float = 0.05,
                    cv_reps: int = 2000, seed: int = 0) -> ExuberanceResult:
    """BSADF sequence with date-stamped explosive episodes.

    ``cv`` must be a BSADF table for the same T, r0 and regression spec; when
    omitted it is simulated (and cached) with ``cv_reps`` and ``seed``.
    """
    y = as_1d(getattr(s, "values", s), "series", min_len=20)
    alpha = check_level(alpha)
    T = y.shape[0]
    r0 = min_window(T) if r0 is None else float(r0)
    if cv is None:
        cv = mc_critical_values("BSADF", T, r0, spec, reps=cv_reps, seed=seed,
                                levels=sorted({0.90, 0.95, 0.99, round(1 - alpha, 10)}))
    if cv.kind != "BSADF" or cv.T != T or abs(cv.r0 - r0) > 1e-9 or cv.spec != spec.describe():
        raise DataError(f"critical-value table (kind={cv.kind}, T={cv.T}, r0={cv.r0:.4f}, spec={cv.spec}) "
                        f"does not match the scan (T={T}, r0={r0:.4f}, spec={spec.describe()})")
    st = scan_statistics(y, r0, spec)
    cvs = cv.value(round(1 - alpha, 10))
    if cvs.shape[0] != st.bsadf.shape[0]:
        raise DataError("critical-value grid does not match the scan grid")
    return ExuberanceResult(st.r2, st.bsadf, cvs, st.forward, st.sadf, st.gsadf, alpha,
                            date_stamp(st.r2, st.bsadf, cvs),
                            s.start if isinstance(s, TimeSeries) else None)


class BSADFDetector(BaseEstimator):
    """Estimator wrapper around :func:`exuberance_scan`.

    ``fit(y)`` stores ``result_``, ``episodes_`` and ``bsadf_``;
    ``fit_predict(y)`` returns the 0/1 exuberance indicator per observation.
    """

    def __init__(self, r0=None, deterministic="constant", lags=0, alpha=0.05, cv_reps=2000, seed=0):
        self.r0 = r0
        self.deterministic = deterministic
        self.lags = lags
        self.alpha = alpha
        self.cv_reps = cv_reps
        self.seed = seed

    def _spec(self):
        if self.lags == "bic":
            return AdfSpec(self.deterministic, "bic", None)
        return AdfSpec(self.deterministic, "fixed", int(self.lags))

    def fit(self, y, _=None):
        self.result_ = exuberance_scan(y, self.r0, self._spec(), alpha=self.alpha,
                                       cv_reps=self.cv_reps, seed=self.seed)
        self.episodes_ = self.result_.episodes
        self.bsadf_ = self.result_.bsadf
        self.n_obs_ = len(as_1d(getattr(y, "values", y)))
        return self

    def fit_predict(self, y, _=None):
        return self.fit(y).result_.exuberance_indicator(self.n_obs_)
