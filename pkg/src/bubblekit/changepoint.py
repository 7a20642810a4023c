"""Kolmogorov-Smirnov change-point detection: batch test, sequential monitor, segmentation.

The sequential monitor compares, after every new observation, all splits of the
current window with the scaled two-sample KS statistic

    D_{k,t} = sqrt(k (t - k) / t) * sup_x |F_{1..k}(x) - F_{k+1..t}(x)|,   D_t = max_k D_{k,t}

and signals when ``D_t`` exceeds a threshold ``h_t``. The thresholds are chosen so
that, given no earlier signal, the probability of a false alarm is the same at
every ``t``; with ``alpha = 1 / arl0`` the in-control run length is geometric with
mean ``arl0``. Because the statistic depends on ranks only, the thresholds do not
depend on the (continuous) null distribution.
"""
from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

import numpy as np
from sklearn.base import BaseEstimator

from . import _ks
from ._validation import DataError, NumericError, as_1d, check_level, rng_for
from .ts import PhaseLabeling, TimeSeries, format_month

ARL_GRID = (100, 500, 1000, 5000)
KMIN = 2


def ks_two_sample(a, b) -> float:
    """Two-sample Kolmogorov-Smirnov distance ``sup_x |F_a(x) - F_b(x)|``.

    Both ECDFs are evaluated at every pooled observation, so tied values move
    the two step functions together.

    Examples
    --------
    >>> ks_two_sample([1, 3], [2, 4])
    0.5
    """
    a = np.sort(as_1d(a, "a"))
    b = np.sort(as_1d(b, "b"))
    pooled = np.concatenate([a, b])
    fa = np.searchsorted(a, pooled, side="right") / a.size
    fb = np.searchsorted(b, pooled, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def _window_state(x: np.ndarray):
    n = x.shape[0]
    rank = np.empty(n, np.int64)
    uniq = np.empty(n)
    counts = np.empty(n, np.int64)
    nu = _ks.ranks_from_scratch(x, n, rank, uniq, counts)
    return rank, counts, nu


def split_statistics(x) -> np.ndarray:
    """Scaled split statistics ``D_{k,n}`` for ``k = 1 .. n-1`` (entry ``k``; entry 0 is 0)."""
    x = as_1d(x, "x", 2)
    rank, counts, nu = _window_state(x)
    out = np.zeros(x.shape[0])
    _ks.split_profile(rank, counts, nu, x.shape[0], out)
    return out


def max_split(x, kmin: int = KMIN) -> tuple[float, int]:
    """``(D_n, k_hat)``: maximum of the scaled split statistic over splits ``k = kmin .. n - 1``.

    The split ``k`` means the first ``k`` observations form the first sample.
    """
    x = as_1d(x, "x", kmin + 1)
    rank, counts, nu = _window_state(x)
    s, k = _ks.split_scan(rank, counts, nu, x.shape[0], kmin)
    return float(s), int(k)


@dataclass(frozen=True)
class BatchResult:
    statistic: float
    tau: int
    p_value: float
    significant: bool
    reps: int

    @property
    def change_index(self) -> int:
        """0-based index of the first observation after the change."""
        return self.tau


def batch_detect(x, alpha: float = 0.05, reps: int = 999, seed: int = 0) -> BatchResult:
    """Single change-point test over a complete sample.

    ``tau`` is the size of the first segment, so observations ``0..tau-1`` lie
    before the change. Significance comes from ``reps`` random permutations of
    the data, with p-value ``(1 + #{D* >= D}) / (reps + 1)``.
    """
    x = as_1d(x, "x")
    if x.shape[0] < 6:
        raise DataError(f"batch_detect needs at least 6 observations, got {x.shape[0]}")
    check_level(alpha)
    if reps < 1:
        raise DataError("reps must be positive")
    stat, tau = max_split(x)
    exceed = 0
    for i in range(reps):
        s, _ = max_split(rng_for(seed, i).permutation(x))
        exceed += s >= stat - 1e-12
    p = (1 + exceed) / (reps + 1)
    return BatchResult(stat, tau, p, p <= alpha, reps)


# --------------------------------------------------------------------------
# thresholds


@dataclass(frozen=True)
class CpmConfig:
    """Monitoring configuration: target in-control ARL and start-up length."""

    arl0: int = 500
    burn_in: int = 20
    statistic: str = "ks"

    def __post_init__(self):
        if int(self.arl0) not in ARL_GRID:
            raise DataError(f"arl0 must be one of {ARL_GRID}, got {self.arl0}")
        if int(self.burn_in) < 4:
            raise DataError("burn_in must be >= 4")
        if self.statistic != "ks":
            raise DataError("only the Kolmogorov-Smirnov statistic is supported")


@dataclass
class ThresholdTable:
    """Thresholds ``h[t]`` indexed by the number of observations since the last restart.

    ``h[t]`` is infinite for ``t <= burn_in``. Values are stored up to the
    calibration horizon and held constant from there to ``horizon``.
    """

    arl0: int
    burn_in: int
    calibrated: list
    horizon: int
    reps: int
    seed: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        cal = np.asarray(self.calibrated, dtype=float)
        if cal.ndim != 1 or cal.size <= self.burn_in + 1:
            raise DataError("threshold table too short")
        if self.horizon < cal.size - 1:
            raise DataError("horizon shorter than the calibrated range")
        active = cal[self.burn_in + 1:]
        if not (np.all(np.isfinite(active)) and np.all(active > 0)):
            raise DataError("thresholds must be positive and finite")
        h = np.empty(self.horizon + 1)
        h[:cal.size] = cal
        h[cal.size:] = cal[-1]
        h[:self.burn_in + 1] = np.inf
        h.setflags(write=False)
        self._h = h

    @property
    def h(self) -> np.ndarray:
        return self._h

    @property
    def alpha(self) -> float:
        return 1.0 / self.arl0

    def to_json(self) -> str:
        d = {"arl0": self.arl0, "burn_in": self.burn_in, "horizon": self.horizon, "reps": self.reps,
             "seed": self.seed, "meta": self.meta,
             "calibrated": [None if not np.isfinite(v) else round(float(v), 10) for v in self.calibrated]}
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ThresholdTable":
        d = json.loads(text)
        d["calibrated"] = [np.inf if v is None else v for v in d["calibrated"]]
        return cls(**d)


def _null_rows(args):
    seed, lo, hi, n = args
    out = np.empty((hi - lo, n + 1))
    for j, i in enumerate(range(lo, hi)):
        x = rng_for(seed, i).standard_normal(n)
        out[j] = _ks.statistic_path(x, n, KMIN)
    return out


def null_statistic_matrix(streams: int, horizon: int, seed: int = 0, workers: int = 1) -> np.ndarray:
    """``D_t`` paths (row per stream, column ``t = 0..horizon``) for i.i.d. N(0, 1) streams."""
    bounds = np.linspace(0, streams, max(1, workers) * 4 + 1).astype(int) if workers > 1 else [0, streams]
    jobs = [(seed, int(a), int(b), horizon) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(_null_rows, jobs))
    else:
        parts = [_null_rows(j) for j in jobs]
    return np.vstack(parts)


def _block_width(t: int) -> int:
    return max(1, t // 25)


def calibrate_thresholds(D: np.ndarray, arl0: int, burn_in: int = 20, seed: int = 0,
                         horizon: int = 10_000) -> ThresholdTable:
    """Constant conditional-exceedance thresholds from simulated null paths ``D``.

    Time is cut into blocks whose width grows slowly with ``t`` (1 up to t = 49,
    then ``t // 25``). Within a block one threshold is used; it is the quantile of
    the block maximum, among streams without an earlier alarm, at level
    ``(1 - alpha) ** width``. Each step inside the block therefore keeps a
    conditional false-alarm probability of about ``alpha``. Narrow blocks at small
    ``t`` follow the fast-changing discrete null distribution; wider blocks later
    keep enough surviving streams per quantile.
    """
    D = np.asarray(D, dtype=float)
    n_streams, width = D.shape
    t_cal = width - 1
    if n_streams < 1000:
        raise DataError("need at least 1000 null streams")
    alpha = 1.0 / arl0
    h = np.full(t_cal + 1, np.inf)
    alive = np.ones(n_streams, bool)
    t = burn_in + 1
    while t <= t_cal:
        w = min(_block_width(t), t_cal + 1 - t)
        m = D[alive, t:t + w].max(axis=1)
        level = (1 - alpha) ** w
        # p(n+1) plotting position: unbiased exceedance on fresh streams, which
        # matters here because only a few dozen streams lie above each quantile
        ht = float(np.quantile(m, level, method="weibull"))
        h[t:t + w] = ht
        alive[alive] = m <= ht
        t += w
    meta = {"null": "iid N(0,1) streams (rank statistic, distribution-free)", "calibration_horizon": t_cal,
            "block_width": "max(1, t // 25)", "alive_at_end": int(alive.sum()),
            "beyond_calibration": "last calibrated value held constant"}
    return ThresholdTable(int(arl0), int(burn_in), h.tolist(), int(horizon), int(n_streams), int(seed), meta)


def mc_thresholds(config: CpmConfig, reps: int = 10_000, seed: int = 0, horizon: int = 10_000,
                  calibration_horizon: int = 600, workers: int = 1) -> ThresholdTable:
    """Simulate a threshold table on demand (minutes for the default size)."""
    if reps < 1000:
        raise DataError("reps must be >= 1000")
    D = null_statistic_matrix(reps, calibration_horizon, seed, workers)
    return calibrate_thresholds(D, config.arl0, config.burn_in, seed, horizon)


@lru_cache(maxsize=None)
def load_thresholds(arl0: int = 500) -> ThresholdTable:
    """Bundled table for ``arl0`` (burn-in 20)."""
    if int(arl0) not in ARL_GRID:
        raise DataError(f"no bundled table for arl0={arl0}; choose from {ARL_GRID}")
    text = resources.files("bubblekit").joinpath("data", f"cpm_ks_arl{int(arl0)}.json").read_text()
    return ThresholdTable.from_json(text)


def run_length(x, table: ThresholdTable) -> tuple[int, int]:
    """Observations until the first alarm on ``x`` (``-1`` if none) and the split at that time."""
    x = np.ascontiguousarray(as_1d(x, "x"))
    n, k = _ks.first_alarm(x, table.h, table.burn_in, KMIN)
    return int(n), int(k)


# --------------------------------------------------------------------------
# sequential monitoring


@dataclass(frozen=True)
class ChangePoint:
    """``tau``: index of the last observation of the old regime; ``detected_at``: alarm index."""

    tau: int
    detected_at: int
    statistic: float
    threshold: float

    @property
    def delay(self) -> int:
        return self.detected_at - self.tau


@dataclass
class Segmentation:
    change_points: list
    n_obs: int
    values: np.ndarray = field(repr=False, default=None)
    start: int | None = None

    @property
    def taus(self) -> list[int]:
        return [c.tau for c in self.change_points]

    def segments(self) -> list[dict]:
        """Summary per segment (first/last index, size, mean, standard deviation, median)."""
        edges = [0, *(c.tau + 1 for c in self.change_points), self.n_obs]
        out = []
        for a, b in zip(edges[:-1], edges[1:]):
            seg = self.values[a:b] if self.values is not None else None
            row = {"first": a, "last": b - 1, "n": b - a}
            if seg is not None and seg.size:
                row.update(mean=float(seg.mean()), sd=float(seg.std(ddof=1)) if seg.size > 1 else 0.0,
                           median=float(np.median(seg)))
            out.append(row)
        return out

    def rows(self) -> list[tuple]:
        def lab(i):
            return format_month(self.start + i) if self.start is not None else str(i)
        return [(lab(c.tau), lab(c.tau + 1), lab(c.detected_at), c.delay, c.statistic, c.threshold)
                for c in self.change_points]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["tau", "boundary", "detected", "delay", "statistic", "threshold"])
        for r in self.rows():
            w.writerow([r[0], r[1], r[2], r[3], repr(float(r[4])), repr(float(r[5]))])
        return buf.getvalue()


class KSChangePointMonitor:
    """Streaming KS change-point monitor with restart after each detection.

    After a signal at time ``t`` with estimated split ``tau``, monitoring restarts
    at ``tau + 1``: the observations ``tau + 1 .. t`` are replayed through a fresh
    window (and may themselves trigger further signals).

    Examples
    --------
    >>> mon = KSChangePointMonitor(CpmConfig(500))
    >>> for v in stream:                                    # doctest: +SKIP
    ...     cp = mon.update(v)
    """

    def __init__(self, config: CpmConfig = CpmConfig(), table: ThresholdTable | None = None):
        table = load_thresholds(config.arl0) if table is None else table
        if table.arl0 != config.arl0:
            raise DataError(f"table arl0={table.arl0} does not match config arl0={config.arl0}")
        if table.burn_in > config.burn_in:
            raise DataError("table was calibrated for a longer burn-in than configured")
        self.config = config
        self.table = table
        self._h = table.h
        self._hist: list[float] = []
        self.change_points: list[ChangePoint] = []
        self._reset(0)

    def _reset(self, seg_start: int):
        self._seg = seg_start
        self._n = 0
        self._nu = 0
        cap = 64
        self._rank = np.empty(cap, np.int64)
        self._uniq = np.empty(cap)
        self._counts = np.empty(cap, np.int64)

    def _grow(self):
        cap = 2 * self._rank.shape[0]
        for name, dt in (("_rank", np.int64), ("_uniq", float), ("_counts", np.int64)):
            old = getattr(self, name)
            new = np.empty(cap, dt)
            new[:old.shape[0]] = old
            setattr(self, name, new)

    @property
    def n_obs(self) -> int:
        return len(self._hist)

    def update(self, value: float) -> list[ChangePoint]:
        """Add one observation; return change points signalled while processing it."""
        v = float(value)
        if not np.isfinite(v):
            raise DataError("observations must be finite")
        self._hist.append(v)
        found = []
        i = self._seg + self._n
        while i < len(self._hist):
            if self._n >= self._rank.shape[0]:
                self._grow()
            self._nu = _ks.insert_value(self._hist[i], self._n, self._nu, self._rank, self._uniq, self._counts)
            self._n += 1
            n = self._n
            if n > self.config.burn_in:
                if n >= self._h.shape[0]:
                    raise NumericError(f"threshold horizon exhausted ({self.table.horizon} observations "
                                       "without a change)")
                s, k = _ks.split_scan(self._rank, self._counts, self._nu, n, KMIN)
                if s > self._h[n]:
                    cp = ChangePoint(self._seg + k - 1, i, float(s), float(self._h[n]))
                    self.change_points.append(cp)
                    found.append(cp)
                    self._reset(cp.tau + 1)
                    i = self._seg
                    continue
            i += 1
        return found

    def extend(self, values) -> list[ChangePoint]:
        out = []
        for v in np.asarray(values, dtype=float).ravel():
            out.extend(self.update(v))
        return out

    def segmentation(self, start: int | None = None) -> Segmentation:
        return Segmentation(list(self.change_points), len(self._hist), np.asarray(self._hist), start)


def monitor(x, config: CpmConfig = CpmConfig(), table: ThresholdTable | None = None) -> Segmentation:
    """Run the sequential monitor over ``x`` and return all detected change points."""
    start = x.start if isinstance(x, TimeSeries) else None
    vals = as_1d(x, "x")
    mon = KSChangePointMonitor(config, table)
    mon.extend(vals)
    return mon.segmentation(start)


def segment_returns(prices: TimeSeries, config: CpmConfig = CpmConfig(),
                    table: ThresholdTable | None = None) -> tuple[Segmentation, PhaseLabeling]:
    """Monitor the log returns of ``prices`` and label the resulting segments.

    Return ``i`` covers months ``start + i`` to ``start + i + 1`` and is dated at
    the later month. Each segment boundary is the month of the first return after
    an estimated change; segments are labelled ``phase_1``, ``phase_2``, ...
    """
    p = as_1d(prices, "prices", config.burn_in + 2)
    if np.any(p <= 0):
        raise DataError("prices must be strictly positive")
    start = prices.start if isinstance(prices, TimeSeries) else 0
    r = np.diff(np.log(p))
    seg = monitor(r, config, table)
    seg.start = start + 1
    bounds = tuple(seg.start + c.tau + 1 for c in seg.change_points)
    labels = tuple(f"phase_{i + 1}" for i in range(len(bounds) + 1))
    return seg, PhaseLabeling(bounds, labels)


class KSChangePointDetector(BaseEstimator):
    """Estimator wrapper: ``fit(x)`` stores ``change_points_`` (list of tau) and ``segmentation_``."""

    def __init__(self, arl0=500, burn_in=20):
        self.arl0 = arl0
        self.burn_in = burn_in

    def fit(self, x, _=None):
        self.segmentation_ = monitor(x, CpmConfig(self.arl0, self.burn_in))
        self.change_points_ = self.segmentation_.taus
        return self

    def fit_predict(self, x, _=None):
        """Segment id (0, 1, ...) for every observation."""
        self.fit(x)
        labels = np.zeros(self.segmentation_.n_obs, int)
        for tau in self.change_points_:
            labels[tau + 1:] += 1
        return labels
