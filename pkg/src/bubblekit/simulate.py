"""Bubble data-generating process with EGARCH innovations and the detector comparison study.

A path starts at ``y0`` and follows

    y_t = a T^-eta + y_{t-1} + e_t      outside the bubble,
    y_t = delta_T y_{t-1} + e_t         on the explosive window B,
    y_t = gamma_T y_{t-1} + e_t         on the collapse window C (right after B),

with ``delta_T = 1 + c1 T^-alpha_x`` and ``gamma_T = 1 - c2 T^-beta_x``. The
collapse pattern (sudden, disturbing, smooth) sets ``beta_x`` and the length of C.
"""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from ._validation import DataError, rng_for
from .changepoint import CpmConfig, ThresholdTable, load_thresholds, segment_returns
from .ts import TimeSeries
from .unitroot import SCAN_SPEC, CriticalValueTable, exuberance_scan, mc_critical_values, min_window

PATTERNS = {
    "sudden": {"beta_x": 0.1, "collapse_len": 2},
    "disturbing": {"beta_x": 0.5, "collapse_len": 8},
    "smooth": {"beta_x": 1.0, "collapse_len": 20},
}
METHODS = ("BSADF", "KS-CPM")
E_ABS_Z = math.sqrt(2.0 / math.pi)


@dataclass(frozen=True)
class EgarchParams:
    """EGARCH(1,1) log-variance recursion coefficients."""

    omega: float = -0.2
    alpha: float = 0.2
    gamma: float = -0.15
    beta: float = 0.95

    def __post_init__(self):
        if not abs(self.beta) < 1:
            raise DataError(f"EGARCH beta must satisfy |beta| < 1, got {self.beta}")

    @property
    def unconditional_log_var(self) -> float:
        return self.omega / (1.0 - self.beta)


def egarch_path(p: EgarchParams, n: int, seed: int | np.random.Generator = 0,
                return_log_var: bool = False):
    """EGARCH(1,1) innovations ``e_t = sigma_t z_t``.

    ``log sigma_t^2 = omega + alpha (|z_{t-1}| - E|z|) + gamma z_{t-1} + beta log sigma_{t-1}^2``,
    started at the unconditional mean ``omega / (1 - beta)``.
    """
    if n < 1:
        raise DataError("n must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    z = rng.standard_normal(n)
    h = np.empty(n)
    h[0] = p.unconditional_log_var
    for t in range(1, n):
        h[t] = p.omega + p.alpha * (abs(z[t - 1]) - E_ABS_Z) + p.gamma * z[t - 1] + p.beta * h[t - 1]
    e = np.exp(0.5 * h) * z
    return (e, h, z) if return_log_var else e


@dataclass(frozen=True)
class PhaseTruth:
    """Formation start, burst and end of decline (indexes into the price path)."""

    formation: int
    burst: int
    decline_end: int

    def __post_init__(self):
        if not self.formation < self.burst < self.decline_end:
            raise DataError("phases must satisfy formation < burst < decline_end")

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.formation, self.burst, self.decline_end)


@dataclass(frozen=True)
class DgpConfig:
    """Parameters of the bubble DGP.

    ``B`` and ``C`` are inclusive index ranges ``(first, last)`` on ``1..T``;
    ``None`` means the default placement for the pattern (B = [0.4T, 0.6T] and C
    right after B). ``B = ()`` gives a path without a bubble.
    """

    T: int = 100
    y0: float = 100.0
    a: float = 1.0
    eta: float = 1.0
    c1: float = 1.0
    alpha_x: float = 0.6
    c2: float = 1.0
    beta_x: float | None = None
    B: tuple | None = None
    C: tuple | None = None
    pattern: str = "sudden"
    egarch: EgarchParams = field(default_factory=EgarchParams)
    seed: int = 0

    def __post_init__(self):
        if self.pattern not in PATTERNS:
            raise DataError(f"pattern must be one of {sorted(PATTERNS)}")
        if self.T < 40:
            raise DataError("T must be >= 40")
        preset = PATTERNS[self.pattern]
        if self.beta_x is None:
            object.__setattr__(self, "beta_x", preset["beta_x"])
        if self.B is None:
            object.__setattr__(self, "B", (int(round(0.4 * self.T)), int(round(0.6 * self.T))))
        B = tuple(int(v) for v in self.B)
        object.__setattr__(self, "B", B)
        if self.C is None:
            C = (B[1] + 1, B[1] + preset["collapse_len"]) if B else ()
            object.__setattr__(self, "C", C)
        C = tuple(int(v) for v in self.C)
        object.__setattr__(self, "C", C)
        for name, w in (("B", B), ("C", C)):
            if w and (len(w) != 2 or not 1 <= w[0] <= w[1] <= self.T):
                raise DataError(f"{name} must be (first, last) inside [1, T]")
        if C and (not B or C[0] != B[1] + 1):
            raise DataError("C must start right after B")
        if isinstance(self.egarch, dict):
            object.__setattr__(self, "egarch", EgarchParams(**self.egarch))
        if B and not self.delta > 1:
            raise DataError("explosive root must exceed one")
        if C and not self.gamma < 1:
            raise DataError("collapse root must be below one")

    @property
    def delta(self) -> float:
        return 1.0 + self.c1 * self.T ** (-self.alpha_x)

    @property
    def gamma(self) -> float:
        return 1.0 - self.c2 * self.T ** (-self.beta_x)

    @property
    def truth(self) -> PhaseTruth | None:
        if not self.B or not self.C:
            return None
        return PhaseTruth(self.B[0], self.C[0], self.C[1])

    def to_dict(self) -> dict:
        d = asdict(self)
        d["B"], d["C"] = list(self.B), list(self.C)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DgpConfig":
        d = dict(d)
        if "egarch" in d and isinstance(d["egarch"], dict):
            d["egarch"] = EgarchParams(**d["egarch"])
        for k in ("B", "C"):
            if k in d and d[k] is not None:
                d[k] = tuple(d[k])
        return cls(**d)


def simulate_path(cfg: DgpConfig, rng: np.random.Generator | None = None) -> tuple[TimeSeries, PhaseTruth | None]:
    """Simulate ``y_0 .. y_T`` (length T + 1) and return it with the planted phases."""
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    e = egarch_path(cfg.egarch, cfg.T, rng)
    regime = np.zeros(cfg.T + 1, np.int8)
    if cfg.B:
        regime[cfg.B[0]:cfg.B[1] + 1] = 1
    if cfg.C:
        regime[cfg.C[0]:cfg.C[1] + 1] = 2
    drift = cfg.a * cfg.T ** (-cfg.eta)
    y = np.empty(cfg.T + 1)
    y[0] = cfg.y0
    for t in range(1, cfg.T + 1):
        r = regime[t]
        if r == 0:
            y[t] = drift + y[t - 1] + e[t - 1]
        elif r == 1:
            y[t] = cfg.delta * y[t - 1] + e[t - 1]
        else:
            y[t] = cfg.gamma * y[t - 1] + e[t - 1]
    return TimeSeries("y", 0, y, (f"dgp:{cfg.pattern}",)), cfg.truth


# --------------------------------------------------------------------------
# detectors and scoring


@dataclass
class DetectorSettings:
    """Shared detector inputs for paths of one length."""

    n: int
    alpha: float = 0.05
    r0: float | None = None
    bsadf_cv: CriticalValueTable | None = None
    cpm: CpmConfig = field(default_factory=CpmConfig)
    table: ThresholdTable | None = None
    cv_reps: int = 2000
    cv_seed: int = 0

    def __post_init__(self):
        if self.r0 is None:
            self.r0 = min_window(self.n)
        if self.bsadf_cv is None:
            self.bsadf_cv = mc_critical_values("BSADF", self.n, self.r0, SCAN_SPEC, reps=self.cv_reps,
                                               seed=self.cv_seed, levels=(0.90, 0.95, 0.99))
        if self.table is None:
            self.table = load_thresholds(self.cpm.arl0)


def detector_phases(method: str, path: TimeSeries, settings: DetectorSettings) -> PhaseTruth | None:
    """Phase dates reported by a detector, or ``None`` when it gives too few marks.

    BSADF: (start, BSADF argmax, end) of the longest date-stamped episode.
    KS-CPM: the first three segment boundaries of the return series, read as
    formation start, burst and (boundary - 1) end of decline.
    """
    if len(path) != settings.n:
        raise DataError(f"path length {len(path)} does not match settings ({settings.n})")
    if method == "BSADF":
        res = exuberance_scan(path.values, settings.r0, SCAN_SPEC, cv=settings.bsadf_cv, alpha=settings.alpha)
        if not res.episodes:
            return None
        ep = max(res.episodes, key=lambda e: (e.duration, -e.start))
        try:
            return PhaseTruth(ep.start, ep.peak, ep.end)
        except DataError:
            return None
    if method == "KS-CPM":
        if np.any(path.values <= 0):
            return None
        _, labeling = segment_returns(path, settings.cpm, settings.table)
        b = [m - path.start for m in labeling.boundaries]
        if len(b) < 3:
            return None
        try:
            return PhaseTruth(b[0], b[1], b[2] - 1)
        except DataError:
            return None
    raise DataError(f"unknown method {method!r}; choose from {METHODS}")


def score(reported: PhaseTruth | None, truth: PhaseTruth, w: int = 5) -> bool:
    """All three phases within ``w`` observations of the truth."""
    if w < 1:
        raise DataError("w must be >= 1")
    if reported is None:
        return False
    return all(abs(r - t) <= w for r, t in zip(reported.as_tuple(), truth.as_tuple()))


def phase_rmse(records: Sequence[tuple[PhaseTruth, PhaseTruth]]) -> float:
    """Root mean squared timing error over (reported, truth) pairs and their three phases."""
    if len(records) == 0:
        raise DataError("phase_rmse needs at least one record")
    err = np.array([[r - t for r, t in zip(rep.as_tuple(), tru.as_tuple())] for rep, tru in records], float)
    return float(np.sqrt((err ** 2).sum() / (3 * len(records))))


@dataclass
class EvalResult:
    pattern: str
    method: str
    reps: int
    correctness: float
    rmse: float
    records: list = field(repr=False, default_factory=list)


def _replicate(args):
    cfg, methods, i, seed, w, settings, extra = args
    path, truth = simulate_path(cfg, rng_for(seed, i))
    out = []
    for m in methods:
        if m in extra:
            rep = extra[m](path, truth)
        else:
            rep = detector_phases(m, path, settings)
        out.append((i, m, rep, truth, score(rep, truth, w)))
    return out


def mc_study(patterns: Sequence[str] = tuple(PATTERNS), reps: int = 500, seed: int = 0, w: int = 5,
             methods: Sequence[str] = METHODS, base: DgpConfig | None = None, workers: int = 1,
             detectors: dict[str, Callable] | None = None, settings: DetectorSettings | None = None,
             ) -> dict[tuple[str, str], EvalResult]:
    """Detector comparison over simulated bubble paths.

    Replication ``i`` of every pattern uses the random stream ``(seed, i)``.
    ``detectors`` maps extra method names to callables ``(path, truth) -> PhaseTruth``.
    Returns an :class:`EvalResult` per ``(pattern, method)``.
    """
    if reps < 100:
        raise DataError("reps must be >= 100")
    base = base or DgpConfig()
    extra = dict(detectors or {})
    settings = settings or DetectorSettings(base.T + 1)
    results = {}
    for pat in patterns:
        cfg = replace(base, pattern=pat, beta_x=None, C=None, B=base.B)
        jobs = [(cfg, tuple(methods), i, seed, w, settings, extra) for i in range(reps)]
        if workers > 1 and not extra:
            with ProcessPoolExecutor(max_workers=workers) as ex:
                rows = [r for chunk in ex.map(_replicate, jobs, chunksize=max(1, reps // (4 * workers)))
                        for r in chunk]
        else:
            rows = [r for j in jobs for r in _replicate(j)]
        for m in methods:
            recs = sorted((r for r in rows if r[1] == m), key=lambda r: r[0])
            good = [(r[2], r[3]) for r in recs if r[4]]
            results[(pat, m)] = EvalResult(pat, m, reps, len(good) / reps,
                                           phase_rmse(good) if good else float("nan"), recs)
    return results


def study_rows(results: dict, w: int, seed: int, base: DgpConfig) -> list[dict]:
    rows = []
    for (pat, m), r in results.items():
        cfg = replace(base, pattern=pat, beta_x=None, C=None)
        rows.append({"pattern": pat, "method": m, "reps": r.reps, "correctness": r.correctness,
                     "rmse": r.rmse, "w": w, "seed": seed,
                     "dgp": json.dumps(cfg.to_dict(), sort_keys=True)})
    return rows


def study_csv(results: dict, w: int, seed: int, base: DgpConfig) -> str:
    buf = io.StringIO()
    rows = study_rows(results, w, seed, base)
    wr = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    wr.writeheader()
    for r in rows:
        r = dict(r, correctness=repr(float(r["correctness"])), rmse=repr(float(r["rmse"])))
        wr.writerow(r)
    return buf.getvalue()
