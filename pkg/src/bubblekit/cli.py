"""Command-line interface.

    bubblekit detect    exuberance scan (BSADF) and/or KS change-point segmentation
    bubblekit simulate  detector comparison on simulated bubble paths
    bubblekit test      adf | kpss | bp | granger | johansen | dm
    bubblekit fit       classifier (elastic net + backward-selected logit) or VAR with IRF
    bubblekit forecast  rolling one-step forecasts, accuracy table and DM matrix
    bubblekit report    replay a manifest or re-render charts from their CSVs

Options come from defaults, then the ``--config`` JSON file (top-level keys and
a section named after the command), then command-line flags. Every run writes
CSV tables (first line ``# manifest: <run id>``), SVG charts rendered from
those CSVs, and ``manifest.json``, which is enough to replay the run.

Exit codes: 0 success, 1 usage, 2 data error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import json
import os
import platform
import sys
import time
import warnings

import numpy as np

from . import __version__
from . import svg
from ._ols import ols
from ._validation import DataError, NumericError
from .changepoint import CpmConfig, load_thresholds, segment_returns
from .forecast import (SarimaModel, SarimaOrder, StructuralModel, StructuralSpec, VecmModel, comparison_table,
                       dm_matrix, dm_test, paths_csv, rolling_one_step)
from .regress import (CvPlan, Design, backward_stepwise, classify_and_score, cv_tune)
from .simulate import METHODS, PATTERNS, DetectorSettings, DgpConfig, mc_study
from .ts import (Dataset, PhaseLabeling, TransformSpec, apply_transform, correlation_rows, format_month, load_dataset,
                 phase_density_export)
from .unitroot import AdfSpec, adf_test, breusch_pagan, exuberance_scan, kpss_test
from .var import VarSpec, fit_var, granger_wald, irf_cholesky, johansen_trace, select_lag

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
OUT_ENV = "BUBBLEKIT_OUT"
DEFAULT_OUT = "bubblekit-out"

DEFAULTS = {
    "detect": {"input": None, "target": None, "method": "bsadf", "alpha": 0.05, "r0": None, "lags": 0,
               "cv_reps": 2000, "arl0": 500, "burn_in": 20, "transform": "none", "covariates": [],
               "covariate_transform": "standardize", "grid_size": 256, "seed": None},
    "simulate": {"patterns": list(PATTERNS), "reps": 500, "methods": list(METHODS), "w": 5, "alpha": 0.05,
                 "cv_reps": 2000, "arl0": 500, "burn_in": 20, "dgp": {}, "seed": None},
    "test": {"test": None, "input": None, "columns": [], "all_columns": False, "transform": "none",
             "deterministic": "constant", "lags": None, "target": None, "covariates": [], "cause": [],
             "effect": None, "losses": [], "alternative": "two-sided", "h": 1, "seed": None},
    "fit": {"model": "classifier", "input": None, "target": None, "covariates": [], "label": "column",
            "feature_lag": 1, "transform": "none", "holdout": 25, "threshold": 0.5,
            "methods": ["enet", "stepwise"], "cv_initial": 120, "cv_horizon": 12, "n_alpha": 15,
            "n_lambda": 15, "p_out": 0.05, "alpha": 0.05, "cv_reps": 2000, "columns": [], "p": None,
            "pmax": 8, "criterion": "FPE", "seasonal": False, "shock": None, "horizons": 24, "sign": 1,
            "seed": None},
    "forecast": {"input": None, "target": None, "covariates": [], "transform": "log",
                 "covariate_transform": "log", "models": ["sarima", "sarimax", "sarimax-lagged", "structural",
                                                           "vecm"],
                 "holdout": 25, "order": "auto", "bounds": {}, "refit": True, "vecm_p": 2, "vecm_rank": 1,
                 "season": 12, "seed": None},
}
LIST_KEYS = {"covariates", "patterns", "methods", "columns", "cause", "models", "input", "losses"}
FORECAST_MODELS = ("sarima", "sarimax", "sarimax-lagged", "structural", "vecm")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# --------------------------------------------------------------------------
# run bookkeeping


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _sha(path: str) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


class Run:
    """Output directory, run id and manifest of one command."""

    def __init__(self, command: str, config: dict, out: str, workers: int):
        self.command, self.config, self.out, self.workers = command, config, out, workers
        inputs = []
        for key in ("input", "losses"):
            for p in config.get(key) or []:
                if not os.path.exists(p):
                    raise DataError(f"input file not found: {p}")
                inputs.append((p, _sha(p)))
        self.inputs = dict(inputs)
        key = json.dumps({"command": command, "config": config, "inputs": sorted(self.inputs.values())},
                         sort_keys=True)
        self.run_id = hashlib.sha256(key.encode()).hexdigest()[:12]
        self.tables: dict[str, str] = {}
        self.charts: dict[str, dict] = {}
        self.failures: list[dict] = []
        self.metadata: dict = {}
        self.t0 = time.perf_counter()
        os.makedirs(out, exist_ok=True)

    def _write(self, name: str, text: str) -> str:
        path = os.path.join(self.out, name)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        return path

    def table(self, name: str, header, rows) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
        return self.csv_text(name, buf.getvalue())

    def csv_text(self, name: str, text: str) -> str:
        fname = f"{name}.csv"
        self.tables[fname] = self._write(fname, f"# manifest: {self.run_id}\n{text}")
        return fname

    def chart(self, name: str, kind: str, csv_name: str) -> None:
        with open(os.path.join(self.out, csv_name), encoding="utf-8") as fh:
            text = fh.read()
        fname = f"{name}.svg"
        self._write(fname, svg.render(kind, text))
        self.charts[fname] = {"kind": kind, "csv": csv_name}

    def finish(self) -> dict:
        manifest = {
            "run_id": self.run_id,
            "command": self.command,
            "config": self.config,
            "seed": self.config.get("seed"),
            "inputs": self.inputs,
            "versions": {"bubblekit": __version__, "numpy": np.__version__, "python": platform.python_version(),
                         "scipy": __import__("scipy").__version__},
            "workers": self.workers,
            "wall_time_s": round(time.perf_counter() - self.t0, 3),
            "outputs": {k: _sha(v) for k, v in sorted(self.tables.items())},
            "charts": self.charts,
            "failures": self.failures,
            "metadata": self.metadata,
        }
        self._write("manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        return manifest


# --------------------------------------------------------------------------
# helpers


def _need(cfg: dict, *keys):
    for k in keys:
        if cfg.get(k) in (None, [], ""):
            raise UsageError(f"--{k.replace('_', '-')} is required")


def _need_seed(cfg: dict, what: str):
    if cfg.get("seed") is None:
        raise UsageError(f"--seed is required: {what} are simulated")


def _load(cfg: dict, columns) -> Dataset:
    return load_dataset(cfg["input"], schema=[c for c in columns if c])


def _month(start, i) -> str:
    return format_month(start + int(i)) if start is not None else str(int(i))


def _column_specs(spec, names) -> dict:
    """``"log-diff"``, ``"log-diff;fsi=diff"`` or ``{"default": ..., column: ...}`` to one spec per column."""
    if isinstance(spec, dict):
        table = dict(spec)
    else:
        table = {}
        for part in (spec or "none").split(";"):
            col, eq, text = part.partition("=")
            table.update({col.strip(): text.strip()} if eq else {"default": part.strip()})
    unknown = sorted(set(table) - set(names) - {"default"})
    if unknown:
        raise UsageError(f"transform given for unselected column(s): {', '.join(unknown)}")
    return {n: table.get(n, table.get("default", "none")) for n in names}


def _transform_series(run: Run, s, text: str):
    """Apply a transform; a log step is skipped (and recorded) for series with nonpositive values."""
    spec = TransformSpec.parse(text)
    if any(n in ("log", "logret") for n, _ in spec.steps) and np.any(s.values <= 0):
        steps = tuple(("diff", 1) if n == "logret" else (n, k) for n, k in spec.steps if n != "log")
        spec = TransformSpec(steps)
        run.metadata.setdefault("log_skipped", [])
        if s.name not in run.metadata["log_skipped"]:
            run.metadata["log_skipped"].append(s.name)
    return apply_transform(s, spec)


def _transformed(run: Run, ds: Dataset, names, spec) -> Dataset:
    specs = _column_specs(spec, list(names))
    return Dataset.from_series([_transform_series(run, ds[n], specs[n]) for n in names])


# --------------------------------------------------------------------------
# commands


def cmd_detect(cfg: dict, run: Run) -> int:
    _need(cfg, "input", "target")
    method = cfg["method"]
    if method not in ("bsadf", "cpm", "both"):
        raise UsageError("--method must be bsadf, cpm or both")
    ds = _load(cfg, [cfg["target"], *cfg["covariates"]])
    s = _transform_series(run, ds[cfg["target"]], cfg["transform"])
    run.metadata["target_pipeline"] = list(s.pipeline)
    if method in ("bsadf", "both"):
        _need_seed(cfg, "BSADF critical values")
        lags = cfg["lags"]
        spec = AdfSpec("constant", "bic", None) if lags == "bic" else AdfSpec("constant", "fixed", int(lags))
        res = exuberance_scan(s, cfg["r0"], spec, alpha=cfg["alpha"], cv_reps=cfg["cv_reps"], seed=cfg["seed"])
        name = run.table("bsadf", ["r2", "month", "bsadf", "cv", "flag"], res.rows())
        run.chart("bsadf", "bands", name)
        run.table("episodes", ["start", "peak", "end", "closed", "start_index", "peak_index", "end_index"],
                  [(_month(s.start, e.start), _month(s.start, e.peak), _month(s.start, e.end), e.closed,
                    e.start, e.peak, e.end) for e in res.episodes])
        run.table("exuberance", ["statistic", "value"],
                  [("SADF", res.sadf), ("GSADF", res.gsadf), ("alpha", res.alpha), ("T", len(s)),
                   ("episodes", len(res.episodes))])
    if method in ("cpm", "both"):
        config = CpmConfig(int(cfg["arl0"]), int(cfg["burn_in"]))
        seg, labeling = segment_returns(s, config, load_thresholds(config.arl0))
        run.csv_text("changepoints", seg.to_csv())
        segs = labeling.segments(s.start, s.end)
        run.table("phases", ["phase", "first", "last", "months"],
                  [(lab, format_month(a), format_month(b), b - a + 1) for lab, a, b in segs])
        phase_of = {m: lab for lab, a, b in segs for m in range(a, b + 1)}
        name = run.table("segments", ["month", "price", "phase"],
                         [(format_month(s.start + i), v, phase_of[s.start + i]) for i, v in enumerate(s.values)])
        run.chart("segments", "segments", name)
        if cfg["covariates"]:
            cov = _transformed(run, ds, cfg["covariates"], cfg["covariate_transform"])
            # restrict the phases to the covariate span
            kept = [(lab, max(a, cov.start)) for lab, a, b in segs if b >= cov.start and a <= cov.end]
            lab = PhaseLabeling(tuple(a for _, a in kept[1:]), tuple(x for x, _ in kept))
            name = run.table("density", ["variable", "phase", "x", "density"],
                             phase_density_export(cov, lab, int(cfg["grid_size"])))
            run.chart("density", "density", name)
            both = Dataset.from_series([ds[cfg["target"]], *(ds[c] for c in cfg["covariates"])])
            name = run.table("correlation", ["row", "column", "rho"], correlation_rows(both))
            run.chart("correlation", "heatmap", name)
    return EXIT_OK


def cmd_simulate(cfg: dict, run: Run) -> int:
    reps = int(cfg["reps"])
    if reps < 1:
        raise UsageError("--reps must be a positive integer")
    _need_seed(cfg, "bubble paths")
    patterns = list(cfg["patterns"])
    bad = [p for p in patterns if p not in PATTERNS]
    if bad:
        raise UsageError(f"unknown pattern(s) {bad}; choose from {list(PATTERNS)}")
    base = DgpConfig.from_dict(dict(cfg["dgp"])) if cfg["dgp"] else DgpConfig()
    settings = DetectorSettings(base.T + 1, alpha=cfg["alpha"], cpm=CpmConfig(int(cfg["arl0"]), int(cfg["burn_in"])),
                                cv_reps=int(cfg["cv_reps"]), cv_seed=int(cfg["seed"]))
    res = mc_study(patterns, reps, int(cfg["seed"]), int(cfg["w"]), tuple(cfg["methods"]), base,
                   run.workers, settings=settings)
    run.table("study", ["pattern", "method", "reps", "correctness", "rmse", "w", "seed"],
              [(r.pattern, r.method, r.reps, r.correctness, r.rmse, cfg["w"], cfg["seed"]) for r in res.values()])
    recs = []
    for r in res.values():
        for i, m, rep, truth, ok in r.records:
            got = rep.as_tuple() if rep is not None else (None, None, None)
            recs.append((r.pattern, m, i, *truth.as_tuple(), *got, ok))
    run.table("records", ["pattern", "method", "rep", "formation", "burst", "decline_end", "reported_formation",
                          "reported_burst", "reported_decline_end", "correct"], recs)
    run.metadata["dgp"] = base.to_dict()
    return EXIT_OK


def _read_losses(path: str):
    with open(path, encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].lstrip().startswith("#")]
    if not rows:
        raise DataError(f"{path}: no losses")
    col = len(rows[0]) - 1
    try:
        float(rows[0][col])
    except ValueError:
        header = [h.strip() for h in rows[0]]
        col = header.index("loss") if "loss" in header else col
        rows = rows[1:]
    try:
        return np.array([float(r[col]) for r in rows])
    except (ValueError, IndexError):
        raise DataError(f"{path}: non-numeric loss value") from None


def cmd_test(cfg: dict, run: Run) -> int:
    kind = cfg["test"]
    if kind == "dm":
        if len(cfg["losses"]) != 2:
            raise UsageError("test dm needs --losses A.csv B.csv")
        a, b = (_read_losses(p) for p in cfg["losses"])
        res = dm_test(a, b, int(cfg["h"]), cfg["alternative"], loss="supplied")
        run.table("dm", ["statistic", "pvalue", "alternative", "loss", "h", "T", "note"],
                  [(res.statistic, res.pvalue, res.alternative, res.loss, res.h, res.T, res.note)])
        return EXIT_OK
    _need(cfg, "input")
    if kind in ("adf", "kpss"):
        ds = _load(cfg, cfg["columns"])
        cols = ds.names if cfg["all_columns"] or not cfg["columns"] else list(cfg["columns"])
        tds = _transformed(run, ds, cols, cfg["transform"])
        rows = []
        for c in cols:
            s = tds[c]
            if kind == "adf":
                lags = cfg["lags"]
                spec = AdfSpec(cfg["deterministic"], "bic" if lags is None else "fixed", lags)
                r = adf_test(s, spec)
                rows.append((c, cfg["transform"], r.statistic, r.lag, r.nobs, r.critical_values[0.01],
                             r.critical_values[0.05], r.critical_values[0.10], r.reject[0.05]))
            else:
                r = kpss_test(s, "trend" if cfg["deterministic"] == "trend" else "level", cfg["lags"])
                rows.append((c, cfg["transform"], r.statistic, r.lags, r.critical_values[0.1],
                             r.critical_values[0.05], r.critical_values[0.01], r.reject[0.05]))
        header = (["variable", "transform", "statistic", "lag", "nobs", "cv_1", "cv_5", "cv_10", "reject_5"]
                  if kind == "adf" else
                  ["variable", "transform", "statistic", "lags", "cv_10", "cv_5", "cv_1", "reject_5"])
        run.table(kind, header, rows)
    elif kind == "bp":
        _need(cfg, "target", "covariates")
        ds = _transformed(run, _load(cfg, [cfg["target"], *cfg["covariates"]]), [cfg["target"], *cfg["covariates"]],
                          cfg["transform"])
        Z = ds.matrix(cfg["covariates"])
        fit = ols(ds[cfg["target"]].values, np.column_stack([np.ones(len(ds)), Z]))
        stat, p = breusch_pagan(fit.resid, Z)
        run.table("bp", ["target", "regressors", "statistic", "df", "pvalue"],
                  [(cfg["target"], " ".join(cfg["covariates"]), stat, Z.shape[1], p)])
    elif kind == "granger":
        _need(cfg, "cause", "effect")
        p = int(cfg["lags"] or 1)
        causes = list(cfg["cause"])
        ds = _transformed(run, _load(cfg, [cfg["effect"], *causes]), [cfg["effect"], *causes], cfg["transform"])
        rows = []
        for c in causes:
            W, pv = granger_wald(ds.select([cfg["effect"], c]), c, cfg["effect"], p)
            rows.append((c, cfg["effect"], p, W, p, pv))
        run.table("granger", ["cause", "effect", "lags", "statistic", "df", "pvalue"], rows)
    elif kind == "johansen":
        _need(cfg, "columns")
        ds = _transformed(run, _load(cfg, cfg["columns"]), cfg["columns"], cfg["transform"])
        res = johansen_trace(ds, int(cfg["lags"] or 2))
        run.table("johansen", ["rank_le", "eigenvalue", "trace", "cv_95", "reject"],
                  [(r, res.eigenvalues[r], res.trace[r], res.crit_95[r], res.trace[r] > res.crit_95[r])
                   for r in range(len(res.trace))])
        run.metadata["johansen_rank"] = res.rank
    else:
        raise UsageError("test must be one of adf, kpss, bp, granger, johansen, dm")
    return EXIT_OK


def _classifier(cfg: dict, run: Run) -> int:
    _need(cfg, "input", "target", "covariates")
    ds = _load(cfg, [cfg["target"], *cfg["covariates"]])
    target = ds[cfg["target"]]
    if cfg["label"] == "bsadf":
        _need_seed(cfg, "BSADF critical values")
        res = exuberance_scan(target, alpha=cfg["alpha"], cv_reps=int(cfg["cv_reps"]), seed=int(cfg["seed"]))
        y_all = res.exuberance_indicator(len(target)).astype(float)
    elif cfg["label"] == "column":
        y_all = target.values
    else:
        raise UsageError("--label must be column or bsadf")
    cov = _transformed(run, ds, cfg["covariates"], cfg["transform"])
    lag = int(cfg["feature_lag"])
    if lag < 0:
        raise UsageError("--feature-lag must be >= 0")
    # feature row for month t holds covariates at t - lag
    first = max(cov.start + lag, target.start)
    last = min(cov.end + lag, target.end)
    n = last - first + 1
    X = cov.matrix()[first - lag - cov.start:first - lag - cov.start + n]
    y = y_all[first - target.start:first - target.start + n]
    holdout = int(cfg["holdout"])
    if not 1 <= holdout < n - 10:
        raise UsageError(f"--holdout must be in [1, {n - 11}] for {n} usable months")
    names = [f"{c}_l{lag}" if lag else c for c in cfg["covariates"]]
    train = Design.from_arrays(X[:-holdout], y[:-holdout], names)
    X_test, y_test = X[-holdout:], y[-holdout:]
    coef_rows = {nm: {} for nm in ["(Intercept)", *names]}
    acc_rows = []
    methods = list(cfg["methods"])
    if "enet" in methods:
        plan = CvPlan(int(cfg["cv_initial"]), int(cfg["cv_horizon"]), int(cfg["n_alpha"]), int(cfg["n_lambda"]))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            a, lam, fit, table = cv_tune(train, plan)
        run.table("cv", ["alpha", "lambda", "mean_loss", "folds"],
                  [(r["alpha"], r["lambda"], r["mean_loss"], r["folds"]) for r in table])
        coef_rows["(Intercept)"]["enet"] = fit.intercept
        for nm, b in zip(names, fit.coef):
            coef_rows[nm]["enet"] = b
        cm, acc = classify_and_score(fit, X_test, y_test, cfg["threshold"])
        run.csv_text("confusion_enet", cm.to_csv())
        acc_rows.append(("enet", acc, cm.sensitivity, cm.specificity, cfg["threshold"], f"alpha={a!r} lambda={lam!r}"))
    if "stepwise" in methods:
        fit, kept = backward_stepwise(train, cfg["p_out"])
        coef_rows["(Intercept)"].update(logit=fit.intercept, logit_se=fit.bse[0], logit_p=fit.pvalues[0])
        for j, nm in enumerate(kept, start=1):
            coef_rows[nm].update(logit=fit.coef[j - 1], logit_se=fit.bse[j], logit_p=fit.pvalues[j])
        idx = [names.index(k) for k in kept]
        cm, acc = classify_and_score(fit, X_test[:, idx], y_test, cfg["threshold"])
        run.csv_text("confusion_stepwise", cm.to_csv())
        acc_rows.append(("stepwise", acc, cm.sensitivity, cm.specificity, cfg["threshold"], " ".join(kept)))
    if not acc_rows:
        raise UsageError("--methods must include enet and/or stepwise")
    run.table("coefficients", ["variable", "enet", "logit", "logit_se", "logit_p"],
              [(nm, r.get("enet"), r.get("logit"), r.get("logit_se"), r.get("logit_p"))
               for nm, r in coef_rows.items()])
    run.table("accuracy", ["model", "accuracy", "sensitivity", "specificity", "threshold", "detail"], acc_rows)
    run.metadata.update(label=cfg["label"], train_months=int(n - holdout), test_months=holdout,
                        first_month=format_month(first))
    return EXIT_OK


def _var(cfg: dict, run: Run) -> int:
    _need(cfg, "input", "columns")
    ds = _transformed(run, _load(cfg, cfg["columns"]), cfg["columns"], cfg["transform"])
    seasonal = 11 if cfg["seasonal"] else 0
    if cfg["p"] is None:
        p, values = select_lag(ds, int(cfg["pmax"]), cfg["criterion"], VarSpec(1, True, seasonal))
        run.table("lag_selection", ["p", "AIC", "HQ", "BIC", "FPE"],
                  [(k, v["AIC"], v["HQ"], v["BIC"], v["FPE"]) for k, v in values.items()])
    else:
        p = int(cfg["p"])
    fit = fit_var(ds, VarSpec(p, True, seasonal))
    run.csv_text("var_coefficients", fit.table_csv())
    run.metadata.update(p=p, stable=fit.is_stable(), nobs=fit.nobs)
    shock = cfg["shock"] or cfg["columns"][-1]
    irf = irf_cholesky(fit, int(cfg["horizons"]), shock, int(cfg["sign"]))
    name = run.csv_text("irf", irf.to_csv())
    run.chart("irf", "irf", name)
    return EXIT_OK


def cmd_fit(cfg: dict, run: Run) -> int:
    if cfg["model"] == "classifier":
        return _classifier(cfg, run)
    if cfg["model"] == "var":
        return _var(cfg, run)
    raise UsageError("--model must be classifier or var")


def cmd_forecast(cfg: dict, run: Run) -> int:
    _need(cfg, "input", "target")
    models = list(cfg["models"])
    bad = [m for m in models if m not in FORECAST_MODELS]
    if bad:
        raise UsageError(f"unknown model(s) {bad}; choose from {list(FORECAST_MODELS)}")
    needs_x = [m for m in models if m in ("sarimax", "sarimax-lagged", "vecm")]
    if needs_x and not cfg["covariates"]:
        raise UsageError(f"model(s) {needs_x} need --covariates")
    ds = _load(cfg, [cfg["target"], *cfg["covariates"]])
    y = _transform_series(run, ds[cfg["target"]], cfg["transform"])
    run.metadata["target_pipeline"] = list(y.pipeline)
    X = None
    if cfg["covariates"]:
        cov = _transformed(run, ds, cfg["covariates"], cfg["covariate_transform"])
        both = Dataset.from_series([y, *(cov[c] for c in cov.names)])
        y, X = both[y.name], both.select(cov.names)
    holdout = int(cfg["holdout"])
    if not 2 <= holdout <= len(y) - 10 - 1:
        raise UsageError(f"--holdout must be in [2, {len(y) - 11}] for a series of {len(y)} months")
    order = None if cfg["order"] == "auto" else SarimaOrder.parse(cfg["order"])
    bounds = dict(cfg["bounds"])
    built = {
        "sarima": lambda: SarimaModel("SARIMA", order, False, bool(cfg["refit"]), bounds),
        "sarimax": lambda: SarimaModel("SARIMAX_t", order, True, bool(cfg["refit"]), bounds),
        "sarimax-lagged": lambda: SarimaModel("SARIMAX_t-1", order, True, bool(cfg["refit"]), bounds),
        "structural": lambda: StructuralModel("Structural", StructuralSpec(seasonal=int(cfg["season"]))),
        "vecm": lambda: VecmModel("VECM", int(cfg["vecm_p"]), int(cfg["vecm_rank"])),
    }
    paths = {}
    for mode, group in (("contemporaneous", [m for m in models if m != "sarimax-lagged"]),
                        ("lagged", [m for m in models if m == "sarimax-lagged"])):
        if not group:
            continue
        objs = [built[m]() for m in group]
        out = rolling_one_step(objs, y, X, holdout, mode, workers=run.workers)
        for m, obj, pth in zip(group, objs, out):
            paths[m] = pth
            if hasattr(obj, "order") and obj.order is not None:
                run.metadata.setdefault("orders", {})[obj.name] = str(obj.order)
    ordered = [paths[m] for m in models]
    for pth in ordered:
        if not pth.ok:
            run.failures.append({"model": pth.model, "error": pth.error, "completed": int(pth.index.size)})
    name = run.csv_text("forecasts", paths_csv(ordered))
    run.chart("forecasts", "paths", name)
    run.table("accuracy", ["model", "SMAPE", "RMSE", "status"],
              [(r["model"], r["SMAPE"], r["RMSE"], r.get("error") or "ok") for r in comparison_table(ordered)])
    run.table("dm", ["model", "versus", "statistic", "pvalue", "note"],
              [(r["model"], r["versus"], r["statistic"], r["pvalue"], r["note"]) for r in dm_matrix(ordered)])
    run.metadata.update(smape="mean-denominator percent: 100/n sum |F-A| / ((|A|+|F|)/2)",
                        holdout=holdout,
                        first_forecast=_month(y.start, len(y) - holdout))
    if not any(p.ok for p in ordered):
        raise NumericError("every forecasting model failed: " + "; ".join(p.error for p in ordered))
    return EXIT_OK


COMMANDS = {"detect": cmd_detect, "simulate": cmd_simulate, "test": cmd_test, "fit": cmd_fit,
            "forecast": cmd_forecast}


# --------------------------------------------------------------------------
# argument parsing


def _csv_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _json_obj(text: str) -> dict:
    try:
        val = json.loads(text)
    except json.JSONDecodeError as exc:
        raise argparse.ArgumentTypeError(f"invalid JSON: {exc}") from None
    if not isinstance(val, dict):
        raise argparse.ArgumentTypeError("expected a JSON object")
    return val


def _int_or_bic(text: str):
    return "bic" if text == "bic" else int(text)


def _globals(p: argparse.ArgumentParser, suppress: bool):
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--config", default=d, help="JSON config file")
    p.add_argument("--seed", type=int, default=d, help="master seed")
    p.add_argument("--workers", type=int, default=d, help="worker processes (results do not depend on it)")
    p.add_argument("--out", default=d, help=f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})")


def build_parser() -> argparse.ArgumentParser:
    top = _Parser(prog="bubblekit", description="Bubble detection, segmentation and forecasting toolkit.")
    top.add_argument("--version", action="version", version=f"bubblekit {__version__}")
    _globals(top, False)
    sub = top.add_subparsers(dest="command", parser_class=_Parser)

    def cmd(name, help_):
        p = sub.add_parser(name, help=help_)
        _globals(p, True)
        return p

    def data_opts(p):
        p.add_argument("--input", nargs="+", help="CSV file(s) with a date column")
        p.add_argument("--transform", help="transform pipeline, e.g. log-diff, log,diff:1 or log-diff;fsi=diff")

    p = cmd("detect", "exuberance scan and change-point segmentation")
    data_opts(p)
    p.add_argument("--target")
    p.add_argument("--method", choices=["bsadf", "cpm", "both"])
    p.add_argument("--alpha", type=float)
    p.add_argument("--r0", type=float)
    p.add_argument("--lags", type=_int_or_bic, help="ADF lags in the scan (integer or bic)")
    p.add_argument("--cv-reps", type=int)
    p.add_argument("--arl0", type=int)
    p.add_argument("--burn-in", type=int)
    p.add_argument("--covariates", type=_csv_list)
    p.add_argument("--covariate-transform")
    p.add_argument("--grid-size", type=int)

    p = cmd("simulate", "detector comparison on simulated bubbles")
    p.add_argument("--patterns", type=_csv_list)
    p.add_argument("--reps", type=int)
    p.add_argument("--methods", type=_csv_list)
    p.add_argument("--w", type=int, help="tolerance window in observations")
    p.add_argument("--alpha", type=float)
    p.add_argument("--cv-reps", type=int)
    p.add_argument("--arl0", type=int)
    p.add_argument("--burn-in", type=int)
    p.add_argument("--dgp", type=_json_obj, help="JSON object of DGP overrides")

    p = cmd("test", "stationarity, heteroskedasticity, causality, cointegration and DM tests")
    tsub = p.add_subparsers(dest="test", parser_class=_Parser)
    for name in ("adf", "kpss", "bp", "granger", "johansen", "dm"):
        t = tsub.add_parser(name)
        _globals(t, True)
        if name != "dm":
            data_opts(t)
        if name in ("adf", "kpss"):
            t.add_argument("--columns", type=_csv_list)
            t.add_argument("--all-columns", action="store_true", default=None)
            t.add_argument("--deterministic", choices=["none", "constant", "trend"])
            t.add_argument("--lags", type=int)
        if name == "bp":
            t.add_argument("--target")
            t.add_argument("--covariates", type=_csv_list)
        if name == "granger":
            t.add_argument("--cause", type=_csv_list)
            t.add_argument("--effect")
            t.add_argument("--lags", type=int)
        if name == "johansen":
            t.add_argument("--columns", type=_csv_list)
            t.add_argument("--lags", type=int)
        if name == "dm":
            t.add_argument("--losses", nargs=2)
            t.add_argument("--alternative", choices=["two-sided", "a-better", "b-better"])
            t.add_argument("--h", type=int)

    p = cmd("fit", "classifier (elastic net + stepwise logit) or VAR with impulse responses")
    data_opts(p)
    p.add_argument("--model", choices=["classifier", "var"])
    p.add_argument("--target")
    p.add_argument("--covariates", type=_csv_list)
    p.add_argument("--label", choices=["column", "bsadf"])
    p.add_argument("--feature-lag", type=int)
    p.add_argument("--holdout", type=int)
    p.add_argument("--threshold", type=float)
    p.add_argument("--methods", type=_csv_list)
    p.add_argument("--cv-initial", type=int)
    p.add_argument("--cv-horizon", type=int)
    p.add_argument("--n-alpha", type=int)
    p.add_argument("--n-lambda", type=int)
    p.add_argument("--p-out", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--cv-reps", type=int)
    p.add_argument("--columns", type=_csv_list)
    p.add_argument("--p", type=int)
    p.add_argument("--pmax", type=int)
    p.add_argument("--criterion", choices=["FPE", "AIC", "HQ", "BIC"])
    p.add_argument("--seasonal", action="store_true", default=None)
    p.add_argument("--shock")
    p.add_argument("--horizons", type=int)
    p.add_argument("--sign", type=int, choices=[1, -1])

    p = cmd("forecast", "rolling one-step-ahead forecast comparison")
    data_opts(p)
    p.add_argument("--target")
    p.add_argument("--covariates", type=_csv_list)
    p.add_argument("--covariate-transform")
    p.add_argument("--models", type=_csv_list)
    p.add_argument("--holdout", type=int)
    p.add_argument("--order", help="auto, p,d,q or p,d,q,P,D,Q,s")
    p.add_argument("--bounds", type=_json_obj, help='auto-order bounds, e.g. {"max_p": 2}')
    p.add_argument("--no-refit", dest="refit", action="store_false", default=None,
                   help="estimate once, then only re-filter")
    p.add_argument("--vecm-p", type=int)
    p.add_argument("--vecm-rank", type=int)
    p.add_argument("--season", type=int)

    p = cmd("report", "replay a manifest or re-render charts")
    p.add_argument("--replay", metavar="MANIFEST", help="re-run the command recorded in a manifest")
    p.add_argument("--render", metavar="DIR", help="re-render every chart of a run directory from its CSVs")
    return top


def _read_config(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            conf = json.load(fh)
    except FileNotFoundError:
        raise DataError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(conf, dict):
        raise DataError(f"config file {path} must hold a JSON object")
    return conf


def resolve(command: str, args: argparse.Namespace) -> dict:
    """Defaults, then config file (top level, then the command's section), then flags."""
    cfg = copy.deepcopy(DEFAULTS[command])
    path = getattr(args, "config", None)
    if path:
        conf = _read_config(path)
        layers = [{k: v for k, v in conf.items() if not isinstance(v, dict) or k in cfg},
                  conf.get(command, {}) if isinstance(conf.get(command), dict) else {}]
        for layer in layers:
            unknown = sorted(set(layer) - set(cfg) - set(COMMANDS) - {"workers", "out"})
            if unknown:
                raise UsageError(f"unknown config key(s): {', '.join(unknown)}")
            for k, v in layer.items():
                if k in cfg:
                    cfg[k] = v
    for k in cfg:
        v = getattr(args, k, None)
        if v is not None:
            cfg[k] = v
    for k in LIST_KEYS & set(cfg):
        if isinstance(cfg[k], str):
            cfg[k] = _csv_list(cfg[k]) if k not in ("input", "losses") else [cfg[k]]
    return cfg


def _out_dir(args) -> str:
    return getattr(args, "out", None) or os.environ.get(OUT_ENV) or DEFAULT_OUT


def _workers(args) -> int:
    w = getattr(args, "workers", None)
    w = 1 if w is None else int(w)
    if w < 1:
        raise UsageError("--workers must be >= 1")
    return w


def execute(command: str, cfg: dict, out: str, workers: int) -> dict:
    run = Run(command, cfg, out, workers)
    COMMANDS[command](cfg, run)
    return run.finish()


def cmd_report(args) -> int:
    if bool(args.replay) == bool(args.render):
        raise UsageError("report needs exactly one of --replay MANIFEST or --render DIR")
    if args.render:
        mpath = os.path.join(args.render, "manifest.json")
        manifest = _read_config(mpath)
        for fname, spec in sorted(manifest.get("charts", {}).items()):
            with open(os.path.join(args.render, spec["csv"]), encoding="utf-8") as fh:
                text = fh.read()
            with open(os.path.join(args.render, fname), "w", encoding="utf-8", newline="") as fh:
                fh.write(svg.render(spec["kind"], text))
        return EXIT_OK
    manifest = _read_config(args.replay)
    command = manifest.get("command")
    if command not in COMMANDS:
        raise DataError(f"manifest names an unknown command {command!r}")
    cfg = copy.deepcopy(DEFAULTS[command])
    cfg.update(manifest.get("config", {}))
    execute(command, cfg, _out_dir(args), _workers(args))
    return EXIT_OK


def run_cli(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command is None:
        raise UsageError("a command is required (detect, simulate, test, fit, forecast, report)")
    if args.command == "report":
        return cmd_report(args)
    if args.command == "test" and getattr(args, "test", None) is None:
        raise UsageError("test needs a kind: adf, kpss, bp, granger, johansen or dm")
    cfg = resolve(args.command, args)
    execute(args.command, cfg, _out_dir(args), _workers(args))
    return EXIT_OK


def main(argv=None) -> int:
    try:
        return run_cli(argv)
    except UsageError as exc:
        print(f"bubblekit: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"bubblekit: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, ValueError, KeyError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"bubblekit: data error: {msg}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
