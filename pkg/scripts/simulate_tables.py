"""Regenerate the critical-value and threshold tables bundled under src/bubblekit/data.

    python scripts/simulate_tables.py kpss
    python scripts/simulate_tables.py johansen
    python scripts/simulate_tables.py cpm [--streams 10000]

Each table records the seed, replication count and null model it came from.
"""
from __future__ import annotations

import argparse
import json
import os
import time

import numpy as np

DATA = os.path.join(os.path.dirname(__file__), "..", "src", "bubblekit", "data")


def kpss(reps=100_000, T=1000, seed=20240401, chunk=2000):
    rng = np.random.default_rng(seed)
    out = {"level": [], "trend": []}
    t = np.arange(T, dtype=float)
    X = np.column_stack([np.ones(T), t])
    H = X @ np.linalg.solve(X.T @ X, X.T)
    for start in range(0, reps, chunk):
        e = rng.standard_normal((min(chunk, reps - start), T))
        for case, resid in (("level", e - e.mean(axis=1, keepdims=True)), ("trend", e - e @ H)):
            S = np.cumsum(resid, axis=1)
            lrv = (resid * resid).sum(axis=1) / T
            out[case].append((S * S).sum(axis=1) / (T * T * lrv))
    levels = [0.10, 0.05, 0.025, 0.01]
    table = {case: {str(a): float(np.quantile(np.concatenate(v), 1 - a)) for a in levels}
             for case, v in out.items()}
    table["_simulation"] = {"reps": reps, "T": T, "seed": seed,
                            "null": "iid N(0,1) residuals; Bartlett bandwidth 0 (known white noise)"}
    return table


def johansen(reps=100_000, T=500, seed=20240402, chunk=5000):
    from bubblekit.var import _johansen_eigs_batch

    rng = np.random.default_rng(seed)
    table = {}
    for k in (1, 2, 3):
        stats = []
        for start in range(0, reps, chunk):
            n = min(chunk, reps - start)
            y = np.cumsum(rng.standard_normal((n, T, k)), axis=1)
            lam = _johansen_eigs_batch(y)
            stats.append(-(T - 1) * np.log1p(-lam).sum(axis=1))
        s = np.concatenate(stats)
        table[str(k)] = {str(a): float(np.quantile(s, 1 - a)) for a in (0.10, 0.05, 0.01)}
    table["_simulation"] = {"reps": reps, "T": T, "seed": seed, "case": "unrestricted constant",
                            "null": "driftless Gaussian random walks, VAR(1) in levels",
                            "key": "number of common stochastic trends (K - r)"}
    return table


def cpm(streams=10_000, horizon_cal=600, seed=20240403):
    from bubblekit.changepoint import calibrate_thresholds, null_statistic_matrix

    t0 = time.time()
    D = null_statistic_matrix(streams, horizon_cal, seed)
    print(f"simulated {streams} null streams to t={horizon_cal} in {time.time() - t0:.0f}s")
    for arl0 in (100, 500, 1000, 5000):
        table = calibrate_thresholds(D, arl0=arl0, burn_in=20, seed=seed, horizon=10_000)
        with open(os.path.join(DATA, f"cpm_ks_arl{arl0}.json"), "w") as fh:
            fh.write(table.to_json())
        print(f"arl0={arl0}: h_21={table.h[21]:.3f} h_{horizon_cal}={table.h[horizon_cal]:.3f}")


def main():
    p = argparse.ArgumentParser()
    p.add_argument("which", choices=["kpss", "johansen", "cpm"])
    p.add_argument("--streams", type=int, default=10_000)
    args = p.parse_args()
    if args.which == "kpss":
        with open(os.path.join(DATA, "kpss_cv.json"), "w") as fh:
            json.dump(kpss(), fh, indent=1, sort_keys=True)
    elif args.which == "johansen":
        with open(os.path.join(DATA, "johansen_cv.json"), "w") as fh:
            json.dump(johansen(), fh, indent=1, sort_keys=True)
    else:
        cpm(streams=args.streams)


if __name__ == "__main__":
    main()
