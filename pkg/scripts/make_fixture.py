"""Generate the synthetic fixtures shipped in ``fixtures/``.

``panel.csv``: 216 months (2005-01 .. 2022-12) of 14 synthetic series in the
dataset schema. The index ``renixx`` has an explosive run-up in 2006-2007 and
a collapse in 2008; ``energy_index`` leads it by one month.

``regimes.csv``: a 241-month price series whose log returns come from three
regimes (80 returns each) with different location and scale.

    python3 scripts/make_fixture.py [outdir]
"""
from __future__ import annotations

import csv
import os
import sys

import numpy as np

COLUMNS = ["renixx", "msci", "oil_price", "epu", "fsi", "gpr", "energy_index", "energy_shares",
           "green_energy", "global_warming", "natural_disasters", "new_technology", "carbon_price",
           "carbon_tax"]


def months(start_year: int, start_month: int, n: int) -> list[str]:
    out = []
    y, m = start_year, start_month
    for _ in range(n):
        out.append(f"{y:04d}-{m:02d}")
        m += 1
        if m > 12:
            y, m = y + 1, 1
    return out


def ar1(rng, n, phi, scale, mean=0.0):
    x = np.empty(n)
    x[0] = mean
    for t in range(1, n):
        x[t] = mean + phi * (x[t - 1] - mean) + scale * rng.normal()
    return x


def trends(rng, n, base, amp, season=0.0):
    t = np.arange(n)
    x = base + amp * np.sin(2 * np.pi * t / 12) * season + ar1(rng, n, 0.8, 4.0)
    return np.clip(x, 1.0, 100.0)


def panel(seed: int = 20240401) -> dict:
    rng = np.random.default_rng(seed)
    n = 216
    energy = np.cumsum(rng.normal(0.002, 0.04, n))
    r = np.empty(n)
    r[0] = 0.0
    for t in range(1, n):
        # returns of the index load on last month's energy-index move
        r[t] = 0.002 + 0.5 * (energy[t - 1] - (energy[t - 2] if t >= 2 else 0.0)) + rng.normal(0, 0.035)
    # 2006-01 .. 2007-12 explosive, 2008-01 .. 2008-12 collapse
    r[12:36] += 0.045
    r[36:48] -= 0.09
    renixx = 300 * np.exp(np.cumsum(r))
    msci = 1200 * np.exp(np.cumsum(rng.normal(0.005, 0.04, n)))
    oil = 60 * np.exp(np.cumsum(rng.normal(0.0, 0.08, n)))
    epu = np.exp(ar1(rng, n, 0.85, 0.15, np.log(120)))
    fsi = ar1(rng, n, 0.9, 0.3)
    fsi[36:50] += 2.5
    gpr = np.exp(ar1(rng, n, 0.8, 0.2, np.log(100)))
    return {
        "renixx": renixx,
        "msci": msci,
        "oil_price": oil,
        "epu": epu,
        "fsi": fsi,
        "gpr": gpr,
        "energy_index": 100 * np.exp(energy),
        "energy_shares": trends(rng, n, 40, 10, 1.0),
        "green_energy": trends(rng, n, 50, 15, 0.5),
        "global_warming": trends(rng, n, 35, 20, 1.0),
        "natural_disasters": trends(rng, n, 30, 10, 0.3),
        "new_technology": trends(rng, n, 55, 5, 0.2),
        "carbon_price": np.exp(ar1(rng, n, 0.97, 0.1, np.log(15))),
        "carbon_tax": trends(rng, n, 25, 10, 0.6),
    }


def regimes(seed: int = 1) -> np.ndarray:
    # with this seed the arl0 = 500 monitor reports exactly the two planted
    # changes; other draws can add false alarms inside a regime
    rng = np.random.default_rng(seed)
    r = np.concatenate([rng.normal(0.02, 0.01, 80), rng.normal(-0.04, 0.05, 80), rng.normal(0.0, 0.004, 80)])
    return 100 * np.exp(np.concatenate([[0.0], np.cumsum(r)]))


def write(path: str, dates: list[str], cols: dict) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", *cols])
        for i, d in enumerate(dates):
            w.writerow([d, *(f"{cols[c][i]:.6f}" for c in cols)])


def main(outdir: str = "fixtures") -> None:
    os.makedirs(outdir, exist_ok=True)
    p = panel()
    write(os.path.join(outdir, "panel.csv"), months(2005, 1, 216), {c: p[c] for c in COLUMNS})
    prices = regimes()
    write(os.path.join(outdir, "regimes.csv"), months(2000, 1, prices.size), {"price": prices})


if __name__ == "__main__":
    main(*sys.argv[1:])
