"""Numba kernels for the sequential two-sample Kolmogorov-Smirnov statistic.

A window x_1..x_n is represented by dense ranks (index of each value among the
distinct sorted values) and the pooled count of observations at or below each
distinct value. For the split "first k vs remaining n - k" the scaled statistic is

    sqrt(k (n - k) / n) * sup_x |F_k(x) - G_{n-k}(x)| = max_u |n C_k(u) - k A(u)| / sqrt(k (n - k) n)

with C_k(u) the count of the first k observations at or below value u and A(u)
the pooled count. Counts are integers, so the incremental and from-scratch
paths produce bit-identical statistics.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit


@njit(cache=True)
def split_scan(rank, counts, n_unique, n, kmin):
    """Max scaled statistic over splits k in [kmin, n-1] and its argmax (0 if none)."""
    A = np.empty(n_unique, np.int64)
    acc = 0
    for u in range(n_unique):
        acc += counts[u]
        A[u] = acc
    C = np.zeros(n_unique, np.int64)
    best = 0.0
    best_k = 0
    for k in range(1, n):
        r = rank[k - 1]
        for u in range(r, n_unique):
            C[u] += 1
        if k < kmin:
            continue
        m = 0
        for u in range(n_unique - 1):
            v = n * C[u] - k * A[u]
            if v < 0:
                v = -v
            if v > m:
                m = v
        s = m / math.sqrt(float(k) * float(n - k) * float(n))
        if s > best:
            best = s
            best_k = k
    return best, best_k


@njit(cache=True)
def split_profile(rank, counts, n_unique, n, out):
    """Scaled statistic for every split k = 1..n-1, written to out[k]."""
    A = np.empty(n_unique, np.int64)
    acc = 0
    for u in range(n_unique):
        acc += counts[u]
        A[u] = acc
    C = np.zeros(n_unique, np.int64)
    for k in range(1, n):
        r = rank[k - 1]
        for u in range(r, n_unique):
            C[u] += 1
        m = 0
        for u in range(n_unique - 1):
            v = n * C[u] - k * A[u]
            if v < 0:
                v = -v
            if v > m:
                m = v
        out[k] = m / math.sqrt(float(k) * float(n - k) * float(n))


@njit(cache=True)
def ranks_from_scratch(x, n, rank, uniq, counts):
    """Fill dense ranks, distinct sorted values and counts for x[:n]; return n_unique."""
    order = np.argsort(x[:n], kind="mergesort")
    u = -1
    prev = 0.0
    for i in range(n):
        v = x[order[i]]
        if u < 0 or v != prev:
            u += 1
            uniq[u] = v
            counts[u] = 0
            prev = v
        counts[u] += 1
        rank[order[i]] = u
    return u + 1


@njit(cache=True)
def insert_value(v, n, n_unique, rank, uniq, counts):
    """Append v as observation n (0-based) of the window; return the new n_unique."""
    lo = 0
    hi = n_unique
    while lo < hi:
        mid = (lo + hi) // 2
        if uniq[mid] < v:
            lo = mid + 1
        else:
            hi = mid
    p = lo
    if p < n_unique and uniq[p] == v:
        counts[p] += 1
        rank[n] = p
        return n_unique
    for j in range(n_unique, p, -1):
        uniq[j] = uniq[j - 1]
        counts[j] = counts[j - 1]
    uniq[p] = v
    counts[p] = 1
    for i in range(n):
        if rank[i] >= p:
            rank[i] += 1
    rank[n] = p
    return n_unique + 1


@njit(cache=True)
def statistic_path(x, n_max, kmin):
    """Max scaled statistic D_t for every prefix length t = 1..n_max (index t)."""
    out = np.zeros(n_max + 1)
    rank = np.empty(n_max, np.int64)
    uniq = np.empty(n_max)
    counts = np.empty(n_max, np.int64)
    nu = 0
    for t in range(n_max):
        nu = insert_value(x[t], t, nu, rank, uniq, counts)
        n = t + 1
        if n >= kmin + 1:
            s, _ = split_scan(rank, counts, nu, n, kmin)
            out[n] = s
    return out


@njit(cache=True)
def first_alarm(x, h, burn_in, kmin):
    """Run one monitoring pass; return (alarm time n, split k) or (-1, 0) if none.

    ``h[n]`` is the threshold after n observations; testing starts at n > burn_in.
    """
    n_max = min(x.shape[0], h.shape[0] - 1)
    rank = np.empty(n_max, np.int64)
    uniq = np.empty(n_max)
    counts = np.empty(n_max, np.int64)
    nu = 0
    for t in range(n_max):
        nu = insert_value(x[t], t, nu, rank, uniq, counts)
        n = t + 1
        if n > burn_in:
            s, k = split_scan(rank, counts, nu, n, kmin)
            if s > h[n]:
                return n, k
    return -1, 0


def warm_up():
    x = np.array([0.3, 0.1, 0.2, 0.5, 0.4, 0.1])
    statistic_path(x, 6, 2)
    first_alarm(x, np.full(7, 10.0), 3, 2)
