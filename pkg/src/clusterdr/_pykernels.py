"""Numpy fallback for the compiled kernels.

Clusters are processed in lockstep: iteration ``j`` updates member ``j`` of
every cluster that has one. Each cluster therefore sees exactly the sequence
of floating-point operations the compiled loop performs, so both backends
return identical bits.
"""
from __future__ import annotations

import numpy as np

BACKEND = "python"


def _positions(offsets: np.ndarray):
    """Yield ``(j, cluster_ids, flat_index)`` for each within-cluster position."""
    sizes = np.diff(offsets)
    starts = offsets[:-1]
    longest = int(sizes.max()) if sizes.size else 0
    for j in range(longest):
        active = np.flatnonzero(sizes > j)
        yield j, active, starts[active] + j


def compensated_sum(values: np.ndarray) -> float:
    s = 0.0
    c = 0.0
    for v in np.asarray(values, dtype=np.float64).tolist():
        t = s + v
        if abs(s) >= abs(v):
            c += (s - t) + v
        else:
            c += (v - t) + s
        s = t
    return s + c


def segment_sums(values: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    G = offsets.shape[0] - 1
    s = np.zeros(G)
    c = np.zeros(G)
    for _, active, idx in _positions(offsets):
        v = values[idx]
        sa = s[active]
        t = sa + v
        big = np.abs(sa) >= np.abs(v)
        c[active] = c[active] + np.where(big, (sa - t) + v, (v - t) + sa)
        s[active] = t
    return s + c


def influence(r: np.ndarray, y: np.ndarray, pi: np.ndarray, mu: np.ndarray) -> np.ndarray:
    obs = r == 1
    out = mu.copy()
    out[obs] = y[obs] / pi[obs] + mu[obs] * (1.0 - 1.0 / pi[obs])
    return out


def ar1_paths(centre, e, offsets, rho, first_scale, step_scale):
    out = np.empty(e.shape[0])
    for j, _, idx in _positions(offsets):
        if j == 0:
            out[idx] = centre[idx] + first_scale * e[idx]
        else:
            out[idx] = centre[idx] + rho * (out[idx - 1] - centre[idx]) + step_scale * e[idx]
    return out


def ar2_paths(e, offsets, a1, a2):
    n, q = e.shape
    out = np.empty((n, q))
    for j, _, idx in _positions(offsets):
        prev1 = out[idx - 1] if j >= 1 else np.zeros((idx.size, q))
        prev2 = out[idx - 2] if j >= 2 else np.zeros((idx.size, q))
        for k in range(q):
            acc = np.zeros(idx.size)
            for m in range(q):
                acc = acc + a1[k, m] * prev1[:, m]
            for m in range(q):
                acc = acc + a2[k, m] * prev2[:, m]
            out[idx, k] = acc + e[idx, k]
    return out


def running_extrema(w, offsets):
    n, q = w.shape
    G = offsets.shape[0] - 1
    mx = np.empty(n)
    mn = np.empty(n)
    cur_max = np.empty(G)
    cur_min = np.empty(G)
    for j, active, idx in _positions(offsets):
        if j == 0:
            cur_max[active] = w[idx, 0]
            cur_min[active] = w[idx, 0]
        a_max = cur_max[active]
        a_min = cur_min[active]
        for k in range(q):
            v = w[idx, k]
            a_max = np.where(v > a_max, v, a_max)
            a_min = np.where(v < a_min, v, a_min)
        cur_max[active] = a_max
        cur_min[active] = a_min
        mx[idx] = a_max
        mn[idx] = a_min
    return mx, mn


def running_mean(w, offsets):
    n, q = w.shape
    G = offsets.shape[0] - 1
    out = np.empty((n, q))
    acc = np.zeros((G, q))
    for j, active, idx in _positions(offsets):
        acc[active] = acc[active] + w[idx]
        out[idx] = acc[active] / float(j + 1)
    return out


def window_mean(w, offsets, d):
    n, q = w.shape
    out = np.empty((n, q))
    for j, _, idx in _positions(offsets):
        lo = max(0, j - d + 1)
        acc = np.zeros((idx.size, q))
        for s in range(lo, j + 1):
            acc = acc + w[idx - j + s]
        out[idx] = acc / float(j - lo + 1)
    return out


def past_means(v, offsets):
    G = offsets.shape[0] - 1
    out = np.empty(v.shape[0])
    acc = np.zeros(G)
    for j, active, idx in _positions(offsets):
        out[idx] = 0.0 if j == 0 else acc[active] / float(j)
        acc[active] = acc[active] + v[idx]
    return out
