"""Growth of the cluster-level variance ``Omega_n`` under synthetic dependence patterns.

Influence panels with unit marginal variance and mean zero are synthesised
directly, with one of four within-cluster structures:

``iid_within``
    independent members; ``Omega_n = 1``.
``perfect_correlation``
    one value repeated across the cluster; ``Omega_n = n_g``.
``inverse_gap``
    ``Cov(phi_t, phi_s) = 1/|t - s|``; ``Omega_n ~ 2 log n_g``.
``heterogeneous``
    half of the members in singleton clusters, the rest in perfectly
    correlated clusters of size ``n**alpha``; ``Omega_n ~ n**alpha / 2``.

The ``1/|t - s|`` matrix is not positive semi-definite once ``n_g >= 3``, so
that pattern is realised with its nearest PSD matrix (negative eigenvalues set
to zero) and the report is flagged ``approximate``.

For each ``n`` in the grid, ``Omega_n = (1/n) E[sum_g S_g**2]`` (``S_g`` the
cluster sum) is estimated by averaging over ``reps`` independent panels, and
the growth rate is read off a least-squares fit against ``log n``.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .. import kernels
from ..data import ValidationError
from ..parallel import ordered_map
from ..rng import stream

KINDS = ("iid_within", "perfect_correlation", "inverse_gap", "heterogeneous")


@dataclass(frozen=True)
class OmegaPoint:
    n: int
    G: int
    cluster_size: int
    omega_mc: float
    omega_se: float
    omega_theory: float


@dataclass(frozen=True)
class OmegaScalingReport:
    kind: str
    alpha: float
    reps: int
    seed: int
    points: tuple[OmegaPoint, ...]
    fit: str  # "log-log" or "linear-in-log-n"
    slope: float
    slope_se: float
    loglog_slope: float
    correlation_log_n: float
    approximate: bool
    max_cov_deviation: float

    def to_dict(self) -> dict:
        d = asdict(self)
        d["schema_version"] = 1
        d["experiment"] = "omega_scaling"
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2, allow_nan=False) + "\n"

    def to_csv(self) -> str:
        lines = ["arm,x_value,metric,mc_se"]
        for p in self.points:
            lines.append(f"{self.kind},{float(p.n)!r},{float(p.omega_mc)!r},{float(p.omega_se)!r}")
        return "\n".join(lines) + "\n"


def inverse_gap_covariance(m: int) -> np.ndarray:
    k = np.abs(np.subtract.outer(np.arange(m), np.arange(m))).astype(np.float64)
    return np.where(k == 0, 1.0, 1.0 / np.maximum(k, 1.0))


def psd_factor(cov: np.ndarray) -> tuple[np.ndarray, float]:
    """Factor ``L`` with ``L @ L.T`` the nearest PSD matrix to ``cov``, plus the max entry change."""
    vals, vecs = np.linalg.eigh(cov)
    clipped = np.clip(vals, 0.0, None)
    L = vecs * np.sqrt(clipped)
    return L, float(np.max(np.abs(L @ L.T - cov)))


def _harmonic(k: int) -> float:
    return float(np.sum(1.0 / np.arange(1, k + 1))) if k >= 1 else 0.0


def _layout(kind: str, n: int, alpha: float) -> tuple[np.ndarray, int]:
    m = max(int(round(n ** alpha)), 1)
    if kind == "heterogeneous":
        big = max(int(round(n ** (1.0 - alpha) / 2.0)), 1)
        small = max(int(round(n / 2.0)), 1)
        return np.concatenate([np.ones(small, dtype=np.int64), np.full(big, m, dtype=np.int64)]), m
    G = max(int(round(n / m)), 1)
    return np.full(G, m, dtype=np.int64), m


def _theory(kind: str, sizes: np.ndarray, m: int) -> float:
    n = float(sizes.sum())
    if kind == "iid_within":
        return 1.0
    if kind == "inverse_gap":
        return (2.0 * m * _harmonic(m - 1) - m + 2.0) / m
    return float(np.sum(sizes.astype(np.float64) ** 2)) / n


def _panel(kind: str, sizes: np.ndarray, m: int, factor, rng: np.random.Generator) -> np.ndarray:
    if kind == "iid_within":
        return rng.standard_normal(int(sizes.sum()))
    if kind in ("perfect_correlation", "heterogeneous"):
        return np.repeat(rng.standard_normal(sizes.shape[0]), sizes)
    z = rng.standard_normal((sizes.shape[0], m))
    return (z @ factor.T).ravel()


def omega_scaling_diagnostic(kind: str, alpha: float = 0.5, n_grid=(1000, 4000, 16000, 64000),
                             reps: int = 200, seed: int = 0, threads: int | None = None) -> OmegaScalingReport:
    if kind not in KINDS:
        raise ValidationError(f"unknown dependence kind {kind!r}")
    grid = [int(v) for v in n_grid]
    if len(grid) < 3 or any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValidationError("n_grid must be strictly increasing with at least 3 points")
    if not 0.0 < alpha < 1.0:
        raise ValidationError("alpha must lie in (0, 1)")
    if reps < 2:
        raise ValidationError("reps must be at least 2")

    approximate = False
    deviation = 0.0
    points = []
    for gi, n in enumerate(grid):
        sizes, m = _layout(kind, n, alpha)
        offsets = np.concatenate([[0], np.cumsum(sizes)])
        n_actual = int(offsets[-1])
        factor = None
        if kind == "inverse_gap":
            factor, dev = psd_factor(inverse_gap_covariance(m))
            deviation = max(deviation, dev)
            approximate = approximate or dev > 1e-12

        def one(rep, gi=gi, sizes=sizes, m=m, factor=factor, offsets=offsets, n_actual=n_actual):
            phi = _panel(kind, sizes, m, factor, stream(seed, "panel", gi, rep))
            sums = kernels.segment_sums(phi, offsets)
            return kernels.compensated_sum(sums * sums) / n_actual

        q = np.asarray(ordered_map(one, range(reps), threads))
        points.append(OmegaPoint(n_actual, int(sizes.shape[0]), m, float(np.mean(q)),
                                 float(np.std(q, ddof=1) / math.sqrt(reps)), _theory(kind, sizes, m)))

    log_n = np.log([p.n for p in points])
    omega = np.array([p.omega_mc for p in points])
    loglog, _ = _ols_slope(log_n, np.log(omega))
    if kind == "inverse_gap":
        slope, slope_se = _ols_slope(log_n, omega)
        fit = "linear-in-log-n"
    else:
        slope, slope_se = loglog, _ols_slope(log_n, np.log(omega))[1]
        fit = "log-log"
    corr = float(np.corrcoef(omega, log_n)[0, 1]) if np.std(omega) > 0 else 0.0
    return OmegaScalingReport(kind, float(alpha), reps, seed, tuple(points), fit, slope, slope_se,
                              loglog, corr, approximate, deviation)


def _ols_slope(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    xc = x - x.mean()
    sxx = float(xc @ xc)
    slope = float(xc @ (y - y.mean())) / sxx
    resid = y - y.mean() - slope * xc
    dof = x.size - 2
    se = math.sqrt(float(resid @ resid) / dof / sxx) if dof > 0 else float("nan")
    return slope, se
