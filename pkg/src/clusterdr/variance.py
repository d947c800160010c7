"""Variance of a point estimate and confidence intervals.

Three estimators of the variance of the mean of per-member influence values:

* ``iid``: sample variance of the values divided by ``n``; ignores clusters.
* ``cluster_robust``: ``omega_hat / n`` with
  ``omega_hat = (1/n) * sum_g (sum_i phi_gi)**2 - (1/n) * sum_g n_g**2 * theta**2``.
* ``cluster_bootstrap``: resample whole clusters with replacement.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace

import numpy as np

from . import kernels
from .data import ClusteredDataset, EstimationError, InfluencePanel, ValidationError
from .estimators import EstimateReport, EstimatorSpec, fit_estimator
from .nuisance import SingleClassError, NoObservedOutcomesError
from .parallel import ordered_map
from .rng import stream

# Acklam's rational approximation to the standard normal quantile; relative
# error below 1.2e-9 over (0, 1).
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def normal_quantile(p: float) -> float:
    """Standard normal quantile from a fixed rational approximation."""
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        return (((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
            ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0)
    if p > 1.0 - _P_LOW:
        return -normal_quantile(1.0 - p)
    q = p - 0.5
    r = q * q
    return (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q / \
        (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0)


def wald_ci(theta_hat: float, estimate_variance: float, level: float = 0.95) -> tuple[float, float]:
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    if estimate_variance < 0 or not math.isfinite(estimate_variance):
        raise ValueError("variance is negative or non-finite; no confidence interval")
    half = normal_quantile((1.0 + level) / 2.0) * math.sqrt(estimate_variance)
    return theta_hat - half, theta_hat + half


@dataclass(frozen=True)
class VarianceReport:
    method: str
    estimate_variance: float
    omega_hat: float | None = None
    bootstrap_reps: int | None = None
    degenerate: bool = False
    mode: str | None = None
    percentile_ci: tuple[float, float] | None = None
    redraws: int = 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["percentile_ci"] = list(self.percentile_ci) if self.percentile_ci else None
        return d


def var_iid(panel: InfluencePanel, theta_hat: float) -> VarianceReport:
    n = panel.n
    if n < 2:
        raise ValidationError("need at least 2 individuals for the i.i.d. variance")
    dev = panel.values - theta_hat
    s2 = kernels.ordered_sum(dev * dev, panel.offsets) / (n - 1)
    return VarianceReport("iid", s2 / n)


def var_cluster_robust(dataset: ClusteredDataset, panel: InfluencePanel, theta_hat: float,
                       small_sample_correction: bool = False) -> VarianceReport:
    """Cluster-robust variance ``omega_hat / n``.

    ``omega_hat`` within rounding error of zero is reported as exactly 0.
    ``omega_hat <= 0`` sets ``degenerate`` and the value is passed through
    unfloored. ``small_sample_correction`` multiplies by ``G / (G - 1)``.
    """
    if not panel.aligned_with(dataset):
        raise ValidationError("alignment mismatch between panel and dataset")
    n = dataset.n
    sums = panel.cluster_sums()
    first = kernels.compensated_sum(sums * sums) / n
    second = theta_hat * theta_hat * float(np.sum(dataset.sizes.astype(np.int64) ** 2)) / n
    omega = first - second
    if abs(omega) <= 64.0 * np.finfo(float).eps * max(first, second):
        omega = 0.0
    if small_sample_correction:
        G = dataset.G
        if G < 2:
            raise ValidationError("small-sample correction needs G >= 2")
        omega *= G / (G - 1)
    return VarianceReport("cluster_robust", omega / n, omega_hat=omega, degenerate=omega <= 0.0)


def with_variance(report: EstimateReport, vreport: VarianceReport, level: float = 0.95) -> EstimateReport:
    """Attach a variance and its Wald interval to an estimate."""
    if vreport.degenerate or vreport.estimate_variance < 0:
        return replace(report, variance_method=vreport.method, variance=vreport.estimate_variance,
                       ci_level=level, ci=None, omega_hat=vreport.omega_hat, degenerate=True,
                       warnings=report.warnings + ("degenerate variance estimate; no confidence interval",))
    return replace(report, variance_method=vreport.method, variance=vreport.estimate_variance,
                   ci_level=level, ci=wald_ci(report.theta_hat, vreport.estimate_variance, level),
                   omega_hat=vreport.omega_hat)


@dataclass(frozen=True, eq=False)
class BootstrapResult:
    report: VarianceReport
    theta_hat: float
    replicates: np.ndarray


MAX_REDRAW_FACTOR = 10


def cluster_bootstrap(dataset: ClusteredDataset, spec: EstimatorSpec, B: int = 500,
                      mode: str = "fixed_nuisances", ci_level: float = 0.95, seed: int = 0,
                      threads: int | None = None) -> BootstrapResult:
    """Cluster bootstrap of the estimator described by ``spec``.

    ``fixed_nuisances`` keeps the original per-member predictions and resamples
    per-cluster sums of estimator terms; ``refit_nuisances`` reruns the full
    fitting on every resample. Replicate ``b`` draws from its own stream, so
    output does not depend on ``threads``.
    """
    if B < 100:
        raise ValidationError("B must be at least 100")
    if dataset.G < 2:
        raise ValidationError("need at least 2 clusters to bootstrap")
    if mode not in ("fixed_nuisances", "refit_nuisances"):
        raise ValidationError(f"unknown bootstrap mode {mode!r}")
    if not 0.0 < ci_level < 1.0:
        raise ValidationError("ci_level must lie in (0, 1)")
    G = dataset.G
    fitted = fit_estimator(dataset, spec)
    theta = fitted.theta_hat

    if mode == "fixed_nuisances":
        totals = kernels.segment_sums(fitted.terms, fitted.dataset.offsets)
        sizes = dataset.sizes

        def one(b: int) -> tuple[float, int]:
            idx = stream(seed, "bootstrap", b, 0).integers(0, G, G)
            return kernels.compensated_sum(totals[idx]) / float(sizes[idx].sum()), 0
    else:
        def one(b: int) -> tuple[float, int]:
            for attempt in range(MAX_REDRAW_FACTOR * B + 1):
                idx = stream(seed, "bootstrap", b, attempt).integers(0, G, G)
                try:
                    return fit_estimator(dataset.subset(idx), spec, key=(b, attempt)).theta_hat, attempt
                except (NoObservedOutcomesError, SingleClassError):
                    continue
            raise EstimationError("bootstrap resample redraw limit reached")

    results = ordered_map(one, range(B), threads)
    reps = np.array([r[0] for r in results])
    redraws = int(sum(r[1] for r in results))
    if redraws > MAX_REDRAW_FACTOR * B:
        raise EstimationError(f"{redraws} bootstrap redraws exceed the limit of {MAX_REDRAW_FACTOR * B}")
    var = float(np.var(reps, ddof=1))
    lo, hi = np.quantile(reps, [(1.0 - ci_level) / 2.0, (1.0 + ci_level) / 2.0])
    report = VarianceReport("cluster_bootstrap", var, bootstrap_reps=B, degenerate=False,
                            mode=mode, percentile_ci=(float(lo), float(hi)), redraws=redraws)
    return BootstrapResult(report, theta, reps)
