"""Point estimators of the average outcome.

All estimators weight every individual equally. With predictions ``pi_hat``
and ``mu_hat`` for each member:

* plug-in: mean of ``mu_hat``;
* IPW: mean of ``r * y / pi_hat`` (missing members contribute 0);
* doubly robust: mean of ``r * (y - mu_hat) / pi_hat + mu_hat``.

The sequential variant replaces the covariates ``w`` of member ``t`` by a
fixed-length summary of the cluster's history up to ``t`` before fitting the
nuisances.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import kernels
from .data import Cluster, ClusteredDataset, InfluencePanel, ValidationError
from .nuisance import (
    DEFAULT_CLIP,
    FeatureMap,
    KnownNuisance,
    NuisanceMaps,
    Predictions,
    cross_fit,
    predict_dataset,
)

ESTIMATORS = ("plugin", "ipw", "dr", "dr_sequential")
SUMMARY_COMPONENTS = ("current", "running_max", "running_min", "running_mean", "last_d_window")


@dataclass(frozen=True)
class EstimateReport:
    estimator: str
    theta_hat: float
    n: int
    G: int
    variance_method: str = "none"
    variance: float | None = None
    ci_level: float = 0.95
    ci: tuple[float, float] | None = None
    omega_hat: float | None = None
    degenerate: bool = False
    warnings: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ci"] = list(self.ci) if self.ci is not None else None
        d["warnings"] = list(self.warnings)
        return d


# -- influence values and the three estimators ---------------------------------

def _check(dataset: ClusteredDataset, predictions: Predictions) -> None:
    predictions.check(dataset)
    if np.any(predictions.pi_hat <= 0):
        raise ValidationError("pi_hat must be strictly positive")


def influence_values(dataset: ClusteredDataset, predictions: Predictions) -> InfluencePanel:
    """``phi = r * (y - mu) / pi + mu``, exactly ``mu`` where ``r == 0``.

    The observed branch is evaluated as ``y / pi + mu * (1 - 1 / pi)`` so that
    ``pi == 1`` returns ``y`` bit for bit.
    """
    _check(dataset, predictions)
    phi = kernels.influence(dataset.r, dataset.y, predictions.pi_hat, predictions.mu_hat)
    return InfluencePanel.for_dataset(dataset, phi)


def member_terms(kind: str, dataset: ClusteredDataset, predictions: Predictions) -> np.ndarray:
    """Per-member terms whose dataset mean is the estimate of ``kind``."""
    if kind in ("dr", "dr_sequential"):
        return influence_values(dataset, predictions).values
    if kind == "plugin":
        predictions.check(dataset)
        return predictions.mu_hat
    if kind == "ipw":
        _check(dataset, predictions)
        obs = dataset.r == 1
        out = np.zeros(dataset.n)
        out[obs] = dataset.y[obs] / predictions.pi_hat[obs]
        return out
    raise ValidationError(f"unknown estimator {kind!r}")


def _mean(dataset: ClusteredDataset, values: np.ndarray) -> float:
    return kernels.ordered_sum(values, dataset.offsets) / dataset.n


def estimate_plugin(dataset: ClusteredDataset, predictions: Predictions) -> EstimateReport:
    theta = _mean(dataset, member_terms("plugin", dataset, predictions))
    return EstimateReport("plugin", theta, dataset.n, dataset.G)


def estimate_ipw(dataset: ClusteredDataset, predictions: Predictions) -> EstimateReport:
    theta = _mean(dataset, member_terms("ipw", dataset, predictions))
    return EstimateReport("ipw", theta, dataset.n, dataset.G)


def estimate_dr(dataset: ClusteredDataset, predictions: Predictions) -> EstimateReport:
    theta = influence_values(dataset, predictions).mean()
    return EstimateReport("dr", theta, dataset.n, dataset.G)


def observed_mean(dataset: ClusteredDataset) -> float:
    """Unadjusted mean of the observed outcomes."""
    obs = (dataset.r == 1).astype(np.float64)
    count = kernels.ordered_sum(obs, dataset.offsets)
    if count == 0:
        raise ValidationError("no observed outcomes")
    return kernels.ordered_sum(dataset.y_filled, dataset.offsets) / count


# -- history summaries -------------------------------------------------------------

@dataclass(frozen=True)
class SummaryConfig:
    """Which statistics of a cluster's history enter the summary.

    Covariate components use members up to and including the current one:
    ``current`` (the member's own ``w``), ``running_max`` / ``running_min``
    (extremes over all entries of all past ``w``), ``running_mean``
    (componentwise) and ``last_d_window`` (componentwise mean of the last
    ``window_d`` members). ``include_past_ry`` appends the fraction of earlier
    members with observed outcomes and the mean of earlier ``r * y``, both
    strictly before the current member (0 for the first member).
    """

    components: tuple[str, ...] = ("running_max", "running_min", "running_mean")
    window_d: int = 1
    include_past_ry: bool = False

    def __post_init__(self) -> None:
        comps = tuple(self.components)
        unknown = [c for c in comps if c not in SUMMARY_COMPONENTS]
        if unknown:
            raise ValidationError(f"unknown summary component(s) {unknown}")
        if not comps and not self.include_past_ry:
            raise ValidationError("summary must contain at least one component")
        if self.window_d < 1:
            raise ValidationError("window_d must be at least 1")
        # canonical order keeps the feature layout independent of input order
        object.__setattr__(self, "components", tuple(c for c in SUMMARY_COMPONENTS if c in comps))

    def to_dict(self) -> dict:
        return {"components": list(self.components), "window_d": self.window_d,
                "include_past_ry": self.include_past_ry}


HISTORY_SUMMARY = SummaryConfig()
CURRENT_ONLY = SummaryConfig(("current",))


def history_features(dataset: ClusteredDataset, config: SummaryConfig) -> np.ndarray:
    """Summary ``S`` for every member, shape ``(n, dim)``."""
    w, off = dataset.w, dataset.offsets
    parts = []
    for comp in config.components:
        if comp == "current":
            parts.append(np.array(w, dtype=np.float64))
        elif comp == "running_max":
            parts.append(kernels.running_extrema(w, off)[0][:, None])
        elif comp == "running_min":
            parts.append(kernels.running_extrema(w, off)[1][:, None])
        elif comp == "running_mean":
            parts.append(kernels.running_mean(w, off))
        elif comp == "last_d_window":
            parts.append(kernels.window_mean(w, off, config.window_d))
    if config.include_past_ry:
        parts.append(kernels.past_means(dataset.r.astype(np.float64), off)[:, None])
        parts.append(kernels.past_means(dataset.y_filled, off)[:, None])
    return np.hstack(parts)


def summarize_history(cluster: Cluster, t: int, config: SummaryConfig = HISTORY_SUMMARY) -> np.ndarray:
    """Summary of ``cluster`` at time ``t``, counting members from 1."""
    if not 1 <= t <= cluster.size:
        raise ValidationError(f"t={t} outside 1..{cluster.size}")
    members = cluster.members[:t]
    ds = ClusteredDataset(
        x=np.asarray([cluster.x], dtype=np.float64),
        w=np.asarray([m.w for m in members], dtype=np.float64),
        r=np.asarray([m.r for m in members], dtype=np.int8),
        y=np.asarray([np.nan if m.y is None else m.y for m in members], dtype=np.float64),
        offsets=np.array([0, t]),
    )
    return history_features(ds, config)[t - 1]


SEQUENTIAL_MAPS = NuisanceMaps(FeatureMap("history"), FeatureMap("history"))


def summary_dataset(dataset: ClusteredDataset, config: SummaryConfig) -> ClusteredDataset:
    """The dataset with each member's ``w`` replaced by its history summary."""
    return dataset.with_w(history_features(dataset, config))


def estimate_dr_sequential(dataset: ClusteredDataset, summary_config: SummaryConfig = HISTORY_SUMMARY,
                           maps: NuisanceMaps | None = None, folds: int = 2,
                           clip_epsilon: float = DEFAULT_CLIP, seed: int = 0,
                           key: tuple[int, ...] = ()) -> EstimateReport:
    """Doubly robust estimate with nuisances fitted on ``(x, S_t)``."""
    sds = summary_dataset(dataset, summary_config)
    preds = cross_fit(sds, folds, maps or SEQUENTIAL_MAPS, clip_epsilon, seed, key)
    theta = influence_values(sds, preds).mean()
    return EstimateReport("dr_sequential", theta, dataset.n, dataset.G)


# -- one-call pipeline --------------------------------------------------------------

@dataclass(frozen=True)
class EstimatorSpec:
    """Everything needed to turn a dataset into per-member estimator terms."""

    kind: str = "dr"
    maps: NuisanceMaps = field(default_factory=NuisanceMaps)
    folds: int = 2
    clip_epsilon: float = DEFAULT_CLIP
    seed: int = 0
    summary: SummaryConfig | None = None
    known: KnownNuisance | None = None

    def __post_init__(self) -> None:
        if self.kind not in ESTIMATORS:
            raise ValidationError(f"unknown estimator {self.kind!r}")
        if self.kind == "dr_sequential" and self.summary is None:
            object.__setattr__(self, "summary", HISTORY_SUMMARY)


@dataclass(frozen=True, eq=False)
class Fitted:
    dataset: ClusteredDataset  # the dataset the nuisances were evaluated on
    predictions: Predictions
    terms: np.ndarray

    @property
    def theta_hat(self) -> float:
        return kernels.ordered_sum(self.terms, self.dataset.offsets) / self.dataset.n


def fit_estimator(dataset: ClusteredDataset, spec: EstimatorSpec, key: tuple[int, ...] = ()) -> Fitted:
    """Predictions and per-member terms for ``spec`` on ``dataset``."""
    work = dataset
    if spec.kind == "dr_sequential":
        work = summary_dataset(dataset, spec.summary)
    if spec.known is not None:
        preds = predict_dataset(spec.known, work)
    else:
        maps = spec.maps
        if spec.kind == "dr_sequential" and maps == NuisanceMaps():
            maps = SEQUENTIAL_MAPS
        preds = cross_fit(work, spec.folds, maps, spec.clip_epsilon, spec.seed, key)
    return Fitted(work, preds, member_terms(spec.kind, work, preds))


def estimate(dataset: ClusteredDataset, spec: EstimatorSpec) -> tuple[EstimateReport, Fitted]:
    fitted = fit_estimator(dataset, spec)
    report = EstimateReport(spec.kind, fitted.theta_hat, dataset.n, dataset.G)
    return report, fitted


def with_warning(report: EstimateReport, message: str) -> EstimateReport:
    return replace(report, warnings=report.warnings + (message,))
