"""Doubly robust estimation of average outcomes from clustered data with missing responses."""
from .data import (
    Cluster,
    ClusteredDataset,
    EstimationError,
    IndividualRecord,
    InfluencePanel,
    ValidationError,
    cluster_sizes,
    split_clusters,
    validate,
)
from .estimators import (
    EstimateReport,
    EstimatorSpec,
    SummaryConfig,
    estimate,
    estimate_dr,
    estimate_dr_sequential,
    estimate_ipw,
    estimate_plugin,
)
from .nuisance import FeatureMap, KnownNuisance, NuisanceMaps, cross_fit, fit_nuisances
from .variance import cluster_bootstrap, var_cluster_robust, var_iid, wald_ci

__version__ = "0.1.0"

__all__ = [
    "Cluster", "ClusteredDataset", "EstimateReport", "EstimationError", "EstimatorSpec", "FeatureMap",
    "IndividualRecord", "InfluencePanel", "KnownNuisance", "NuisanceMaps", "SummaryConfig",
    "ValidationError", "__version__", "cluster_bootstrap", "cluster_sizes", "cross_fit", "estimate",
    "estimate_dr", "estimate_dr_sequential", "estimate_ipw", "estimate_plugin", "fit_nuisances",
    "split_clusters", "validate", "var_cluster_robust", "var_iid", "wald_ci",
]
