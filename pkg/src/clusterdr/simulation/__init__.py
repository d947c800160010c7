"""Synthetic data generators and Monte Carlo experiment drivers."""
from .dgp import (
    Draw,
    HomogeneousDgp,
    QuadraticDgp,
    SequentialDgp,
    cluster_sizes_for,
    draw_homogeneous,
    draw_quadratic,
    draw_sequential,
    gen_homogeneous,
    gen_quadratic,
    gen_sequential,
    oracle_mean,
)
from .experiments import (
    ArmResult,
    MonteCarloReport,
    run_coverage_experiment,
    run_misspec_experiment,
    run_omega_consistency_experiment,
    run_rmse_experiment,
)
from .omega import OmegaScalingReport, omega_scaling_diagnostic

__all__ = [
    "ArmResult", "Draw", "HomogeneousDgp", "MonteCarloReport", "OmegaScalingReport", "QuadraticDgp",
    "SequentialDgp", "cluster_sizes_for", "draw_homogeneous", "draw_quadratic", "draw_sequential",
    "gen_homogeneous", "gen_quadratic", "gen_sequential", "omega_scaling_diagnostic", "oracle_mean",
    "run_coverage_experiment", "run_misspec_experiment", "run_omega_consistency_experiment",
    "run_rmse_experiment",
]
