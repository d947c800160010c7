"""Monte Carlo drivers: CI coverage, RMSE under sequential sampling, MSE under misspecification.

Replication ``m`` of arm group ``a`` draws every random quantity (data,
folds) from streams keyed ``(seed, role, a, m)``. Replications are mapped in
order and aggregated in order, so reports are identical for any thread count
and the first ``M`` replications do not change when ``M`` grows.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from ..data import EstimationError, ValidationError
from ..estimators import (
    CURRENT_ONLY,
    HISTORY_SUMMARY,
    SEQUENTIAL_MAPS,
    estimate_dr_sequential,
    influence_values,
    member_terms,
    observed_mean,
)
from ..kernels import compensated_sum, ordered_sum
from ..nuisance import (
    DEFAULT_CLIP,
    FeatureMap,
    NuisanceMaps,
    Predictions,
    cross_fit,
    fold_assignment,
    out_of_fold_outcome,
    out_of_fold_propensity,
    predict_dataset,
)
from ..parallel import ordered_map
from ..variance import var_cluster_robust, var_iid, wald_ci
from .dgp import HomogeneousDgp, QuadraticDgp, SequentialDgp, gen_homogeneous, gen_quadratic, gen_sequential

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class ArmResult:
    label: str
    metric: str
    value: float
    mc_se: float | None
    x_value: float
    params: dict = field(default_factory=dict)
    replications: int = 0
    failures: int = 0


@dataclass(frozen=True)
class MonteCarloReport:
    experiment: str
    replications: int
    seed: int
    config: dict
    arms: tuple[ArmResult, ...]

    def arm(self, label: str, x_value: float | None = None) -> ArmResult:
        for a in self.arms:
            if a.label == label and (x_value is None or a.x_value == x_value):
                return a
        raise KeyError(label)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "experiment": self.experiment,
            "replications": self.replications,
            "seed": self.seed,
            "config": self.config,
            "arms": [asdict(a) for a in self.arms],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2, allow_nan=False) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["arm", "x_value", "metric", "mc_se"])
        for a in self.arms:
            w.writerow([a.label, repr(float(a.x_value)), repr(float(a.value)),
                        "" if a.mc_se is None else repr(float(a.mc_se))])
        return buf.getvalue()


def _coverage_arm(label, hits, x_value, params, failures) -> ArmResult:
    m = len(hits)
    p = float(np.mean(hits)) if m else float("nan")
    se = math.sqrt(p * (1.0 - p) / m) if m else None
    return ArmResult(label, "coverage", p, se, x_value, params, m, failures)


def _mse_arm(label, errors, x_value, params, failures, root: bool) -> ArmResult:
    err = np.asarray(errors, dtype=np.float64)
    sq = err * err
    mse = float(np.mean(sq))
    se_mse = float(np.std(sq, ddof=1) / math.sqrt(sq.size)) if sq.size > 1 else None
    if not root:
        return ArmResult(label, "mse", mse, se_mse, x_value, params, int(sq.size), failures)
    rmse = math.sqrt(mse)
    se = se_mse / (2.0 * rmse) if se_mse is not None and rmse > 0 else None
    return ArmResult(label, "rmse", rmse, se, x_value, params, int(sq.size), failures)


def _check_m(M: int) -> None:
    if M < 1:
        raise ValidationError("M must be at least 1")


# -- coverage ---------------------------------------------------------------------

def run_coverage_experiment(spec: HomogeneousDgp | None = None, n: int = 10000,
                            alphas=(0.2, 0.4), M: int = 300, level: float = 0.95, seed: int = 0,
                            threads: int | None = None, folds: int = 2,
                            clip_epsilon: float = DEFAULT_CLIP) -> MonteCarloReport:
    """Coverage of Wald intervals from the i.i.d. and the cluster-robust variance.

    Each replication draws a dataset, cross-fits linear nuisances, computes the
    doubly robust estimate and both intervals.
    """
    spec = spec or HomogeneousDgp()
    _check_m(M)
    maps = NuisanceMaps()
    arms = []
    for ai, alpha in enumerate(alphas):
        sp = replace(spec, alpha=float(alpha))

        def one(m, ai=ai, sp=sp):
            try:
                ds, truth = gen_homogeneous(sp, n, seed, (ai, m))
                preds = cross_fit(ds, folds, maps, clip_epsilon, seed, (ai, m))
                panel = influence_values(ds, preds)
                theta = panel.mean()
            except EstimationError:
                return None
            iid = var_iid(panel, theta)
            lo, hi = wald_ci(theta, iid.estimate_variance, level)
            cover_iid = lo <= truth <= hi
            cr = var_cluster_robust(ds, panel, theta)
            if cr.degenerate:
                return cover_iid, None
            lo, hi = wald_ci(theta, cr.estimate_variance, level)
            return cover_iid, lo <= truth <= hi

        res = ordered_map(one, range(M), threads)
        failed = sum(r is None for r in res)
        iid_hits = [r[0] for r in res if r is not None]
        cr_hits = [r[1] for r in res if r is not None and r[1] is not None]
        cr_failed = failed + sum(r is not None and r[1] is None for r in res)
        arms.append(_coverage_arm("iid", iid_hits, float(alpha), {"alpha": float(alpha), "method": "iid"}, failed))
        arms.append(_coverage_arm("cluster_robust", cr_hits, float(alpha),
                                  {"alpha": float(alpha), "method": "cluster_robust"}, cr_failed))
    config = {"dgp": asdict(spec), "n": n, "alphas": [float(a) for a in alphas], "M": M,
              "level": level, "folds": folds, "clip_epsilon": clip_epsilon}
    return MonteCarloReport("coverage", M, seed, config, tuple(arms))


# -- RMSE under sequential sampling -----------------------------------------------------

RMSE_ARMS = ("history", "current", "unadjusted")


def run_rmse_experiment(spec: SequentialDgp | None = None, n_grid=(4000, 8000), M: int = 200,
                        seed: int = 0, threads: int | None = None, folds: int = 2,
                        clip_epsilon: float = DEFAULT_CLIP) -> MonteCarloReport:
    """RMSE of the history-summary DR, current-covariate DR and observed-mean estimators."""
    spec = spec or SequentialDgp()
    _check_m(M)
    arms = []
    for ni, n in enumerate(n_grid):
        def one(m, ni=ni, n=n):
            ds, truth = gen_sequential(spec, n, seed, (ni, m))
            try:
                hist = estimate_dr_sequential(ds, HISTORY_SUMMARY, SEQUENTIAL_MAPS, folds,
                                              clip_epsilon, seed, (ni, m)).theta_hat
                cur = estimate_dr_sequential(ds, CURRENT_ONLY, SEQUENTIAL_MAPS, folds,
                                             clip_epsilon, seed, (ni, m)).theta_hat
            except EstimationError:
                return None
            return hist - truth, cur - truth, observed_mean(ds) - truth

        res = ordered_map(one, range(M), threads)
        ok = [r for r in res if r is not None]
        failed = len(res) - len(ok)
        for k, label in enumerate(RMSE_ARMS):
            arms.append(_mse_arm(label, [r[k] for r in ok], float(n), {"n": int(n), "estimator": label},
                                 failed, root=True))
    config = {"dgp": asdict(spec), "n_grid": [int(v) for v in n_grid], "M": M, "folds": folds,
              "clip_epsilon": clip_epsilon}
    return MonteCarloReport("rmse", M, seed, config, tuple(arms))


# -- misspecification -------------------------------------------------------------------

SPEC_MAPS = {"correct": FeatureMap("quadratic"), "wrong": FeatureMap("linear")}
MISSPEC_ROWS = (("correct", "correct"), ("correct", "wrong"), ("wrong", "correct"), ("wrong", "wrong"))
MISSPEC_ESTIMATORS = ("plugin", "ipw", "dr")


def misspec_label(estimator: str, mu: str, pi: str) -> str:
    return f"{estimator}|mu={mu}|pi={pi}"


def run_misspec_experiment(spec: QuadraticDgp | None = None, n: int = 10000, n_g: int = 100,
                           M: int = 200, seed: int = 0, threads: int | None = None, folds: int = 2,
                           clip_epsilon: float = DEFAULT_CLIP) -> MonteCarloReport:
    """MSE of plug-in, IPW and DR estimators with each nuisance correct or linear-in-``w``."""
    spec = spec or QuadraticDgp()
    _check_m(M)

    def one(m):
        ds, truth = gen_quadratic(spec, n, n_g, seed, (0, m))
        try:
            fold = fold_assignment(ds.G, folds, seed, 0, m)
            mu = {k: out_of_fold_outcome(ds, fold, f) for k, f in SPEC_MAPS.items()}
            pi = {k: out_of_fold_propensity(ds, fold, f, clip_epsilon) for k, f in SPEC_MAPS.items()}
        except EstimationError:
            return None
        out = {}
        for mu_k, pi_k in MISSPEC_ROWS:
            preds = Predictions(pi[pi_k], mu[mu_k])
            for est in MISSPEC_ESTIMATORS:
                theta = ordered_sum(member_terms(est, ds, preds), ds.offsets) / ds.n
                out[misspec_label(est, mu_k, pi_k)] = theta - truth
        return out

    res = ordered_map(one, range(M), threads)
    ok = [r for r in res if r is not None]
    failed = len(res) - len(ok)
    arms = []
    for mu_k, pi_k in MISSPEC_ROWS:
        for est in MISSPEC_ESTIMATORS:
            label = misspec_label(est, mu_k, pi_k)
            arms.append(_mse_arm(label, [r[label] for r in ok], float(n),
                                 {"estimator": est, "mu": mu_k, "pi": pi_k, "n": n, "n_g": n_g},
                                 failed, root=False))
    config = {"dgp": asdict(spec), "n": n, "n_g": n_g, "M": M, "folds": folds,
              "clip_epsilon": clip_epsilon,
              "feature_maps": {k: f.to_dict() for k, f in SPEC_MAPS.items()}}
    return MonteCarloReport("misspec", M, seed, config, tuple(arms))


# -- consistency of the cluster-robust Omega -------------------------------------------------

def run_omega_consistency_experiment(spec: HomogeneousDgp | None = None, n: int = 10000, alpha: float = 0.3,
                                     M: int = 300, reference_reps: int = 2000, seed: int = 0,
                                     threads: int | None = None, clip_epsilon: float = 0.0) -> MonteCarloReport:
    """Mean ``omega_hat`` with the true nuisances against a brute-force ``Omega_n``.

    ``omega_hat`` is averaged over ``M`` datasets (arm group 0). The reference
    ``(1/n) E[sum_g (S_g - n_g * theta)**2]`` uses the true ``theta`` and is
    averaged over ``reference_reps`` separate datasets (arm group 1).
    """
    spec = replace(spec or HomogeneousDgp(), alpha=float(alpha))
    _check_m(M)
    _check_m(reference_reps)
    known = spec.known_nuisance(clip_epsilon)

    def panel(group, m):
        ds, _ = gen_homogeneous(spec, n, seed, (group, m))
        return ds, influence_values(ds, predict_dataset(known, ds))

    def estimated(m):
        ds, p = panel(0, m)
        return var_cluster_robust(ds, p, p.mean()).omega_hat

    def reference(m):
        ds, p = panel(1, m)
        dev = p.cluster_sums() - ds.sizes * spec.theta_true
        return compensated_sum(dev * dev) / ds.n

    est = np.array(ordered_map(estimated, range(M), threads))
    ref = np.array(ordered_map(reference, range(reference_reps), threads))
    params = {"alpha": float(alpha), "n": n}
    arms = (
        ArmResult("omega_hat", "mean_omega", float(np.mean(est)), _se(est), float(alpha), params, M, 0),
        ArmResult("omega_reference", "mean_omega", float(np.mean(ref)), _se(ref), float(alpha), params,
                  reference_reps, 0),
    )
    config = {"dgp": asdict(spec), "n": n, "alpha": float(alpha), "M": M, "reference_reps": reference_reps,
              "clip_epsilon": clip_epsilon}
    return MonteCarloReport("omega_consistency", M, seed, config, arms)


def _se(values: np.ndarray) -> float | None:
    return float(np.std(values, ddof=1) / math.sqrt(values.size)) if values.size > 1 else None
