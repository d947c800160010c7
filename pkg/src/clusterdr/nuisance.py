"""Propensity and outcome-regression models.

Both nuisances are GLMs on a configurable feature map: a logistic model for
the probability that the outcome is observed, and a linear model for the
outcome mean among observed members. Choosing a poorer feature map (say
linear where the truth is quadratic in ``w``) is how misspecification is
produced on purpose.

Training data is always selected by cluster, so a member's predictions never
come from a model that saw its own cluster.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .data import ClusteredDataset, EstimationError, ValidationError
from .rng import stream

DEFAULT_CLIP = 0.01


class SingleClassError(EstimationError):
    """Propensity labels contain only one class."""


class InsufficientDataError(EstimationError):
    """Fewer training rows than model coefficients."""


class NoObservedOutcomesError(EstimationError):
    """No observed outcome in the clusters available for training."""


# -- feature maps ------------------------------------------------------------

_CUSTOM_MAPS: dict[str, Callable[[np.ndarray, np.ndarray], np.ndarray]] = {}


def register_feature_map(name: str, fn: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> None:
    """Register ``fn(x, w) -> features`` under ``name`` for ``FeatureMap("custom", name)``.

    ``fn`` must be pure and return a 2-D array with one row per input row.
    """
    _CUSTOM_MAPS[name] = fn


@dataclass(frozen=True)
class FeatureMap:
    """How ``(x, w)`` becomes a design row (the intercept is added by the fit).

    ``linear`` gives ``(x, w)``; ``quadratic`` gives ``(x, w, w**2)``;
    ``history`` gives ``(x, s)`` where ``s`` is a history summary supplied in
    place of ``w``; ``custom`` looks up a registered function by ``name``.
    """

    kind: str = "linear"
    name: str = ""

    def __post_init__(self) -> None:
        if self.kind not in ("linear", "quadratic", "history", "custom"):
            raise ValidationError(f"unknown feature map kind {self.kind!r}")
        if self.kind == "custom" and not self.name:
            raise ValidationError("custom feature maps need a registered name")

    def __call__(self, x: np.ndarray, w: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64).reshape(len(x), -1)
        w = np.asarray(w, dtype=np.float64).reshape(len(w), -1)
        if self.kind in ("linear", "history"):
            return np.hstack([x, w])
        if self.kind == "quadratic":
            return np.hstack([x, w, w * w])
        try:
            fn = _CUSTOM_MAPS[self.name]
        except KeyError:
            raise ValidationError(f"feature map {self.name!r} is not registered") from None
        out = np.asarray(fn(x, w), dtype=np.float64)
        return out.reshape(len(x), -1)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "name": self.name} if self.name else {"kind": self.kind}


@dataclass(frozen=True)
class NuisanceMaps:
    propensity: FeatureMap = field(default_factory=FeatureMap)
    outcome: FeatureMap = field(default_factory=FeatureMap)


# -- GLM solvers --------------------------------------------------------------

@dataclass(frozen=True)
class SolverResult:
    """Coefficients (intercept first) plus convergence diagnostics."""

    coef: np.ndarray
    converged: bool
    iterations: int
    grad_norm: float = 0.0
    rank_deficient: bool = False


def logistic(eta):
    """Numerically stable logistic function."""
    eta = np.asarray(eta, dtype=np.float64)
    return np.exp(-np.logaddexp(0.0, -eta))


def _design(features: np.ndarray) -> np.ndarray:
    features = np.asarray(features, dtype=np.float64)
    if features.ndim == 1:
        features = features.reshape(-1, 1)
    return np.hstack([np.ones((features.shape[0], 1)), features])


def _check_finite(*arrays: np.ndarray) -> None:
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise ValidationError("non-finite input to model fit")


def fit_logistic(features, labels, max_iter: int = 100, tol: float = 1e-8,
                 ridge: float = 1e-8) -> SolverResult:
    """Ridge-penalised logistic regression by iteratively reweighted least squares.

    Maximises ``mean(y*eta - log(1 + exp(eta))) - ridge/2 * |slopes|^2`` with
    Newton steps, halving a step whenever it lowers the objective. Stops once
    the gradient max-norm is at most ``tol``; otherwise the result is returned
    with ``converged=False`` and is still usable.
    """
    X = _design(features)
    y = np.asarray(labels, dtype=np.float64).ravel()
    _check_finite(X, y)
    n, d = X.shape
    if y.shape[0] != n:
        raise ValidationError("features and labels differ in length")
    if n < d:
        raise InsufficientDataError(f"need at least {d} rows to fit {d} coefficients, got {n}")
    if not np.all((y == 0) | (y == 1)):
        raise ValidationError("labels must be 0/1")
    if y.min() == y.max():
        raise SingleClassError("single-class labels: propensity is not estimable")

    penalty = np.full(d, ridge)
    penalty[0] = 0.0

    def objective(beta):
        eta = X @ beta
        return float(np.mean(y * eta - np.logaddexp(0.0, eta)) - 0.5 * np.sum(penalty * beta * beta))

    beta = np.zeros(d)
    obj = objective(beta)
    grad_norm = np.inf
    for it in range(1, max_iter + 1):
        p = logistic(X @ beta)
        grad = X.T @ (y - p) / n - penalty * beta
        grad_norm = float(np.max(np.abs(grad)))
        if grad_norm <= tol:
            return SolverResult(beta, True, it - 1, grad_norm)
        wts = p * (1.0 - p)
        H = (X * wts[:, None]).T @ X / n + np.diag(penalty)
        # saturated weights under separation can leave H singular
        H[np.diag_indices(d)] += 1e-12
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, grad, rcond=None)[0]
        t = 1.0
        for _ in range(50):
            cand = beta + t * step
            cand_obj = objective(cand)
            if np.isfinite(cand_obj) and cand_obj >= obj - 1e-15 * abs(obj):
                break
            t *= 0.5
        else:
            break
        beta, obj = cand, cand_obj
    p = logistic(X @ beta)
    grad = X.T @ (y - p) / n - penalty * beta
    grad_norm = float(np.max(np.abs(grad)))
    return SolverResult(beta, grad_norm <= tol, max_iter, grad_norm)


def fit_ols(features, targets, ridge: float = 0.0) -> SolverResult:
    """Least squares with intercept and an optional ridge on the slopes.

    The penalty is ``ridge * |slopes|^2`` against the mean squared residual.
    A rank-deficient design with ``ridge == 0`` is refit with ``ridge = 1e-8``
    and flagged ``rank_deficient``.
    """
    X = _design(features)
    y = np.asarray(targets, dtype=np.float64).ravel()
    _check_finite(X, y)
    n, d = X.shape
    if y.shape[0] != n:
        raise ValidationError("features and targets differ in length")
    if n < 1:
        raise ValidationError("need at least one row")
    deficient = False
    if ridge == 0.0:
        if np.linalg.matrix_rank(X) < d:
            deficient = True
            ridge = 1e-8
        else:
            coef = np.linalg.lstsq(X, y, rcond=None)[0]
            return SolverResult(coef, True, 1)
    aug = np.zeros((d - 1, d))
    aug[:, 1:] = np.sqrt(n * ridge) * np.eye(d - 1)
    coef = np.linalg.lstsq(np.vstack([X, aug]), np.concatenate([y, np.zeros(d - 1)]), rcond=None)[0]
    return SolverResult(coef, True, 1, rank_deficient=deficient)


# -- fitted nuisances -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GlmFit:
    coefficients: np.ndarray
    link: str
    feature_map: FeatureMap
    training_cluster_ids: tuple[int, ...] = ()
    converged: bool = True

    def linear_predictor(self, x, w) -> np.ndarray:
        F = self.feature_map(x, w)
        if F.shape[1] + 1 != self.coefficients.shape[0]:
            raise ValidationError(
                f"dimension mismatch: {F.shape[1]} features for {self.coefficients.shape[0] - 1} slopes"
            )
        return self.coefficients[0] + F @ self.coefficients[1:]

    def __call__(self, x, w) -> np.ndarray:
        eta = self.linear_predictor(x, w)
        return logistic(eta) if self.link == "logit" else eta


@dataclass(frozen=True, eq=False)
class NuisanceFit:
    propensity: GlmFit
    outcome: GlmFit
    clip_epsilon: float = DEFAULT_CLIP

    def predict_arrays(self, x, w) -> tuple[np.ndarray, np.ndarray]:
        pi = np.clip(self.propensity(x, w), self.clip_epsilon, 1.0)
        return pi, self.outcome(x, w)


Nuisance = Union[float, Callable[[np.ndarray, np.ndarray], np.ndarray]]


@dataclass(frozen=True, eq=False)
class KnownNuisance:
    """Known-nuisance mode: the true ``pi`` and ``mu`` are supplied directly.

    Each may be a constant or a vectorised function ``f(x, w) -> (n,)`` of the
    per-member cluster covariates and individual covariates. Propensities are
    clipped below at ``clip_epsilon`` (0 disables clipping).
    """

    pi: Nuisance
    mu: Nuisance
    clip_epsilon: float = 0.0

    def predict_arrays(self, x, w) -> tuple[np.ndarray, np.ndarray]:
        n = len(w)
        pi = np.full(n, float(self.pi)) if np.isscalar(self.pi) else np.asarray(self.pi(x, w), dtype=np.float64)
        mu = np.full(n, float(self.mu)) if np.isscalar(self.mu) else np.asarray(self.mu(x, w), dtype=np.float64)
        if self.clip_epsilon > 0:
            pi = np.clip(pi, self.clip_epsilon, 1.0)
        if np.any(pi <= 0) or np.any(pi > 1):
            raise ValidationError("known propensity must lie in (0, 1]")
        return pi, mu


@dataclass(frozen=True, eq=False)
class Predictions:
    """Per-member ``pi_hat`` and ``mu_hat`` aligned with a dataset."""

    pi_hat: np.ndarray
    mu_hat: np.ndarray
    fold: np.ndarray | None = None  # per-cluster fold id when cross-fitted

    def check(self, dataset: ClusteredDataset) -> None:
        if self.pi_hat.shape != (dataset.n,) or self.mu_hat.shape != (dataset.n,):
            raise ValidationError(
                f"alignment mismatch: predictions of length {self.pi_hat.shape[0]} for {dataset.n} individuals"
            )

    def take(self, rows: np.ndarray) -> "Predictions":
        return Predictions(self.pi_hat[rows], self.mu_hat[rows])


def predict(fit, x, w_or_s) -> dict:
    """Evaluate a fit at a single point."""
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    w = np.asarray(w_or_s, dtype=np.float64).reshape(1, -1)
    pi, mu = fit.predict_arrays(x, w)
    return {"pi_hat": float(pi[0]), "mu_hat": float(mu[0])}


def predict_dataset(fit, dataset: ClusteredDataset) -> Predictions:
    pi, mu = fit.predict_arrays(dataset.x_individual, dataset.w)
    return Predictions(pi, mu)


def fit_propensity(dataset: ClusteredDataset, clusters, fmap: FeatureMap, **solver) -> GlmFit:
    rows = dataset.member_index(clusters)
    F = fmap(dataset.x_individual[rows], dataset.w[rows])
    res = fit_logistic(F, dataset.r[rows], **solver)
    return GlmFit(res.coef, "logit", fmap, tuple(int(c) for c in clusters), res.converged)


def fit_outcome(dataset: ClusteredDataset, clusters, fmap: FeatureMap, ridge: float = 0.0) -> GlmFit:
    rows = dataset.member_index(clusters)
    rows = rows[dataset.r[rows] == 1]
    if rows.size == 0:
        raise NoObservedOutcomesError("no observed outcomes in the training clusters")
    F = fmap(dataset.x_individual[rows], dataset.w[rows])
    res = fit_ols(F, dataset.y[rows], ridge)
    return GlmFit(res.coef, "identity", fmap, tuple(int(c) for c in clusters), not res.rank_deficient)


def fit_nuisances(dataset: ClusteredDataset, training_clusters, maps: NuisanceMaps | None = None,
                  clip_epsilon: float = DEFAULT_CLIP) -> NuisanceFit:
    """Fit the propensity on all members and the outcome model on observed members."""
    maps = maps or NuisanceMaps()
    training_clusters = np.asarray(training_clusters, dtype=np.int64)
    if training_clusters.size == 0:
        raise ValidationError("training cluster set is empty")
    if not 0.0 < clip_epsilon < 0.5:
        raise ValidationError("clip_epsilon must lie in (0, 0.5)")
    outcome = fit_outcome(dataset, training_clusters, maps.outcome)
    propensity = fit_propensity(dataset, training_clusters, maps.propensity)
    return NuisanceFit(propensity, outcome, clip_epsilon)


# -- cross-fitting ------------------------------------------------------------------

def fold_assignment(G: int, folds: int, seed: int, *key: int) -> np.ndarray:
    """Fold id per cluster: a seeded permutation cut into ``folds`` contiguous blocks."""
    if folds < 2:
        raise ValidationError("folds must be at least 2")
    if G < folds:
        raise ValidationError(f"cannot cross-fit {folds} folds with {G} clusters")
    perm = stream(seed, "split", *key).permutation(G)
    fold = np.empty(G, dtype=np.int64)
    fold[perm] = (np.arange(G) * folds) // G
    return fold


def out_of_fold_propensity(dataset: ClusteredDataset, fold: np.ndarray, fmap: FeatureMap,
                           clip_epsilon: float = DEFAULT_CLIP) -> np.ndarray:
    pi = np.empty(dataset.n)
    xi = dataset.x_individual
    for k in range(int(fold.max()) + 1):
        fit = fit_propensity(dataset, np.flatnonzero(fold != k), fmap)
        rows = dataset.member_index(np.flatnonzero(fold == k))
        pi[rows] = np.clip(fit(xi[rows], dataset.w[rows]), clip_epsilon, 1.0)
    return pi


def out_of_fold_outcome(dataset: ClusteredDataset, fold: np.ndarray, fmap: FeatureMap) -> np.ndarray:
    mu = np.empty(dataset.n)
    xi = dataset.x_individual
    for k in range(int(fold.max()) + 1):
        fit = fit_outcome(dataset, np.flatnonzero(fold != k), fmap)
        rows = dataset.member_index(np.flatnonzero(fold == k))
        mu[rows] = fit(xi[rows], dataset.w[rows])
    return mu


def cross_fit(dataset: ClusteredDataset, folds: int = 2, maps: NuisanceMaps | None = None,
              clip_epsilon: float = DEFAULT_CLIP, seed: int = 0, key: tuple[int, ...] = ()) -> Predictions:
    """Out-of-fold predictions with clusters partitioned into ``folds`` groups.

    Each member's ``pi_hat`` and ``mu_hat`` come from models trained on the
    clusters of the other folds.
    """
    maps = maps or NuisanceMaps()
    if not 0.0 < clip_epsilon < 0.5:
        raise ValidationError("clip_epsilon must lie in (0, 0.5)")
    fold = fold_assignment(dataset.G, folds, seed, *key)
    mu = out_of_fold_outcome(dataset, fold, maps.outcome)
    pi = out_of_fold_propensity(dataset, fold, maps.propensity, clip_epsilon)
    return Predictions(pi, mu, fold)
