"""Data-generating processes for clustered data with missing outcomes.

``HomogeneousDgp``
    ``X ~ N(0, 1)`` per cluster; within a cluster ``W`` has mean ``X`` and
    covariance ``sigma2 * rho**|i-j|`` (an AR(1) walk); ``R ~ Bernoulli(
    logistic(x + 0.5 w))`` and ``Y ~ N(-x + w + 0.5, 1)``. Mean outcome 0.5.
``QuadraticDgp``
    Same covariates; ``mu = -x + w**2`` and ``pi = logistic(x + 0.5 w**2)``.
    Mean outcome ``E[W**2] = 1 + sigma2 = 5``.
``SequentialDgp``
    Bivariate ``W`` from a zero-started vector AR(2); the response probability
    and outcome mean depend on ``x`` and the running (max, min, mean) summary
    of past ``W``. The ``W`` process is sign-symmetric, so the mean outcome
    equals the outcome intercept (1 by default).

Unobserved outcomes are dropped from the dataset; :func:`draw_homogeneous`
and friends expose the complete draw for oracle checks.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .. import kernels
from ..data import ClusteredDataset, ValidationError
from ..nuisance import KnownNuisance, logistic
from ..rng import stream


def cluster_sizes_for(n: int, alpha: float | None = None, n_g: int | None = None) -> np.ndarray:
    """Equal cluster sizes ``floor(n**alpha)`` (or ``n_g``); the last cluster takes the remainder."""
    if n < 2:
        raise ValidationError("n must be at least 2")
    if n_g is None:
        if alpha is None or not 0.0 < alpha < 1.0:
            raise ValidationError("alpha must lie in (0, 1)")
        # the epsilon keeps exact powers such as 1000**(1/3) from rounding down
        n_g = int(math.floor(n ** alpha + 1e-9))
    if n_g < 1:
        raise ValidationError("cluster size below 1")
    if n_g > n:
        raise ValidationError("cluster size exceeds n")
    G = n // n_g
    sizes = np.full(G, n_g, dtype=np.int64)
    sizes[-1] += n - G * n_g
    return sizes


class Draw(NamedTuple):
    """Complete draw, including outcomes that the dataset hides."""

    dataset: ClusteredDataset
    y_full: np.ndarray
    pi: np.ndarray
    mu: np.ndarray
    truth: float


def oracle_mean(draw: Draw) -> tuple[float, float]:
    """Fully observed mean outcome and its cluster-robust standard error."""
    ds = draw.dataset
    sums = kernels.segment_sums(draw.y_full, ds.offsets)
    mean = kernels.compensated_sum(sums) / ds.n
    resid = sums - ds.sizes * mean
    return mean, math.sqrt(float(np.sum(resid * resid))) / ds.n


def _finish(x, w, sizes, pi, mu, noise_sd, seed, key, truth) -> Draw:
    n = int(sizes.sum())
    r = (stream(seed, "missingness", *key).random(n) < pi).astype(np.int8)
    y_full = mu + noise_sd * stream(seed, "outcome", *key).standard_normal(n)
    y = np.where(r == 1, y_full, np.nan)
    ds = ClusteredDataset.from_sizes(x, w, r, y, sizes, check=False)
    return Draw(ds, y_full, pi, mu, truth)


def _ar1_covariates(rho: float, sigma2: float, sizes: np.ndarray, seed: int, key) -> tuple[np.ndarray, np.ndarray]:
    G, n = sizes.shape[0], int(sizes.sum())
    x = stream(seed, "covariates", *key).standard_normal(G)
    e = stream(seed, "individual", *key).standard_normal(n)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    w = kernels.ar1_paths(np.repeat(x, sizes), e, offsets, rho, math.sqrt(sigma2))
    return x, w


@dataclass(frozen=True)
class HomogeneousDgp:
    rho: float = 0.8
    sigma2: float = 4.0
    beta_pi: tuple[float, float] = (1.0, 0.5)
    beta_mu: tuple[float, float, float] = (-1.0, 1.0, 0.5)
    y_noise_sd: float = 1.0
    alpha: float = 0.4
    theta_true: float = 0.5

    def __post_init__(self) -> None:
        if not -1.0 < self.rho < 1.0:
            raise ValidationError("rho must lie in (-1, 1)")
        if self.sigma2 <= 0 or self.y_noise_sd <= 0:
            raise ValidationError("variances must be positive")

    def propensity(self, x, w):
        return logistic(self.beta_pi[0] * np.ravel(x) + self.beta_pi[1] * np.ravel(w))

    def outcome_mean(self, x, w):
        return self.beta_mu[0] * np.ravel(x) + self.beta_mu[1] * np.ravel(w) + self.beta_mu[2]

    def known_nuisance(self, clip_epsilon: float = 0.0) -> KnownNuisance:
        return KnownNuisance(self.propensity, self.outcome_mean, clip_epsilon)


@dataclass(frozen=True)
class QuadraticDgp(HomogeneousDgp):
    beta_mu: tuple[float, float, float] = (-1.0, 1.0, 0.0)
    theta_true: float = 5.0

    def propensity(self, x, w):
        w = np.ravel(w)
        return logistic(self.beta_pi[0] * np.ravel(x) + self.beta_pi[1] * w * w)

    def outcome_mean(self, x, w):
        w = np.ravel(w)
        return self.beta_mu[0] * np.ravel(x) + self.beta_mu[1] * w * w + self.beta_mu[2]


def _matrix(a) -> np.ndarray:
    return np.asarray(a, dtype=np.float64)


@dataclass(frozen=True)
class SequentialDgp:
    a1: tuple = ((0.5, 0.0), (0.0, 0.5))
    a2: tuple = ((0.2, 0.0), (0.0, 0.2))
    eps_cov_scale: float = 4.0
    beta_pi: tuple[float, ...] = (1.0, 1.0, 0.8, -0.5, 0.3)
    beta_mu: tuple[float, ...] = (-1.0, 1.0, 1.0, -0.5, -0.4)
    mu_intercept: float = 1.0
    y_noise_sd: float = 1.0
    alpha: float = 0.4
    psi_true: float = 1.0

    def __post_init__(self) -> None:
        a1, a2 = _matrix(self.a1), _matrix(self.a2)
        if a1.shape != (2, 2) or a2.shape != (2, 2):
            raise ValidationError("AR coefficient matrices must be 2x2")
        if spectral_radius(a1, a2) >= 1.0:
            raise ValidationError("unstable AR(2) coefficients: spectral radius >= 1")
        if self.eps_cov_scale <= 0:
            raise ValidationError("eps_cov_scale must be positive")
        if len(self.beta_pi) != 5 or len(self.beta_mu) != 5:
            raise ValidationError("beta_pi and beta_mu need 5 entries over (x, S)")

    def propensity(self, x, s):
        s = np.asarray(s, dtype=np.float64).reshape(len(s), -1)
        return logistic(self.beta_pi[0] * np.ravel(x) + s @ np.asarray(self.beta_pi[1:]))

    def outcome_mean(self, x, s):
        s = np.asarray(s, dtype=np.float64).reshape(len(s), -1)
        return self.beta_mu[0] * np.ravel(x) + s @ np.asarray(self.beta_mu[1:]) + self.mu_intercept

    def known_nuisance(self, clip_epsilon: float = 0.0) -> KnownNuisance:
        """Oracle nuisances as functions of ``(x, S)`` for a summary dataset."""
        return KnownNuisance(self.propensity, self.outcome_mean, clip_epsilon)


def spectral_radius(a1, a2) -> float:
    """Largest modulus among the eigenvalues of the AR(2) companion matrix."""
    a1, a2 = _matrix(a1), _matrix(a2)
    q = a1.shape[0]
    comp = np.zeros((2 * q, 2 * q))
    comp[:q, :q] = a1
    comp[:q, q:] = a2
    comp[q:, :q] = np.eye(q)
    return float(np.max(np.abs(np.linalg.eigvals(comp))))


def draw_homogeneous(spec: HomogeneousDgp, n: int, seed: int, key: tuple[int, ...] = (),
                     n_g: int | None = None) -> Draw:
    sizes = cluster_sizes_for(n, spec.alpha, n_g)
    x, w = _ar1_covariates(spec.rho, spec.sigma2, sizes, seed, key)
    xi = np.repeat(x, sizes)
    return _finish(x, w, sizes, spec.propensity(xi, w), spec.outcome_mean(xi, w),
                   spec.y_noise_sd, seed, key, spec.theta_true)


def gen_homogeneous(spec: HomogeneousDgp, n: int, seed: int, key: tuple[int, ...] = ()):
    d = draw_homogeneous(spec, n, seed, key)
    return d.dataset, d.truth


def draw_quadratic(spec: QuadraticDgp, n: int, n_g: int, seed: int, key: tuple[int, ...] = ()) -> Draw:
    return draw_homogeneous(spec, n, seed, key, n_g=n_g)


def gen_quadratic(spec: QuadraticDgp, n: int, n_g: int, seed: int, key: tuple[int, ...] = ()):
    d = draw_quadratic(spec, n, n_g, seed, key)
    return d.dataset, d.truth


def sequential_summary(w: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """(running max over entries, running min over entries, componentwise running mean)."""
    mx, mn = kernels.running_extrema(w, offsets)
    return np.column_stack([mx, mn, kernels.running_mean(w, offsets)])


def draw_sequential(spec: SequentialDgp, n: int, seed: int, key: tuple[int, ...] = (),
                    flip_innovations: bool = False) -> Draw:
    sizes = cluster_sizes_for(n, spec.alpha)
    G = sizes.shape[0]
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    x = stream(seed, "covariates", *key).standard_normal(G)
    e = stream(seed, "individual", *key).standard_normal((n, 2)) * math.sqrt(spec.eps_cov_scale)
    if flip_innovations:
        e = -e
    w = kernels.ar2_paths(e, offsets, _matrix(spec.a1), _matrix(spec.a2))
    s = sequential_summary(w, offsets)
    xi = np.repeat(x, sizes)
    return _finish(x, w, sizes, spec.propensity(xi, s), spec.outcome_mean(xi, s),
                   spec.y_noise_sd, seed, key, spec.psi_true)


def gen_sequential(spec: SequentialDgp, n: int, seed: int, key: tuple[int, ...] = ()):
    d = draw_sequential(spec, n, seed, key)
    return d.dataset, d.truth
