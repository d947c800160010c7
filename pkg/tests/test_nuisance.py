import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import minimize

from clusterdr.data import ClusteredDataset, ValidationError
from clusterdr.nuisance import (
    FeatureMap,
    GlmFit,
    NuisanceFit,
    NuisanceMaps,
    NoObservedOutcomesError,
    SingleClassError,
    cross_fit,
    fit_logistic,
    fit_nuisances,
    fit_ols,
    fit_outcome,
    fit_propensity,
    fold_assignment,
    logistic,
    predict,
    register_feature_map,
)
from clusterdr.simulation import HomogeneousDgp, QuadraticDgp, gen_homogeneous, gen_quadratic


def _logistic_sample(beta, n, seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, len(beta) - 1))
    y = (rng.random(n) < logistic(beta[0] + X @ beta[1:])).astype(float)
    return X, y


def test_logistic_recovers_generating_coefficients():
    beta = np.array([0.5, 1.0, -0.75])
    X, y = _logistic_sample(beta, 5000, 1)
    res = fit_logistic(X, y)
    assert res.converged and res.grad_norm <= 1e-8
    assert np.max(np.abs(res.coef - beta)) < 0.1


def test_logistic_matches_direct_likelihood_maximisation():
    X, y = _logistic_sample(np.array([-0.3, 0.8]), 400, 2)
    D = np.column_stack([np.ones(len(y)), X])

    def nll(b):
        eta = D @ b
        return np.mean(np.logaddexp(0, eta) - y * eta)

    ref = minimize(nll, np.zeros(2), method="BFGS", options={"gtol": 1e-12}).x
    assert np.allclose(fit_logistic(X, y, ridge=0.0).coef, ref, atol=1e-6)


def test_logistic_null_features_give_zero_coefficients():
    res = fit_logistic(np.zeros((100, 2)), np.tile([0.0, 1.0], 50))
    assert np.allclose(res.coef, 0.0, atol=1e-12)


def test_logistic_separable_labels_stay_finite():
    x = np.linspace(-1, 1, 40)
    res = fit_logistic(x, (x > 0).astype(float))
    assert np.all(np.isfinite(res.coef))
    assert res.coef[1] > 0


def test_logistic_error_shrinks_with_n():
    beta = np.array([0.2, 1.0])
    err = {n: np.mean([np.linalg.norm(fit_logistic(*_logistic_sample(beta, n, s)).coef - beta) for s in range(20)])
           for n in (1000, 10000)}
    assert err[10000] / err[1000] < 0.5


def test_logistic_input_errors():
    with pytest.raises(SingleClassError, match="single-class labels"):
        fit_logistic(np.ones((5, 1)), np.ones(5))
    with pytest.raises(ValidationError, match="non-finite"):
        fit_logistic(np.array([[np.nan], [1.0]]), [0, 1])


def test_ols_exact_line():
    x = np.arange(10.0)
    res = fit_ols(x, 2 * x + 1)
    assert np.allclose(res.coef, [1.0, 2.0], rtol=0, atol=1e-10)


def test_ols_constant_target():
    x = np.random.default_rng(0).standard_normal((30, 3))
    assert np.allclose(fit_ols(x, np.full(30, 4.5)).coef, [4.5, 0, 0, 0], atol=1e-10)


def test_ols_residuals_orthogonal_to_features():
    rng = np.random.default_rng(3)
    X = rng.standard_normal((200, 4))
    y = rng.standard_normal(200)
    coef = fit_ols(X, y).coef
    resid = y - coef[0] - X @ coef[1:]
    D = np.column_stack([np.ones(200), X])
    assert np.max(np.abs(D.T @ resid)) <= 1e-8 * 200


def test_ols_rank_deficient_is_flagged():
    x = np.arange(6.0)
    res = fit_ols(np.column_stack([x, 2 * x]), 3 * x)
    assert res.rank_deficient
    assert np.all(np.isfinite(res.coef))


def _fit(coef_pi, coef_mu, kind="linear", clip=0.01):
    fm = FeatureMap(kind)
    return NuisanceFit(GlmFit(np.asarray(coef_pi, float), "logit", fm), GlmFit(np.asarray(coef_mu, float), "identity", fm), clip)


def test_predict_zero_coefficients():
    assert predict(_fit([0, 0, 0], [0, 0, 0]), [1.0], [2.0]) == {"pi_hat": 0.5, "mu_hat": 0.0}


def test_predict_clips_small_propensity():
    p = predict(_fit([np.log(1e-6 / (1 - 1e-6)), 0], [0, 0]), [], [0.0])
    assert p["pi_hat"] == 0.01


def test_predict_known_coefficients():
    p = predict(_fit([1, 2], [1, 2]), [], [1.0])
    assert p["pi_hat"] == pytest.approx(0.9525741268, abs=1e-9)
    assert p["mu_hat"] == 3.0


def test_predict_dimension_mismatch():
    with pytest.raises(ValidationError, match="dimension mismatch"):
        predict(_fit([1, 2], [1, 2]), [1.0], [1.0])


@settings(max_examples=50)
@given(st.lists(st.floats(-800, 800), min_size=1, max_size=20), st.floats(0.001, 0.49))
def test_clipped_propensities_within_bounds(eta, eps):
    fit = _fit([0.0, 1.0], [0.0, 0.0], clip=eps)
    w = np.array(eta).reshape(-1, 1)
    pi, _ = fit.predict_arrays(np.zeros((len(eta), 0)), w)
    assert np.all((pi >= eps) & (pi <= 1.0))


def test_feature_maps_are_pure_and_shaped():
    rng = np.random.default_rng(0)
    x, w = rng.standard_normal((5, 2)), rng.standard_normal((5, 3))
    for kind, dim in (("linear", 5), ("quadratic", 8), ("history", 5)):
        a, b = FeatureMap(kind)(x, w), FeatureMap(kind)(x, w)
        assert a.shape == (5, dim) and np.array_equal(a, b)
    register_feature_map("cubic_w", lambda x, w: np.hstack([x, w**3]))
    assert np.array_equal(FeatureMap("custom", "cubic_w")(x, w)[:, 2:], w**3)
    with pytest.raises(ValidationError):
        FeatureMap("custom", "nope")(x, w)


def test_fit_nuisances_needs_both_classes():
    ds = ClusteredDataset.from_sizes(np.zeros((2, 1)), np.arange(4.0), [1, 1, 1, 1], [1.0, 2, 3, 4], [2, 2])
    with pytest.raises(SingleClassError, match="single-class labels"):
        fit_nuisances(ds, [0, 1])


def test_outcome_fit_needs_observed_members():
    ds = ClusteredDataset.from_sizes(np.zeros((2, 1)), np.arange(4.0), [0, 0, 1, 1], [np.nan, np.nan, 3, 4], [2, 2])
    with pytest.raises(NoObservedOutcomesError):
        fit_outcome(ds, [0], FeatureMap())


def test_propensity_fit_tracks_true_function():
    spec = HomogeneousDgp()
    ds, _ = gen_homogeneous(spec, 40000, 5)
    fit = fit_nuisances(ds, np.arange(0, ds.G, 2))
    xs, ws = np.meshgrid(np.linspace(-1, 1, 5), np.linspace(-2, 2, 9))
    pi_hat, _ = fit.predict_arrays(xs.reshape(-1, 1), ws.reshape(-1, 1))
    assert np.max(np.abs(pi_hat - spec.propensity(xs, ws))) < 0.05


def test_linear_outcome_map_is_biased_under_quadratic_truth():
    spec = QuadraticDgp()
    ds, _ = gen_quadratic(spec, 10000, 10, 0)
    fit = fit_outcome(ds, np.arange(ds.G), FeatureMap("linear"))
    w = np.concatenate([np.linspace(-5, -2.01, 30), np.linspace(2.01, 5, 30)])
    x = np.zeros_like(w)
    assert np.mean(np.abs(fit(x, w) - spec.outcome_mean(x, w))) > 0.5


def test_fold_assignment_balanced_and_deterministic():
    fold = fold_assignment(11, 3, 4)
    assert np.bincount(fold).tolist() in ([4, 4, 3], [4, 3, 4], [3, 4, 4])
    assert np.array_equal(fold, fold_assignment(11, 3, 4))
    with pytest.raises(ValidationError):
        fold_assignment(2, 3, 0)


def _small_homogeneous(G=5):
    ds, _ = gen_homogeneous(HomogeneousDgp(alpha=0.5), G * G, 11)
    assert ds.G == G
    return ds


def test_leave_one_cluster_out_uses_other_clusters():
    ds = _small_homogeneous(5)
    preds = cross_fit(ds, folds=5, seed=1)
    for g in range(5):
        others = [c for c in range(5) if c != g]
        rows = ds.member_index([g])
        fit = fit_nuisances(ds, others)
        pi, mu = fit.predict_arrays(ds.x_individual[rows], ds.w[rows])
        assert np.array_equal(preds.pi_hat[rows], pi)
        assert np.array_equal(preds.mu_hat[rows], mu)


def test_cross_fit_is_deterministic():
    ds = _small_homogeneous(8)
    a, b = cross_fit(ds, seed=3), cross_fit(ds, seed=3)
    assert np.array_equal(a.pi_hat, b.pi_hat) and np.array_equal(a.mu_hat, b.mu_hat)


def test_cross_fit_predictions_ignore_own_cluster():
    ds = _small_homogeneous(8)
    preds = cross_fit(ds, seed=2)
    g = 3
    rows = ds.member_index([g])
    y = ds.y.copy()
    y[rows] = np.where(ds.r[rows] == 1, y[rows] + 100.0, np.nan)
    w = ds.w.copy()
    w[rows] += 7.0
    moved = ClusteredDataset(ds.x, w, ds.r, y, ds.offsets)
    again = cross_fit(moved, seed=2)
    own_fold = ds.member_index(np.flatnonzero(preds.fold == preds.fold[g]))
    others = np.setdiff1d(own_fold, rows)
    assert np.array_equal(preds.mu_hat[others], again.mu_hat[others])
    assert np.array_equal(preds.pi_hat[others], again.pi_hat[others])


def test_cross_fit_rejects_too_few_clusters():
    ds = _small_homogeneous(5)
    with pytest.raises(ValidationError):
        cross_fit(ds, folds=6)


def test_quadratic_maps_fit_quadratic_truth():
    spec = QuadraticDgp()
    ds, _ = gen_quadratic(spec, 20000, 10, 1)
    q = FeatureMap("quadratic")
    fit = fit_nuisances(ds, np.arange(ds.G), NuisanceMaps(q, q))
    assert np.allclose(fit.outcome.coefficients, [0, -1, 0, 1], atol=0.05)
    assert np.allclose(fit_propensity(ds, np.arange(ds.G), q).coefficients, [0, 1, 0, 0.5], atol=0.1)
