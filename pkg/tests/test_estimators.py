import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from clusterdr.data import ValidationError
from clusterdr.estimators import (
    CURRENT_ONLY,
    HISTORY_SUMMARY,
    EstimatorSpec,
    SummaryConfig,
    estimate,
    estimate_dr,
    estimate_dr_sequential,
    estimate_ipw,
    estimate_plugin,
    history_features,
    influence_values,
    observed_mean,
    summarize_history,
)
from clusterdr.nuisance import KnownNuisance, NuisanceMaps, Predictions, cross_fit
from clusterdr.simulation import (
    HomogeneousDgp,
    QuadraticDgp,
    SequentialDgp,
    gen_homogeneous,
    gen_quadratic,
    gen_sequential,
)
from clusterdr.simulation.experiments import run_misspec_experiment

from conftest import make_dataset


def _preds(pi, mu):
    return Predictions(np.asarray(pi, float), np.asarray(mu, float))


def test_influence_value_examples():
    ds = make_dataset([1, 1, 1], [2.0, None, 5.0])
    phi = influence_values(ds, _preds([0.5, 0.9, 1.0], [1.0, 4.0, 17.3])).values
    assert phi.tolist() == [3.0, 4.0, 5.0]


def test_influence_rejects_bad_inputs():
    ds = make_dataset([2], [1.0, 2.0])
    with pytest.raises(ValidationError, match="alignment"):
        influence_values(ds, _preds([1.0], [0.0]))
    with pytest.raises(ValidationError, match="pi_hat"):
        influence_values(ds, _preds([0.0, 1.0], [0.0, 0.0]))


def test_plugin_examples():
    ds = make_dataset([2, 1], [1.0, None, 3.0])
    assert estimate_plugin(ds, _preds([0.5] * 3, [7.0] * 3)).theta_hat == 7.0
    assert estimate_plugin(ds, _preds([0.5] * 3, [1.0, 2.0, 3.0])).theta_hat == 2.0


def test_ipw_examples():
    ds = make_dataset([3], [1.0, 2.0, 6.0])
    assert estimate_ipw(ds, _preds([1.0] * 3, [0.0] * 3)).theta_hat == 3.0
    ds = make_dataset([1, 1], [2.0, None])
    assert estimate_ipw(ds, _preds([0.5, 0.5], [9.0, 9.0])).theta_hat == 2.0


def test_dr_examples():
    ds = make_dataset([3], [1.0, 2.0, 3.0])
    assert estimate_dr(ds, _preds([1.0] * 3, [0.0] * 3)).theta_hat == 2.0
    ds = make_dataset([1, 1], [2.0, None])
    assert estimate_dr(ds, _preds([0.5, 0.7], [1.0, 4.0])).theta_hat == 3.5


obs = st.floats(-1e3, 1e3, allow_nan=False)


@settings(max_examples=60)
@given(st.lists(st.tuples(obs, obs), min_size=1, max_size=30), st.integers(1, 5))
def test_dr_equals_sample_mean_when_fully_observed(pairs, size):
    y = np.array([p[0] for p in pairs])
    mu = np.array([p[1] for p in pairs])
    n = y.size
    sizes = [size] * (n // size) + ([n % size] if n % size else [])
    ds = make_dataset(sizes, y)
    preds = _preds(np.ones(n), mu)
    dr = estimate_dr(ds, preds).theta_hat
    assert dr == estimate_ipw(ds, preds).theta_hat
    assert dr == influence_values(ds, preds).mean()
    assert dr == pytest.approx(np.mean(y), rel=1e-12, abs=1e-9)


def test_observed_mean():
    assert observed_mean(make_dataset([2, 1], [1.0, None, 4.0])) == 2.5


def test_summarize_history_examples():
    ds = make_dataset([3], [1.0, 1.0, 1.0], w=[[1.0, -1.0], [0.0, 2.0], [9.0, 9.0]])
    c = ds.cluster(0)
    assert summarize_history(c, 2).tolist() == [2.0, -1.0, 0.5, 0.5]
    assert summarize_history(c, 1).tolist() == [1.0, -1.0, 1.0, -1.0]
    with pytest.raises(ValidationError):
        summarize_history(c, 0)
    with pytest.raises(ValidationError):
        SummaryConfig(("last_d_window",), window_d=0)


@settings(max_examples=40)
@given(st.integers(2, 8), st.integers(0, 10**6))
def test_summary_depends_only_on_prefix(m, seed):
    rng = np.random.default_rng(seed)
    w = rng.standard_normal((m, 2))
    y = rng.standard_normal(m)
    r = (rng.random(m) < 0.5).astype(np.int8)
    y[r == 0] = np.nan
    cfg = SummaryConfig(("current", "running_max", "running_min", "running_mean", "last_d_window"), 2, True)
    t = int(rng.integers(1, m))
    base = summarize_history(make_dataset([m], y, r=r, w=w).cluster(0), t, cfg)
    w2, y2, r2 = w.copy(), y.copy(), r.copy()
    w2[t:] = rng.standard_normal((m - t, 2))
    r2[t - 1:] = 1  # the current member's own outcome must not enter either
    y2[t - 1:] = rng.standard_normal(m - t + 1)
    moved = summarize_history(make_dataset([m], y2, r=r2, w=w2).cluster(0), t, cfg)
    assert np.array_equal(base, moved)


def test_history_features_match_record_view():
    ds, _ = gen_sequential(SequentialDgp(), 300, 1)
    feats = history_features(ds, HISTORY_SUMMARY)
    for g in (0, ds.G - 1):
        c = ds.cluster(g)
        for t in (1, c.size):
            assert np.array_equal(feats[ds.offsets[g] + t - 1], summarize_history(c, t))


def test_current_only_sequential_matches_plain_dr():
    ds, _ = gen_homogeneous(HomogeneousDgp(), 3000, 4)
    seq = estimate_dr_sequential(ds, CURRENT_ONLY, seed=9).theta_hat
    plain = estimate_dr(ds, cross_fit(ds, 2, NuisanceMaps(), seed=9)).theta_hat
    assert seq == plain


def test_known_nuisance_pipeline():
    ds = make_dataset([2, 1], [1.0, None, 3.0])
    report, _ = estimate(ds, EstimatorSpec("dr", known=KnownNuisance(1.0, 0.0)))
    assert report.theta_hat == pytest.approx(4 / 3, abs=1e-15)


def test_oracle_dr_unbiased():
    spec = HomogeneousDgp()
    est = EstimatorSpec("dr", known=spec.known_nuisance())
    thetas = np.array([estimate(gen_homogeneous(spec, 10000, 21, (m,))[0], est)[0].theta_hat for m in range(500)])
    se = thetas.std(ddof=1) / np.sqrt(thetas.size)
    assert abs(thetas.mean() - 0.5) < 3 * se


@pytest.mark.slow
def test_double_robustness_pattern():
    small = run_misspec_experiment(QuadraticDgp(), 1000, 10, 100, seed=5)
    large = run_misspec_experiment(QuadraticDgp(), 10000, 10, 100, seed=5)
    for row in ("dr|mu=correct|pi=wrong", "dr|mu=wrong|pi=correct"):
        assert large.arm(row).value < small.arm(row).value
        assert large.arm(row).value < 2 * large.arm("dr|mu=correct|pi=correct").value
    assert large.arm("plugin|mu=wrong|pi=correct").value > 1.8
    assert large.arm("ipw|mu=correct|pi=wrong").value > 1.8
