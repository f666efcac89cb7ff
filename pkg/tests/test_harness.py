import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rotbayes.design import WeightMatrix
from rotbayes.harness import (
    CampaignConfig,
    PrecisionSample,
    assign_windows,
    bootstrap_ci,
    cluster,
    run_campaign,
    run_estimation,
    run_seeds,
    weighted_error,
)
from rotbayes.model import ParameterPoint


def pt(theta, *v):
    return ParameterPoint(theta, v or (0.5,) * 4)


def test_weighted_error_examples():
    G = WeightMatrix.select("theta")
    assert weighted_error(pt(0.4), pt(0.4), G) == 0
    assert weighted_error(pt(0.01), pt(math.pi - 0.01), G) == pytest.approx(4e-4)
    G2 = WeightMatrix.select("theta", "V1")
    est = pt(0.5, 0.7, 0.5, 0.5, 0.5)
    assert weighted_error(est, pt(0.4, 0.5, 0.5, 0.5, 0.5), G2) == pytest.approx(0.05)


def test_config_validation(small_config):
    with pytest.raises(ValueError, match="cluster_width"):
        dataclasses.replace(small_config, cluster_width=0)
    with pytest.raises(ValueError, match="confidence"):
        dataclasses.replace(small_config, confidence=1.0)
    with pytest.raises(ValueError, match="M"):
        dataclasses.replace(small_config, M=0)
    assert small_config.J == 1


def test_run_seeds_are_distinct():
    a = [g.random() for g in run_seeds(0, 0, 0)]
    b = [g.random() for g in run_seeds(0, 0, 1)]
    c = [g.random() for g in run_seeds(0, 1, 0)]
    assert len({*a, *b, *c}) == 6


def test_run_estimation_ledger_and_budget(small_config):
    r = run_estimation(small_config, 0, 0)
    assert r.flagged is None
    assert np.array_equal(r.n, np.cumsum([x.setting.s for x in r.record.records]))
    assert r.n[-1] >= small_config.N_max > r.n[-2]
    assert np.all(r.delta_sq >= 0)
    assert r.record.N == r.n[-1]


def test_budget_of_one(small_config):
    r = run_estimation(dataclasses.replace(small_config, N_max=1), 0, 0)
    assert r.record.K == 1 and r.n[0] in (1, 2, 11, 51)


def test_photon_cap(small_config):
    r = run_estimation(dataclasses.replace(small_config, K_max=7), 0, 0)
    assert r.record.K == 7


def test_trace_keeps_estimates(small_config):
    r = run_estimation(small_config, 0, 1, trace=True)
    assert r.estimates.shape == (r.record.K, 5)
    again = [weighted_error(e, r.record.true_point, small_config.G) for e in r.estimates]
    np.testing.assert_allclose(again, r.delta_sq)


def test_run_is_deterministic(small_config):
    a, b = run_estimation(small_config, 0, 1), run_estimation(small_config, 0, 1)
    assert a.record.records == b.record.records
    assert np.array_equal(a.delta_sq, b.delta_sq)


def test_replay_pool_missing_setting_flags_run(small_config):
    from rotbayes.io import ReplayPool

    pool = ReplayPool()
    for _ in range(3):
        pool.add(0, 1, "B1", 1)
    r = run_estimation(small_config, 0, 0, pool=pool)
    assert r.flagged and "pool-exhausted" in r.flagged


# --- clustering --------------------------------------------------------------


def S(d, n, run=0, angle=0):
    return PrecisionSample(d, n, run, angle)


def test_cluster_single_sample():
    c = cluster([S(0.3, 150)])
    assert len(c) == 1 and c.median[0] == 0.3 and c.n_center[0] == 175


def test_cluster_excludes_small_n():
    assert len(cluster([S(0.3, 90)])) == 0
    assert len(cluster([S(0.3, 100)])) == 0


def test_cluster_median_robust():
    c = cluster([S(1, 120, 0), S(2, 130, 1), S(100, 140, 2)])
    assert c.median[0] == 2 and c.count[0] == 3


def test_cluster_averages_angles_before_median():
    samples = [S(1.0, 120, 0, 0), S(3.0, 130, 0, 1), S(10.0, 125, 1, 0), S(10.0, 125, 1, 1)]
    c = cluster(samples)
    assert c.median[0] == pytest.approx(np.median([2.0, 10.0]))


def test_cluster_carries_value_over_skipped_windows():
    # one run jumps from n=120 to n=290: windows 150-199, 200-249 hold 0.5
    c = cluster([S(0.5, 120), S(0.1, 290)])
    np.testing.assert_allclose(c.n_center, [125, 175, 225, 275])
    np.testing.assert_allclose(c.median, [0.5, 0.5, 0.5, 0.1])


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 2000), st.floats(0, 10)), min_size=1, max_size=80),
       st.integers(1, 200), st.integers(0, 300))
def test_windows_partition_samples(pairs, width, min_n):
    n = np.array([p[0] for p in pairs])
    win = assign_windows(n, width, min_n)
    kept = win >= 0
    assert kept.sum() == np.sum(n > min_n)
    lo = win[kept] * width
    assert np.all((lo <= n[kept]) & (n[kept] < lo + width))


def test_cluster_single_run_retains_every_sample_window():
    samples = [S(float(i), n) for i, n in enumerate([101, 130, 160, 230, 400])]
    c = cluster(samples)
    # windows with samples carry their mean, skipped ones the carried value
    assert list(c.window) == list(range(2, 9))
    assert c.median[0] == pytest.approx(0.5)


def test_bootstrap_examples(rng):
    assert bootstrap_ci([2.0] * 10, 500, 0.99, rng) == (2.0, 2.0)
    vals = rng.standard_normal(31)
    lo, hi = bootstrap_ci(vals, 2000, 0.99, rng)
    assert lo <= np.median(vals) <= hi
    with pytest.raises(ValueError):
        bootstrap_ci([1.0], 10, 0.9, rng)


def test_bootstrap_coverage():
    rng = np.random.default_rng(2024)
    hits = 0
    trials = 1000
    for _ in range(trials):
        vals = rng.normal(3.0, 1.0, 41)
        lo, hi = bootstrap_ci(vals, 400, 0.99, rng)
        hits += lo <= 3.0 <= hi
    assert hits / trials >= 0.97


def test_median_robust_to_inflated_tail(rng):
    vals = rng.lognormal(size=101)
    inflated = np.sort(vals)
    inflated[-10:] *= 10
    q1, q3 = np.quantile(vals, [0.25, 0.75])
    assert abs(np.median(inflated) - np.median(vals)) < q3 - q1


def test_campaign_deterministic_and_complete(small_config):
    a = run_campaign(small_config)
    b = run_campaign(small_config)
    assert np.array_equal(a.curve.median, b.curve.median)
    assert np.array_equal(a.curve.ci_low, b.curve.ci_low, equal_nan=True)
    assert len(a.runs) == small_config.M * small_config.J
    np.testing.assert_allclose(a.usage.sum(axis=1), 1.0)
    assert np.all(np.diff(a.curve.n_center) > 0)


def test_campaign_worker_count_does_not_change_results(small_config):
    a = run_campaign(small_config, workers=1)
    b = run_campaign(small_config, workers=2)
    assert np.array_equal(a.curve.median, b.curve.median)


def test_perfect_visibility_smoke():
    # with V=1 every window after the first few should be no worse than the start
    for seed in range(5):
        cfg = CampaignConfig(G=WeightMatrix.select("theta"), true_points=(pt(1.1, 1, 1, 1, 1),),
                             seed=seed, M=1, n_p=1000, N_max=1500, bootstrap_resamples=10)
        med = run_campaign(cfg).curve.median
        assert med[-1] < med[0]
        assert med[-5:].max() < 1e-3


def test_truncate_drops_overshoot_windows():
    from rotbayes.harness import truncate

    # run 0 ends at 205, run 1 overshoots to 260 with its last photon
    samples = [S(1.0, 120, 0), S(0.5, 205, 0), S(2.0, 130, 1), S(0.1, 260, 1)]
    c = truncate(cluster(samples), 200, 50)
    assert list(c.window) == [2, 3, 4]
    assert c.count.tolist() == [2, 2, 2]


def test_campaign_curve_stops_at_budget(small_config):
    res = run_campaign(small_config)
    assert res.curve.window.max() * small_config.cluster_width <= small_config.N_max
    assert np.all(res.curve.count == small_config.M)
