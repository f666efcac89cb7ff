import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rotbayes.exceptions import DegeneratePosteriorError, UndefinedMeanError
from rotbayes.model import Basis, ControlSetting, ExperimentRecord, ParameterPoint, likelihood
from rotbayes.particles import (
    Ensemble,
    bayes_update,
    circular_mean,
    effective_sample_size,
    init_prior,
    load_snapshot,
    posterior_mean,
    resample,
    save_snapshot,
    summarize,
    wrapped_difference,
)


def rec(i, b, o):
    return ExperimentRecord(ControlSetting.of(i, b), o)


def test_prior_shape_and_fixed(rng):
    ens = init_prior(1000, rng)
    ens.validate()
    assert ens.x.shape == (5, 1000) and ens.fixed.all()
    np.testing.assert_allclose(posterior_mean(ens)[1:], 0.5)
    with pytest.raises(ValueError):
        init_prior(1, rng)


def test_update_matches_bayes_rule(rng):
    ens = init_prior(500, rng)
    r = rec(2, Basis.B2, -1)
    out = bayes_update(ens, r)
    lik = np.array([likelihood(-1, r.setting, ParameterPoint.from_array(c)) for c in ens.x.T])
    expected = ens.w * lik / np.sum(ens.w * lik)
    np.testing.assert_allclose(out.w, expected, rtol=1e-12)
    assert out.fixed.tolist() == [True, True, False, True]
    assert ens.w[0] == pytest.approx(1 / 500)  # input untouched


def test_update_rejects_mismatched_control(rng):
    ens = init_prior(10, rng)
    with pytest.raises(ValueError):
        bayes_update(ens, ExperimentRecord(ControlSetting(0, Basis.B1, 2), 1))


def test_degenerate_posterior():
    # every particle predicts +1 with certainty; observing -1 is impossible
    x = np.array([[0.0, 0.0], [1.0, 1.0], [1, 1], [1, 1], [1, 1]], dtype=float)
    ens = Ensemble(x, [0.5, 0.5])
    with pytest.raises(DegeneratePosteriorError):
        bayes_update(ens, rec(0, Basis.B1, -1))


def test_circular_mean_wraps():
    x = np.array([[0.01, math.pi - 0.01]] + [[0.5, 0.5]] * 4)
    ens = Ensemble(x, [0.5, 0.5])
    mu = circular_mean(ens)
    assert min(mu, math.pi - mu) < 1e-12


def test_undefined_mean():
    x = np.array([[0.2, 0.2 + math.pi / 2]] + [[0.5, 0.5]] * 4)
    with pytest.raises(UndefinedMeanError):
        posterior_mean(Ensemble(x, [0.5, 0.5]))


def test_wrapped_difference_example():
    assert wrapped_difference(0.01, math.pi - 0.01) == pytest.approx(0.02)


def test_summarize_scalar_variance(rng):
    ens = bayes_update(init_prior(2000, rng), rec(0, Basis.B1, 1))
    summ = summarize(ens, [1, 0, 2, 0, 0])
    cov = summ.covariance
    np.testing.assert_allclose(cov, cov.T)
    assert np.all(np.linalg.eigvalsh(cov) > -1e-12)
    assert summ.scalar_variance == pytest.approx(cov[0, 0] + 2 * cov[2, 2])


def test_fixed_visibility_reports_prior_mean(rng):
    ens = init_prior(300, rng)
    for r in [rec(0, 0, 1), rec(1, 1, -1), rec(0, 1, 1)]:
        ens = bayes_update(ens, r)
    mu = posterior_mean(ens)
    assert mu[3] == 0.5 and mu[4] == 0.5
    assert mu[1] != 0.5


def test_resample_resets_weights_and_keeps_support(rng):
    ens = init_prior(3000, rng)
    for k in range(8):
        ens = bayes_update(ens, rec(k % 2, k % 2, 1 if k % 3 else -1))
    before = posterior_mean(ens)
    out = resample(ens, rng)
    out.validate()
    np.testing.assert_allclose(out.w, 1 / 3000)
    after = posterior_mean(out)
    assert abs(wrapped_difference(after[0], before[0])) < 0.05
    assert abs(after[1] - before[1]) < 0.05
    assert effective_sample_size(out) == pytest.approx(3000)
    assert np.array_equal(out.fixed, ens.fixed)


def test_resample_shrinkage_range(rng):
    with pytest.raises(ValueError):
        resample(init_prior(10, rng), rng, a=1.0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_resample_preserves_mean_in_expectation(seed):
    rng = np.random.default_rng(seed)
    x = np.vstack([0.3 + 0.05 * rng.standard_normal(4000), rng.uniform(0.6, 0.9, (4, 4000))])
    x[0] %= math.pi
    ens = Ensemble(x, np.full(4000, 1 / 4000))
    out = resample(ens, rng, a=0.9)
    m0, m1 = posterior_mean(ens), posterior_mean(out)
    assert abs(m1[0] - m0[0]) < 0.01
    np.testing.assert_allclose(m1[1:], m0[1:], atol=0.02)
    out.validate()


def test_snapshot_round_trip(tmp_path, rng):
    ens = bayes_update(init_prior(50, rng), rec(3, 1, 1))
    save_snapshot(ens, tmp_path / "snap.txt")
    back = load_snapshot(tmp_path / "snap.txt")
    assert np.array_equal(back.x, ens.x) and np.array_equal(back.w, ens.w)
    assert np.array_equal(back.fixed, ens.fixed)


def test_trig_cache_shared_and_consistent(rng):
    ens = init_prior(100, rng)
    t = ens.trig
    up = bayes_update(ens, rec(0, 0, 1))
    assert up.trig is t
    np.testing.assert_allclose(up.fringe(ControlSetting.of(2, Basis.B2)), np.sin(22 * ens.x[0]))
