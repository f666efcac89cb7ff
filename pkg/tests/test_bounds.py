import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from fisher_oracle import fisher_by_summation
from rotbayes.bounds import (
    averaged_fisher,
    fisher_matrix,
    phase_info_coeff,
    reference_curves,
    solve_C_G,
    visibility_info_coeff,
    xi_constant,
)
from rotbayes.design import WeightMatrix
from rotbayes.exceptions import SingularFisherError, UnboundedObjectiveError
from rotbayes.model import S_VALUES, ParameterPoint

S = np.array(S_VALUES, dtype=float)


@settings(max_examples=60)
@given(st.floats(0.01, 3.1), st.lists(st.floats(0.05, 0.98), min_size=4, max_size=4),
       st.lists(st.floats(0.5, 1000), min_size=4, max_size=4))
def test_fisher_matches_summation(theta, vis, nu):
    got = fisher_matrix(ParameterPoint(theta, vis), nu)
    ref = fisher_by_summation(theta, vis, nu, S_VALUES)
    np.testing.assert_allclose(got, ref, rtol=1e-8, atol=1e-10 * np.abs(ref).max())


def test_fisher_boundary_visibility():
    with pytest.raises(SingularFisherError):
        fisher_matrix(ParameterPoint(0.3, (1.0, 0.5, 0.5, 0.5)), (1, 1, 1, 1))
    # a control that is never used does not matter
    fisher_matrix(ParameterPoint(0.3, (1.0, 0.5, 0.5, 0.5)), (0, 1, 1, 1))


@pytest.mark.parametrize("v", [0.3, 0.7, 0.95])
def test_averaged_fisher_equals_quadrature(v):
    s = 11
    x = np.array([0, 0, 1.0, 0])
    vis = (0.5, 0.5, v, 0.5)

    def entry(a, b):
        f = lambda t: fisher_matrix(ParameterPoint(t, vis), x)[a, b] / math.pi
        return integrate.quad(f, 0, math.pi, limit=400, epsabs=1e-13, epsrel=1e-12)[0]

    avg = averaged_fisher(x, vis)
    assert entry(0, 0) == pytest.approx(avg[0, 0], rel=1e-7)
    assert entry(3, 3) == pytest.approx(avg[3, 3], rel=1e-7)
    assert abs(entry(0, 3)) < 1e-8
    assert avg[0, 0] == pytest.approx(4 * s * s * (1 - math.sqrt(1 - v * v)))


def test_visibility_coeff_small_v_series():
    v = np.array([1e-6, 1e-5, 5e-5])
    np.testing.assert_allclose(visibility_info_coeff(v), 0.5, rtol=1e-8)
    exact = visibility_info_coeff(np.array([2e-4]))[0]
    assert exact == pytest.approx(0.5 + 0.375 * 4e-8, rel=1e-9)


def test_coefficients_monotone():
    v = np.linspace(0.01, 0.99, 50)
    assert np.all(np.diff(phase_info_coeff(v)) > 0)
    assert np.all(np.diff(visibility_info_coeff(v)) > 0)


def test_phase_only_vertex(si_table):
    mean = si_table[1]
    spec = solve_C_G(WeightMatrix.select("theta"), mean)
    score = S * phase_info_coeff(mean)
    i0 = int(np.argmax(score))
    assert spec.optimal_allocation[i0] == pytest.approx(1 / S[i0], abs=1e-6)
    assert spec.C_G == pytest.approx(1 / (4 * score[i0]), rel=1e-6)
    assert spec.C_G == pytest.approx(0.0155116, abs=1e-7)


@pytest.mark.parametrize("i", range(4))
def test_single_visibility_vertex(si_table, i):
    mean = si_table[1]
    G = WeightMatrix.select(f"V{i + 1}")
    spec = solve_C_G(G, mean)
    assert spec.optimal_allocation[i] == pytest.approx(1 / S[i], abs=1e-6)
    assert spec.C_G == pytest.approx(S[i] / visibility_info_coeff(mean)[i], rel=1e-6)


def test_mixed_weights_beat_grid(si_table):
    mean = np.array(si_table[1])
    G = WeightMatrix.select("all")
    spec = solve_C_G(G, mean)
    x = np.array(spec.optimal_allocation)
    assert x @ S == pytest.approx(1.0)
    assert np.all(x >= 0)
    rng = np.random.default_rng(0)
    for _ in range(2000):
        y = rng.dirichlet(np.ones(4))
        xr = y / S
        val = np.trace(np.diag(G.diag) @ np.linalg.inv(averaged_fisher(xr, mean)))
        assert val >= spec.C_G * (1 - 1e-9)


def test_unbounded_objective():
    with pytest.raises(UnboundedObjectiveError):
        solve_C_G(WeightMatrix.select("theta"), (0, 0, 0, 0))


def test_xi():
    assert xi_constant() == pytest.approx(0.4549, abs=1e-4)
    assert xi_constant("monte_carlo", draws=10**6) == pytest.approx(xi_constant(), abs=3e-3)
    with pytest.raises(ValueError):
        xi_constant("other")


def test_reference_curves(si_table, tmp_path):
    ref = reference_curves(np.array([10, 100, 1000]), WeightMatrix.select("theta"), si_table[1])
    np.testing.assert_allclose(ref.bound * ref.N, ref.spec.xi * ref.spec.C_G)
    np.testing.assert_allclose(ref.hl, math.pi**2 / ref.N**2)
    ref.write_csv(tmp_path / "b.csv")
    assert (tmp_path / "b.csv").read_text().splitlines()[0] == "N,bound,sql,hl"
    with pytest.raises(ValueError):
        reference_curves([0, 1], WeightMatrix.select("theta"), si_table[1])
