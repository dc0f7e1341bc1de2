import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eivarx.constraint_est import ConstraintEstimate
from eivarx.errors import DegenerateNoiseError
from eivarx.lagged_data import stack
from eivarx.noise_model import scaled_acvf_basis
from eivarx.signal_gen import TimeSeriesPair, coloured_noise
from eivarx.variance_est import (ResidualLikelihood, compute_residuals, estimate_variances,
                                 negative_log_likelihood)

A_TRUE = np.array([-1.5, 0.7])
LAG = 5


def true_constraints(lag=LAG):
    d = lag - 1
    A = np.zeros((d, lag + 1))
    B = np.zeros((d, lag + 1))
    for i in range(d):
        A[i, i : i + 3] = [1.0, -1.5, 0.7]
        B[i, i + 1 : i + 3] = [1.0, 0.5]
    return ConstraintEstimate(A, B, np.eye(d))


def noise_only_data(n, s_ey, s_eu, seed):
    rng = np.random.default_rng(seed)
    v = coloured_noise(A_TRUE, s_ey, n, seed)
    e = np.sqrt(s_eu) * rng.normal(size=n)
    return stack(TimeSeriesPair(e, v), LAG)


def likelihood(seed=0):
    C = true_constraints()
    Z = noise_only_data(3000, 0.2, 0.1, seed)
    return ResidualLikelihood(C, scaled_acvf_basis(A_TRUE, LAG), compute_residuals(C, Z))


@pytest.mark.parametrize("point", [(0.2, 0.1), (0.05, 0.4), (1.0, 0.01)])
def test_gradient_matches_central_differences(point):
    lik = likelihood()
    grad = lik.gradient(*point)
    for k in range(2):
        h = 1e-6 * point[k]
        up, down = list(point), list(point)
        up[k] += h
        down[k] -= h
        numeric = (lik(*up) - lik(*down)) / (2 * h)
        assert abs(numeric - grad[k]) <= 1e-4 * max(1.0, abs(grad[k]))


def test_log_gradient_chain_rule():
    lik = likelihood()
    x = np.log([0.3, 0.2])
    np.testing.assert_allclose(lik.log_gradient(x), np.exp(x) * lik.gradient(0.3, 0.2))


def test_residual_covariance_is_linear():
    lik = likelihood()
    np.testing.assert_allclose(lik.residual_covariance(0.2, 0.1), 0.2 * lik.P + 0.1 * lik.Q)


def test_nll_matches_direct_formula():
    C = true_constraints()
    Z = noise_only_data(500, 0.2, 0.1, 3)
    r = compute_residuals(C, Z)
    basis = scaled_acvf_basis(A_TRUE, LAG)
    cov = 0.3 * C.A_hat @ basis.toeplitz(LAG + 1) @ C.A_hat.T + 0.2 * C.B_hat @ C.B_hat.T
    inv = np.linalg.inv(cov)
    direct = r.shape[0] * np.linalg.slogdet(cov)[1] + np.einsum("ki,ij,kj->", r, inv, r)
    assert np.isclose(negative_log_likelihood(0.3, 0.2, C, basis, r), direct, rtol=1e-10)
    with pytest.raises(ValueError):
        negative_log_likelihood(-0.1, 0.2, C, basis, r)


def test_mle_recovers_variances_from_true_constraints():
    C = true_constraints()
    Z = noise_only_data(40_000, 0.2, 0.1, 7)
    est = estimate_variances(C, Z, A_TRUE)
    assert est.converged
    assert abs(est.sigma2_ey - 0.2) < 0.01
    assert abs(est.sigma2_eu - 0.1) < 0.01


def test_mle_stationary_point():
    C = true_constraints()
    Z = noise_only_data(5000, 0.2, 0.1, 8)
    est = estimate_variances(C, Z, A_TRUE)
    lik = ResidualLikelihood(C, scaled_acvf_basis(A_TRUE, LAG), compute_residuals(C, Z))
    grad = lik.log_gradient(np.log([est.sigma2_ey, est.sigma2_eu]))
    assert np.linalg.norm(grad) < 1e-3 * abs(est.objective_value)


def test_zero_residuals_are_degenerate():
    C = true_constraints()
    Z = stack(TimeSeriesPair(np.zeros(200), np.zeros(200)), LAG)
    with pytest.raises(DegenerateNoiseError):
        estimate_variances(C, Z, A_TRUE)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.01, 2.0), st.floats(0.01, 2.0))
def test_nll_is_scale_equivariant(s_ey, s_eu):
    # doubling the residuals scales the variances by four and shifts the log-determinant
    C = true_constraints()
    basis = scaled_acvf_basis(A_TRUE, LAG)
    residuals = compute_residuals(C, noise_only_data(3000, 0.2, 0.1, 1))
    lik = ResidualLikelihood(C, basis, residuals)
    doubled = ResidualLikelihood(C, basis, 2.0 * residuals)
    np.testing.assert_allclose(doubled.moment, 4.0 * lik.moment)
    shift = lik.rows * lik.P.shape[0] * np.log(4.0)
    assert np.isclose(doubled(4 * s_ey, 4 * s_eu), lik(s_ey, s_eu) + shift, rtol=1e-9)
