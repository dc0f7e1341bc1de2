import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.signal import lfilter

from eivarx.errors import NotPositiveDefiniteError, UnstableModelError
from eivarx.noise_model import (Acvf, arx_covariance, build_covariance, check_stable,
                                inverse_sqrt, is_stable, project_stable, scaled_acvf_basis,
                                symmetric_inverse_sqrt, yule_walker_acvf)

from conftest import random_stable_ar


def acvf_by_impulse_sum(a, sigma2, max_lag, terms=4000):
    impulse = np.zeros(terms)
    impulse[0] = 1.0
    h = lfilter([1.0], np.concatenate(([1.0], a)), impulse)
    return np.array([sigma2 * np.dot(h[: terms - lag], h[lag:]) for lag in range(max_lag + 1)])


def test_ar1_closed_form():
    acvf = yule_walker_acvf([0.5], 1.0, 4)
    np.testing.assert_allclose(acvf.values, [4 / 3, -2 / 3, 1 / 3, -1 / 6, 1 / 12], rtol=1e-12)


def test_white_noise_acvf():
    acvf = yule_walker_acvf([], 2.5, 3)
    np.testing.assert_array_equal(acvf.values, [2.5, 0, 0, 0])


@pytest.mark.parametrize("a", [[-1.5, 0.7], [-1.1, 0.7, 0.0], [0.2, -0.3, 0.1, 0.05]])
def test_matches_impulse_response_sum(a):
    np.testing.assert_allclose(yule_walker_acvf(a, 0.2, 8).values,
                               acvf_by_impulse_sum(a, 0.2, 8), rtol=1e-9, atol=1e-12)


def test_example_one_values_exact():
    # rational values of the Yule-Walker solution for (1 - 1.5 q^-1 + 0.7 q^-2), sigma2 = 0.2
    acvf = yule_walker_acvf([-1.5, 0.7], 0.2, 5)
    np.testing.assert_allclose(acvf.values,
                               [85 / 48, 1.5625, 53 / 48, 0.5625, 17 / 240, -0.2875], rtol=1e-12)


def test_acvf_is_linear_in_variance():
    base = scaled_acvf_basis([-1.5, 0.7], 6)
    np.testing.assert_allclose((base * 0.3).values, yule_walker_acvf([-1.5, 0.7], 0.3, 6).values)
    np.testing.assert_allclose((0.3 * base).values, (base * 0.3).values)


def test_acvf_indexing_is_symmetric():
    acvf = yule_walker_acvf([-0.5], 1.0, 3)
    assert acvf[-2] == acvf[2]
    toep = acvf.toeplitz(4)
    np.testing.assert_allclose(toep, toep.T)
    assert toep[0, 3] == acvf[3]


def test_unstable_inputs_rejected():
    with pytest.raises(UnstableModelError):
        yule_walker_acvf([-2.0], 1.0, 3)
    with pytest.raises(UnstableModelError):
        yule_walker_acvf([-1.0], 1.0, 3)
    with pytest.raises(UnstableModelError):
        check_stable([0.0, -1.0])
    with pytest.raises(ValueError):
        yule_walker_acvf([-0.5], -1.0, 3)


def test_stability_projection():
    a = project_stable([-2.5, 1.0])  # roots 2 and 0.5
    assert is_stable(a)
    assert np.max(np.abs(np.roots(np.concatenate(([1.0], a))))) <= 0.999 + 1e-12
    stable = [-1.5, 0.7]
    np.testing.assert_allclose(project_stable(stable), stable)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.05, 0.95), min_size=1, max_size=4),
       st.lists(st.booleans(), min_size=4, max_size=4), st.floats(0.01, 5.0))
def test_acvf_toeplitz_is_positive_definite(moduli, signs, sigma2):
    roots = [m if s else -m for m, s in zip(moduli, signs)]
    a = np.poly(roots)[1:]
    acvf = yule_walker_acvf(a, sigma2, 8)
    assert np.linalg.eigvalsh(acvf.toeplitz(9)).min() > 0
    assert np.all(np.abs(acvf.values) <= acvf.values[0] * (1 + 1e-9))


def test_covariance_block_layout():
    cov = arx_covariance([-1.5, 0.7], 0.2, 0.1, 3)
    m = cov.matrix
    assert m.shape == (8, 8)
    np.testing.assert_allclose(m[:4, :4], yule_walker_acvf([-1.5, 0.7], 0.2, 3).toeplitz(4))
    np.testing.assert_allclose(m[4:, 4:], 0.1 * np.eye(4))
    np.testing.assert_array_equal(m[:4, 4:], 0.0)


def test_build_covariance_validation():
    acvf = yule_walker_acvf([-0.5], 1.0, 2)
    with pytest.raises(ValueError):
        build_covariance(acvf, 0.0, 2)
    with pytest.raises(ValueError):
        build_covariance(acvf, 0.1, 3)


def test_inverse_square_root():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(6, 6))
    spd = x @ x.T + 6 * np.eye(6)
    w = symmetric_inverse_sqrt(spd)
    np.testing.assert_allclose(w @ spd @ w, np.eye(6), atol=1e-10)
    cov = arx_covariance(random_stable_ar(rng, 2), 0.3, 0.2, 4)
    w = inverse_sqrt(cov)
    np.testing.assert_allclose(w @ cov.matrix @ w, np.eye(10), atol=1e-10)
    with pytest.raises(NotPositiveDefiniteError):
        symmetric_inverse_sqrt(np.diag([1.0, 0.0]))
    assert isinstance(scaled_acvf_basis([], 2), Acvf)
