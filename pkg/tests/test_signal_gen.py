import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eivarx.errors import UnstableModelError
from eivarx.signal_gen import (PRIMITIVE_TAPS, DifferenceEquation, NoiseSpec, TimeSeriesPair,
                               burn_in_length, coloured_noise, corrupt_measurements,
                               generate_prbs, read_csv, register_for_length, simulate_dataset,
                               simulate_system, snr, write_csv)


# ---- independent oracles -------------------------------------------------

def _gf2_mulmod(x, y, poly, degree):
    out = 0
    while y:
        if y & 1:
            out ^= x
        y >>= 1
        x <<= 1
        if x >> degree & 1:
            x ^= poly
    return out


def _gf2_powmod(exponent, poly, degree):
    result, base = 1, 0b10
    while exponent:
        if exponent & 1:
            result = _gf2_mulmod(result, base, poly, degree)
        base = _gf2_mulmod(base, base, poly, degree)
        exponent >>= 1
    return result


def _prime_factors(n):
    out, p = set(), 2
    while p * p <= n:
        while n % p == 0:
            out.add(p)
            n //= p
        p += 1
    if n > 1:
        out.add(n)
    return out


def _is_primitive(taps):
    """x has multiplicative order 2^m - 1 modulo the tap polynomial."""
    m = taps[0]
    poly = 1
    for t in taps:
        poly |= 1 << t
    order = (1 << m) - 1
    if _gf2_powmod(order, poly, m) != 1:
        return False
    return all(_gf2_powmod(order // q, poly, m) != 1 for q in _prime_factors(order))


def _impulse_by_long_division(model, count):
    num = np.zeros(count)
    coeffs = np.concatenate((np.zeros(model.delay), model.b))
    num[: coeffs.size] = coeffs
    den = np.concatenate(([1.0], model.a))
    h = np.zeros(count)
    for k in range(count):
        acc = num[k]
        for i in range(1, min(k, den.size - 1) + 1):
            acc -= den[i] * h[k - i]
        h[k] = acc
    return h


# ---- PRBS -----------------------------------------------------------------

@pytest.mark.parametrize("m", sorted(PRIMITIVE_TAPS))
def test_tap_polynomials_are_primitive(m):
    assert PRIMITIVE_TAPS[m][0] == m
    assert _is_primitive(PRIMITIVE_TAPS[m])


@pytest.mark.parametrize("m", range(2, 15))
def test_prbs_has_maximal_period(m):
    period = 2 ** m - 1
    seq = generate_prbs(m, 2 * period + 3, seed=4)
    np.testing.assert_array_equal(seq[:period], seq[period : 2 * period])
    for p in range(1, period):
        if period % p == 0:
            assert not np.array_equal(seq[:p], seq[p : 2 * p])


@pytest.mark.parametrize("m", [5, 10, 12])
def test_prbs_balance_over_one_period(m):
    seq = generate_prbs(m, 2 ** m - 1)
    assert set(np.unique(seq)) == {-1.0, 1.0}
    assert np.sum(seq == 1.0) == 2 ** (m - 1)
    assert math.isclose(seq.mean(), 1.0 / (2 ** m - 1))


def test_prbs_circular_autocorrelation_is_two_valued():
    m = 9
    period = 2 ** m - 1
    seq = generate_prbs(m, period, seed=17)
    for shift in range(1, period, 37):
        assert np.dot(seq, np.roll(seq, shift)) == -1


def test_prbs_seed_gives_cyclic_shift():
    a = generate_prbs(7, 127, seed=0)
    b = generate_prbs(7, 127, seed=40)
    assert any(np.array_equal(np.roll(a, s), b) for s in range(127))


def test_prbs_levels_and_validation():
    seq = generate_prbs(4, 30, levels=(0.0, 2.0))
    assert set(np.unique(seq)) == {0.0, 2.0}
    with pytest.raises(ValueError):
        generate_prbs(1, 10)
    with pytest.raises(ValueError):
        generate_prbs(40, 10)
    assert generate_prbs(5, 0).size == 0


def test_register_for_length():
    assert register_for_length(1023) == 10
    assert register_for_length(1024) == 11
    assert register_for_length(4095) == 12


# ---- difference equation -----------------------------------------------------

def test_theta_round_trip():
    model = DifferenceEquation([-1.5, 0.7], [1.0, 0.5], delay=1)
    assert (model.n_y, model.n_u, model.eta) == (2, 2, 2)
    theta = model.theta()
    np.testing.assert_allclose(theta, [1, -1.5, 0.7, 0, -1.0, -0.5])
    back = DifferenceEquation.from_theta(3.0 * theta, delay=1, n_y=2, n_u=2)
    np.testing.assert_allclose(back.a, model.a)
    np.testing.assert_allclose(back.b, model.b)


def test_padded_layout_with_delay():
    model = DifferenceEquation([-1.1, 0.7], [1.0, 0.5], delay=2)
    a, b = model.padded()
    np.testing.assert_allclose(a, [-1.1, 0.7, 0.0])
    np.testing.assert_allclose(b, [0, 0, 1.0, 0.5])
    with pytest.raises(ValueError):
        model.padded(2)


def test_from_theta_rejects_zero_leading_entry():
    with pytest.raises(ValueError):
        DifferenceEquation.from_theta([0.0, 1.0, 1.0, 0.0])


@pytest.mark.parametrize("model", [
    DifferenceEquation([-1.5, 0.7], [1.0, 0.5], 1),
    DifferenceEquation([-1.1, 0.7], [1.0, 0.5], 2),
    DifferenceEquation([0.3], [2.0, -1.0, 0.25], 0),
])
def test_impulse_response_matches_long_division(model):
    impulse = np.zeros(40)
    impulse[0] = 1.0
    np.testing.assert_allclose(simulate_system(model, impulse),
                               _impulse_by_long_division(model, 40), atol=1e-12)


def test_identity_system_and_pure_delay():
    u = generate_prbs(6, 63)
    np.testing.assert_array_equal(simulate_system(DifferenceEquation([], [1.0]), u), u)
    y = simulate_system(DifferenceEquation([], [1.0], delay=3), u)
    np.testing.assert_array_equal(y[3:], u[:-3])
    np.testing.assert_array_equal(y[:3], 0.0)


def test_noise_free_output_satisfies_difference_equation():
    model = DifferenceEquation([-1.5, 0.7], [1.0, 0.5], 1)
    u = generate_prbs(10, 500, seed=3)
    y = simulate_system(model, u)
    k = np.arange(2, 500)
    lhs = y[k] - 1.5 * y[k - 1] + 0.7 * y[k - 2]
    np.testing.assert_allclose(lhs, u[k - 1] + 0.5 * u[k - 2], atol=1e-10)


def test_unstable_model_rejected():
    with pytest.raises(UnstableModelError):
        simulate_system(DifferenceEquation([-2.0], [1.0]), np.ones(10))


# ---- corruption ---------------------------------------------------------------

def test_zero_noise_leaves_signals_untouched():
    s = simulate_dataset(DifferenceEquation([-1.5, 0.7], [1.0, 0.5], 1), NoiseSpec(0, 0), 200, 1)
    np.testing.assert_array_equal(s.u, s.u_star)
    np.testing.assert_array_equal(s.y, s.y_star)


def test_coloured_noise_variance_matches_acvf():
    # AR(1) with a = -0.8: variance sigma2 / (1 - 0.64)
    v = coloured_noise([-0.8], 0.5, 200_000, seed=2)
    assert abs(v.var() - 0.5 / 0.36) / (0.5 / 0.36) < 0.03
    lag1 = np.mean(v[1:] * v[:-1]) / v.var()
    assert abs(lag1 - 0.8) < 0.01


def test_burn_in_grows_with_root_radius():
    assert burn_in_length([]) == 100
    assert burn_in_length([-0.99]) > burn_in_length([-0.5])
    assert burn_in_length([0.1, 0.0, 0.0, 0.0]) == 200


def test_input_snr_near_ten_for_example_one():
    s = simulate_dataset(DifferenceEquation([-1.5, 0.7], [1.0, 0.5], 1), NoiseSpec(0.2, 0.1),
                         1023, seed=0)
    assert 8.5 < snr(s.u_star, s.u - s.u_star) < 11.5


def test_snr_validation():
    with pytest.raises(ZeroDivisionError):
        snr(np.ones(5), np.zeros(5))
    with pytest.raises(ValueError):
        snr(np.ones(5), np.ones(4))


def test_dataset_is_deterministic_and_seed_sensitive():
    model = DifferenceEquation([-1.5, 0.7], [1.0, 0.5], 1)
    a = simulate_dataset(model, NoiseSpec(0.2, 0.1), 300, seed=9)
    b = simulate_dataset(model, NoiseSpec(0.2, 0.1), 300, seed=9)
    c = simulate_dataset(model, NoiseSpec(0.2, 0.1), 300, seed=10)
    np.testing.assert_array_equal(a.y, b.y)
    assert not np.array_equal(a.y, c.y)


def test_output_noise_follows_arx_filter():
    model = DifferenceEquation([-1.5, 0.7], [1.0, 0.5], 1)
    u_star = generate_prbs(10, 1023)
    y_star = simulate_system(model, u_star)
    s = corrupt_measurements(y_star, u_star, model, NoiseSpec(0.2, 0.1), seed=4)
    v = s.y - s.y_star
    e = v[2:] - 1.5 * v[1:-1] + 0.7 * v[:-2]
    assert abs(e.var() - 0.2) < 0.03
    assert abs(np.corrcoef(e[1:], e[:-1])[0, 1]) < 0.1


def test_series_length_mismatch():
    with pytest.raises(ValueError):
        TimeSeriesPair(np.ones(3), np.ones(4))


def test_csv_round_trip(tmp_path):
    s = simulate_dataset(DifferenceEquation([-1.5, 0.7], [1.0, 0.5], 1), NoiseSpec(0.2, 0.1),
                         64, seed=1)
    path = tmp_path / "d.csv"
    write_csv(s, path)
    assert path.read_text().splitlines()[0] == "k,u,y,u_star,y_star"
    back = read_csv(path)
    np.testing.assert_allclose(back.u, s.u, rtol=1e-11)
    np.testing.assert_allclose(back.y_star, s.y_star, rtol=1e-11, atol=1e-12)


def test_csv_requires_u_and_y(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("k,u\n0,1\n")
    with pytest.raises(ValueError):
        read_csv(path)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-0.9, 0.9), min_size=1, max_size=3),
       st.lists(st.floats(-2, 2), min_size=1, max_size=3), st.integers(0, 2))
def test_linearity_of_noise_free_simulation(roots, b, delay):
    model = DifferenceEquation(np.poly(roots)[1:], b, delay)
    u1 = generate_prbs(7, 60, seed=1)
    u2 = generate_prbs(7, 60, seed=2)
    lhs = simulate_system(model, 2.0 * u1 - u2)
    rhs = 2.0 * simulate_system(model, u1) - simulate_system(model, u2)
    np.testing.assert_allclose(lhs, rhs, atol=1e-9 * (1 + np.abs(rhs).max()))
