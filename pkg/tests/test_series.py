import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pmeshrink import series
from pmeshrink.errors import InvalidArgument, SeriesDiverged
from pmeshrink.params import Params, exponents

from strategies import admissible_params


def test_default_coefficients():
    p = Params(2.0, 0.5, 2.0, 1)
    e = exponents(p)
    ser = series.expansion(p, e, 1.0)
    assert ser.coeffs_B[0] == 1.0
    assert ser.coeffs_B[1] == 0.0
    assert ser.coeffs_B[2] == pytest.approx(-2.0, rel=1e-15)
    assert ser.sigma_coeff == pytest.approx(1.0 / (4.0 * 3.0))
    # integer sigma keeps k0 + 3 terms
    assert ser.order == e.k0 + 3


def test_series_init_at_origin():
    p = Params(1.2, 0.5, 6.0, 1)
    e = exponents(p)
    F, dF = series.series_init(p, e, 3.0, 0.0)
    assert F == pytest.approx(3.0**1.2, rel=1e-15) and dF == 0.0


def test_second_derivative_at_origin():
    p = Params(1.5, 0.5, 4.0, 3)
    e = exponents(p)
    a = 2.0
    ser = series.expansion(p, e, a)
    assert 2.0 * ser.coeffs_B[2] == pytest.approx(-e.alpha * a / p.N, rel=1e-14)


def test_series_diverged_and_bad_input():
    p = Params(2.0, 0.5, 2.0, 1)
    e = exponents(p)
    with pytest.raises(SeriesDiverged):
        series.series_init(p, e, 1.0, 10.0)
    with pytest.raises(InvalidArgument):
        series.expansion(p, e, 0.0)
    with pytest.raises(InvalidArgument):
        series.series_init(p, e, 1.0, -1.0)


@given(admissible_params(), st.floats(1e-3, 1e3))
def test_odd_coefficients_vanish_and_scaling(p, a):
    e = exponents(p)
    ser = series.expansion(p, e, a)
    B = ser.coeffs_B
    assert np.all(B[1::2] == 0.0)
    # B_j = a^(m - j(m-1)/2) Omega_j with Omega_j independent of a
    ref = series.expansion(p, e, 1.0).coeffs_B
    j = np.arange(B.size)
    scaled = B / a ** (p.m - j * (p.m - 1.0) / 2.0)
    np.testing.assert_allclose(scaled, ref, rtol=1e-9, atol=0.0)


@given(st.lists(st.floats(0.1, 2.0), min_size=2, max_size=8), st.floats(0.2, 3.0))
def test_power_series_pow_roundtrip(coeffs, p):
    c = np.array(coeffs)
    back = series.power_series_pow(series.power_series_pow(c, p), 1.0 / p)
    np.testing.assert_allclose(back, c, rtol=1e-8, atol=1e-10)


def test_power_series_pow_matches_polynomial():
    c = np.array([1.0, 2.0, 0.0, 0.0])
    # (1 + 2x)^2 = 1 + 4x + 4x^2
    np.testing.assert_allclose(series.power_series_pow(c, 2.0), [1.0, 4.0, 4.0, 0.0], atol=1e-15)


def test_truncation_order():
    for pr, expected in [((2.0, 0.5, 2.0, 1), 6.0), ((1.2, 0.5, 6.0, 1), 10.0),
                         ((1.5, 0.5, 4.0, 3), 8.0), ((2.0, 0.5, 2.5, 1), 6.0)]:
        p = Params(*pr)
        assert series.expansion(p, exponents(p), 1.0).truncation_order() == expected


@settings(max_examples=15)
@given(admissible_params(max_extra_sigma=4.0), st.floats(0.5, 2.0))
def test_value_derivative_consistency(p, a):
    ser = series.expansion(p, exponents(p), a)
    x, h = 1e-2, 1e-6
    F1, _ = ser.value(x + h)
    F0, _ = ser.value(x - h)
    _, dF = ser.value(x)
    assert (F1 - F0) / (2 * h) == pytest.approx(dF, rel=1e-5, abs=1e-9)
