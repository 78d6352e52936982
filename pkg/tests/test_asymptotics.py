import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pmeshrink.asymptotics import (
    PhaseVariant,
    Regime,
    fit_interface,
    h_function,
    h_limit_theory,
    interface_bounds_check,
    phase_coordinates,
    phase_inverse,
    phase_transform,
    regime_of,
    tail_window,
)
from pmeshrink.errors import DomainError, InsufficientTail
from pmeshrink.params import Params, exponents
from pmeshrink.profile import ProfileClass, ProfileSolution, Termination

P = Params(2.0, 0.5, 2.0, 1)
E = exponents(P)
LOW = Params(1.2, 0.5, 6.0, 1)


def _synthetic(p: Params, xi0: float, power: float, amp: float = 1.0, n: int = 3000):
    s = np.geomspace(xi0, xi0 * 1e-5, n)
    xi = xi0 - s
    f = amp * s**power
    df = -amp * power * s ** (power - 1.0)
    F = f**p.m
    dF = p.m * f ** (p.m - 1.0) * df
    return ProfileSolution(a=float(f[0]), xi=xi, F=F, dF=dF, m=p.m, cls=ProfileClass.UNDECIDED,
                           termination=Termination.MAX_XI_REACHED)


def test_exponent_theory_examples():
    assert E.interface_exponent() == pytest.approx(2.0)
    assert exponents(LOW).interface_exponent() == pytest.approx(20.0 / 7.0)
    assert regime_of(E) is Regime.HIGH
    assert regime_of(exponents(LOW)) is Regime.LOW


@settings(max_examples=10)
@given(st.floats(0.5, 3.0))
def test_fit_recovers_pure_power_law(xi0):
    p_th = E.interface_exponent()
    sol = _synthetic(P, xi0, p_th)
    fit = fit_interface(sol, E, window=(1e-8, 1e-2))
    assert fit.exponent_fit == pytest.approx(p_th, rel=1e-6)
    assert fit.amplitude_fit == pytest.approx(1.0, rel=1e-5)
    assert fit.xi0_fit == pytest.approx(xi0, rel=1e-8)
    assert fit.r_squared > 1 - 1e-10


def test_fit_needs_enough_samples():
    sol = _synthetic(P, 1.0, 2.0, n=10)
    with pytest.raises(InsufficientTail):
        fit_interface(sol, E)


def test_converged_profile_fit(default_shot, lowsum_shot):
    for res, p in ((default_shot, P), (lowsum_shot, LOW)):
        e = exponents(p)
        fit = fit_interface(res.profile, e, tail_window(res.profile, 3))
        assert fit.exponent_rel_error <= 0.02
        assert fit.amplitude_rel_error <= 0.05


def test_bounds_hold_on_converged_profile(default_shot, lowsum_shot):
    for res, p in ((default_shot, P), (lowsum_shot, LOW)):
        rep = interface_bounds_check(res.profile, exponents(p), res.xi0_star)
        assert rep.ok and rep.n_samples > 0


def test_bounds_trivial_zero_slice():
    xi = np.linspace(0.6, 0.99, 50)
    zero = np.zeros_like(xi)
    sol = ProfileSolution(a=1.0, xi=xi, F=zero, dF=zero, m=2.0, cls=ProfileClass.UNDECIDED,
                          termination=Termination.MAX_XI_REACHED)
    rep = interface_bounds_check(sol, E, xi0=1.0)
    assert rep.ok
    assert all(v == 0.0 for v in rep.worst_ratio.values())


def test_lowsum_derivative_bound_tight_within_constant(lowsum_shot):
    rep = interface_bounds_check(lowsum_shot.profile, exponents(LOW), lowsum_shot.xi0_star)
    # the ratio to the bound stays bounded away from zero near the interface
    assert 1e-3 < rep.worst_ratio["derivative"] <= 1.0


def test_phase_high_variant(default_shot):
    ph = phase_transform(default_shot.profile, E, xi0=default_shot.xi0_star)
    assert ph.variant is PhaseVariant.HIGH
    assert ph.sign_violations() == 0
    win = ph.final_window(default_shot.xi0_star)
    assert np.max(np.abs(ph.Y[win])) <= 0.01
    assert ph.X[-1] < 1e-2 * ph.X[0]


def test_phase_low_variant(lowsum_shot):
    e = exponents(LOW)
    ph = phase_transform(lowsum_shot.profile, e, xi0=lowsum_shot.xi0_star)
    assert ph.variant is PhaseVariant.LOW
    assert ph.sign_violations() == 0
    win = ph.final_window(lowsum_shot.xi0_star)
    y_star = -np.sqrt(2.0 / (LOW.m + LOW.q))
    assert ph.y_star_theory == pytest.approx(y_star)
    assert np.mean(ph.Y[win]) == pytest.approx(y_star, rel=0.02)
    assert np.std(ph.Y[win]) <= 0.01 * abs(y_star)
    assert ph.X[-1] < ph.X[0]


def test_low_variant_rejected_for_high_sum(default_shot):
    with pytest.raises(DomainError):
        phase_transform(default_shot.profile, E, variant="Low")


@pytest.mark.parametrize("variant", [PhaseVariant.LOW, PhaseVariant.HIGH])
@given(xi=st.floats(0.1, 5.0), f=st.floats(1e-6, 10.0), df=st.floats(-10.0, -1e-6))
def test_phase_roundtrip(variant, xi, f, df):
    e = exponents(LOW)
    X, Y, Z = phase_coordinates(e, variant, xi, f, df)
    f2, df2 = phase_inverse(e, variant, xi, X, Y)
    assert f2 == pytest.approx(f, rel=1e-10)
    assert df2 == pytest.approx(df, rel=1e-10)


def test_h_function(default_shot):
    prof = default_shot.profile
    assert h_function(prof, E, 0.0) == 0.0
    xs = np.linspace(1e-6, prof.xi[-1], 400)
    assert np.all(h_function(prof, E, xs) < 0)
    with pytest.raises(DomainError):
        h_function(prof, E, -1.0)


def test_h_limit_high_sum(default_shot):
    prof = default_shot.profile
    xi0 = default_shot.xi0_star
    s = xi0 - prof.xi
    sel = (s > 0) & (s < 1e-3 * xi0) & (prof.F > 0)
    xs = prof.xi[sel]
    ratio = (-h_function(prof, E, xs)) ** (1 - P.q) / (xi0 - xs)
    assert ratio[-1] == pytest.approx(h_limit_theory(E, xi0), rel=0.02)
