from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pmeshrink import verify
from pmeshrink.params import Params, exponents
from pmeshrink.profile import (
    IntegrationOptions,
    ProfileClass,
    integrate_limit_h,
    integrate_limit_l,
    integrate_pme,
    integrate_profile,
    integrate_rescaled,
)

P = Params(2.0, 0.5, 2.0, 1)
E = exponents(P)


def _check_invariants(sol, params, exps):
    assert np.all(np.diff(sol.xi) > 0)
    assert np.all(sol.F[:-1] > 0)
    slope_tol = 1e-8 * sol.a**params.m
    if sol.cls is ProfileClass.A:
        assert sol.xi0 is not None and np.isfinite(sol.xi0)
        assert sol.dF[-1] <= -slope_tol
    elif sol.cls is ProfileClass.C:
        assert sol.xi1 is not None
        F1, _ = sol.evaluate(sol.xi1)
        assert F1 > 0
        f1 = float(F1) ** (1.0 / params.m)
        # an interior minimum requires xi1^sigma >= alpha f(xi1)^(1-q)
        assert sol.xi1**params.sigma >= exps.alpha * f1 ** (1.0 - params.q) * (1 - 1e-6)


def test_small_a_is_class_a():
    sol = integrate_profile(P, E, 1.0)
    assert sol.cls is ProfileClass.A
    _check_invariants(sol, P, E)


def test_large_a_is_class_c():
    sol = integrate_profile(P, E, 1e4)
    assert sol.cls is ProfileClass.C
    _check_invariants(sol, P, E)


@settings(max_examples=12)
@given(st.floats(-2.0, 2.0), st.sampled_from([(2.0, 0.5, 2.0, 1), (1.2, 0.5, 6.0, 1),
                                                (1.5, 0.5, 4.0, 3)]))
def test_trajectory_invariants(log_ratio, pr):
    p = Params(*pr)
    e = exponents(p)
    a_star = {2.0: 204.0, 1.2: 1.0, 1.5: 1.0}[p.m]
    sol = integrate_profile(p, e, a_star * 10.0**log_ratio)
    _check_invariants(sol, p, e)


def test_pme_initial_values_and_scaling():
    opts = IntegrationOptions(rtol=1e-12, atol_factor=1e-16)
    a = 3.0
    phi_a = integrate_pme(P, E, a, opts)
    phi_1 = integrate_pme(P, E, 1.0, opts)
    assert phi_a.a == a
    F0, dF0 = phi_a.evaluate(phi_a.xi[0])
    assert F0 == pytest.approx(a**P.m, rel=1e-5) and abs(dF0) < 1e-2 * a**P.m
    k = a ** (-(P.m - 1.0) / 2.0)
    xs = np.linspace(phi_a.xi[0], 0.9 * min(phi_a.xi[-1], phi_1.xi[-1] / k), 50)
    lhs = phi_a.evaluate(xs)[0]
    rhs = a**P.m * phi_1.evaluate(k * xs)[0]
    np.testing.assert_allclose(lhs, rhs, rtol=1e-8, atol=1e-10 * a**P.m)


def test_pme_difference_is_little_o_xi_squared():
    chk = verify.pme_comparison(P, E, a=204.0)
    assert chk.ok, chk.ratio


def test_limit_h():
    h = integrate_limit_h(P, E)
    assert h.F[0] == pytest.approx(1.0, rel=1e-5)
    assert h.cls is ProfileClass.A
    assert np.isfinite(h.xi0) and h.dF[-1] < 0


def test_limit_l_increasing():
    sol = integrate_limit_l(P, E, eta_max=5.0)
    assert sol.F[0] == pytest.approx(1.0, rel=1e-5)
    assert np.all(np.diff(sol.F) > 0)


def test_small_a_rescaled_matches_limit_h():
    a = 1e-3
    opts = IntegrationOptions(rtol=1e-12, atol_factor=1e-16)
    h = integrate_limit_h(P, E, opts)
    sol = integrate_profile(P, E, a, opts)
    scale = a ** ((P.m - 1.0) / 2.0)
    eta = np.linspace(h.xi[0] * 2, 0.9 * min(h.xi[-1], sol.xi[-1] / scale), 100)
    f_resc = sol.f_at(scale * eta) / a
    assert np.max(np.abs(f_resc - h.f_at(eta))) < 0.05


@pytest.mark.parametrize("a", [1.0, 20.0, 1e3, 1e4])
def test_classification_stable_under_tolerance_halving(a):
    base = IntegrationOptions()
    tight = replace(base, rtol=base.rtol / 2, atol_factor=base.atol_factor / 2)
    assert integrate_profile(P, E, a, base).cls is integrate_profile(P, E, a, tight).cls


@pytest.mark.parametrize("a", [1e-2, 1.0, 1e3, 1e5])
def test_downscaling_consistency(a):
    cls = integrate_profile(P, E, a).cls
    for gamma in (E.gamma_small, E.gamma_large):
        assert integrate_rescaled(P, E, a, gamma).cls is cls


def test_ordering_random_pairs():
    chk = verify.ordering_check(P, E, 204.0, n_pairs=10, rng=np.random.default_rng(1))
    assert chk.ok, chk.violations[:3]
    assert chk.n_samples > 0


def test_series_order_default():
    chk = verify.series_consistency(P, E)
    assert chk.ok
    assert chk.order_fit >= chk.order_lower_bound - 0.3
