from dataclasses import replace

import numpy as np
import pytest

from pmeshrink.errors import BracketNotFound, NonMonotoneClassification
from pmeshrink.params import Params, exponents
from pmeshrink.profile import (
    IntegrationOptions,
    ProfileClass,
    ProfileSolution,
    Termination,
    integrate_profile,
)
from pmeshrink.shooting import (
    ShootingOptions,
    check_monotone,
    find_bracket,
    resolve_class,
    solve,
)

P = Params(2.0, 0.5, 2.0, 1)
E = exponents(P)
FAST = ShootingOptions(tail_stages=0, backward_tail=False, bracket_tol=1e-6)


def _classify(a, opts=FAST):
    return resolve_class(lambda o: integrate_profile(P, E, a, o), opts.integration,
                         opts.max_retries)[0]


@pytest.mark.parametrize("pr", [(2.0, 0.5, 2.0, 1), (1.2, 0.5, 6.0, 1), (1.5, 0.5, 4.0, 3)])
def test_find_bracket(pr):
    p = Params(*pr)
    e = exponents(p)
    log = []
    lo, hi = find_bracket(p, e, 1.0, FAST, log)
    assert lo < hi
    assert hi / lo == pytest.approx(2.0)
    cls = dict(log)
    assert cls[lo] == "A" and cls[hi] == "C"
    check_monotone(log)


def test_rebracket_inside_gives_sub_bracket():
    lo, hi = find_bracket(P, E, 1.0, FAST)
    mid = np.sqrt(lo * hi)
    lo2, hi2 = find_bracket(P, E, mid, FAST)
    assert max(lo, lo2) < min(hi, hi2)
    assert hi2 / lo2 == pytest.approx(hi / lo)


def test_bracket_not_found_for_bad_seed():
    with pytest.raises(BracketNotFound):
        find_bracket(P, E, -1.0, FAST)
    with pytest.raises(BracketNotFound):
        find_bracket(P, E, 1.0, replace(FAST, max_doublings=1))


def test_check_monotone():
    check_monotone([(1.0, "A"), (3.0, "C"), (2.0, "A")])
    with pytest.raises(NonMonotoneClassification):
        check_monotone([(1.0, "A"), (0.5, "C")])


def _fake(cls_sequence):
    calls = []

    def run(opts):
        cls = cls_sequence[len(calls)]
        calls.append(opts)
        dF = -1.0 if cls == "neg" else 1.0
        c = ProfileClass.UNDECIDED if cls in ("neg", "pos") else ProfileClass(cls)
        return ProfileSolution(1.0, np.array([0.0, 1.0]), np.array([1.0, 0.5]),
                               np.array([0.0, dF]), 2.0, c, Termination.MAX_XI_REACHED)
    return run, calls


def test_undecided_policy_tightens_then_uses_slope_sign():
    run, calls = _fake(["neg", "neg", "neg"])
    events = []
    cls, _ = resolve_class(run, IntegrationOptions(), 2, events, label=5.0)
    assert cls is ProfileClass.A
    assert len(calls) == 3
    assert calls[1].rtol == pytest.approx(calls[0].rtol / 10)
    assert events and events[0]["rule"] == "sign_of_last_dF"

    run, calls = _fake(["pos", "C"])
    events = []
    cls, _ = resolve_class(run, IntegrationOptions(), 2, events, label=5.0)
    assert cls is ProfileClass.C and events[0]["rule"] == "tightened"

    run, _ = _fake(["pos", "pos", "pos"])
    assert resolve_class(run, IntegrationOptions(), 2)[0] is ProfileClass.C


def test_solve_default(default_shot):
    res = default_shot
    lo, hi = res.bracket
    assert lo < res.a_star < hi
    assert res.relative_width <= 1e-10
    check_monotone(res.iterations)
    assert res.residual <= 1e-6 * res.a_star**P.m
    assert res.xi0_star > res.profile.xi[-1] * (1 - 1e-12)
    # bisection halves the bracket at every step
    widths = np.array([b - a for a, b in res.bracket_history])
    np.testing.assert_allclose(widths[1:] / widths[:-1], 0.5, rtol=1e-9)
    for a, b in res.bracket_history[:3] + res.bracket_history[-3:]:
        assert _classify(a) is ProfileClass.A
        assert _classify(b) is ProfileClass.C


def test_solve_reproducible_and_robust(default_shot):
    ref = default_shot.a_star
    opts = replace(FAST, bracket_tol=1e-10)
    again = solve(P, E, opts)
    assert abs(again.a_star - ref) <= 10 * 1e-10 * ref
    xi_half = replace(opts, integration=replace(opts.integration, xi_init=5e-4))
    assert abs(solve(P, E, xi_half).a_star - ref) <= 10 * 1e-10 * ref
    tight = replace(opts, integration=replace(opts.integration, rtol=opts.integration.rtol / 2,
                                              atol_factor=opts.integration.atol_factor / 2))
    assert abs(solve(P, E, tight).a_star - ref) <= 10 * 1e-10 * ref


def test_result_serializes(default_shot):
    d = default_shot.as_dict()
    assert {"a_star", "xi0_star", "bracket_history", "iterations", "undecided_events"} <= set(d)
