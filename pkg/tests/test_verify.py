import mpmath
import numpy as np
import pytest

from pmeshrink import series, verify
from pmeshrink.errors import InvalidArgument
from pmeshrink.params import Params, exponents


@pytest.mark.parametrize("pr", [(2.0, 0.5, 2.0, 1), (1.5, 0.5, 4.0, 3), (2.0, 0.5, 2.5, 2)])
def test_mp_expansion_matches_double(pr):
    p = Params(*pr)
    e = exponents(p)
    ser = series.expansion(p, e, 1.7)
    with mpmath.workdps(30):
        value, _ = verify.mp_expansion(p, e, 1.7, ser.order)
        for x in (1e-3, 1e-2, 5e-2):
            F, dF = value(x)
            F_d, dF_d = ser.value(x)
            assert float(F) == pytest.approx(F_d, rel=1e-13)
            assert float(dF) == pytest.approx(dF_d, rel=1e-11, abs=1e-15)


@pytest.mark.parametrize("pr", [(2.0, 0.5, 2.0, 1), (1.5, 0.5, 4.0, 3)])
def test_series_consistency(pr):
    p = Params(*pr)
    e = exponents(p)
    chk = verify.series_consistency(p, e)
    assert chk.ok, chk.as_dict()
    assert np.all(np.diff(chk.xi) < 0)
    assert np.all(np.diff(chk.diff) < 0)
    assert chk.order_lower_bound == min(p.sigma + 3, e.k0 + 3)
    d = chk.as_dict()
    assert d["ok"] is True and len(d["slopes"]) == len(d["xi"]) - 1


def test_pme_check_logic():
    assert verify.PMECheck(np.array([4, 2, 1.0]), np.array([3.0, 2.0, 1.0])).ok
    assert not verify.PMECheck(np.array([4, 2, 1.0]), np.array([3.0, 3.0, 1.0])).ok
    assert not verify.PMECheck(np.array([1.0]), np.array([1.0])).ok


def test_pme_comparison_presets(ctx):
    for p in (Params(2.0, 0.5, 2.0, 1), Params(1.5, 0.5, 4.0, 3)):
        e = exponents(p)
        chk = verify.pme_comparison(p, e, a=ctx.shoot(p).a_star)
        assert chk.ok, chk.as_dict()


def test_ordering_check_arguments():
    p = Params(2.0, 0.5, 2.0, 1)
    with pytest.raises(InvalidArgument):
        verify.ordering_check(p, exponents(p), 1.0, n_pairs=0)
    chk = verify.ordering_check(p, exponents(p), 1.0, n_pairs=3, rng=np.random.default_rng(3))
    assert chk.ok and chk.as_dict()["n_violations"] == 0
