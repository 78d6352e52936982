"""Profile-level consistency checks: series order, PME comparison, ordering.

The series check needs a reference solution far more accurate than double
precision: the truncation error of a high-order expansion drops below the
rounding level of ``F`` after one or two dyadic halvings.  The reference is
therefore an arbitrary-precision Taylor integration (``mpmath.odefun``)
started from the same expansion evaluated in extended precision.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import mpmath
import numpy as np

from . import series
from .errors import InvalidArgument
from .params import Exponents, Params
from .profile import IntegrationOptions, integrate_pme, integrate_profile


# ---------------------------------------------------------------------------
# Series order
# ---------------------------------------------------------------------------


def _mp_power_series_pow(c: list, p) -> list:
    out = [mpmath.mpf(0)] * len(c)
    out[0] = c[0] ** p
    for n in range(1, len(c)):
        acc = mpmath.mpf(0)
        for k in range(1, n + 1):
            acc += ((p + 1) * k - n) * c[k] * out[n - k]
        out[n] = acc / (n * c[0])
    return out


def mp_expansion(params: Params, exps: Exponents, a: float, order: int):
    """Expansion coefficients in extended precision (same recurrence as ``series``)."""
    m, N = mpmath.mpf(params.m), mpmath.mpf(params.N)
    sigma, q = mpmath.mpf(params.sigma), mpmath.mpf(params.q)
    D = sigma * (m - 1) + 2 * (q - 1)
    alpha, beta = (sigma + 2) / D, (m - q) / D
    a = mpmath.mpf(a)
    G = [mpmath.mpf(0)] * (order + 1)
    G[0] = a**m
    for j in range(0, order - 1):
        g = _mp_power_series_pow(G[: j + 1], 1 / m)
        G[j + 2] = (j * beta - alpha) * g[j] / ((j + 2) * (N + j))
    sigma_coeff = a**q / ((sigma + 2) * (sigma + N))

    def value(xi):
        xi = mpmath.mpf(xi)
        F = sum(G[j] * xi**j for j in range(order + 1)) + sigma_coeff * xi ** (sigma + 2)
        dF = sum(j * G[j] * xi ** (j - 1) for j in range(1, order + 1))
        dF += (sigma + 2) * sigma_coeff * xi ** (sigma + 1)
        return F, dF

    return value, (m, N, sigma, q, alpha, beta)


@dataclass
class SeriesCheck:
    """Series-vs-ODE differences on a dyadic sequence of ``xi``."""

    xi: np.ndarray
    diff: np.ndarray
    diff_double: np.ndarray
    slopes: np.ndarray
    order_fit: float
    order_predicted: float
    order_lower_bound: float
    tolerance: float = 0.3

    @property
    def ok(self) -> bool:
        return (self.order_fit >= self.order_lower_bound - self.tolerance
                and abs(self.order_fit - self.order_predicted) <= self.tolerance)

    def as_dict(self) -> dict:
        return {
            "xi": self.xi.tolist(), "diff": self.diff.tolist(), "diff_double": self.diff_double.tolist(),
            "slopes": self.slopes.tolist(), "order_fit": self.order_fit,
            "order_predicted": self.order_predicted, "order_lower_bound": self.order_lower_bound,
            "ok": self.ok,
        }


def series_consistency(params: Params, exps: Exponents, a: float = 1.0, n_points: int = 5,
                       rel_top: float = 1e-4, dps: int = 40) -> SeriesCheck:
    """Order of ``|F_series − F_ode|`` on ``xi_k = xi_top / 2^k``.

    ``xi_top`` is the largest power of two at which the highest retained
    series term is below ``rel_top · F(0)``.  The fitted order is the
    least-squares slope of ``log|diff|`` against ``log xi``; it is compared
    with the exponent of the first omitted term
    (:meth:`SeriesExpansion.truncation_order`) and with the lower bound
    ``min(σ+3, k0+3)``.  ``diff_double`` reports the same difference against
    the double-precision integrator where it is above rounding.
    """
    ser = series.expansion(params, exps, a)
    xi_top = 1.0
    while ser.last_term(xi_top) > rel_top * ser.coeffs_B[0]:
        xi_top /= 2.0
    xs = xi_top / 2.0 ** np.arange(n_points)
    with mpmath.workdps(dps):
        value, (m, N, sigma, q, alpha, beta) = mp_expansion(params, exps, a, ser.order)
        x0 = mpmath.mpf(xs[-1]) / 2**8
        F0, dF0 = value(x0)

        def rhs(x, y):
            F, G = y
            f = F ** (1 / m)
            fp = F ** (1 / m - 1) * G / m
            return [G, -(N - 1) / x * G - (alpha * f - beta * x * fp) + x**sigma * f**q]

        sol = mpmath.odefun(rhs, x0, [F0, dF0], tol=mpmath.mpf(10) ** (-(dps - 8)))
        diff = np.array([abs(float(sol(mpmath.mpf(x))[0] - value(x)[0])) for x in xs])
    ode = integrate_profile(params, exps, a, IntegrationOptions(
        xi_init=xs[-1] / 64.0, xi_max=2.0 * xi_top, rtol=2.5e-14, atol_factor=1e-20))
    F_ode, _ = ode.evaluate(xs)
    F_ser, _ = ser.value(xs)
    diff_double = np.abs(F_ser - F_ode)
    lx, ld = np.log(xs), np.log(diff)
    slopes = np.diff(ld) / np.diff(lx)
    # the coarsest point still carries the next correction; fit the finer ones
    order_fit = float(np.polyfit(lx[1:], ld[1:], 1)[0])
    return SeriesCheck(xs, diff, diff_double, slopes, order_fit, ser.truncation_order(),
                       float(min(params.sigma + 3.0, exps.k0 + 3.0)))


# ---------------------------------------------------------------------------
# Comparison with the absorption-free profile
# ---------------------------------------------------------------------------


@dataclass
class PMECheck:
    xi: np.ndarray
    ratio: np.ndarray
    n_last: int = 3

    @property
    def ok(self) -> bool:
        tail = self.ratio[-self.n_last:]
        return bool(tail.size == self.n_last and np.all(np.diff(tail) < 0.0))

    def as_dict(self) -> dict:
        return {"xi": self.xi.tolist(), "ratio": self.ratio.tolist(), "ok": self.ok}


def pme_comparison(params: Params, exps: Exponents, a: float = 1.0, n_points: int = 8,
                   noise_rel: float = 1e-10) -> PMECheck:
    """``|F(ξ;a) − Φ_a(ξ)| / ξ²`` on a decreasing dyadic sequence.

    Points where the difference is within ``noise_rel · a^m`` of rounding are
    dropped, so the returned sequence ends at the finest resolvable point.
    """
    opts = IntegrationOptions(rtol=2.5e-14, atol_factor=1e-20)
    F = integrate_profile(params, exps, a, opts)
    Phi = integrate_pme(params, exps, a, opts)
    lo = max(F.xi[0], Phi.xi[0])
    hi = min(F.xi[-1], Phi.xi[-1])
    xs = 0.5 * hi / 2.0 ** np.arange(n_points)
    xs = xs[xs > 4.0 * lo]
    d = np.abs(F.evaluate(xs)[0] - Phi.evaluate(xs)[0])
    keep = d > noise_rel * a**params.m
    return PMECheck(xs[keep], d[keep] / xs[keep] ** 2)


# ---------------------------------------------------------------------------
# Ordering of trajectories in the shooting parameter
# ---------------------------------------------------------------------------


@dataclass
class OrderingCheck:
    n_pairs: int
    n_samples: int
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def as_dict(self) -> dict:
        return {"n_pairs": self.n_pairs, "n_samples": self.n_samples,
                "violations": self.violations[:20], "n_violations": len(self.violations)}


def ordering_check(params: Params, exps: Exponents, a_center: float, n_pairs: int = 50,
                   rng: np.random.Generator | None = None, spread: float = 10.0) -> OrderingCheck:
    """Check ``F(·; a1) < F(·; a2)`` for random ``a1 < a2``.

    The ``a`` values are log-uniform in ``[a_center/spread, a_center·spread]``.
    The comparison runs over the samples of the ``a1`` trajectory strictly
    inside its decreasing range (before ``xi1`` or ``xi0``) and inside the
    integrated range of ``a2``.
    """
    if n_pairs < 1:
        raise InvalidArgument("n_pairs must be positive")
    rng = np.random.default_rng(0) if rng is None else rng
    check = OrderingCheck(n_pairs, 0)
    for _ in range(n_pairs):
        a1, a2 = np.sort(a_center * spread ** rng.uniform(-1.0, 1.0, size=2))
        if a1 == a2:
            continue
        s1 = integrate_profile(params, exps, float(a1))
        s2 = integrate_profile(params, exps, float(a2))
        end1 = s1.xi1 if s1.xi1 is not None else s1.xi[-1]
        if s1.xi0 is not None:
            end1 = min(end1, s1.xi0)
        end = min(end1, s2.xi[-1])
        mask = (s1.xi > s2.xi[0]) & (s1.xi < end)
        xs = s1.xi[mask]
        F2, _ = s2.evaluate(xs)
        bad = np.nonzero(~(s1.F[mask] < F2))[0]
        check.n_samples += int(xs.size)
        for i in bad:
            check.violations.append({"a1": float(a1), "a2": float(a2), "xi": float(xs[i]),
                                     "F1": float(s1.F[mask][i]), "F2": float(F2[i])})
    return check
