"""Admissible parameters and the closed-form constants derived from them.

Everything downstream (profile integration, interface laws, the radial
solver) reads its exponents from a single :class:`Exponents` instance so the
numbers agree across modules.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

from .errors import InvalidArgument, OutOfRange

CRITICAL_SUM_TOL = 1e-12


@dataclass(frozen=True)
class Params:
    """Exponents of ``u_t = Lap(u^m) - |x|^sigma u^q`` and the dimension."""

    m: float
    q: float
    sigma: float
    N: int = 1

    @property
    def sigma_threshold(self) -> float:
        return 2.0 * (1.0 - self.q) / (self.m - 1.0)

    @property
    def regime(self) -> str:
        """``"low"``, ``"critical"`` or ``"high"`` according to the sign of m+q-2."""
        s = self.m + self.q - 2.0
        if abs(s) < CRITICAL_SUM_TOL:
            return "critical"
        return "low" if s < 0 else "high"

    def as_dict(self) -> dict:
        return {"m": self.m, "q": self.q, "sigma": self.sigma, "N": self.N}


def validate(params: Params) -> Params:
    """Return ``params`` unchanged if admissible, raise :class:`OutOfRange` otherwise.

    The sigma bound is strict with no tolerance band.
    """
    m, q, sigma, N = params.m, params.q, params.sigma, params.N
    for name, value in (("m", m), ("q", q), ("sigma", sigma)):
        if not math.isfinite(value):
            raise OutOfRange(f"{name} must be finite, got {value!r}")
    if isinstance(N, bool) or int(N) != N:
        raise OutOfRange(f"N must be an integer, got {N!r}")
    if N < 1:
        raise OutOfRange(f"N >= 1 violated (N={N})")
    if not m > 1.0:
        raise OutOfRange(f"m > 1 violated: m <= 1 (m={m})")
    if not 0.0 < q < 1.0:
        raise OutOfRange(f"0 < q < 1 violated (q={q})")
    threshold = 2.0 * (1.0 - q) / (m - 1.0)
    if not sigma > threshold:
        raise OutOfRange(
            f"sigma > 2(1-q)/(m-1) violated: sigma <= 2(1-q)/(m-1) "
            f"(sigma={sigma}, threshold={threshold})"
        )
    return params


@dataclass(frozen=True)
class Exponents:
    """Self-similarity exponents and interface/stationary constants for ``params``.

    Attributes are computed on first access and cached; the instance is
    immutable otherwise.
    """

    params: Params

    @cached_property
    def _denominator(self) -> float:
        p = self.params
        return p.sigma * (p.m - 1.0) + 2.0 * (p.q - 1.0)

    @cached_property
    def alpha(self) -> float:
        return (self.params.sigma + 2.0) / self._denominator

    @cached_property
    def beta(self) -> float:
        return (self.params.m - self.params.q) / self._denominator

    @cached_property
    def k1(self) -> float:
        m, q = self.params.m, self.params.q
        return ((m - q) / math.sqrt(2.0 * m * (m + q))) ** (2.0 / (m - q))

    def k2_at(self, z: float) -> float:
        """Critical-case amplitude correction; equals 1 at ``z = 0`` and decreases."""
        m, q = self.params.m, self.params.q
        c = math.sqrt(2.0 * m * (m + q))
        bz = self.beta * z / c
        return (math.sqrt(1.0 + bz * bz) - bz) ** (2.0 / (m - q))

    @cached_property
    def k3(self) -> float:
        q = self.params.q
        return ((1.0 - q) / self.beta) ** (1.0 / (1.0 - q))

    @cached_property
    def a_stat(self) -> float:
        m, q, sigma, N = self.params.m, self.params.q, self.params.sigma, self.params.N
        base = (m - q) ** 2 / (m * (sigma + 2.0) * (m * (sigma + N) - q * (N - 2.0)))
        return base ** (1.0 / (m - q))

    @cached_property
    def stat_power(self) -> float:
        """Power of |x| in the stationary solution."""
        return (self.params.sigma + 2.0) / (self.params.m - self.params.q)

    @cached_property
    def gamma_small(self) -> float:
        return -(self.params.m - 1.0) / 2.0

    @cached_property
    def gamma_large(self) -> float:
        return (self.params.q - self.params.m) / (self.params.sigma + 2.0)

    @cached_property
    def k0(self) -> int:
        """Largest integer strictly below sigma."""
        s = self.params.sigma
        k = math.floor(s)
        return int(k - 1) if k == s else int(k)

    @property
    def sigma_is_integer(self) -> bool:
        return float(self.params.sigma).is_integer()

    def interface_exponent(self) -> float:
        p = self.params
        if p.regime == "high":
            return 1.0 / (1.0 - p.q)
        return 2.0 / (p.m - p.q)

    def interface_amplitude(self, xi0: float) -> float:
        """Leading coefficient of ``f ~ C (xi0 - xi)^p`` for an interface at ``xi0``."""
        p = self.params
        if p.regime == "high":
            return self.k3 * xi0 ** ((p.sigma - 1.0) / (1.0 - p.q))
        amp = self.k1 * xi0 ** (p.sigma / (p.m - p.q))
        if p.regime == "critical":
            amp *= self.k2_at(xi0 ** ((2.0 - p.sigma) / 2.0))
        return amp

    def as_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "beta": self.beta,
            "k1": self.k1,
            "k3": self.k3,
            "a_stat": self.a_stat,
            "gamma_small": self.gamma_small,
            "gamma_large": self.gamma_large,
            "k0": self.k0,
        }


def exponents(params: Params) -> Exponents:
    return Exponents(validate(params))


def shrinking_radius(params: Params, sup_u0: float, T: float) -> float:
    """Radius ``R(T)`` such that the solution vanishes outside ``B(0, 2 R(T))`` at time T.

    Parameters
    ----------
    params : Params
    sup_u0 : float
        Sup norm of the initial datum, must be positive.
    T : float
        Positive time.
    """
    if not (sup_u0 > 0.0 and math.isfinite(sup_u0)):
        raise InvalidArgument(f"sup_u0 must be positive and finite, got {sup_u0!r}")
    if not (T > 0.0 and math.isfinite(T)):
        raise InvalidArgument(f"T must be positive and finite, got {T!r}")
    m, q, sigma = params.m, params.q, params.sigma
    r_time = (2.0 * sup_u0 ** (1.0 - q) / ((1.0 - q) * T)) ** (1.0 / sigma)
    r_space = (4.0 * m * (m + q) * sup_u0 ** (m - q) / (m - q) ** 2) ** (1.0 / (sigma + 2.0))
    return max(r_time, r_space)
