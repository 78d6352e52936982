"""Small-xi expansion of the profile, used to start integrations off the origin.

The radial equation for ``G = g^m``,

    G'' + (N-1)/xi G' + c_drift (alpha g - beta xi g') = c_abs xi^sigma g^q,

has the regular expansion

    G(xi) = sum_j G_j xi^j + c_abs g0^q / ((sigma+2)(sigma+N)) xi^(sigma+2) + ...

where the even coefficients follow from the coefficients ``g_j`` of ``G^(1/m)``
through ``G_{j+2} = c_drift (j beta - alpha) g_j / ((j+2)(N+j))`` and all odd ones
vanish. With ``c_drift = c_abs = 1`` and ``g0 = a`` this is the expansion of
``F(xi; a)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument, SeriesDiverged
from .params import Exponents, Params

DIVERGENCE_RATIO = 1e-3


def power_series_pow(coeffs: np.ndarray, p: float) -> np.ndarray:
    """Coefficients of ``(sum c_k x^k)^p`` truncated to ``len(coeffs)`` terms.

    Uses the J.C.P. Miller recurrence; requires ``coeffs[0] > 0``.
    """
    c = np.asarray(coeffs, dtype=float)
    n_terms = len(c)
    out = np.zeros(n_terms)
    out[0] = c[0] ** p
    for n in range(1, n_terms):
        k = np.arange(1, n + 1)
        out[n] = np.sum((p * k - n + k) * c[k] * out[n - k]) / (n * c[0])
    return out


def taylor_coefficients(
    exps: Exponents, g0: float, order: int, c_drift: float = 1.0
) -> tuple[np.ndarray, np.ndarray]:
    """Absorption-free coefficients ``G_j`` and ``g_j`` for ``j = 0..order``."""
    m, N = exps.params.m, exps.params.N
    alpha, beta = exps.alpha, exps.beta
    G = np.zeros(order + 1)
    G[0] = g0**m
    g = np.zeros(order + 1)
    for j in range(0, order - 1):
        g[: j + 1] = power_series_pow(G[: j + 1], 1.0 / m)
        G[j + 2] = c_drift * (j * beta - alpha) * g[j] / ((j + 2) * (N + j))
    g[:] = power_series_pow(G, 1.0 / m)
    return G, g


@dataclass(frozen=True)
class SeriesExpansion:
    """Truncated expansion ``sum_j B_j xi^j + sigma_coeff xi^(sigma+2)``.

    ``coeffs_B`` runs up to ``k0 + 2`` (non-integer sigma) or ``k0 + 3``
    (integer sigma), ``k0`` being the largest integer strictly below sigma.
    """

    a: float
    coeffs_B: np.ndarray
    sigma_coeff: float
    k0: int
    sigma: float

    @property
    def order(self) -> int:
        return len(self.coeffs_B) - 1

    def value(self, xi: float | np.ndarray) -> tuple:
        xi = np.asarray(xi, dtype=float)
        j = np.arange(len(self.coeffs_B))
        powers = xi[..., None] ** j
        F = np.sum(self.coeffs_B * powers, axis=-1) + self.sigma_coeff * xi ** (self.sigma + 2.0)
        dpowers = np.where(j > 0, xi[..., None] ** np.maximum(j - 1, 0), 0.0)
        dF = np.sum(j * self.coeffs_B * dpowers, axis=-1)
        dF = dF + (self.sigma + 2.0) * self.sigma_coeff * xi ** (self.sigma + 1.0)
        if F.ndim == 0:
            return float(F), float(dF)
        return F, dF

    def last_term(self, xi: float) -> float:
        """Magnitude of the highest retained term at ``xi``."""
        nz = np.flatnonzero(self.coeffs_B)
        top = abs(self.coeffs_B[nz[-1]]) * xi ** nz[-1] if nz[-1] > 0 else 0.0
        return max(top, abs(self.sigma_coeff) * xi ** (self.sigma + 2.0))

    def truncation_order(self) -> float:
        """Exponent of the first neglected term of the expansion.

        Odd coefficients vanish, so the first neglected power-series term is the
        next even index; the absorption correction continues at ``sigma + 4``.
        """
        nxt = self.order + 1
        if nxt % 2:
            nxt += 1
        return float(min(nxt, self.sigma + 4.0))


def expansion(
    params: Params,
    exps: Exponents,
    a: float,
    c_drift: float = 1.0,
    c_abs: float = 1.0,
) -> SeriesExpansion:
    """Build the truncated small-xi expansion for initial value ``g(0) = a``."""
    if not a > 0:
        raise InvalidArgument(f"a must be positive, got {a!r}")
    k0 = exps.k0
    order = k0 + 3 if exps.sigma_is_integer else k0 + 2
    G, _ = taylor_coefficients(exps, a, order, c_drift)
    sigma = params.sigma
    sigma_coeff = c_abs * a**params.q / ((sigma + 2.0) * (sigma + params.N))
    return SeriesExpansion(a=a, coeffs_B=G, sigma_coeff=sigma_coeff, k0=k0, sigma=sigma)


def series_init(
    params: Params,
    exps: Exponents,
    a: float,
    xi_init: float,
    c_drift: float = 1.0,
    c_abs: float = 1.0,
) -> tuple[float, float]:
    """Return ``(F, F')`` at ``xi_init`` from the truncated expansion.

    Raises
    ------
    SeriesDiverged
        If the highest retained term exceeds ``1e-3 * F(0)`` at ``xi_init``.
    """
    if xi_init < 0:
        raise InvalidArgument(f"xi_init must be non-negative, got {xi_init!r}")
    ser = expansion(params, exps, a, c_drift, c_abs)
    if xi_init == 0.0:
        return float(ser.coeffs_B[0]), 0.0
    if ser.last_term(xi_init) > DIVERGENCE_RATIO * abs(ser.coeffs_B[0]):
        raise SeriesDiverged(
            f"xi_init={xi_init} is outside the series radius for a={a}"
        )
    return ser.value(xi_init)
