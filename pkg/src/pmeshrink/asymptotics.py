"""Interface behaviour of the converged profile.

Three diagnostics are provided:

* a power-law fit ``f ~ C (xi0 - xi)^p`` of the tail with ``xi0`` free,
  compared against the closed-form exponent and amplitude;
* a check of the a-priori interface bounds on ``f`` and ``(f^(m-q))'``;
* the algebraic phase-space transforms (low and high variants) of the sampled
  profile, whose ``Y`` component has a known limit at the interface.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.optimize import minimize_scalar

from . import series
from .errors import DomainError, InsufficientTail
from .params import Exponents
from .profile import ProfileSolution

DEFAULT_WINDOW = (1e-6, 1e-2)
MIN_TAIL_SAMPLES = 30


class Regime(str, enum.Enum):
    LOW = "LowSum"
    CRITICAL = "Critical"
    HIGH = "HighSum"


def regime_of(exps: Exponents) -> Regime:
    return {"low": Regime.LOW, "critical": Regime.CRITICAL, "high": Regime.HIGH}[exps.params.regime]


@dataclass
class InterfaceFit:
    """Fitted versus closed-form tail law ``f ~ C (xi0 - xi)^p``.

    ``amplitude_fit`` is the amplitude obtained with the exponent pinned at its
    theoretical value (``xi0`` still free); the amplitude of the fully free fit
    is kept in ``amplitude_free`` for reference.
    """

    regime: Regime
    exponent_fit: float
    exponent_theory: float
    amplitude_fit: float
    amplitude_theory: float
    fit_window: tuple[float, float]
    r_squared: float
    xi0_fit: float
    amplitude_free: float = math.nan
    n_samples: int = 0

    @property
    def exponent_rel_error(self) -> float:
        return abs(self.exponent_fit - self.exponent_theory) / self.exponent_theory

    @property
    def amplitude_rel_error(self) -> float:
        return abs(self.amplitude_fit - self.amplitude_theory) / self.amplitude_theory

    def as_dict(self) -> dict:
        return {
            "regime": self.regime.value,
            "exponent_fit": self.exponent_fit,
            "exponent_theory": self.exponent_theory,
            "amplitude_fit": self.amplitude_fit,
            "amplitude_theory": self.amplitude_theory,
            "amplitude_free": self.amplitude_free,
            "fit_window": list(self.fit_window),
            "r_squared": self.r_squared,
            "xi0_fit": self.xi0_fit,
            "n_samples": self.n_samples,
        }


def _refined(profile: ProfileSolution, sub: int = 8) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Profile samples with ``sub`` dense-output points per step: ``(xi, F, F')``."""
    xi = profile.xi
    if profile.dense is None or xi.size < 2:
        return xi, profile.F, profile.dF
    frac = np.arange(sub) / sub
    pts = (xi[:-1, None] + (xi[1:] - xi[:-1])[:, None] * frac).ravel()
    pts = np.append(pts, xi[-1])
    F, dF = profile.evaluate(pts)
    return pts, np.asarray(F), np.asarray(dF)


def _linear_fit(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    """Slope, intercept and residual sum of squares of ``y ~ slope x + intercept``."""
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    return float(coef[0]), float(coef[1]), float(resid @ resid)


def _fit_xi0(xs, logf, p_fixed: float | None, d_guess: float, xi_last: float):
    """Minimise the residual over ``xi0 = xi_last + d`` on a log-scale in ``d``."""

    def ssr(log_d):
        d = math.exp(log_d)
        lx = np.log(xi_last + d - xs)
        if p_fixed is None:
            return _linear_fit(lx, logf)[2]
        c = np.mean(logf - p_fixed * lx)
        r = logf - p_fixed * lx - c
        return float(r @ r)

    span = max(xs[-1] - xs[0], d_guess)
    lo = math.log(max(d_guess * 1e-4, 1e-15 * max(abs(xi_last), 1.0)))
    hi = math.log(10.0 * span)
    grid = np.linspace(lo, hi, 161)
    vals = [ssr(g) for g in grid]
    k = int(np.argmin(vals))
    a_, b_ = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
    res = minimize_scalar(ssr, bounds=(a_, b_), method="bounded", options={"xatol": 1e-10})
    best = res.x if res.fun <= vals[k] else grid[k]
    return xi_last + math.exp(best)


def local_distance(profile: ProfileSolution, exps: Exponents) -> float:
    """Distance to the interface implied by the last sample and the theoretical exponent.

    From ``f ~ C s^p`` one has ``s = -p m F / F'``.
    """
    p = exps.interface_exponent()
    F, dF = profile.F[-1], profile.dF[-1]
    if dF < 0 and F > 0:
        return float(-p * profile.m * F / dF)
    return 0.0


def tail_window(profile: ProfileSolution, decades: float = 3.0) -> tuple[float, float]:
    """The deepest ``decades`` of the resolved tail, as fractions of ``a``."""
    f_end = float(np.max(profile.f[-1:]))
    lo = f_end / profile.a
    return lo, lo * 10.0**decades


def fit_interface(
    profile: ProfileSolution,
    exps: Exponents,
    window: tuple[float, float] = DEFAULT_WINDOW,
    n_fit: int = 200,
) -> InterfaceFit:
    """Least-squares fit of ``log f`` against ``log(xi0 - xi)`` over a tail window.

    Parameters
    ----------
    profile : ProfileSolution
        Converged profile (for instance ``ShootingResult.profile``).
    window : (float, float)
        Fit samples have ``window[0] * a <= f <= window[1] * a``.
    n_fit : int
        Number of points, equally spaced in ``log f``, taken from the dense output.

    Raises
    ------
    InsufficientTail
        If fewer than 30 profile samples fall inside the window.
    """
    a = profile.a
    f_lo, f_hi = window[0] * a, window[1] * a
    f_steps = profile.f
    in_win = (f_steps >= f_lo) & (f_steps <= f_hi) & (profile.dF < 0)
    n_in = int(np.count_nonzero(in_win))
    if n_in < MIN_TAIL_SAMPLES:
        raise InsufficientTail(
            f"{n_in} samples with f in [{f_lo:.3g}, {f_hi:.3g}] (need {MIN_TAIL_SAMPLES}); "
            f"profile resolved down to f={f_steps[-1]:.3g}"
        )
    idx = np.flatnonzero(in_win)
    j0, j1 = idx[0], idx[-1]
    xs_r, F_r, _ = _refined(profile)
    sel = (xs_r >= profile.xi[j0]) & (xs_r <= profile.xi[j1])
    xs_r, f_r = xs_r[sel], np.maximum(F_r[sel], 0.0) ** (1.0 / profile.m)
    # decreasing in xi: interpolate xi at log-equispaced levels of f
    levels = np.geomspace(f_r[0], f_r[-1], n_fit)
    order = np.argsort(f_r)
    xs = np.interp(np.log(levels), np.log(f_r[order]), xs_r[order])
    logf = np.log(levels)

    p_th = exps.interface_exponent()
    d_guess = max(local_distance(profile, exps), 1e-300)
    xi_last = float(xs[-1])
    xi0 = _fit_xi0(xs, logf, None, d_guess, xi_last)
    lx = np.log(xi0 - xs)
    p_fit, c_fit, ssr = _linear_fit(lx, logf)
    sst = float(np.sum((logf - logf.mean()) ** 2))
    r2 = 1.0 - ssr / sst if sst > 0 else 1.0

    xi0_pin = _fit_xi0(xs, logf, p_th, d_guess, xi_last)
    c_pin = float(np.mean(logf - p_th * np.log(xi0_pin - xs)))

    return InterfaceFit(
        regime=regime_of(exps),
        exponent_fit=p_fit,
        exponent_theory=p_th,
        amplitude_fit=math.exp(c_pin),
        amplitude_theory=exps.interface_amplitude(xi0),
        fit_window=(float(xs[0]), float(xs[-1])),
        r_squared=r2,
        xi0_fit=xi0,
        amplitude_free=math.exp(c_fit),
        n_samples=n_in,
    )


def estimate_xi0(profile: ProfileSolution, exps: Exponents, decades: float = 3.0) -> float:
    """Interface position extrapolated from a fit over the deepest resolved decades.

    Falls back to the local estimate ``xi + s`` of :func:`local_distance` when
    the tail holds too few samples for a fit.
    """
    try:
        return fit_interface(profile, exps, tail_window(profile, decades)).xi0_fit
    except InsufficientTail:
        return float(profile.xi[-1] + local_distance(profile, exps))


@dataclass
class BoundsReport:
    """Outcome of :func:`interface_bounds_check`.

    ``worst_ratio`` holds, per inequality, the largest value of lhs/rhs on the
    checked samples; ``violations`` the number of samples with
    ``lhs > rhs * (1 + rtol)``.
    """

    xi0: float
    n_samples: int
    worst_ratio: dict = field(default_factory=dict)
    violations: dict = field(default_factory=dict)
    constants: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(v == 0 for v in self.violations.values())

    def as_dict(self) -> dict:
        return {
            "xi0": self.xi0, "n_samples": self.n_samples, "ok": self.ok,
            "worst_ratio": self.worst_ratio, "violations": self.violations,
            "constants": self.constants,
        }


def interface_bounds_check(
    profile: ProfileSolution,
    exps: Exponents,
    xi0: float | None = None,
    rtol: float = 1e-10,
) -> BoundsReport:
    """Check the three a-priori bounds at every profile sample in ``(xi0/2, xi0)``.

    With ``s = xi0 - xi`` the bounds are

    * ``|(f^(m-q))'| <= 2^(N-1) xi0^sigma s``,
    * ``f <= C1 s^(2/(m-q))`` with ``C1 = (2^(N-2) (m-q) xi0^sigma / m)^(1/(m-q))``,
    * ``f <= C2 s^(1/(1-q))`` with ``C2 = (2^N xi0^(sigma-1) / beta)^(1/(1-q))``.
    """
    p = exps.params
    m, q, sigma, N = p.m, p.q, p.sigma, p.N
    xi0 = float(xi0 if xi0 is not None else (profile.xi0 or estimate_xi0(profile, exps)))
    C1 = (2.0 ** (N - 2) * (m - q) * xi0**sigma / m) ** (1.0 / (m - q))
    C2 = (2.0**N * xi0 ** (sigma - 1.0) / exps.beta) ** (1.0 / (1.0 - q))
    xi = profile.xi
    f = profile.f
    df = np.where(profile.F > 0, profile.df, 0.0)
    sel = (xi > xi0 / 2.0) & (xi < xi0)
    s = xi0 - xi[sel]
    fs, dfs = f[sel], df[sel]
    with np.errstate(divide="ignore", invalid="ignore"):
        lhs1 = np.where(fs > 0, (m - q) * fs ** (m - q - 1.0) * np.abs(dfs), 0.0)
    checks = {
        "derivative": (lhs1, 2.0 ** (N - 1) * xi0**sigma * s),
        "low_power": (fs, C1 * s ** (2.0 / (m - q))),
        "high_power": (fs, C2 * s ** (1.0 / (1.0 - q))),
    }
    worst, viol = {}, {}
    for name, (lhs, rhs) in checks.items():
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(rhs > 0, lhs / rhs, np.where(lhs > 0, np.inf, 0.0))
        worst[name] = float(ratio.max()) if ratio.size else 0.0
        viol[name] = int(np.count_nonzero(lhs > rhs * (1.0 + rtol)))
    return BoundsReport(
        xi0=xi0, n_samples=int(s.size), worst_ratio=worst, violations=viol,
        constants={"C1": C1, "C2": C2},
    )


class PhaseVariant(str, enum.Enum):
    LOW = "Low"
    HIGH = "High"


@dataclass
class PhaseTrajectory:
    """Profile samples mapped to ``(eta, X, Y, Z)``; ``xi`` is kept for reference."""

    variant: PhaseVariant
    xi: np.ndarray
    eta: np.ndarray
    X: np.ndarray
    Y: np.ndarray
    Z: np.ndarray
    y_star_theory: float

    def final_window(self, xi0: float, factor: float = 10.0) -> np.ndarray:
        """Mask of samples in the last factor-``factor`` approach to ``xi0``."""
        s = xi0 - self.xi
        s_end = s[-1]
        return (s <= factor * s_end) & (s >= s_end)

    def sign_violations(self) -> int:
        if self.variant is PhaseVariant.LOW:
            bad = (self.X <= 0) | (self.Z <= 0) | (self.Y >= 0)
        else:
            bad = (self.X < 0) | (self.Z < 0) | (self.Y > 0)
        return int(np.count_nonzero(bad))


def default_variant(exps: Exponents) -> PhaseVariant:
    return PhaseVariant.HIGH if exps.params.regime == "high" else PhaseVariant.LOW


def y_star(exps: Exponents, variant: PhaseVariant, xi0: float) -> float:
    """Limit of ``Y`` at the interface."""
    if variant is PhaseVariant.HIGH:
        return 0.0
    p = exps.params
    z_star = 0.0
    if p.regime == "critical":
        z_star = exps.alpha * xi0 ** ((2.0 - p.sigma) / 2.0) / math.sqrt(p.m)
    ba = exps.beta / exps.alpha * z_star
    return (ba - math.sqrt(ba * ba + 2.0 * (p.m + p.q))) / (p.m + p.q)


def phase_coordinates(exps: Exponents, variant: PhaseVariant, xi, f, df):
    """Algebraic map ``(xi, f, f') -> (X, Y, Z)``."""
    p = exps.params
    m, q, sigma = p.m, p.q, p.sigma
    alpha = exps.alpha
    xi, f, df = (np.asarray(v, dtype=float) for v in (xi, f, df))
    if variant is PhaseVariant.LOW:
        rm = math.sqrt(m)
        X = rm * xi ** (-(sigma + 2.0) / 2.0) * f ** ((m - q) / 2.0)
        Y = rm * xi ** (-sigma / 2.0) * f ** ((m - q - 2.0) / 2.0) * df
        Z = alpha / rm * xi ** ((2.0 - sigma) / 2.0) * f ** ((2.0 - m - q) / 2.0)
    else:
        X = m / alpha * xi**-2.0 * f ** (m - 1.0)
        Y = m / alpha / xi * f ** (m - 2.0) * df
        Z = m / alpha**2 * xi ** (sigma - 2.0) * f ** (m + q - 2.0)
    return X, Y, Z


def phase_inverse(exps: Exponents, variant: PhaseVariant, xi, X, Y):
    """Recover ``(f, f')`` from ``(xi, X, Y)``."""
    p = exps.params
    m, q, sigma = p.m, p.q, p.sigma
    alpha = exps.alpha
    xi, X, Y = (np.asarray(v, dtype=float) for v in (xi, X, Y))
    if variant is PhaseVariant.LOW:
        rm = math.sqrt(m)
        f = (X * xi ** ((sigma + 2.0) / 2.0) / rm) ** (2.0 / (m - q))
        df = Y * xi ** (sigma / 2.0) * f ** ((2.0 + q - m) / 2.0) / rm
    else:
        f = (alpha * X * xi**2 / m) ** (1.0 / (m - 1.0))
        df = alpha * Y * xi * f ** (2.0 - m) / m
    return f, df


def phase_transform(
    profile: ProfileSolution,
    exps: Exponents,
    variant: PhaseVariant | str | None = None,
    xi0: float | None = None,
    sub: int = 8,
) -> PhaseTrajectory:
    """Map the profile to phase-space coordinates.

    ``eta`` is obtained by trapezoidal quadrature on the dense output
    (``sub`` points per step), plus the exact leading contribution of
    ``[0, xi_init]`` where ``f ~ a``.

    Raises
    ------
    DomainError
        If a sample has ``f <= 0`` or the Low variant is requested for ``m + q > 2``.
    """
    p = exps.params
    m, q, sigma = p.m, p.q, p.sigma
    variant = PhaseVariant(variant) if variant is not None else default_variant(exps)
    if variant is PhaseVariant.LOW and p.regime == "high":
        raise DomainError("the Low variant applies only for m + q <= 2")
    xi, F, dF = _refined(profile, sub)
    if np.any(F <= 0):
        raise DomainError("profile samples include f <= 0")
    f = F ** (1.0 / m)
    df = F ** ((1.0 - m) / m) * dF / m
    a = profile.a
    x_init = float(xi[0])
    if variant is PhaseVariant.LOW:
        integrand = f ** ((q - m) / 2.0) * xi ** (sigma / 2.0) / math.sqrt(m)
        head = a ** ((q - m) / 2.0) * x_init ** (sigma / 2.0 + 1.0) / (sigma / 2.0 + 1.0) / math.sqrt(m)
    else:
        integrand = exps.alpha / m * xi / f ** (m - 1.0)
        head = exps.alpha / m * a ** (1.0 - m) * x_init**2 / 2.0
    eta = head + cumulative_trapezoid(integrand, xi, initial=0.0)
    X, Y, Z = phase_coordinates(exps, variant, xi, f, df)
    xi0 = float(xi0 if xi0 is not None else (profile.xi0 or estimate_xi0(profile, exps)))
    return PhaseTrajectory(
        variant=variant, xi=xi, eta=eta, X=X, Y=Y, Z=Z,
        y_star_theory=y_star(exps, variant, xi0),
    )


def h_function(profile: ProfileSolution, exps: Exponents, xi):
    """``H(xi) = xi^(N-1) F'(xi) - beta xi^N f(xi)``.

    Below the first sample the small-xi expansion is used, so ``H(0) = 0``.

    Raises
    ------
    DomainError
        Outside ``[0, xi_last]``.
    """
    p = exps.params
    x = np.asarray(xi, dtype=float)
    if np.any(x < 0) or np.any(x > profile.xi[-1]):
        raise DomainError(f"xi outside [0, {profile.xi[-1]}]")
    xs = np.atleast_1d(x)
    F = np.empty_like(xs)
    dF = np.empty_like(xs)
    inner = xs < profile.xi[0]
    if np.any(inner):
        ser = series.expansion(p, exps, profile.a)
        Fi, dFi = ser.value(xs[inner])
        F[inner], dF[inner] = Fi, dFi
    if np.any(~inner):
        Fo, dFo = profile.evaluate(xs[~inner])
        F[~inner], dF[~inner] = Fo, dFo
    f = np.maximum(F, 0.0) ** (1.0 / p.m)
    H = xs ** (p.N - 1.0) * dF - exps.beta * xs**p.N * f
    return float(H[0]) if x.ndim == 0 else H


def h_limit_theory(exps: Exponents, xi0: float) -> float:
    """Limit of ``(-H)^(1-q) / (xi0 - xi)`` at the interface (high-sum regime)."""
    p = exps.params
    return (1.0 - p.q) * exps.beta ** (-p.q) * xi0 ** (p.sigma + p.N * (1.0 - p.q) - 1.0)
