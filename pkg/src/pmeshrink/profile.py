"""Integration and classification of self-similar profiles.

All integrations go through the semilinear form in ``G = g^m``

    G'' = -(N-1)/xi G' - c_drift (alpha g - beta xi g') + c_abs xi^sigma g^q,
    g = G^(1/m),   g' = G^((1-m)/m) G' / m,

started from the small-xi expansion. The full profile equation has
``c_drift = c_abs = 1``; the absorption-free comparison equation drops the
last term, and the two limit equations obtained by rescaling drop one of the
two groups.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy.integrate import DOP853, solve_ivp
from scipy.integrate._ivp.common import OdeSolution
from scipy.optimize import brentq

from . import series
from .errors import InvalidArgument, StepFailure
from .params import Exponents, Params


class ProfileClass(str, enum.Enum):
    A = "A"
    C = "C"
    UNDECIDED = "Undecided"


class Termination(str, enum.Enum):
    HIT_ZERO_NEG_SLOPE = "HitZeroNegSlope"
    DERIVATIVE_VANISHED = "DerivativeVanished"
    MAX_XI_REACHED = "MaxXiReached"
    STEP_FAILURE = "StepFailure"


@dataclass(frozen=True)
class IntegrationOptions:
    """Knobs for one profile integration.

    ``None`` entries are filled from the initial value ``g0``: ``xi_init`` is
    ``1e-3 * min(1, g0^((m-1)/2))``, ``xi_max`` is a generous multiple of the
    natural length scale. ``floor_factor`` and ``slope_factor`` are relative to
    ``G(0) = g0^m``.
    """

    xi_init: Optional[float] = None
    xi_max: Optional[float] = None
    rtol: float = 1e-11
    atol_factor: float = 1e-14
    floor_factor: float = 1e-12
    slope_factor: float = 1e-8
    event_rtol: float = 1e-12

    def tightened(self, factor: float = 10.0) -> "IntegrationOptions":
        return replace(
            self,
            rtol=max(self.rtol / factor, 2.5e-14),
            atol_factor=max(self.atol_factor / factor, 1e-18),
        )


@dataclass
class ProfileSolution:
    """Sampled trajectory of one integration.

    ``xi``, ``F`` and ``dF`` hold the accepted steps (first entry is the
    series-initialised point, last entry the located event or the final step).
    ``dense`` interpolates ``(F, F')`` over ``[xi[0], xi[-1]]``.
    """

    a: float
    xi: np.ndarray
    F: np.ndarray
    dF: np.ndarray
    m: float
    cls: ProfileClass
    termination: Termination
    xi0: Optional[float] = None
    xi1: Optional[float] = None
    dense: Optional[Callable] = field(default=None, repr=False)
    kind: str = "profile"
    meta: dict = field(default_factory=dict)

    @property
    def f(self) -> np.ndarray:
        return np.maximum(self.F, 0.0) ** (1.0 / self.m)

    @property
    def df(self) -> np.ndarray:
        Fc = np.maximum(self.F, np.finfo(float).tiny)
        return Fc ** ((1.0 - self.m) / self.m) * self.dF / self.m

    def evaluate(self, xi) -> tuple[np.ndarray, np.ndarray]:
        """``(F, F')`` at arbitrary points inside the integrated range."""
        xi = np.asarray(xi, dtype=float)
        if self.dense is None:
            return np.interp(xi, self.xi, self.F), np.interp(xi, self.xi, self.dF)
        y = self.dense(xi)
        return y[0], y[1]

    def f_at(self, xi) -> np.ndarray:
        F, _ = self.evaluate(xi)
        return np.maximum(F, 0.0) ** (1.0 / self.m)

    @property
    def last_residual(self) -> float:
        return float(max(abs(self.F[-1]), abs(self.dF[-1])))


@dataclass(frozen=True)
class _Equation:
    params: Params
    exps: Exponents
    c_drift: float
    c_abs: float

    def rhs_factory(self, F_floor: float):
        p = self.params
        m, q, sigma, N = p.m, p.q, p.sigma, p.N
        alpha, beta = self.exps.alpha, self.exps.beta
        c_drift, c_abs = self.c_drift, self.c_abs
        inv_m = 1.0 / m
        drift_pow = (1.0 - m) / m
        q_over_m = q / m
        nm1 = N - 1.0

        def rhs(xi, y):
            F, dF = y[0], y[1]
            Fp = F if F > 0.0 else 0.0
            Fc = F if F > F_floor else F_floor
            acc = -nm1 / xi * dF
            if c_drift:
                g = Fp**inv_m
                dg = Fc**drift_pow * dF * inv_m
                acc -= c_drift * (alpha * g - beta * xi * dg)
            if c_abs:
                acc += c_abs * xi**sigma * Fp**q_over_m
            return np.array([dF, acc])

        return rhs


def _default_xi_init(params: Params, g0: float, c_drift: float) -> float:
    if c_drift == 0.0:
        return 1e-3
    return 1e-3 * min(1.0, g0 ** ((params.m - 1.0) / 2.0))


def _default_xi_max(params: Params, exps: Exponents, g0: float, c_drift: float, c_abs: float) -> float:
    scales = [1.0]
    if c_drift:
        scales.append(g0 ** ((params.m - 1.0) / 2.0))
    if c_abs:
        scales.append(g0 ** ((params.m - params.q) / (params.sigma + 2.0)))
    return 200.0 * max(scales)


def _locate(fun: Callable[[float], float], lo: float, hi: float, rtol: float) -> float:
    flo, fhi = fun(lo), fun(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0 or flo * fhi > 0:
        return hi
    return brentq(fun, lo, hi, xtol=rtol * abs(hi) * 1e-3, rtol=max(rtol, 4.5e-16), maxiter=200)


def _integrate(
    eq: _Equation,
    g0: float,
    options: IntegrationOptions,
    kind: str,
    start: Optional[tuple[float, float, float]] = None,
) -> ProfileSolution:
    """Shared driver. ``start = (xi, F, F')`` restarts from an arbitrary state,
    in which case floor, slope and absolute tolerances scale with that ``F``."""
    params, exps = eq.params, eq.exps
    if not (g0 > 0 and math.isfinite(g0)):
        raise InvalidArgument(f"initial value must be positive, got {g0!r}")
    G0 = g0**params.m
    xi_max = (
        options.xi_max
        if options.xi_max is not None
        else _default_xi_max(params, exps, g0, eq.c_drift, eq.c_abs)
    )
    if start is None:
        xi_init = options.xi_init if options.xi_init is not None else _default_xi_init(params, g0, eq.c_drift)
        F_init, dF_init = series.series_init(params, exps, g0, xi_init, eq.c_drift, eq.c_abs)
        scale = G0
        atol = options.atol_factor * G0
    else:
        xi_init, F_init, dF_init = (float(v) for v in start)
        if not F_init > 0:
            raise InvalidArgument(f"restart state must have F > 0, got {F_init!r}")
        scale = F_init
        atol = np.array([options.atol_factor * F_init, options.atol_factor * max(abs(dF_init), F_init)])
    F_floor = options.floor_factor * scale
    slope_tol = options.slope_factor * scale

    rhs = eq.rhs_factory(F_floor)
    solver = DOP853(
        rhs, xi_init, np.array([F_init, dF_init]), xi_max,
        rtol=options.rtol, atol=atol,
    )
    xs, Fs, dFs = [xi_init], [F_init], [dF_init]
    interpolants = []
    cls = ProfileClass.UNDECIDED
    termination = Termination.MAX_XI_REACHED
    xi0 = xi1 = None
    meta: dict = {"xi_init": xi_init, "xi_max": xi_max, "F_floor": F_floor, "slope_tol": slope_tol}

    while True:
        msg = solver.step()
        if solver.status == "failed":
            termination = Termination.STEP_FAILURE
            meta["failure"] = msg
            break
        x_prev, x_new = solver.t_old, solver.t
        F_new, dF_new = solver.y
        dense = solver.dense_output()
        floor_hit = F_new <= F_floor
        turn = dF_new >= 0.0
        if not (floor_hit or turn):
            interpolants.append(dense)
            xs.append(x_new)
            Fs.append(F_new)
            dFs.append(dF_new)
            if solver.status == "finished":
                break
            continue

        x_floor = _locate(lambda s: dense(s)[0] - F_floor, x_prev, x_new, options.event_rtol) if floor_hit else math.inf
        x_turn = _locate(lambda s: dense(s)[1], x_prev, x_new, options.event_rtol) if turn else math.inf
        if x_turn < x_floor:
            F1 = float(dense(x_turn)[0])
            xi1 = x_turn
            cls = ProfileClass.C
            termination = Termination.DERIVATIVE_VANISHED
            x_evt = x_turn
            meta["F_at_xi1"] = F1
        else:
            x_evt = x_floor
            F_evt, dF_evt = dense(x_floor)
            termination = Termination.HIT_ZERO_NEG_SLOPE
            if dF_evt < -slope_tol:
                cls = ProfileClass.A
            else:
                cls = ProfileClass.UNDECIDED
            if F_new < 0:
                xi0 = _locate(lambda s: dense(s)[0], x_floor, x_new, options.event_rtol)
            else:
                xi0 = x_floor - F_evt / dF_evt if dF_evt < 0 else x_floor
        if x_evt > xs[-1]:
            y_evt = dense(x_evt)
            interpolants.append(dense)
            xs.append(x_evt)
            Fs.append(float(y_evt[0]))
            dFs.append(float(y_evt[1]))
        break

    xs_arr = np.array(xs)
    sol = OdeSolution(xs_arr, interpolants) if interpolants else None
    if xi1 is None and cls is ProfileClass.A:
        xi1 = xi0
    meta["n_steps"] = len(xs) - 1
    return ProfileSolution(
        a=g0, xi=xs_arr, F=np.array(Fs), dF=np.array(dFs), m=params.m,
        cls=cls, termination=termination, xi0=xi0, xi1=xi1, dense=sol,
        kind=kind, meta=meta,
    )


def integrate_profile(
    params: Params, exps: Exponents, a: float, options: IntegrationOptions | None = None
) -> ProfileSolution:
    """Integrate ``F(xi; a)`` until an A/C event, ``xi_max`` or step failure.

    Class A: ``F`` reaches the floor with ``F' < -slope_tol``. Class C: ``F'``
    turns non-negative while ``F`` is above the floor. Anything else is
    ``Undecided``. A step failure is reported through the ``termination``
    field rather than raised; use :func:`require_steps` for the raising form.
    """
    eq = _Equation(params, exps, 1.0, 1.0)
    return _integrate(eq, a, options or IntegrationOptions(), "profile")


def integrate_from_state(
    params: Params,
    exps: Exponents,
    a: float,
    xi_start: float,
    F_start: float,
    dF_start: float,
    options: IntegrationOptions | None = None,
) -> ProfileSolution:
    """Continue the profile equation from the state ``(F, F')`` at ``xi_start``.

    Used to re-anchor shooting deep in the tail: the floor, slope threshold and
    absolute tolerance are taken relative to ``F_start`` instead of ``a^m``, so a
    perturbation of the restart state is resolved relative to its own size.
    ``a`` only labels the result and sets the default ``xi_max``.
    """
    eq = _Equation(params, exps, 1.0, 1.0)
    return _integrate(eq, a, options or IntegrationOptions(), "profile", start=(xi_start, F_start, dF_start))


def require_steps(sol: ProfileSolution) -> ProfileSolution:
    if sol.termination is Termination.STEP_FAILURE:
        raise StepFailure(f"step size underflow at xi={sol.xi[-1]:.6g} for a={sol.a!r}")
    return sol


def integrate_pme(
    params: Params, exps: Exponents, a: float, options: IntegrationOptions | None = None
) -> ProfileSolution:
    """Absorption-free comparison profile ``Phi_a`` with ``Phi_a(0) = a^m``."""
    eq = _Equation(params, exps, 1.0, 0.0)
    return _integrate(eq, a, options or IntegrationOptions(), "pme")


def integrate_limit_h(
    params: Params, exps: Exponents, options: IntegrationOptions | None = None
) -> ProfileSolution:
    """Small-a limit equation, ``h(0) = 1``; expected to vanish with negative slope."""
    eq = _Equation(params, exps, 1.0, 0.0)
    return _integrate(eq, 1.0, options or IntegrationOptions(), "limit_h")


def integrate_limit_l(
    params: Params, exps: Exponents, eta_max: float = 10.0, options: IntegrationOptions | None = None
) -> ProfileSolution:
    """Large-a limit equation, ``l(0) = 1``; increasing on ``(0, eta_max)``.

    The event test is disabled at ``l'(0) = 0``: this trajectory turns upward
    immediately, so the integration simply runs to ``eta_max``.
    """
    eq = _Equation(params, exps, 0.0, 1.0)
    opts = replace(options or IntegrationOptions(), xi_max=eta_max)
    return _integrate_plain(eq, 1.0, opts, "limit_l")


def integrate_rescaled(
    params: Params,
    exps: Exponents,
    a: float,
    gamma: float,
    options: IntegrationOptions | None = None,
) -> ProfileSolution:
    """Integrate ``g(eta) = f(a^-gamma eta; a) / a`` directly from its own equation.

    Event positions in the result are in the rescaled variable ``eta``.
    """
    p = params
    c_drift = a ** (1.0 - p.m - 2.0 * gamma)
    c_abs = a ** (p.q - p.m - gamma * (p.sigma + 2.0))
    eq = _Equation(params, exps, c_drift, c_abs)
    opts = options or IntegrationOptions()
    if opts.xi_init is None:
        opts = replace(opts, xi_init=_default_xi_init(params, a, 1.0) * a**gamma)
    if opts.xi_max is None:
        opts = replace(opts, xi_max=_default_xi_max(params, exps, a, 1.0, 1.0) * a**gamma)
    sol = _integrate(eq, 1.0, opts, "rescaled")
    sol.meta.update({"a": a, "gamma": gamma})
    return sol


def _integrate_plain(eq: _Equation, g0: float, options: IntegrationOptions, kind: str) -> ProfileSolution:
    params = eq.params
    xi_init = options.xi_init if options.xi_init is not None else _default_xi_init(params, g0, eq.c_drift)
    F_init, dF_init = series.series_init(params, eq.exps, g0, xi_init, eq.c_drift, eq.c_abs)
    G0 = g0**params.m
    solver = DOP853(
        eq.rhs_factory(options.floor_factor * G0), xi_init, np.array([F_init, dF_init]),
        options.xi_max, rtol=options.rtol, atol=options.atol_factor * G0,
    )
    xs, Fs, dFs, interps = [xi_init], [F_init], [dF_init], []
    termination = Termination.MAX_XI_REACHED
    while solver.status == "running":
        solver.step()
        if solver.status == "failed":
            termination = Termination.STEP_FAILURE
            break
        interps.append(solver.dense_output())
        xs.append(solver.t)
        Fs.append(solver.y[0])
        dFs.append(solver.y[1])
    xs_arr = np.array(xs)
    return ProfileSolution(
        a=g0, xi=xs_arr, F=np.array(Fs), dF=np.array(dFs), m=params.m,
        cls=ProfileClass.UNDECIDED, termination=termination,
        dense=OdeSolution(xs_arr, interps) if interps else None, kind=kind,
    )


class _ReversedDense:
    """``(F, F')`` at ``xi`` from a solution in the local variable ``s = xi_seed - xi``."""

    def __init__(self, sol, xi_seed: float, ts=None):
        self.sol = sol
        self.xi_seed = xi_seed
        self.ts = ts

    def __call__(self, xi):
        y = np.asarray(self.sol(self.xi_seed - np.asarray(xi, dtype=float)))
        return np.stack([y[0], -y[1]]) if y.ndim > 1 else np.array([y[0], -y[1]])


def integrate_backward(
    params: Params,
    exps: Exponents,
    xi_seed: float,
    F_seed: float,
    xi_stop: float,
    rtol: float = 1e-10,
    relax_factor: float = 1e6,
    dense: bool = True,
    n_samples: int = 400,
) -> ProfileSolution:
    """Integrate the profile equation backward from the near-zero state ``(F_seed, 0)``.

    Towards smaller ``xi`` the touchdown family is attracting: the fast mode
    that makes forward shooting so sensitive near the interface decays, so a
    trajectory started from an almost-vanishing state at ``xi_seed`` relaxes
    onto a touchdown solution whose interface lies just beyond ``xi_seed``.
    No asymptotic law is imposed; the seed only fixes the interface position.

    The equation is integrated in ``s = xi_seed - xi`` (so the fast initial
    transient is resolved even when it is shorter than the spacing of doubles
    near ``xi_seed``) with an implicit Runge-Kutta method and analytic Jacobian.
    Returned samples are in increasing ``xi`` and stop where ``F`` has grown to
    ``relax_factor * F_seed`` (the seed transient is not reported); with
    ``dense`` the solver steps are supplemented by ``n_samples`` points
    equally spaced in ``log(xi_seed - xi)``.
    """
    p = params
    m, q, sigma, N = p.m, p.q, p.sigma, p.N
    alpha, beta = exps.alpha, exps.beta
    if not (F_seed > 0 and xi_stop < xi_seed):
        raise InvalidArgument("need F_seed > 0 and xi_stop < xi_seed")
    tiny = np.finfo(float).tiny
    inv_m, dpow, qm = 1.0 / m, (1.0 - m) / m, q / m

    def rhs(s, y):
        F = max(y[0], tiny)
        G = y[1]
        xi = xi_seed - s
        acc = (N - 1.0) / xi * G - alpha * F**inv_m - beta * xi * F**dpow * G * inv_m + xi**sigma * F**qm
        return np.array([G, acc])

    def jac(s, y):
        F = max(y[0], tiny)
        G = y[1]
        xi = xi_seed - s
        d_F = (-alpha * inv_m * F ** (inv_m - 1.0)
               - beta * xi * dpow * F ** (dpow - 1.0) * G * inv_m
               + xi**sigma * qm * F ** (qm - 1.0))
        d_G = (N - 1.0) / xi - beta * xi * F**dpow * inv_m
        return np.array([[0.0, 1.0], [d_F, d_G]])

    sol = solve_ivp(
        rhs, (0.0, xi_seed - xi_stop), [F_seed, 0.0], method="Radau", jac=jac,
        rtol=rtol, atol=[1e-6 * F_seed, 1e-6 * F_seed], dense_output=dense,
    )
    if sol.status != 0:
        raise StepFailure(f"backward integration failed: {sol.message}")
    keep = sol.y[0] >= relax_factor * F_seed
    s_pts = sol.t[keep]
    if dense and s_pts.size:
        # steps of the implicit solver get long near the seed; add samples
        # equally spaced in log(s) so the tail is sampled on every scale
        extra = np.geomspace(s_pts[0], sol.t[-1], n_samples)
        s_pts = np.union1d(s_pts, extra)
        y = sol.sol(s_pts)
    else:
        y = sol.y[:, keep]
    xi = (xi_seed - s_pts)[::-1]
    F = y[0, ::-1]
    dF = -y[1, ::-1]
    return ProfileSolution(
        a=float("nan"), xi=xi, F=F, dF=dF, m=m, cls=ProfileClass.UNDECIDED,
        termination=Termination.HIT_ZERO_NEG_SLOPE, xi0=None,
        dense=_ReversedDense(sol.sol, xi_seed, xi) if dense else None, kind="backward",
        meta={"xi_seed": xi_seed, "F_seed": F_seed, "nfev": int(sol.nfev)},
    )
