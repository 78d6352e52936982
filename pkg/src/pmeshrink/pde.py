"""Radial implicit solver for ``u_t = Δu^m − |x|^σ u^q``.

The scheme is backward Euler on ``v = u^m`` with the standard three-point
radial Laplacian, a symmetry stencil at ``r = 0`` and homogeneous Dirichlet
data at ``r_max``.  Each step solves, node by node,

    u_new + dt r^σ u_new^q − dt Δ_r v_new = u_old,    v_new = u_new^m,

by damped Newton with tridiagonal linear algebra.  Newton iterates on
``z = u^q`` rather than on ``v``: the discrete equations are the same, but in
``z`` every term (``z^{1/q}``, ``z``, ``z^{m/q}``) is convex with a bounded
derivative at zero, whereas in ``v`` the absorption ``v^{q/m}`` has an infinite
slope at the free boundary and Newton stalls there.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Optional, Sequence

import numpy as np
from scipy.linalg import solve_banded

from .errors import DomainError, InvalidArgument, NegativeData, NewtonDiverged
from .params import Exponents, Params, shrinking_radius
from .profile import ProfileSolution

JACOBIAN_FLOOR = 1e-14


# ---------------------------------------------------------------------------
# Grid and state
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RadialGrid:
    """Uniform radial grid ``r_i = i Δr``, ``i = 0..n_cells``."""

    r_max: float
    n_cells: int

    def __post_init__(self):
        if not (self.r_max > 0.0 and math.isfinite(self.r_max)):
            raise InvalidArgument(f"r_max must be positive, got {self.r_max!r}")
        if int(self.n_cells) != self.n_cells or self.n_cells < 2:
            raise InvalidArgument(f"n_cells must be an integer >= 2, got {self.n_cells!r}")

    @property
    def dr(self) -> float:
        return self.r_max / self.n_cells

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.n_cells + 1) * self.dr


@dataclass
class RadialState:
    """Nodal values of ``u`` at time ``t``; ``v = u^m`` is cached on demand."""

    grid: RadialGrid
    t: float
    u: np.ndarray
    m: float
    _v: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def v(self) -> np.ndarray:
        if self._v is None:
            self._v = self.u**self.m
        return self._v

    @property
    def sup(self) -> float:
        return float(np.max(self.u))

    def copy(self) -> "RadialState":
        return RadialState(self.grid, self.t, self.u.copy(), self.m)


def init_state(grid: RadialGrid, u0, params: Params, t0: float = 0.0) -> RadialState:
    """Sample an initial datum on the grid.

    Parameters
    ----------
    grid : RadialGrid
    u0 : callable or array_like
        Either a function of ``r`` (vectorised) or nodal values of length
        ``n_cells + 1``.  The Dirichlet node ``r_max`` is set to zero.
    params : Params
    t0 : float
        Initial time stamp.

    Raises
    ------
    NegativeData
        If any sampled value is negative or not finite.
    """
    r = grid.nodes
    values = np.asarray(u0(r) if callable(u0) else u0, dtype=float)
    if values.shape == ():
        values = np.full_like(r, float(values))
    if values.shape != r.shape:
        raise InvalidArgument(f"initial datum has shape {values.shape}, expected {r.shape}")
    if not np.all(np.isfinite(values)):
        raise NegativeData("initial datum must be finite")
    if np.any(values < 0.0):
        raise NegativeData(f"initial datum is negative at r = {r[np.argmin(values)]:.6g}")
    values = values.copy()
    values[-1] = 0.0
    return RadialState(grid, float(t0), values, params.m)


# ---------------------------------------------------------------------------
# Discrete operator
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Stencil:
    """Coefficients of ``(Δ_r v)_i = lo_i v_{i-1} − (lo_i + up_i) v_i + up_i v_{i+1}``."""

    lo: np.ndarray
    up: np.ndarray
    weight: np.ndarray  # r_i^σ

    @classmethod
    def build(cls, grid: RadialGrid, N: int, sigma: float) -> "_Stencil":
        n, dr = grid.n_cells, grid.dr
        r = grid.nodes[:n]  # unknowns: nodes 0..n-1
        lo = np.zeros(n)
        up = np.zeros(n)
        up[0] = 2.0 * N / dr**2
        i = np.arange(1, n)
        ri = i * dr
        up[1:] = ((ri + 0.5 * dr) / ri) ** (N - 1) / dr**2
        lo[1:] = ((ri - 0.5 * dr) / ri) ** (N - 1) / dr**2
        return cls(lo, up, r**sigma)

    def apply(self, v: np.ndarray) -> np.ndarray:
        """``Δ_r v`` at the unknown nodes; ``v`` excludes the Dirichlet node."""
        out = -(self.lo + self.up) * v
        out[:-1] += self.up[:-1] * v[1:]
        out[1:] += self.lo[1:] * v[:-1]
        return out


_STENCILS: dict = {}


def _stencil(grid: RadialGrid, params: Params) -> _Stencil:
    key = (grid.r_max, grid.n_cells, params.N, params.sigma)
    st = _STENCILS.get(key)
    if st is None:
        if len(_STENCILS) > 32:
            _STENCILS.clear()
        st = _Stencil.build(grid, params.N, params.sigma)
        _STENCILS[key] = st
    return st


def scheme_residual(u_new: np.ndarray, u_old: np.ndarray, dt: float, grid: RadialGrid,
                    params: Params, absorption: float = 1.0) -> np.ndarray:
    """Residual of the implicit step at the unknown nodes (``u`` units)."""
    st = _stencil(grid, params)
    un = u_new[:-1]
    return (un + dt * absorption * st.weight * un**params.q
            - dt * st.apply(un**params.m) - u_old[:-1])


@dataclass(frozen=True)
class NewtonOptions:
    tol: float = 1e-14
    max_iter: int = 30
    max_monotone_iter: int = 2000
    min_damping: float = 1.0 / 1024


WINDOW_MARGIN = 32
WINDOW_TINY = 1e-250


def _newton(u_old: np.ndarray, dt: float, grid: RadialGrid, params: Params,
            absorption: float, opts: NewtonOptions, guess: np.ndarray | None = None,
            k: int | None = None) -> np.ndarray:
    """Solve the implicit step on the unknown nodes ``0..k-1`` (``u = 0`` beyond).

    A damped Newton iteration is started from ``guess`` (or the old state).  If
    it stalls, the solve restarts from the constant ``z = (max u_old)^q``,
    which is a discrete supersolution: the system is convex with an M-matrix
    Jacobian, so full Newton steps from there decrease monotonically to the
    solution without any damping.
    """
    m, q = params.m, params.q
    st = _stencil(grid, params)
    n = grid.n_cells
    k = n if k is None else k
    b = u_old[:k]
    scale = max(float(np.max(b)), 1.0)
    tol = opts.tol * scale
    p_u, p_v = 1.0 / q, m / q
    z_max = float(np.max(b)) ** q
    c_abs = dt * absorption * st.weight[:k]
    lo, up = dt * st.lo[:k], dt * st.up[:k]
    lo_up = lo + up
    ab = np.empty((3, k))

    def residual(z):
        v = z**p_v
        lap = -lo_up * v
        lap[:-1] += up[:-1] * v[1:]
        lap[1:] += lo[1:] * v[:-1]
        return z**p_u + c_abs * z - lap - b

    def converged(z, res, slack=1.0):
        # per node: below ``tol`` or at the rounding level of that node's terms
        terms = b + z**p_u + c_abs * z + lo_up * z**p_v
        level = np.maximum(tol, slack * 64.0 * np.finfo(float).eps * terms)
        return bool(np.all(np.abs(res) <= level))

    def newton_step(z, res):
        # derivatives in z; the floor keeps the Jacobian diagonal non-singular
        dv = p_v * z ** (p_v - 1.0)
        ab[0, 0] = 0.0
        ab[0, 1:] = -up[:-1] * dv[1:]
        ab[1] = np.maximum(p_u * z ** (p_u - 1.0) + c_abs + lo_up * dv, JACOBIAN_FLOOR)
        ab[2, :-1] = -lo[1:] * dv[:-1]
        ab[2, -1] = 0.0
        return solve_banded((1, 1), ab, -res, check_finite=False)

    def damped(z):
        res = residual(z)
        norm = float(np.max(np.abs(res)))
        for _ in range(opts.max_iter):
            if converged(z, res):
                return z
            step = newton_step(z, res)
            lam = 1.0
            while lam >= opts.min_damping:
                z_try = np.clip(z + lam * step, 0.0, z_max)
                res_try = residual(z_try)
                norm_try = float(np.max(np.abs(res_try)))
                if norm_try < norm:
                    break
                lam *= 0.5
            else:
                if converged(z, res, 16.0):
                    return z  # stagnated at the rounding level of the residual
                return None
            z, res, norm = z_try, res_try, norm_try
        return None

    def monotone(z):
        res = residual(z)
        norm = float(np.max(np.abs(res)))
        for _ in range(opts.max_monotone_iter):
            if converged(z, res):
                return z
            z_new = np.clip(z + newton_step(z, res), 0.0, z_max)
            if np.array_equal(z_new, z):
                break
            z = z_new
            res = residual(z)
            norm = float(np.max(np.abs(res)))
        if converged(z, res, 16.0):
            return z
        raise NewtonDiverged(f"Newton did not converge at dt={dt:.3g}: residual {norm:.3g} > {tol:.3g}")

    start = b if guess is None else np.clip(guess[:k], 0.0, float(np.max(b)))
    z = damped(start**q)
    if z is None:
        z = monotone(np.full(k, z_max))
    u = np.zeros_like(u_old)
    u[:k] = z**p_u
    return u


def step_implicit(state: RadialState, dt: float, params: Params, exps: Exponents | None = None,
                  absorption: float = 1.0, newton: NewtonOptions = NewtonOptions(),
                  guess: np.ndarray | None = None) -> RadialState:
    """Advance ``state`` by one backward-Euler step of size ``dt``.

    Parameters
    ----------
    state : RadialState
    dt : float
        Positive time step.
    params : Params
    exps : Exponents, optional
        Unused by the scheme; accepted for a uniform call signature.
    absorption : float
        Multiplier of the absorption term (``0`` gives the plain PME scheme).
    newton : NewtonOptions
    guess : ndarray, optional
        Starting iterate for Newton (defaults to the old state).

    Notes
    -----
    The solve is restricted to the nodes up to a margin of ``WINDOW_MARGIN``
    past the support of the old state; values beyond decay super-exponentially
    and the window is widened whenever its last node exceeds ``WINDOW_TINY``.

    Raises
    ------
    NewtonDiverged
        If the damped Newton iteration fails; callers halve ``dt`` and retry.
    """
    if not (dt > 0.0 and math.isfinite(dt)):
        raise InvalidArgument(f"dt must be positive, got {dt!r}")
    pos = np.nonzero(state.u > 0.0)[0]
    if pos.size == 0:
        return RadialState(state.grid, state.t + dt, np.zeros_like(state.u), state.m)
    n = state.grid.n_cells
    margin = WINDOW_MARGIN
    while True:
        k = min(n, int(pos[-1]) + 1 + margin)
        u = _newton(state.u, dt, state.grid, params, absorption, newton, guess, k)
        if k == n or u[k - 1] <= WINDOW_TINY * max(1.0, state.sup):
            break
        margin *= 4
    return RadialState(state.grid, state.t + dt, u, state.m)


def step_explicit(state: RadialState, dt: float, params: Params, absorption: float = 1.0) -> RadialState:
    """Forward-Euler step of the same spatial discretisation (reference only)."""
    st = _stencil(state.grid, params)
    un = state.u[:-1]
    rhs = st.apply(un**params.m) - absorption * st.weight * un**params.q
    u = np.zeros_like(state.u)
    u[:-1] = np.maximum(un + dt * rhs, 0.0)
    return RadialState(state.grid, state.t + dt, u, state.m)


# ---------------------------------------------------------------------------
# Time stepping driver
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DtPolicy:
    """Time-step rule: ``dt(t) = min(dt_max, max(dt, kappa t))``.

    ``kappa = 0`` gives the fixed step.  A positive ``kappa`` keeps the step
    proportional to ``t``, which matches the self-similar time scale for long
    runs.  Failed Newton solves halve the step up to ``max_halvings`` times.
    """

    dt: float
    kappa: float = 0.0
    dt_max: float = math.inf
    max_halvings: int = 20

    def at(self, t: float) -> float:
        return min(self.dt_max, max(self.dt, self.kappa * t))


Observer = Callable[[RadialState], float]


@dataclass
class Trajectory:
    """Logged observer values of one run."""

    times: np.ndarray
    records: dict
    final: RadialState
    n_steps: int
    n_halvings: int
    snapshots: list = field(default_factory=list)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.records[name]

    def as_dict(self) -> dict:
        return {
            "times": self.times.tolist(),
            "records": {k: np.asarray(v).tolist() for k, v in self.records.items()},
            "n_steps": self.n_steps,
            "n_halvings": self.n_halvings,
        }


def run(state0: RadialState, t_end: float, dt_policy: DtPolicy, params: Params,
        exps: Exponents | None = None, observers: Mapping[str, Observer] | None = None,
        log_times: Sequence[float] | None = None, keep_snapshots: bool = False,
        absorption: float = 1.0) -> Trajectory:
    """Advance ``state0`` to ``t_end``, evaluating observers at the log times.

    Steps are shortened so that every log time is hit exactly.  The initial
    state is logged too.  ``log_times`` defaults to ``t_end`` only.

    Raises
    ------
    NewtonDiverged
        When a step still fails after ``dt_policy.max_halvings`` halvings.
    """
    if not (t_end > state0.t):
        raise InvalidArgument(f"t_end must exceed the initial time {state0.t}, got {t_end!r}")
    observers = dict(observers or {"sup_norm": sup_norm})
    logs = sorted({float(t) for t in (log_times if log_times is not None else [t_end])
                   if state0.t < t <= t_end} | {float(t_end)})
    times = [state0.t]
    records = {k: [float(f(state0))] for k, f in observers.items()}
    snaps = [state0.copy()] if keep_snapshots else []
    state = state0
    n_steps = n_halvings = 0
    prev, dt_prev = None, 0.0
    for t_log in logs:
        while state.t < t_log:
            dt = dt_policy.at(state.t)
            remaining = t_log - state.t
            if dt >= remaining * (1.0 - 1e-9) or remaining - dt < 1e-6 * dt:
                dt = remaining
            for halving in range(dt_policy.max_halvings + 1):
                guess = None
                if prev is not None and dt_prev > 0.0:
                    guess = state.u + (dt / dt_prev) * (state.u - prev)
                try:
                    new = step_implicit(state, dt, params, exps, absorption=absorption, guess=guess)
                    break
                except NewtonDiverged:
                    if halving == dt_policy.max_halvings:
                        raise
                    dt *= 0.5
                    n_halvings += 1
            if abs(new.t - t_log) <= 1e-12 * max(1.0, abs(t_log)):
                new.t = t_log
            prev, dt_prev = state.u, new.t - state.t
            state = new
            n_steps += 1
        times.append(state.t)
        for k, f in observers.items():
            records[k].append(float(f(state)))
        if keep_snapshots:
            snaps.append(state.copy())
    return Trajectory(np.array(times), {k: np.array(v) for k, v in records.items()},
                      state, n_steps, n_halvings, snaps)


# ---------------------------------------------------------------------------
# Observers
# ---------------------------------------------------------------------------


def sup_norm(state: RadialState) -> float:
    return state.sup


def origin_value(state: RadialState) -> float:
    return float(state.u[0])


def support_radius(state: RadialState, eps_supp: float) -> float:
    """Largest node radius with ``u > eps_supp`` (``0`` if there is none)."""
    if not eps_supp > 0.0:
        raise InvalidArgument(f"eps_supp must be positive, got {eps_supp!r}")
    idx = np.nonzero(state.u > eps_supp)[0]
    return 0.0 if idx.size == 0 else float(state.grid.nodes[idx[-1]])


@dataclass(frozen=True)
class SelfSimilarProfile:
    """Tabulated profile ``f*`` for interpolation, extended by zero past ``xi0``."""

    xi: np.ndarray
    f: np.ndarray
    xi0: float
    a: float

    @classmethod
    def from_solution(cls, profile: ProfileSolution, xi0: float, n_uniform: int = 20001) -> "SelfSimilarProfile":
        xi_s = np.asarray(profile.xi, dtype=float)
        lo, hi = float(xi_s[0]), float(xi_s[-1])
        grid = np.union1d(xi_s, np.linspace(lo, hi, n_uniform))
        f = np.asarray(profile.f_at(grid), dtype=float)
        xi_tab = np.concatenate(([0.0], grid))
        f_tab = np.concatenate(([profile.a], f))
        if xi0 > hi:
            xi_tab = np.append(xi_tab, xi0)
            f_tab = np.append(f_tab, 0.0)
        return cls(xi_tab, f_tab, float(xi0), float(profile.a))

    def __call__(self, xi, extend: bool = True) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        if not extend and np.any(xi > self.xi[-1]):
            raise DomainError("argument beyond the tabulated profile range")
        return np.interp(xi, self.xi, self.f, right=0.0)


def self_similar_datum(profile: SelfSimilarProfile, exps: Exponents, t0: float = 1.0):
    """``u0(r) = t0^{-α} f*(r t0^β)``."""
    return lambda r: t0 ** (-exps.alpha) * profile(np.asarray(r) * t0**exps.beta)


def rescaled_error(state: RadialState, exps: Exponents, profile: SelfSimilarProfile,
                   extend: bool = True) -> float:
    """``t^α max_i |u_i − t^{-α} f*(r_i t^β)|``.

    Raises
    ------
    DomainError
        If ``t <= 0``, or if ``extend`` is false and a node maps beyond the table.
    """
    t = state.t
    if not t > 0.0:
        raise DomainError(f"rescaled error needs t > 0, got {t!r}")
    a, b = exps.alpha, exps.beta
    ref = profile(state.grid.nodes * t**b, extend=extend)
    return float(np.max(np.abs(t**a * state.u - ref)))


def lower_shift(profile: SelfSimilarProfile, exps: Exponents, delta: float, r0: float) -> float:
    """Smallest admissible shift ``τ∞ > 1`` with ``r0 τ∞^β > ξ0*`` and ``τ∞^α δ > a*``."""
    tau = max(1.0, (profile.xi0 / r0) ** (1.0 / exps.beta), (profile.a / delta) ** (1.0 / exps.alpha))
    return tau * (1.0 + 1e-9)


def upper_shift(profile: SelfSimilarProfile, exps: Exponents, sup_u0: float, R1: float) -> float:
    """Largest ``τ0 ∈ (0, 1)`` with ``τ0^{-α} f*(ξ0*/2) ≥ sup_u0`` and ``R1 τ0^β ≤ ξ0*/2``.

    ``R1`` bounds the support of ``u(1)``.
    """
    half = profile.xi0 / 2.0
    f_half = float(profile(half))
    tau_amp = (f_half / sup_u0) ** (1.0 / exps.alpha)
    tau_supp = (half / R1) ** (1.0 / exps.beta) if R1 > 0 else math.inf
    return min(1.0 - 1e-12, tau_amp, tau_supp) * (1.0 - 1e-9)


def shifted_self_similar(profile: SelfSimilarProfile, exps: Exponents, t: float, r) -> np.ndarray:
    """``t^{-α} f*(r t^β)`` (the self-similar solution at time ``t``)."""
    return t ** (-exps.alpha) * profile(np.asarray(r, dtype=float) * t**exps.beta)


# ---------------------------------------------------------------------------
# Comparison functions and stationary solution
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Supersolution:
    """One-variable comparison function ``W_R(t, x) = (Y_R(x) + Z_R(t))^{1/m}``."""

    R: float
    T: float
    A_R: float
    B_R: float
    m: float
    q: float
    sigma: float

    @classmethod
    def equality_choice(cls, params: Params, R: float, T: float) -> "Supersolution":
        m, q, s = params.m, params.q, params.sigma
        A = (m - q) ** 2 * R**s / (4.0 * m * (m + q))
        B = (1.0 - q) * R**s / 2.0
        return cls(R, T, A, B, m, q, s)

    def conditions(self, sup_u0: float) -> dict:
        """The time (``B ≥ |u0|^{1−q}/T``) and lateral (``A R² ≥ |u0|^{m−q}``) conditions."""
        return {
            "time": self.B_R >= sup_u0 ** (1.0 - self.q) / self.T * (1.0 - 1e-12),
            "lateral": self.A_R * self.R**2 >= sup_u0 ** (self.m - self.q) * (1.0 - 1e-12),
        }

    def Y(self, x) -> np.ndarray:
        return (self.A_R * (np.asarray(x) - 2.0 * self.R) ** 2) ** (self.m / (self.m - self.q))

    def Z(self, t) -> np.ndarray:
        return (self.B_R * np.maximum(self.T - np.asarray(t), 0.0)) ** (self.m / (1.0 - self.q))

    def W(self, t, x) -> np.ndarray:
        return (self.Y(x) + self.Z(t)) ** (1.0 / self.m)

    def operator(self, t, x) -> np.ndarray:
        """``∂t W − ∂²x W^m + x^σ W^q`` with exact derivatives."""
        m, q = self.m, self.q
        t = np.asarray(t, dtype=float)
        x = np.asarray(x, dtype=float)
        k = m / (m - q)
        d = np.abs(x - 2.0 * self.R)
        Yxx = self.A_R**k * 2.0 * k * (2.0 * k - 1.0) * d ** (2.0 * k - 2.0)
        p = m / (1.0 - q)
        tau = np.maximum(self.T - t, 0.0)
        Zt = -p * self.B_R * (self.B_R * tau) ** (p - 1.0)
        S = self.Y(x) + self.Z(t)
        with np.errstate(divide="ignore", invalid="ignore"):
            Wt = np.where(S > 0.0, S ** (1.0 / m - 1.0) * Zt / m, 0.0)
        return Wt - Yxx + x**self.sigma * S ** (q / m)


def supersolution_residual(params: Params, sup_u0: float, R: float, T: float,
                           grid_1d: int | tuple[int, int] = 201, method: str = "fd") -> float:
    """Minimum of ``L W_R`` over a space-time grid of ``[0, T] × [R, 2R]``.

    Parameters
    ----------
    params : Params
    sup_u0 : float
    R, T : float
        ``R`` must be at least ``shrinking_radius(params, sup_u0, T)``.
    grid_1d : int or (int, int)
        Number of points in ``x`` (and ``t``).
    method : {"fd", "exact"}
        ``"fd"`` differentiates ``W`` with second-order central differences on
        the grid (one-sided at the ends); ``"exact"`` uses closed forms.

    Returns
    -------
    float
        ``min L W``, scaled by the size of the absorption term ``(2R)^σ W^q``
        at ``t = 0``, ``x = R`` so the result is dimensionless.
    """
    R_min = shrinking_radius(params, sup_u0, T)
    if R < R_min * (1.0 - 1e-12):
        raise InvalidArgument(f"R = {R:.6g} is below R(T) = {R_min:.6g}")
    nx, nt = (grid_1d, grid_1d) if np.isscalar(grid_1d) else grid_1d
    W = Supersolution.equality_choice(params, R, T)
    x = np.linspace(R, 2.0 * R, int(nx))
    t = np.linspace(0.0, T, int(nt))
    tt, xx = np.meshgrid(t, x, indexing="ij")
    if method == "exact":
        LW = W.operator(tt, xx)
    elif method == "fd":
        Wv = W.W(tt, xx)
        Wm = W.Y(xx) + W.Z(tt)
        Wt = np.gradient(Wv, t, axis=0, edge_order=2)
        Wxx = np.gradient(np.gradient(Wm, x, axis=1, edge_order=2), x, axis=1, edge_order=2)
        LW = Wt - Wxx + xx**params.sigma * Wv**params.q
    else:
        raise InvalidArgument(f"unknown method {method!r}")
    scale = (2.0 * R) ** params.sigma * float(W.W(0.0, R)) ** params.q
    return float(np.min(LW)) / scale


def stationary_solution(exps: Exponents):
    """``U(r) = A r^{(σ+2)/(m−q)}``."""
    A, p = exps.a_stat, exps.stat_power
    return lambda r: A * np.asarray(r, dtype=float) ** p


def stationary_residual(params: Params, exps: Exponents, grid: RadialGrid,
                        r_min: float | None = None) -> float:
    """Max of ``|Δ_r U^m − r^σ U^q| / r^{(σm+2q)/(m−q)}`` over nodes ``r_i ≥ r_min``.

    The stencil uses the exact ``U^m`` at the neighbours (no boundary data), so
    only the consistency error of the three-point radial Laplacian is measured.
    ``r_min`` defaults to ``r_max / 4``; a fixed window makes dyadic refinement
    converge at the stencil order.
    """
    m, q, s, N = params.m, params.q, params.sigma, params.N
    r_min = grid.r_max / 4.0 if r_min is None else r_min
    dr = grid.dr
    U = stationary_solution(exps)
    r = grid.nodes[1:]
    r = r[r >= r_min]
    if r.size == 0:
        raise InvalidArgument("no nodes above r_min")
    vm, v0, vp = U(r - dr) ** m, U(r) ** m, U(r + dr) ** m
    wp = ((r + 0.5 * dr) / r) ** (N - 1)
    wm = ((r - 0.5 * dr) / r) ** (N - 1)
    lap = (wp * (vp - v0) - wm * (v0 - vm)) / dr**2
    res = lap - r**s * U(r) ** q
    scale = r ** ((s * m + 2.0 * q) / (m - q))
    return float(np.max(np.abs(res) / scale))


# ---------------------------------------------------------------------------
# Initial data presets
# ---------------------------------------------------------------------------


def bump(delta: float = 1.0, r0: float = 1.0):
    """``δ 1_{r < r0}``."""
    return lambda r: np.where(np.asarray(r) < r0, float(delta), 0.0)


def constant(c: float = 1.0):
    return lambda r: np.full_like(np.asarray(r, dtype=float), float(c))


def capped_stationary(exps: Exponents, cap: float = 1.0):
    """``min(U, cap)`` with ``U`` the stationary solution."""
    U = stationary_solution(exps)
    return lambda r: np.minimum(U(r), float(cap))


def random_datum(rng: np.random.Generator, grid: RadialGrid, n_modes: int = 4,
                 amplitude: float = 1.0) -> np.ndarray:
    """Random non-negative compactly supported datum (sum of smooth bumps)."""
    r = grid.nodes
    u = np.zeros_like(r)
    for _ in range(n_modes):
        c = rng.uniform(0.0, 0.6 * grid.r_max)
        w = rng.uniform(0.05, 0.3) * grid.r_max
        h = rng.uniform(0.1, 1.0) * amplitude
        u += h * np.maximum(1.0 - ((r - c) / w) ** 2, 0.0)
    u[-1] = 0.0
    return u


__all__ = [
    "RadialGrid", "RadialState", "Supersolution", "SelfSimilarProfile", "DtPolicy", "Trajectory",
    "NewtonOptions", "init_state", "step_implicit", "step_explicit", "scheme_residual", "run",
    "support_radius", "sup_norm", "origin_value", "rescaled_error", "supersolution_residual",
    "stationary_residual", "stationary_solution", "lower_shift", "upper_shift",
    "shifted_self_similar", "self_similar_datum", "bump", "constant", "capped_stationary",
    "random_datum",
]
